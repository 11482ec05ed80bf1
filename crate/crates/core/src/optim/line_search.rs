//! Strong Wolfe line search with cubic-interpolation bracketing and zoom.

use super::{dot, LbfgsConfig};
use crate::error::{Error, Result};

/// Relative width of the band around `f0` treated as rounding noise.
const ROUNDING_BAND: f64 = 1e-10;

/// Outcome of a line search along `x + alpha * d`.
#[derive(Clone, Debug)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evaluations: usize,
    /// False when the step budget ran out before both Wolfe conditions held;
    /// the best sufficient-decrease trial found is returned instead.
    pub wolfe_satisfied: bool,
}

#[derive(Clone, Debug)]
struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    grad: Vec<f64>,
}

impl Trial {
    fn finite(&self) -> bool {
        self.f.is_finite() && self.slope.is_finite()
    }
}

/// Minimiser of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, clamped to
/// `[lo, hi]`. Falls back to the midpoint of the bounds when the cubic has no
/// real minimiser.
pub(crate) fn cubic_minimizer(
    a: f64,
    fa: f64,
    ga: f64,
    b: f64,
    fb: f64,
    gb: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc >= 0.0 && (a - b) != 0.0 {
        let d2 = disc.sqrt() * (b - a).signum();
        let m = b - (b - a) * ((gb + d2 - d1) / (gb - ga + 2.0 * d2));
        if m.is_finite() {
            return m.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

struct Search<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evaluations: usize,
    budget: usize,
}

impl<F> Search<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn point(&self, alpha: f64) -> Vec<f64> {
        self.x.iter().zip(self.d).map(|(x, d)| x + alpha * d).collect()
    }

    fn probe(&mut self, alpha: f64) -> Result<Trial> {
        self.evaluations += 1;
        let xt = self.point(alpha);
        match (self.objective)(&xt) {
            Ok((f, grad)) => {
                let slope = dot(&grad, self.d);
                Ok(Trial {
                    alpha,
                    f,
                    slope,
                    grad,
                })
            }
            // Overflow at a trial point means the step is too long.
            Err(e) if e.is_numeric() => Ok(Trial {
                alpha,
                f: f64::INFINITY,
                slope: f64::NAN,
                grad: Vec::new(),
            }),
            Err(e) => Err(e),
        }
    }

    fn armijo_fails(&self, t: &Trial) -> bool {
        !t.finite() || t.f > self.f0 + self.c1 * t.alpha * self.slope0
    }

    fn curvature_holds(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.c2 * self.slope0
    }

    /// Approximate Wolfe test (Hager and Zhang 2005) for trials whose value
    /// is within rounding of `f0`, where sufficient decrease can no longer be
    /// judged from function values. The slope bound
    /// `gᵀd <= (1 - 2 c1) |g0ᵀd|` is the Armijo condition for the quadratic
    /// through both end points. The value must still not exceed `f0`.
    fn approx_wolfe_holds(&self, t: &Trial) -> bool {
        t.finite()
            && t.f <= self.f0
            && self.f0 - t.f <= ROUNDING_BAND * self.f0.abs()
            && t.slope <= -(1.0 - 2.0 * self.c1) * self.slope0
            && self.curvature_holds(t)
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    fn finish(&self, t: Trial, satisfied: bool) -> LineSearchResult {
        LineSearchResult {
            x: self.point(t.alpha),
            alpha: t.alpha,
            f: t.f,
            grad: t.grad,
            evaluations: self.evaluations,
            wolfe_satisfied: satisfied,
        }
    }

    fn no_step(&self, grad0: &[f64]) -> LineSearchResult {
        LineSearchResult {
            alpha: 0.0,
            x: self.x.to_vec(),
            f: self.f0,
            grad: grad0.to_vec(),
            evaluations: self.evaluations,
            wolfe_satisfied: false,
        }
    }

    /// Shrinks the bracket `[lo, hi]`; `lo` always satisfies sufficient decrease
    /// and has the lowest value seen so far.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial, grad0: &[f64]) -> Result<LineSearchResult> {
        while !self.exhausted() {
            let (left, right) = if lo.alpha < hi.alpha {
                (lo.alpha, hi.alpha)
            } else {
                (hi.alpha, lo.alpha)
            };
            let width = right - left;
            if width <= f64::EPSILON * right.abs().max(1e-300) {
                break;
            }
            let mut alpha = if hi.finite() {
                cubic_minimizer(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope, left, right)
            } else {
                0.5 * (lo.alpha + hi.alpha)
            };
            // Keep the trial away from the bracket ends so the bracket shrinks.
            let margin = 0.1 * width;
            if alpha - left < margin || right - alpha < margin {
                alpha = 0.5 * (left + right);
            }
            let trial = self.probe(alpha)?;
            if self.armijo_fails(&trial) && self.approx_wolfe_holds(&trial) {
                return Ok(self.finish(trial, true));
            }
            if self.armijo_fails(&trial) || trial.f >= lo.f {
                hi = trial;
            } else {
                if self.curvature_holds(&trial) {
                    return Ok(self.finish(trial, true));
                }
                if trial.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = trial;
            }
        }
        if lo.alpha > 0.0 && lo.f < self.f0 {
            Ok(self.finish(lo, false))
        } else {
            Ok(self.no_step(grad0))
        }
    }
}

/// Finds a step along the descent direction `d` from `x` satisfying the
/// strong Wolfe conditions
///
/// ```text
/// f(x + a d) <= f(x) + c1 a gᵀd
/// |∇f(x + a d)ᵀd| <= c2 |gᵀd|
/// ```
///
/// starting from the trial step `alpha0`. `f0` and `grad0` are the value and
/// gradient at `x`. If the evaluation budget runs out, the best trial with
/// sufficient decrease is returned and flagged; if there is none the result
/// has `alpha == 0`.
pub fn wolfe_line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    grad0: &[f64],
    d: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<LineSearchResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let slope0 = dot(grad0, d);
    if !(slope0 < 0.0) {
        return Err(Error::Contract(format!(
            "line search direction is not a descent direction (slope {slope0})"
        )));
    }
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::Contract(format!("initial step {alpha0} must be positive")));
    }
    let mut search = Search {
        objective,
        x,
        d,
        f0,
        slope0,
        c1: cfg.c1,
        c2: cfg.c2,
        evaluations: 0,
        budget: cfg.max_line_search_steps,
    };

    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        slope: slope0,
        grad: grad0.to_vec(),
    };
    let mut alpha = alpha0;
    let mut first = true;
    while !search.exhausted() {
        let trial = search.probe(alpha)?;
        if !trial.finite() {
            // Shrink towards the last good point and retry.
            alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
            continue;
        }
        if search.armijo_fails(&trial) && search.approx_wolfe_holds(&trial) {
            return Ok(search.finish(trial, true));
        }
        if search.armijo_fails(&trial) || (!first && trial.f >= prev.f) {
            return search.zoom(prev, trial, grad0);
        }
        if search.curvature_holds(&trial) {
            return Ok(search.finish(trial, true));
        }
        if trial.slope >= 0.0 {
            return search.zoom(trial, prev, grad0);
        }
        // Still descending: extrapolate.
        let lo = alpha + 0.01 * (alpha - prev.alpha);
        let hi = 10.0 * alpha;
        let next = cubic_minimizer(prev.alpha, prev.f, prev.slope, trial.alpha, trial.f, trial.slope, lo, hi);
        prev = trial;
        alpha = next;
        first = false;
    }
    if prev.alpha > 0.0 && prev.f < f0 {
        Ok(search.finish(prev, false))
    } else {
        Ok(search.no_step(grad0))
    }
}
