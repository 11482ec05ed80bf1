use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::line_search::{wolfe_line_search, LineSearchResult};
use super::{dot, norm_inf};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_iterations: usize,
    /// Stop once the gradient's largest entry is at most this.
    pub grad_tolerance: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_iterations: 100,
            grad_tolerance: 1e-5,
            max_line_search_steps: 25,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.memory == 0 || self.max_line_search_steps == 0 {
            return Err(Error::Config(
                "memory and max_line_search_steps must be positive".into(),
            ));
        }
        if !(self.grad_tolerance >= 0.0) {
            return Err(Error::Config("grad_tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Ring buffer of curvature pairs `(s, y)` with `yᵀs > 0`.
#[derive(Clone, Debug)]
pub struct LbfgsState {
    pairs: VecDeque<CurvaturePair>,
    memory: usize,
}

impl LbfgsState {
    pub fn new(memory: usize) -> Self {
        LbfgsState {
            pairs: VecDeque::with_capacity(memory),
            memory: memory.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `s = x_new - x_old`, `y = g_new - g_old`, evicting the oldest
    /// pair when full. Pairs with `yᵀs <= 1e-10 |y| |s|` are rejected.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&y, &s);
        let bound = 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt();
        if !(ys > bound) || !ys.is_finite() {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, y, rho: 1.0 / ys });
        true
    }

    /// `-H g` for the implicit inverse-Hessian estimate `H`, by the two-loop
    /// recursion. The initial matrix is `γI` with `γ = sᵀy / yᵀy` of the
    /// newest pair; with no pairs the result is `-g`.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for p in self.pairs.iter().rev() {
            let a = p.rho * dot(&p.s, &q);
            q.iter_mut().zip(&p.y).for_each(|(q, y)| *q -= a * y);
            alphas.push(a);
        }
        if let Some(p) = self.pairs.back() {
            let gamma = 1.0 / (p.rho * dot(&p.y, &p.y));
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for (p, a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = p.rho * dot(&p.y, &q);
            q.iter_mut().zip(&p.s).for_each(|(q, s)| *q += (a - b) * s);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub f: f64,
    pub grad_norm_inf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// The line search found no point with a lower objective.
    NoProgress,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    /// Objective and gradient norm at the start and after every iteration.
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Iterations whose line search ran out of steps before the Wolfe
    /// conditions held.
    pub line_search_warnings: usize,
}

/// A step was taken and the objective did not rise.
fn progressed(ls: &LineSearchResult, f: f64) -> bool {
    ls.alpha > 0.0 && ls.f <= f
}

fn all_finite(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

/// Minimises `objective` from `x0` with L-BFGS and a strong Wolfe line search.
///
/// `objective` returns the value and gradient at a point. Iteration stops
/// when `‖g‖∞ <= grad_tolerance`, after `max_iterations`, or when no
/// decreasing step can be found. Every accepted step lowers the objective;
/// only once changes in `f` fall within rounding can a step that the
/// gradient shows to be a descent step leave the computed value unchanged.
/// A non-finite value or gradient at an iterate is reported as
/// [`Error::Divergence`] carrying that iterate.
pub fn lbfgs_minimize<F>(objective: &mut F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = match objective(&x) {
        Ok(v) => v,
        Err(e) if e.is_numeric() => {
            return Err(Error::Divergence {
                iteration: 0,
                iterate: x,
            })
        }
        Err(e) => return Err(e),
    };
    if !all_finite(f, &g) {
        return Err(Error::Divergence {
            iteration: 0,
            iterate: x,
        });
    }
    if g.len() != x.len() {
        return Err(Error::dims("objective gradient", x.len(), g.len()));
    }

    let mut state = LbfgsState::new(cfg.memory);
    let mut trace = vec![TraceEntry {
        f,
        grad_norm_inf: norm_inf(&g),
    }];
    let mut evaluations = 1;
    let mut warnings = 0;
    let mut iterations = 0;
    let termination = loop {
        if norm_inf(&g) <= cfg.grad_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        let mut d = state.direction(&g);
        if !(dot(&d, &g) < 0.0) {
            state.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if state.is_empty() {
            let g1: f64 = g.iter().map(|v| v.abs()).sum();
            (1.0 / g1).min(1.0)
        } else {
            1.0
        };
        let mut ls = wolfe_line_search(objective, &x, f, &g, &d, alpha0, cfg)?;
        evaluations += ls.evaluations;
        if !progressed(&ls, f) && !state.is_empty() {
            // Stale curvature information; retry once along steepest descent.
            state.clear();
            d = g.iter().map(|v| -v).collect();
            let g1: f64 = g.iter().map(|v| v.abs()).sum();
            ls = wolfe_line_search(objective, &x, f, &g, &d, (1.0 / g1).min(1.0), cfg)?;
            evaluations += ls.evaluations;
        }
        if !progressed(&ls, f) {
            break Termination::NoProgress;
        }
        if !all_finite(ls.f, &ls.grad) {
            return Err(Error::Divergence {
                iteration: iterations + 1,
                iterate: ls.x,
            });
        }
        if !ls.wolfe_satisfied {
            warnings += 1;
        }
        let s: Vec<f64> = ls.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ls.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.push(s, y);
        x = ls.x;
        f = ls.f;
        g = ls.grad;
        iterations += 1;
        trace.push(TraceEntry {
            f,
            grad_norm_inf: norm_inf(&g),
        });
    };

    Ok(LbfgsResult {
        x,
        f,
        grad: g,
        trace,
        iterations,
        evaluations,
        termination,
        line_search_warnings: warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn empty_memory_gives_steepest_descent() {
        let state = LbfgsState::new(5);
        assert_eq!(state.direction(&[1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn one_pair_on_scalar_quadratic_is_newton_step() {
        // f(x) = a x^2 / 2, so y = a s
        let a = 3.7;
        let mut state = LbfgsState::new(3);
        assert!(state.push(vec![0.4], vec![a * 0.4]));
        let g = 2.5;
        let d = state.direction(&[g]);
        assert!((d[0] + g / a).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_curvature() {
        let mut state = LbfgsState::new(3);
        assert!(!state.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!state.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(state.is_empty());
    }

    #[test]
    fn memory_is_bounded() {
        let mut state = LbfgsState::new(2);
        for i in 1..=5 {
            assert!(state.push(vec![i as f64], vec![2.0 * i as f64]));
        }
        assert_eq!(state.len(), 2);
    }

    #[test]
    fn directions_are_descent_directions() {
        let mut rng = Rng::new(23);
        for _ in 0..200 {
            let n = 1 + rng.below(8);
            let mut state = LbfgsState::new(1 + rng.below(6));
            for _ in 0..rng.below(10) {
                let s: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
                // y = A s with A symmetric positive definite (diagonal here)
                // plus a small perturbation; rejected pairs are fine.
                let y: Vec<f64> = s
                    .iter()
                    .map(|v| v * rng.uniform_range(0.1, 10.0) + rng.uniform_range(-0.05, 0.05))
                    .collect();
                state.push(s, y);
            }
            let g: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let d = state.direction(&g);
            assert!(dot(&d, &g) < 0.0);
        }
    }

    #[test]
    fn minimizes_squared_norm() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((dot(x, x), x.iter().map(|v| 2.0 * v).collect()))
        };
        let cfg = LbfgsConfig {
            grad_tolerance: 1e-12,
            ..Default::default()
        };
        let r = lbfgs_minimize(&mut f, &[3.0, -4.0, 1.5], &cfg).unwrap();
        assert!(dot(&r.x, &r.x).sqrt() < 1e-8);
    }

    #[test]
    fn trace_is_monotone() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            Ok((
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            ))
        };
        let r = lbfgs_minimize(&mut f, &[-1.2, 1.0], &LbfgsConfig::default()).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].f < w[0].f);
        }
    }

    #[test]
    fn divergence_carries_iterate() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, x.to_vec())) };
        match lbfgs_minimize(&mut f, &[1.0, 2.0], &LbfgsConfig::default()) {
            Err(Error::Divergence { iteration, iterate }) => {
                assert_eq!(iteration, 0);
                assert_eq!(iterate, vec![1.0, 2.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((0.0, x.to_vec())) };
        let cfg = LbfgsConfig {
            c1: 0.95,
            ..Default::default()
        };
        assert!(matches!(lbfgs_minimize(&mut f, &[1.0], &cfg), Err(Error::Config(_))));
    }
}
