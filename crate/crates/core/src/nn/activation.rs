use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation kind without its parameters; used in headers and configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationTag {
    Linear,
    Tanh,
    Rectifier,
    DualPathway,
}

impl std::fmt::Display for ActivationTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActivationTag::Linear => "linear",
            ActivationTag::Tanh => "tanh",
            ActivationTag::Rectifier => "rectifier",
            ActivationTag::DualPathway => "dual_pathway",
        })
    }
}

impl std::str::FromStr for ActivationTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ActivationTag::Linear),
            "tanh" => Ok(ActivationTag::Tanh),
            "rectifier" | "relu" => Ok(ActivationTag::Rectifier),
            "dual_pathway" | "dual-pathway" | "dual" => Ok(ActivationTag::DualPathway),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Elementwise nonlinearity of a layer.
///
/// `DualPathway` carries one threshold per unit of its layer.
#[derive(Clone, Debug, PartialEq)]
pub enum ActivationKind {
    Linear,
    Tanh,
    Rectifier,
    DualPathway { thresholds: Array1<f64> },
}

/// Unit step with `H(0) = 1`.
#[inline]
fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `g(z; t) = max(0, z + t) - max(0, -z + t)`.
#[inline]
pub fn dual_pathway(z: f64, t: f64) -> f64 {
    (z + t).max(0.0) - (-z + t).max(0.0)
}

/// `(dg/dz, dg/dt)` of [`dual_pathway`].
#[inline]
pub fn dual_pathway_grad(z: f64, t: f64) -> (f64, f64) {
    let a = step(z + t);
    let b = step(t - z);
    (a + b, a - b)
}

impl ActivationKind {
    pub fn tag(&self) -> ActivationTag {
        match self {
            ActivationKind::Linear => ActivationTag::Linear,
            ActivationKind::Tanh => ActivationTag::Tanh,
            ActivationKind::Rectifier => ActivationTag::Rectifier,
            ActivationKind::DualPathway { .. } => ActivationTag::DualPathway,
        }
    }

    /// Kind for `tag`; dual-pathway thresholds start at zero.
    pub fn from_tag(tag: ActivationTag, units: usize) -> Self {
        match tag {
            ActivationTag::Linear => ActivationKind::Linear,
            ActivationTag::Tanh => ActivationKind::Tanh,
            ActivationTag::Rectifier => ActivationKind::Rectifier,
            ActivationTag::DualPathway => ActivationKind::DualPathway {
                thresholds: Array1::zeros(units),
            },
        }
    }

    pub fn thresholds(&self) -> Option<&Array1<f64>> {
        match self {
            ActivationKind::DualPathway { thresholds } => Some(thresholds),
            _ => None,
        }
    }

    pub fn thresholds_mut(&mut self) -> Option<&mut Array1<f64>> {
        match self {
            ActivationKind::DualPathway { thresholds } => Some(thresholds),
            _ => None,
        }
    }

    /// Number of trainable parameters owned by the activation.
    pub fn param_count(&self) -> usize {
        self.thresholds().map_or(0, |t| t.len())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        match self.thresholds() {
            Some(t) if t.len() != len => Err(Error::Contract(format!(
                "activation has {} thresholds but input has {} entries",
                t.len(),
                len
            ))),
            _ => Ok(()),
        }
    }

    #[inline]
    fn scalar(&self, z: f64, unit: usize) -> f64 {
        match self {
            ActivationKind::Linear => z,
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Rectifier => z.max(0.0),
            ActivationKind::DualPathway { thresholds } => dual_pathway(z, thresholds[unit]),
        }
    }

    /// Applies the activation to a vector of pre-activations.
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        Ok(z.iter().enumerate().map(|(i, &v)| self.scalar(v, i)).collect())
    }

    /// Derivatives with respect to the input and, for dual-pathway, the thresholds.
    pub fn grad(&self, z: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        self.check_len(z.len())?;
        Ok(match self {
            ActivationKind::Linear => (vec![1.0; z.len()], None),
            ActivationKind::Tanh => (z.iter().map(|v| 1.0 - v.tanh().powi(2)).collect(), None),
            ActivationKind::Rectifier => (z.iter().map(|&v| step(v)).collect(), None),
            ActivationKind::DualPathway { thresholds } => {
                let (dz, dt) = z
                    .iter()
                    .zip(thresholds.iter())
                    .map(|(&v, &t)| dual_pathway_grad(v, t))
                    .unzip();
                (dz, Some(dt))
            }
        })
    }

    /// Applies the activation to a batch of pre-activations, one sample per row.
    pub(crate) fn apply_batch(&self, z: ArrayView2<f64>) -> Array2<f64> {
        match self {
            ActivationKind::Linear => z.to_owned(),
            ActivationKind::Tanh => z.mapv(f64::tanh),
            ActivationKind::Rectifier => z.mapv(|v| v.max(0.0)),
            ActivationKind::DualPathway { thresholds } => {
                let mut out = z.to_owned();
                for mut row in out.axis_iter_mut(Axis(0)) {
                    Zip::from(&mut row)
                        .and(thresholds)
                        .for_each(|v, &t| *v = dual_pathway(*v, t));
                }
                out
            }
        }
    }

    /// Chains `upstream` (dLoss/dActivation) through the activation.
    ///
    /// Returns dLoss/dPreactivation and, for dual-pathway, dLoss/dThreshold
    /// summed over the batch.
    pub(crate) fn backprop_batch(
        &self,
        z: ArrayView2<f64>,
        upstream: ArrayView2<f64>,
    ) -> (Array2<f64>, Option<Array1<f64>>) {
        match self {
            ActivationKind::Linear => (upstream.to_owned(), None),
            ActivationKind::Tanh => {
                let mut dz = upstream.to_owned();
                Zip::from(&mut dz).and(z).for_each(|d, &v| *d *= 1.0 - v.tanh().powi(2));
                (dz, None)
            }
            ActivationKind::Rectifier => {
                let mut dz = upstream.to_owned();
                Zip::from(&mut dz).and(z).for_each(|d, &v| *d *= step(v));
                (dz, None)
            }
            ActivationKind::DualPathway { thresholds } => {
                let mut dz = upstream.to_owned();
                let mut dt = Array1::<f64>::zeros(thresholds.len());
                for (mut drow, zrow) in dz.axis_iter_mut(Axis(0)).zip(z.axis_iter(Axis(0))) {
                    Zip::from(&mut drow)
                        .and(&zrow)
                        .and(thresholds)
                        .and(&mut dt)
                        .for_each(|d, &v, &t, acc| {
                            let (gz, gt) = dual_pathway_grad(v, t);
                            *acc += *d * gt;
                            *d *= gz;
                        });
                }
                (dz, Some(dt))
            }
        }
    }
}
