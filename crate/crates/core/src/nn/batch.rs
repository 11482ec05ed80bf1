use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Vectorised patches, one per row, with the per-patch means removed from
/// them kept in `dc`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchBatch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub dc: Array1<f64>,
}

impl PatchBatch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>, dc: Array1<f64>) -> Result<Self> {
        let n = inputs.nrows();
        if n == 0 {
            return Err(Error::Contract("patch batch is empty".into()));
        }
        if targets.nrows() != n {
            return Err(Error::dims("target rows", n, targets.nrows()));
        }
        if dc.len() != n {
            return Err(Error::dims("dc entries", n, dc.len()));
        }
        Ok(PatchBatch {
            inputs,
            targets,
            dc,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `indices` of inputs and targets.
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Array2<f64>) {
        (
            self.inputs.select(Axis(0), indices),
            self.targets.select(Axis(0), indices),
        )
    }
}
