use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs_minimize, LbfgsConfig};
use crate::error::{Error, Result};
use crate::nn::{mse_loss, NetworkParams, PatchBatch};
use crate::rng::Rng;

/// Source of (input, target) training pairs addressed by index.
pub trait TrainingSet: Sync {
    fn len(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn target_dim(&self) -> usize;
    /// Inputs and targets of the samples at `indices`, one per row.
    fn gather(&self, indices: &[usize]) -> Result<(Array2<f64>, Array2<f64>)>;
}

impl TrainingSet for PatchBatch {
    fn len(&self) -> usize {
        self.inputs.nrows()
    }

    fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    fn target_dim(&self) -> usize {
        self.targets.ncols()
    }

    fn gather(&self, indices: &[usize]) -> Result<(Array2<f64>, Array2<f64>)> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!("sample index {bad} out of range")));
        }
        Ok(self.select(indices))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub minibatch_size: usize,
    pub n_minibatches: usize,
    /// L-BFGS iterations run on each minibatch.
    #[serde(default = "default_iterations")]
    pub iterations_per_minibatch: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    3
}

impl TrainConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.minibatch_size == 0 || self.n_minibatches == 0 {
            return Err(Error::Config(
                "minibatch_size and n_minibatches must be positive".into(),
            ));
        }
        if self.minibatch_size > dataset_len {
            return Err(Error::Config(format!(
                "minibatch size {} exceeds dataset size {}",
                self.minibatch_size, dataset_len
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinibatchRecord {
    pub minibatch: usize,
    /// Loss on the minibatch before its L-BFGS iterations.
    pub initial_loss: f64,
    /// Loss on the minibatch after them.
    pub final_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<MinibatchRecord>,
}

impl TrainLog {
    pub fn final_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.final_loss).collect()
    }
}

/// Rows per gradient work unit. Fixed so that the summation order, and with
/// it every bit of the result, does not depend on the thread count.
const GRAD_CHUNK_ROWS: usize = 1024;

/// Half mean squared error of `params` on `(x, y)` and its gradient in
/// flattened-parameter order.
///
/// Rows are processed in fixed-size chunks that may run in parallel; partial
/// results are combined in chunk order.
pub fn batch_loss_and_grad(
    params: &NetworkParams,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(f64, Vec<f64>)> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::dims("target rows", n, y.nrows()));
    }
    let starts: Vec<usize> = (0..n).step_by(GRAD_CHUNK_ROWS).collect();
    let parts: Vec<Result<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + GRAD_CHUNK_ROWS).min(n);
            let xc = x.slice(s![start..end, ..]);
            let yc = y.slice(s![start..end, ..]);
            let (y_hat, cache) = params.forward(xc)?;
            let (loss, mut dy) = mse_loss(y_hat.view(), yc)?;
            let share = (end - start) as f64 / n as f64;
            dy *= share;
            Ok((loss * share, params.backward(&cache, dy.view())?))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.param_count()];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

/// Minibatch L-BFGS training.
///
/// Samples are visited in epochs of a seeded shuffle; each minibatch takes
/// the next `minibatch_size` indices (a partial tail starts a new epoch).
/// On every minibatch, L-BFGS runs `iterations_per_minibatch` iterations on
/// that minibatch's loss from the current parameters with an empty curvature
/// memory.
pub fn minibatch_train<D: TrainingSet + ?Sized>(
    params: &NetworkParams,
    data: &D,
    cfg: &TrainConfig,
    lcfg: &LbfgsConfig,
) -> Result<(NetworkParams, TrainLog)> {
    minibatch_train_with(params, data, cfg, lcfg, |_| {})
}

/// [`minibatch_train`] with a callback invoked after every minibatch.
pub fn minibatch_train_with<D, C>(
    params: &NetworkParams,
    data: &D,
    cfg: &TrainConfig,
    lcfg: &LbfgsConfig,
    mut on_minibatch: C,
) -> Result<(NetworkParams, TrainLog)>
where
    D: TrainingSet + ?Sized,
    C: FnMut(&MinibatchRecord),
{
    cfg.validate(data.len())?;
    lcfg.validate()?;
    if data.input_dim() != params.input_dim() {
        return Err(Error::dims("dataset input dimension", params.input_dim(), data.input_dim()));
    }
    if data.target_dim() != params.output_dim() {
        return Err(Error::dims("dataset target dimension", params.output_dim(), data.target_dim()));
    }
    let mut log = TrainLog::default();
    if cfg.iterations_per_minibatch == 0 {
        return Ok((params.clone(), log));
    }

    let per_batch = LbfgsConfig {
        max_iterations: cfg.iterations_per_minibatch,
        grad_tolerance: 0.0,
        ..lcfg.clone()
    };
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;

    let mut current = params.clone();
    let mut theta = current.flatten();
    for b in 0..cfg.n_minibatches {
        if cursor + cfg.minibatch_size > order.len() {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let indices = &order[cursor..cursor + cfg.minibatch_size];
        cursor += cfg.minibatch_size;

        let fail = |source: Error, last_good: &NetworkParams| Error::Training {
            minibatch: b,
            last_good: Box::new(last_good.clone()),
            source: Box::new(source),
        };
        let (x, y) = data.gather(indices).map_err(|e| fail(e, &current))?;
        let mut scratch = current.clone();
        let mut objective = |t: &[f64]| -> Result<(f64, Vec<f64>)> {
            scratch.assign_flat(t)?;
            batch_loss_and_grad(&scratch, x.view(), y.view())
        };
        let result = lbfgs_minimize(&mut objective, &theta, &per_batch).map_err(|e| fail(e, &current))?;
        theta = result.x;
        current.assign_flat(&theta)?;
        let record = MinibatchRecord {
            minibatch: b,
            initial_loss: result.trace[0].f,
            final_loss: result.f,
        };
        on_minibatch(&record);
        log.records.push(record);
    }
    Ok((current, log))
}
