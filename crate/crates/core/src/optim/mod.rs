//! Limited-memory BFGS with a strong Wolfe line search, and a minibatch
//! training driver built on it.

mod lbfgs;
mod line_search;
mod train;

pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult, LbfgsState, Termination, TraceEntry};
pub use line_search::{wolfe_line_search, LineSearchResult};
pub use train::{
    batch_loss_and_grad, minibatch_train, minibatch_train_with, MinibatchRecord, TrainConfig,
    TrainLog, TrainingSet,
};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
