//! Datasets, model files and experiment runners.
//!
//! Every run is a pure function of its [`ExperimentConfig`] and seed. From a
//! run seed `s` the following sub-seeds are derived with
//! [`split_seed`](crate::rng::split_seed):
//!
//! | index | use                      |
//! |-------|--------------------------|
//! | 0     | weight initialisation    |
//! | 1     | training patch sampling  |
//! | 2     | minibatch order          |
//! | 3     | test patch sampling      |

mod config;
mod dataset;
mod experiments;
mod model_file;
mod sampler;

pub use config::{load_corpus, ExperimentConfig, NamedImage};
pub use dataset::{build_patch_dataset, read_dataset, write_dataset, DatasetSummary, PatchDataset};
pub use experiments::{
    evaluate_suite, run_autoencoder_experiment, run_denoiser_training, AutoencoderReport,
    AutoencoderRun, DenoiserRun, PsnrTable, Variant,
};
pub use model_file::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use sampler::PatchSampler;

use crate::rng::split_seed;

pub(crate) const SEED_INIT: u64 = 0;
pub(crate) const SEED_TRAIN_DATA: u64 = 1;
pub(crate) const SEED_ORDER: u64 = 2;
pub(crate) const SEED_TEST_DATA: u64 = 3;

pub(crate) fn sub_seed(seed: u64, role: u64) -> u64 {
    split_seed(seed, role)
}
