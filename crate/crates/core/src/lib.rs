//! Dual-pathway rectifier networks for patch-based image denoising.
//!
//! A hidden unit of a dual-pathway layer stands for a pair of rectifier
//! neurons with negated input and output weights. The pair collapses into a
//! single unit with the antisymmetric activation
//! `g(z; t) = max(0, z + t) - max(0, -z + t)` and a trainable threshold `t`.
//!
//! The crate is organised as:
//!
//! * [`nn`]: dense networks, activations, backprop and the expand/compact
//!   transforms between the paired and the compact forms.
//! * [`optim`]: L-BFGS with a strong Wolfe line search and a minibatch driver.
//! * [`imaging`]: PGM I/O, noise synthesis, patch grids, aggregation, PSNR.
//! * [`analysis`]: dictionary (atom) angle statistics and montages.
//! * [`harness`]: datasets, experiment runners and model serialization.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod nn;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
