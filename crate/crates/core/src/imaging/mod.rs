//! Grayscale images, noise synthesis, patch grids and quality metrics.

mod denoise;
mod image;
mod metrics;
mod noise;
mod patches;
pub mod pgm;

pub use denoise::denoise_image;
pub use image::GrayImage;
pub use metrics::{mse, psnr, rmse};
pub use noise::{add_awgn, NoiseSpec};
pub use patches::{aggregate, aggregation_weights, extract_patches, GridSpec, PatchGrid};
pub use pgm::{load_pgm, save_pgm};
