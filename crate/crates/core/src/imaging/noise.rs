use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Additive white Gaussian noise with standard deviation given on the
/// 0-255 intensity scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_255: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_255: f64, seed: u64) -> Result<Self> {
        if !(sigma_255 > 0.0 && sigma_255.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be positive, got {sigma_255}")));
        }
        Ok(NoiseSpec { sigma_255, seed })
    }

    /// Standard deviation on the `[0, 1]` scale.
    pub fn sigma_unit(&self) -> f64 {
        self.sigma_255 / 255.0
    }
}

/// Adds i.i.d. `N(0, (sigma_255 / 255)^2)` noise to every pixel in row-major
/// order. The result is not clipped.
pub fn add_awgn(img: &GrayImage, spec: &NoiseSpec) -> GrayImage {
    let mut rng = Rng::new(spec.seed);
    let sigma = spec.sigma_unit();
    let pixels = img.pixels().iter().map(|&v| v + sigma * rng.normal()).collect();
    GrayImage::new(img.height(), img.width(), pixels).expect("noise keeps pixels finite")
}
