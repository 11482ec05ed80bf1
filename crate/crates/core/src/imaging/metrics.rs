use super::GrayImage;
use crate::error::{Error, Result};

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Contract(format!(
            "image sizes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Mean squared error on the `[0, 1]` scale.
pub fn mse(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    check_dims(reference, test)?;
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.pixels().len() as f64)
}

/// Root mean squared error on the `[0, 1]` scale.
pub fn rmse(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    Ok(mse(reference, test)?.sqrt())
}

/// Peak signal-to-noise ratio in dB, `10 log10(255^2 / mse_255)`, where
/// `mse_255` is the mean squared error on the 0-255 scale. Identical images
/// give `f64::INFINITY`.
pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    let mse_255 = mse(reference, test)? * 255.0 * 255.0;
    if mse_255 == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse_255).log10())
}
