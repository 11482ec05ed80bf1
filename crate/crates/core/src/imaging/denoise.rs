use ndarray::{concatenate, s, Array2, Axis};
use rayon::prelude::*;

use super::patches::{aggregate, extract_patches, GridSpec, PatchGrid};
use super::GrayImage;
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

/// Patches per forward call.
const FORWARD_CHUNK: usize = 4096;

/// Denoises `noisy` patch by patch.
///
/// The image is first mirror-padded by the patch-to-block margin so that the
/// output blocks tile every original pixel. Patches are DC-removed, passed
/// through the network, shifted back by their DC, aggregated with Gaussian
/// weights, and the padding is cropped. The result is not clamped.
pub fn denoise_image(params: &NetworkParams, noisy: &GrayImage, spec: &GridSpec) -> Result<GrayImage> {
    spec.validate()?;
    if params.input_dim() != spec.input_len() {
        return Err(Error::dims("network input vs patch size", spec.input_len(), params.input_dim()));
    }
    if params.output_dim() != spec.output_len() {
        return Err(Error::dims("network output vs block size", spec.output_len(), params.output_dim()));
    }
    let pad = spec.offset();
    let padded = if pad > 0 { noisy.pad_reflect(pad)? } else { noisy.clone() };
    let grid = PatchGrid::new(*spec, padded.height(), padded.width())?;
    let (patches, dc) = extract_patches(&padded, &grid)?;

    let starts: Vec<usize> = (0..patches.nrows()).step_by(FORWARD_CHUNK).collect();
    let outputs: Vec<Array2<f64>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + FORWARD_CHUNK).min(patches.nrows());
            params.predict(patches.slice(s![start..end, ..]))
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
    let outputs = concatenate(Axis(0), &views).expect("equal widths");

    let restored = aggregate(outputs.view(), &grid, dc.view(), Some(&padded))?;
    restored.crop(pad, pad, noisy.height(), noisy.width())
}
