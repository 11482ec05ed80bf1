use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::config::NamedImage;
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::nn::PatchBatch;
use crate::optim::TrainingSet;
use crate::rng::{split_seed, Rng};

/// Rows per parallel work unit when gathering.
const GATHER_CHUNK: usize = 256;

/// Indexed source of noisy training patches, generated on demand.
///
/// Sample `i` is a pure function of the seed and `i`: with a generator seeded
/// from `split_seed(seed, i)` it picks an image uniformly, then a patch
/// position uniformly within it, then draws `patch_in²` normal deviates of
/// noise in row-major order. The input is the noisy patch minus its mean,
/// the target is the centred `patch_out` block of the clean patch minus the
/// same mean, and that mean is the sample's DC value.
#[derive(Clone, Debug)]
pub struct PatchSampler {
    images: Vec<GrayImage>,
    patch_in: usize,
    patch_out: usize,
    sigma_unit: f64,
    seed: u64,
    len: usize,
}

impl PatchSampler {
    pub fn new(
        images: Vec<GrayImage>,
        patch_in: usize,
        patch_out: usize,
        sigma_255: f64,
        len: usize,
        seed: u64,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("empty image corpus".into()));
        }
        if patch_in == 0 || patch_out > patch_in || !(patch_in - patch_out).is_multiple_of(2) {
            return Err(Error::Config(format!(
                "target block {patch_out} must fit centred in input patch {patch_in}"
            )));
        }
        let smallest = images.iter().map(|i| i.height().min(i.width())).min().unwrap();
        if patch_in > smallest {
            return Err(Error::Config(format!(
                "patch size {patch_in} exceeds smallest image side {smallest}"
            )));
        }
        if !(sigma_255 >= 0.0 && sigma_255.is_finite()) {
            return Err(Error::Config(format!("invalid noise level {sigma_255}")));
        }
        if len == 0 {
            return Err(Error::Config("sampler length must be positive".into()));
        }
        Ok(PatchSampler {
            images,
            patch_in,
            patch_out,
            sigma_unit: sigma_255 / 255.0,
            seed,
            len,
        })
    }

    pub fn from_corpus(
        corpus: &[NamedImage],
        patch_in: usize,
        patch_out: usize,
        sigma_255: f64,
        len: usize,
        seed: u64,
    ) -> Result<Self> {
        let images = corpus.iter().map(|n| n.image.clone()).collect();
        Self::new(images, patch_in, patch_out, sigma_255, len, seed)
    }

    pub fn patch_in(&self) -> usize {
        self.patch_in
    }

    pub fn patch_out(&self) -> usize {
        self.patch_out
    }

    /// Writes sample `index` into `input` and `target` and returns its DC.
    pub fn sample_into(&self, index: usize, input: &mut [f64], target: &mut [f64]) -> f64 {
        let (p, q) = (self.patch_in, self.patch_out);
        debug_assert_eq!(input.len(), p * p);
        debug_assert_eq!(target.len(), q * q);
        let mut rng = Rng::new(split_seed(self.seed, index as u64));
        let img = &self.images[rng.below(self.images.len())];
        let r0 = rng.below(img.height() - p + 1);
        let c0 = rng.below(img.width() - p + 1);
        let pixels = img.pixels();
        let w = img.width();
        let mut sum = 0.0;
        for i in 0..p {
            for j in 0..p {
                let v = pixels[(r0 + i) * w + c0 + j] + self.sigma_unit * rng.normal();
                input[i * p + j] = v;
                sum += v;
            }
        }
        let dc = sum / (p * p) as f64;
        input.iter_mut().for_each(|v| *v -= dc);
        let o = (p - q) / 2;
        for i in 0..q {
            for j in 0..q {
                target[i * q + j] = pixels[(r0 + o + i) * w + c0 + o + j] - dc;
            }
        }
        dc
    }

    fn fill(&self, indices: &[usize]) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let (din, dout) = (self.patch_in * self.patch_in, self.patch_out * self.patch_out);
        let n = indices.len();
        let mut x = Array2::zeros((n, din));
        let mut y = Array2::zeros((n, dout));
        let mut dc = Array1::zeros(n);
        {
            let xs = x.as_slice_mut().expect("standard layout");
            let ys = y.as_slice_mut().expect("standard layout");
            let dcs = dc.as_slice_mut().expect("standard layout");
            xs.par_chunks_mut(GATHER_CHUNK * din)
                .zip(ys.par_chunks_mut(GATHER_CHUNK * dout))
                .zip(dcs.par_chunks_mut(GATHER_CHUNK))
                .zip(indices.par_chunks(GATHER_CHUNK))
                .for_each(|(((xc, yc), dcc), ic)| {
                    for (k, &i) in ic.iter().enumerate() {
                        dcc[k] = self.sample_into(
                            i,
                            &mut xc[k * din..(k + 1) * din],
                            &mut yc[k * dout..(k + 1) * dout],
                        );
                    }
                });
        }
        (x, y, dc)
    }

    /// Samples `range` materialised as a batch.
    pub fn materialize(&self, range: std::ops::Range<usize>) -> Result<PatchBatch> {
        if range.end > self.len {
            return Err(Error::Contract(format!(
                "sample range end {} exceeds {}",
                range.end, self.len
            )));
        }
        let indices: Vec<usize> = range.collect();
        let (x, y, dc) = self.fill(&indices);
        PatchBatch::new(x, y, dc)
    }
}

impl TrainingSet for PatchSampler {
    fn len(&self) -> usize {
        self.len
    }

    fn input_dim(&self) -> usize {
        self.patch_in * self.patch_in
    }

    fn target_dim(&self) -> usize {
        self.patch_out * self.patch_out
    }

    fn gather(&self, indices: &[usize]) -> Result<(Array2<f64>, Array2<f64>)> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len) {
            return Err(Error::Contract(format!("sample index {bad} out of range")));
        }
        let (x, y, _) = self.fill(indices);
        Ok((x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> GrayImage {
        GrayImage::from_fn(h, w, |r, c| (r * w + c) as f64 / (h * w) as f64).unwrap()
    }

    #[test]
    fn constant_image_without_noise_gives_zero_rows() {
        let s = PatchSampler::new(vec![GrayImage::filled(8, 8, 0.375).unwrap()], 4, 2, 0.0, 1, 3).unwrap();
        let b = s.materialize(0..1).unwrap();
        assert!(b.inputs.iter().all(|&v| v == 0.0));
        assert!(b.targets.iter().all(|&v| v == 0.0));
        assert_eq!(b.dc[0], 0.375);
    }

    #[test]
    fn samples_are_index_addressed() {
        let s = PatchSampler::new(vec![ramp(20, 30), ramp(15, 15)], 5, 3, 25.0, 100, 9).unwrap();
        let all = s.materialize(0..100).unwrap();
        let (x, y) = s.gather(&[42, 7]).unwrap();
        assert_eq!(x.row(0), all.inputs.row(42));
        assert_eq!(y.row(1), all.targets.row(7));
        let other = PatchSampler::new(vec![ramp(20, 30), ramp(15, 15)], 5, 3, 25.0, 100, 10).unwrap();
        assert_ne!(other.materialize(0..1).unwrap().inputs, all.inputs.slice(ndarray::s![0..1, ..]));
    }

    #[test]
    fn target_is_centre_of_clean_patch() {
        let img = ramp(12, 12);
        let s = PatchSampler::new(vec![img.clone()], 5, 1, 0.0, 50, 1).unwrap();
        let b = s.materialize(0..50).unwrap();
        for k in 0..50 {
            // a clean ramp patch's mean equals its centre pixel
            assert!(b.targets[[k, 0]].abs() < 1e-12);
            assert!(b.inputs[[k, 12]].abs() < 1e-12);
            assert!(b.inputs.row(k).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(PatchSampler::new(vec![ramp(4, 10)], 5, 3, 1.0, 1, 0).is_err());
        assert!(PatchSampler::new(vec![ramp(10, 10)], 5, 2, 1.0, 1, 0).is_err());
        assert!(PatchSampler::new(vec![], 5, 3, 1.0, 1, 0).is_err());
        let s = PatchSampler::new(vec![ramp(10, 10)], 5, 3, 1.0, 4, 0).unwrap();
        assert!(s.gather(&[4]).is_err());
    }
}
