//! `DPDS` patch dataset files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DPDS"  u32 version = 1  u64 n  u32 d_in  u32 d_out
//! n records of (d_in + d_out + 1) f32: input, target, dc
//! ```

use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::config::{load_corpus, ExperimentConfig};
use super::sampler::PatchSampler;
use super::{sub_seed, SEED_TRAIN_DATA};
use crate::error::{Error, Result};
use crate::nn::PatchBatch;
use crate::optim::TrainingSet;

const MAGIC: &[u8; 4] = b"DPDS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;
/// Samples generated per write.
const WRITE_CHUNK: usize = 4096;

/// Patch pairs held in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDataset {
    n: usize,
    d_in: usize,
    d_out: usize,
    /// Records of `d_in + d_out + 1` values.
    values: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub n: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl PatchDataset {
    pub fn from_batch(batch: &PatchBatch) -> Self {
        let (n, d_in, d_out) = (batch.len(), batch.inputs.ncols(), batch.targets.ncols());
        let mut values = Vec::with_capacity(n * (d_in + d_out + 1));
        for k in 0..n {
            values.extend(batch.inputs.row(k).iter().map(|&v| v as f32));
            values.extend(batch.targets.row(k).iter().map(|&v| v as f32));
            values.push(batch.dc[k] as f32);
        }
        PatchDataset { n, d_in, d_out, values }
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n: self.n,
            d_in: self.d_in,
            d_out: self.d_out,
        }
    }

    fn record(&self, k: usize) -> &[f32] {
        let w = self.d_in + self.d_out + 1;
        &self.values[k * w..(k + 1) * w]
    }

    /// Whole dataset in double precision.
    pub fn to_batch(&self) -> Result<PatchBatch> {
        let (x, y) = self.gather(&(0..self.n).collect::<Vec<_>>())?;
        let dc = Array1::from_shape_fn(self.n, |k| self.record(k)[self.d_in + self.d_out] as f64);
        PatchBatch::new(x, y, dc)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header(self.summary());
        out.reserve(self.values.len() * 4);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a DPDS dataset (bad magic)".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported DPDS version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let d_in = u32_at(16) as usize;
        let d_out = u32_at(20) as usize;
        if d_in == 0 || d_out == 0 {
            return Err(Error::Format("dataset dimensions must be positive".into()));
        }
        let expected = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul((d_in + d_out + 1) * 4))
            .and_then(|p| p.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format(format!("declared sample count {n} is too large")))?;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after {n} declared samples",
                bytes.len() - expected
            )));
        }
        let values: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value in sample {}", i / (d_in + d_out + 1))));
        }
        Ok(PatchDataset {
            n: n as usize,
            d_in,
            d_out,
            values,
        })
    }
}

fn header(s: DatasetSummary) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(s.n as u64).to_le_bytes());
    out.extend_from_slice(&(s.d_in as u32).to_le_bytes());
    out.extend_from_slice(&(s.d_out as u32).to_le_bytes());
    out
}

impl TrainingSet for PatchDataset {
    fn len(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.d_in
    }

    fn target_dim(&self) -> usize {
        self.d_out
    }

    fn gather(&self, indices: &[usize]) -> Result<(Array2<f64>, Array2<f64>)> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(Error::Contract(format!("sample index {bad} out of range")));
        }
        let mut x = Array2::zeros((indices.len(), self.d_in));
        let mut y = Array2::zeros((indices.len(), self.d_out));
        for (row, &k) in indices.iter().enumerate() {
            let rec = self.record(k);
            x.row_mut(row)
                .iter_mut()
                .zip(&rec[..self.d_in])
                .for_each(|(d, &s)| *d = s as f64);
            y.row_mut(row)
                .iter_mut()
                .zip(&rec[self.d_in..self.d_in + self.d_out])
                .for_each(|(d, &s)| *d = s as f64);
        }
        Ok((x, y))
    }
}

/// Streams every sample of `sampler` to a DPDS file.
pub fn write_dataset(sampler: &PatchSampler, path: impl AsRef<Path>) -> Result<DatasetSummary> {
    let path = path.as_ref();
    let summary = DatasetSummary {
        n: sampler.len(),
        d_in: sampler.input_dim(),
        d_out: sampler.target_dim(),
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&header(summary)).map_err(io)?;
    for start in (0..summary.n).step_by(WRITE_CHUNK) {
        let end = (start + WRITE_CHUNK).min(summary.n);
        let chunk = PatchDataset::from_batch(&sampler.materialize(start..end)?);
        for v in &chunk.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(summary)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<PatchDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PatchDataset::from_bytes(&bytes)
}

/// Samples `cfg.n_train` training patches from the corpus with the first
/// configured seed and writes them to `path`.
pub fn build_patch_dataset(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<DatasetSummary> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus_dir)?;
    let sampler = PatchSampler::from_corpus(
        &corpus,
        cfg.patch_in,
        cfg.patch_out,
        cfg.sigma_255,
        cfg.n_train,
        sub_seed(cfg.seeds[0], SEED_TRAIN_DATA),
    )?;
    write_dataset(&sampler, path)
}
