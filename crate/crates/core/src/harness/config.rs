use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{load_pgm, GrayImage};
use crate::nn::ActivationTag;
use crate::optim::{LbfgsConfig, TrainConfig};

/// Full description of an experiment; the JSON form of this struct is the
/// config file accepted by the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory of training PGMs.
    pub corpus_dir: PathBuf,
    /// Directory of held-out PGMs for test patches and evaluation. Defaults
    /// to `corpus_dir`.
    #[serde(default)]
    pub test_dir: Option<PathBuf>,
    /// Side of the square input patch.
    pub patch_in: usize,
    /// Side of the square target block, centred in the input patch.
    pub patch_out: usize,
    /// Noise level on the 0-255 scale. Zero gives clean inputs.
    pub sigma_255: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Hidden widths. For the denoiser these are the layers in order; for
    /// the tied autoencoder each entry is one single-hidden-layer run.
    pub hidden: Vec<usize>,
    pub activation: ActivationTag,
    #[serde(default)]
    pub tied: bool,
    pub seeds: Vec<u64>,
    /// Training schedule. Its `seed` field is replaced per run by a sub-seed
    /// of the run seed.
    pub train: TrainConfig,
    #[serde(default)]
    pub lbfgs: LbfgsConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_in == 0 || self.patch_out == 0 {
            return bad("patch sizes must be positive".into());
        }
        if self.patch_out > self.patch_in || !(self.patch_in - self.patch_out).is_multiple_of(2) {
            return bad(format!(
                "target block {} must fit centred in input patch {}",
                self.patch_out, self.patch_in
            ));
        }
        if !(self.sigma_255 >= 0.0 && self.sigma_255.is_finite()) {
            return bad(format!("noise level {} must be finite and non-negative", self.sigma_255));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be a non-empty list of positive numbers".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.tied && self.patch_in != self.patch_out {
            return bad("tied autoencoders need patch_in == patch_out".into());
        }
        self.lbfgs.validate()?;
        self.train.validate(self.n_train)
    }

    pub fn test_dir(&self) -> &Path {
        self.test_dir.as_deref().unwrap_or(&self.corpus_dir)
    }
}

#[derive(Clone, Debug)]
pub struct NamedImage {
    pub name: String,
    pub image: GrayImage,
}

/// Loads every `.pgm` file in `dir`, sorted by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<NamedImage>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no PGM images in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let image = load_pgm(p).map_err(|e| match e {
                Error::Parse { offset, message } => Error::Parse {
                    offset,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })?;
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(NamedImage { name, image })
        })
        .collect()
}
