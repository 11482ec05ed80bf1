use std::fmt::{self, Write as _};
use std::path::Path;

use super::config::{load_corpus, ExperimentConfig, NamedImage};
use super::model_file::save_model;
use super::sampler::PatchSampler;
use super::{sub_seed, SEED_INIT, SEED_ORDER, SEED_TEST_DATA, SEED_TRAIN_DATA};
use crate::analysis::{angle_histogram, atom_montage, greedy_pair_sort, AngleHistogram, Dictionary};
use crate::error::{Error, Result};
use crate::imaging::{add_awgn, denoise_image, psnr, save_pgm, GridSpec, NoiseSpec};
use crate::nn::{ActivationTag, NetworkParams, PatchBatch};
use crate::optim::{minibatch_train_with, MinibatchRecord, TrainConfig, TrainLog};
use crate::rng::split_seed;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: sub_seed(seed, SEED_ORDER),
        ..cfg.train.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Plain,
    Dual,
}

impl Variant {
    pub fn activation(self) -> ActivationTag {
        match self {
            Variant::Plain => ActivationTag::Rectifier,
            Variant::Dual => ActivationTag::DualPathway,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Dual => "dual",
        })
    }
}

/// Result of training one tied autoencoder.
#[derive(Clone, Debug)]
pub struct AutoencoderRun {
    pub seed: u64,
    pub width: usize,
    pub variant: Variant,
    /// Per-patch RMSE on the `[0, 1]` scale, averaged over the test patches.
    pub test_rmse: f64,
    /// Fraction of greedy atom pairs above 160 degrees.
    pub reversed_fraction_160: f64,
    /// Number of greedy atom pairs above 170 degrees.
    pub pairs_above_170: usize,
    pub final_train_loss: f64,
    pub histogram: AngleHistogram,
    pub params: NetworkParams,
}

#[derive(Clone, Debug, Default)]
pub struct AutoencoderReport {
    pub runs: Vec<AutoencoderRun>,
}

impl AutoencoderReport {
    pub fn get(&self, seed: u64, width: usize, variant: Variant) -> Option<&AutoencoderRun> {
        self.runs
            .iter()
            .find(|r| r.seed == seed && r.width == width && r.variant == variant)
    }

    /// Plain minus dual test RMSE, averaged over the seeds run at `width`.
    pub fn mean_gap(&self, width: usize) -> Option<f64> {
        let gaps: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.width == width && r.variant == Variant::Dual)
            .filter_map(|d| self.get(d.seed, width, Variant::Plain).map(|p| p.test_rmse - d.test_rmse))
            .collect();
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("seed,width,variant,test_rmse,reversed_fraction_160,pairs_above_170,final_train_loss\n");
        for r in &self.runs {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.seed, r.width, r.variant, r.test_rmse, r.reversed_fraction_160, r.pairs_above_170, r.final_train_loss
            )
            .unwrap();
        }
        out
    }
}

fn mean_patch_rmse(params: &NetworkParams, test: &PatchBatch) -> Result<f64> {
    let out = params.predict(test.inputs.view())?;
    let d = out.ncols() as f64;
    let total: f64 = out
        .rows()
        .into_iter()
        .zip(test.targets.rows())
        .map(|(a, b)| (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / d).sqrt())
        .sum();
    Ok(total / test.len() as f64)
}

/// Trains tied single-hidden-layer autoencoders, plain rectifier and
/// dual-pathway, for every seed and every width in `cfg.hidden`.
///
/// Both variants of a (seed, width) start from the same weights and biases
/// (the dual thresholds start at zero) and see the same minibatches. Test
/// patches come from `cfg.test_dir()`. `cfg.activation` is not used.
///
/// When `out_dir` is given, it receives `summary.csv` plus, per run, the
/// model, atom montage, angle histogram and pair list.
pub fn run_autoencoder_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    mut on_run: impl FnMut(&AutoencoderRun),
) -> Result<AutoencoderReport> {
    cfg.validate()?;
    if !cfg.tied {
        return Err(Error::Config("the autoencoder experiment needs tied = true".into()));
    }
    let train_corpus = load_corpus(&cfg.corpus_dir)?;
    let test_corpus = load_corpus(cfg.test_dir())?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    let p = cfg.patch_in;
    let mut report = AutoencoderReport::default();
    for &seed in &cfg.seeds {
        let train = PatchSampler::from_corpus(
            &train_corpus,
            p,
            p,
            cfg.sigma_255,
            cfg.n_train,
            sub_seed(seed, SEED_TRAIN_DATA),
        )?;
        let test = PatchSampler::from_corpus(
            &test_corpus,
            p,
            p,
            cfg.sigma_255,
            cfg.n_test,
            sub_seed(seed, SEED_TEST_DATA),
        )?
        .materialize(0..cfg.n_test)?;
        let tcfg = train_config(cfg, seed);
        for &width in &cfg.hidden {
            let specs = NetworkParams::tied_autoencoder_specs(p * p, width, ActivationTag::DualPathway);
            let dual_init = NetworkParams::init(&specs, sub_seed(seed, SEED_INIT))?;
            for variant in [Variant::Plain, Variant::Dual] {
                let init = dual_init.with_hidden_activation(variant.activation());
                let (params, log) = minibatch_train_with(&init, &train, &tcfg, &cfg.lbfgs, |_| {})?;
                let dict = Dictionary::from_params(&params)?;
                let pairs = greedy_pair_sort(&dict)?;
                let histogram = angle_histogram(&dict, 5.0)?;
                let run = AutoencoderRun {
                    seed,
                    width,
                    variant,
                    test_rmse: mean_patch_rmse(&params, &test)?,
                    reversed_fraction_160: pairs.fraction_above(160.0),
                    pairs_above_170: pairs.pairs.iter().filter(|q| q.angle_deg > 170.0).count(),
                    final_train_loss: log.records.last().map_or(f64::NAN, |r| r.final_loss),
                    histogram,
                    params,
                };
                if let Some(dir) = out_dir {
                    let stem = format!("{variant}_w{width}_s{seed}");
                    save_model(&run.params, dir.join(format!("{stem}.dprn")))?;
                    save_pgm(&atom_montage(&dict, p)?, dir.join(format!("{stem}_atoms.pgm")))?;
                    write_file(&dir.join(format!("{stem}_angles.csv")), run.histogram.to_csv())?;
                    write_file(&dir.join(format!("{stem}_pairs.csv")), pairs.to_csv())?;
                }
                on_run(&run);
                report.runs.push(run);
            }
        }
    }
    if let Some(dir) = out_dir {
        write_file(&dir.join("summary.csv"), report.to_csv())?;
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct DenoiserRun {
    pub params: NetworkParams,
    pub log: TrainLog,
}

fn log_csv(records: &[MinibatchRecord]) -> String {
    let mut out = String::from("minibatch,initial_loss,final_loss\n");
    for r in records {
        writeln!(out, "{},{},{}", r.minibatch, r.initial_loss, r.final_loss).unwrap();
    }
    out
}

/// Trains a patch denoiser `patch_in² -> hidden... -> patch_out²` with
/// `cfg.activation` hidden units on patches sampled lazily from the corpus.
///
/// With `out_dir`, writes `model.dprn` and `train_log.csv`. If training fails
/// on non-finite values, the parameters from the last good minibatch are
/// written to `checkpoint.dprn` and the error is returned.
pub fn run_denoiser_training(
    cfg: &ExperimentConfig,
    seed: u64,
    out_dir: Option<&Path>,
    mut on_minibatch: impl FnMut(&MinibatchRecord),
) -> Result<DenoiserRun> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus_dir)?;
    let data = PatchSampler::from_corpus(
        &corpus,
        cfg.patch_in,
        cfg.patch_out,
        cfg.sigma_255,
        cfg.n_train,
        sub_seed(seed, SEED_TRAIN_DATA),
    )?;
    let (d_in, d_out) = (cfg.patch_in * cfg.patch_in, cfg.patch_out * cfg.patch_out);
    let specs = if cfg.tied {
        if cfg.hidden.len() != 1 {
            return Err(Error::Config("tied networks have exactly one hidden layer".into()));
        }
        NetworkParams::tied_autoencoder_specs(d_in, cfg.hidden[0], cfg.activation)
    } else {
        NetworkParams::mlp_specs(d_in, &cfg.hidden, d_out, cfg.activation)
    };
    let init = NetworkParams::init(&specs, sub_seed(seed, SEED_INIT))?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    let mut records = Vec::new();
    let result = minibatch_train_with(&init, &data, &train_config(cfg, seed), &cfg.lbfgs, |r| {
        records.push(*r);
        on_minibatch(r);
    });
    if let Some(dir) = out_dir {
        write_file(&dir.join("train_log.csv"), log_csv(&records))?;
    }
    match result {
        Ok((params, log)) => {
            if let Some(dir) = out_dir {
                save_model(&params, dir.join("model.dprn"))?;
            }
            Ok(DenoiserRun { params, log })
        }
        Err(err) => {
            if let (Some(dir), Error::Training { last_good, .. }) = (out_dir, &err) {
                save_model(last_good, dir.join("checkpoint.dprn"))?;
            }
            Err(err)
        }
    }
}

/// PSNR per image and noise level, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct PsnrTable {
    pub images: Vec<String>,
    pub sigmas: Vec<f64>,
    /// `values[i][j]` is image `i` at `sigmas[j]`.
    pub values: Vec<Vec<f64>>,
}

impl PsnrTable {
    /// Arithmetic mean of the image rows for each noise level.
    pub fn averages(&self) -> Vec<f64> {
        (0..self.sigmas.len())
            .map(|j| self.values.iter().map(|row| row[j]).sum::<f64>() / self.values.len() as f64)
            .collect()
    }

    /// Rows are images then `Average`; columns are noise levels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image");
        for s in &self.sigmas {
            write!(out, ",sigma_{s}").unwrap();
        }
        out.push('\n');
        let rows = self.images.iter().map(String::as_str).zip(self.values.iter().cloned());
        for (name, row) in rows.chain(std::iter::once(("Average", self.averages()))) {
            out.push_str(name);
            for v in row {
                write!(out, ",{v:.4}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Noise seed for one (run seed, image, noise level) cell.
fn noise_seed(seed: u64, image: usize, sigma: f64) -> u64 {
    split_seed(split_seed(seed, image as u64), sigma.to_bits())
}

/// Adds noise to every image at every level for every seed, denoises it
/// with `model` (or leaves it noisy when `model` is `None`) and reports
/// PSNR against the clean image.
///
/// Noisy images are not clipped; denoised images are clamped to `[0, 1]`
/// before scoring, as they would be when saved.
pub fn evaluate_suite(
    model: Option<&NetworkParams>,
    images: &[NamedImage],
    grid: &GridSpec,
    sigmas: &[f64],
    seeds: &[u64],
) -> Result<PsnrTable> {
    if images.is_empty() || sigmas.is_empty() || seeds.is_empty() {
        return Err(Error::Config("evaluation needs images, noise levels and seeds".into()));
    }
    let mut values = vec![vec![0.0; sigmas.len()]; images.len()];
    for (i, named) in images.iter().enumerate() {
        for (j, &sigma) in sigmas.iter().enumerate() {
            let mut total = 0.0;
            for &seed in seeds {
                let noisy = add_awgn(&named.image, &NoiseSpec::new(sigma, noise_seed(seed, i, sigma))?);
                let estimate = match model {
                    Some(m) => denoise_image(m, &noisy, grid)?.map(|v| v.clamp(0.0, 1.0))?,
                    None => noisy,
                };
                total += psnr(&named.image, &estimate)?;
            }
            values[i][j] = total / seeds.len() as f64;
        }
    }
    Ok(PsnrTable {
        images: images.iter().map(|n| n.name.clone()).collect(),
        sigmas: sigmas.to_vec(),
        values,
    })
}
