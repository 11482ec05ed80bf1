//! `dualpath` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numeric
//! failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualpath::analysis::{angle_histogram, atom_montage, greedy_pair_sort, Dictionary};
use dualpath::harness::{
    build_patch_dataset, evaluate_suite, load_corpus, load_model, run_autoencoder_experiment,
    run_denoiser_training, ExperimentConfig,
};
use dualpath::imaging::{add_awgn, denoise_image, load_pgm, save_pgm, GridSpec, NoiseSpec};
use dualpath::nn::{ActivationTag, NetworkParams};
use dualpath::Error;

#[derive(Parser, Debug)]
#[command(name = "dualpath", version, about = "Dual-pathway rectifier networks for patch-based image denoising")]
struct Cli {
    /// Seed for every random choice; overrides the seeds in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Patch dataset files.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a denoiser, or run the tied-autoencoder sweep.
    Train(TrainArgs),
    /// Denoise a PGM image with a trained model.
    Denoise(DenoiseArgs),
    /// Add white Gaussian noise to a PGM image.
    AddNoise(AddNoiseArgs),
    /// PSNR table of a model (or of the noisy input) over a set of images.
    Evaluate(EvaluateArgs),
    /// Atom montage, angle histogram and reversed-pair summary of a model.
    AnalyzeDict(AnalyzeArgs),
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Sample noisy/clean patch pairs from the corpus into a DPDS file.
    Build(BuildArgs),
}

#[derive(Args, Debug)]
struct Overrides {
    /// Training corpus directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Noise level on the 0-255 scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of training patches.
    #[arg(long)]
    n_train: Option<usize>,
    /// Number of minibatches.
    #[arg(long)]
    minibatches: Option<usize>,
    /// Hidden activation: linear, tanh, rectifier or dual-pathway.
    #[arg(long)]
    activation: Option<ActivationTag>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Output DPDS file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Run the plain vs dual-pathway tied-autoencoder sweep instead.
    #[arg(long)]
    autoencoder: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Patch grid stride in pixels.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Input patch side; defaults to the model's input size.
    #[arg(long)]
    patch_in: Option<usize>,
    /// Output block side; defaults to the model's output size.
    #[arg(long)]
    patch_out: Option<usize>,
}

#[derive(Args, Debug)]
struct AddNoiseArgs {
    /// Noise standard deviation on the 0-255 scale.
    #[arg(long)]
    sigma: f64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "identity", conflicts_with = "identity")]
    model: Option<PathBuf>,
    /// Score the noisy images themselves.
    #[arg(long)]
    identity: bool,
    /// Directory of clean PGM test images.
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [15.0, 25.0, 35.0, 50.0, 75.0, 100.0])]
    sigmas: Vec<f64>,
    /// Noise seeds averaged per cell; defaults to --seed or 0.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// CSV output file; the table is printed to standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Histogram bin width in degrees.
    #[arg(long, default_value_t = 5.0)]
    bin_width: f64,
    /// Angle above which a pair counts as reversed.
    #[arg(long, default_value_t = 160.0)]
    threshold: f64,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numeric() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if cli.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| usage(e.to_string()))?;
    match &cli.command {
        Command::Dataset(DatasetCommand::Build(args)) => {
            let cfg = experiment_config(&cli, &args.overrides)?;
            let s = build_patch_dataset(&cfg, &args.out)?;
            println!("wrote {} samples ({} -> {}) to {}", s.n, s.d_in, s.d_out, args.out.display());
        }
        Command::Train(args) => train(&cli, args)?,
        Command::Denoise(args) => {
            let model = load_model(&args.model)?;
            let (n, m) = match (args.patch_in, args.patch_out) {
                (Some(n), Some(m)) => (n, m),
                (n, m) => {
                    let (dn, dm) = model_sides(&model)?;
                    (n.unwrap_or(dn), m.unwrap_or(dm))
                }
            };
            let grid = GridSpec::new(n, m, args.stride)?;
            let noisy = load_pgm(&args.input)?;
            save_pgm(&denoise_image(&model, &noisy, &grid)?, &args.out)?;
        }
        Command::AddNoise(args) => {
            let img = load_pgm(&args.input)?;
            let spec = NoiseSpec::new(args.sigma, cli.seed.unwrap_or(0)).map_err(|e| usage(e.to_string()))?;
            save_pgm(&add_awgn(&img, &spec), &args.out)?;
        }
        Command::Evaluate(args) => evaluate(&cli, args)?,
        Command::AnalyzeDict(args) => analyze(args)?,
    }
    Ok(())
}

fn experiment_config(cli: &Cli, o: &Overrides) -> CliResult<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| usage("this command needs --config <PATH>"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(c) = &o.corpus {
        cfg.corpus_dir = c.clone();
    }
    if let Some(s) = o.sigma {
        cfg.sigma_255 = s;
    }
    if let Some(n) = o.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = o.minibatches {
        cfg.train.n_minibatches = n;
    }
    if let Some(a) = o.activation {
        cfg.activation = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(cli: &Cli, args: &TrainArgs) -> CliResult {
    let cfg = experiment_config(cli, &args.overrides)?;
    if args.autoencoder {
        let report = run_autoencoder_experiment(&cfg, Some(&args.out), |r| {
            eprintln!(
                "seed {} width {} {}: test rmse {:.6}, reversed(160) {:.3}",
                r.seed, r.width, r.variant, r.test_rmse, r.reversed_fraction_160
            );
        })?;
        print!("{}", report.to_csv());
        return Ok(());
    }
    for &seed in &cfg.seeds {
        let dir = args.out.join(format!("seed_{seed}"));
        let run = run_denoiser_training(&cfg, seed, Some(&dir), |r| {
            eprintln!("seed {seed} minibatch {}: loss {:.6e} -> {:.6e}", r.minibatch, r.initial_loss, r.final_loss);
        })?;
        let last = run.log.records.last().map_or(f64::NAN, |r| r.final_loss);
        println!("seed {seed}: final minibatch loss {last:.6e}, model {}", dir.join("model.dprn").display());
    }
    Ok(())
}

fn square_side(len: usize, what: &str) -> CliResult<usize> {
    let side = (len as f64).sqrt().round() as usize;
    if side * side != len {
        return Err(Failure {
            code: 2,
            message: format!("{what} of length {len} is not a square patch"),
        });
    }
    Ok(side)
}

fn model_sides(model: &NetworkParams) -> CliResult<(usize, usize)> {
    Ok((
        square_side(model.input_dim(), "model input")?,
        square_side(model.output_dim(), "model output")?,
    ))
}

fn grid_for(model: &NetworkParams, stride: usize) -> CliResult<GridSpec> {
    let (n, m) = model_sides(model)?;
    Ok(GridSpec::new(n, m, stride)?)
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> CliResult {
    let model = args.model.as_ref().map(load_model).transpose()?;
    let grid = match &model {
        Some(m) => grid_for(m, args.stride)?,
        None => GridSpec::new(1, 1, 1)?,
    };
    let images = load_corpus(&args.images)?;
    let seeds = if args.seeds.is_empty() {
        vec![cli.seed.unwrap_or(0)]
    } else {
        args.seeds.clone()
    };
    if let Some(bad) = args.sigmas.iter().find(|s| !(**s > 0.0)) {
        return Err(usage(format!("noise levels must be positive, got {bad}")));
    }
    let table = evaluate_suite(model.as_ref(), &images, &grid, &args.sigmas, &seeds)?;
    let csv = table.to_csv();
    match &args.out {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn analyze(args: &AnalyzeArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let dict = Dictionary::from_params(&model)?;
    let side = square_side(dict.atom_dim(), "atom")?;
    let hist = angle_histogram(&dict, args.bin_width).map_err(|e| usage(e.to_string()))?;
    if !(args.threshold > 90.0 && args.threshold <= 180.0) {
        return Err(usage("--threshold must lie in (90, 180]"));
    }
    let pairs = greedy_pair_sort(&dict)?;
    std::fs::create_dir_all(&args.out).map_err(|e| {
        Failure::from(Error::Io {
            path: args.out.clone(),
            source: e,
        })
    })?;
    save_pgm(&atom_montage(&dict, side)?, args.out.join("atoms.pgm"))?;
    write(&args.out.join("angles.csv"), &hist.to_csv())?;
    write(&args.out.join("pairs.csv"), &pairs.to_csv())?;
    let above = pairs.pairs.iter().filter(|p| p.angle_deg > args.threshold).count();
    let mut summary = String::new();
    writeln!(summary, "atoms: {}", dict.len()).unwrap();
    writeln!(summary, "pairs: {}", pairs.pairs.len()).unwrap();
    writeln!(summary, "threshold_deg: {}", args.threshold).unwrap();
    writeln!(summary, "pairs_above_threshold: {above}").unwrap();
    writeln!(summary, "reversed_pair_fraction: {}", pairs.fraction_above(args.threshold)).unwrap();
    write(&args.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
