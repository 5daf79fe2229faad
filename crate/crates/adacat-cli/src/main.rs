//! Command-line interface: training, evaluation, sampling, density-grid
//! export, and the verification suite. All commands are non-interactive;
//! machine-readable output (JSON or CSV) goes to standard output and logs to
//! standard error.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid flags or inputs,
//! 3 training aborted on a non-finite loss.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use adacat::armodel::{ArDensityModel, Checkpoint, FourierConfig, HeadMode};
use adacat::datasets::{
    load_csv, marginal_quantiles, synth_mixture_1d, synth_two_spirals, Dataset, MixtureSpec,
};
use adacat::distribution::SampleMode;
use adacat::error::AdaCatError;
use adacat::smoothing::SmoothingKernel;
use adacat::training::{evaluate, split_dataset, train, TrainConfig};
use adacat::verify::{run_all, Fault};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_TRAIN_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "adacat", about = "Adaptive categorical density estimation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, JSONL report, and run manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset; prints JSON metrics.
    Eval(EvalArgs),
    /// Draw joint samples from a checkpoint; prints CSV in original units.
    Sample(SampleArgs),
    /// Export a density grid (1-D or 2-D checkpoints); prints CSV.
    Grid(GridArgs),
    /// Run the self-verification suite; non-zero exit on any failure.
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Serialize)]
struct DataArgs {
    /// Dataset: synth:mixture1d, synth:twospirals, or csv:<path>.
    #[arg(long)]
    data: String,
    /// Rows generated for synthetic datasets.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Gaussian jitter for synth:twospirals.
    #[arg(long, default_value_t = 0.005)]
    noise_sd: f64,
    /// Column count for csv data.
    #[arg(long)]
    dims: Option<usize>,
    /// Skip one header line in csv data.
    #[arg(long, default_value_t = false)]
    header: bool,
    /// Seed for synthetic data generation (defaults to --seed).
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args, Clone, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for checkpoint, report, and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Number of bins k per conditional.
    #[arg(long, default_value_t = 8)]
    bins: usize,
    /// Head mode: adacat, uniform, adaptive-quantile, fixed-quantile.
    #[arg(long, default_value = "adacat")]
    mode: String,
    /// Fourier feature pairs per prefix value.
    #[arg(long, default_value_t = 2)]
    fourier: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "32,32", value_delimiter = ',')]
    hidden: Vec<usize>,
    /// Smoothing kernel: uniform, gaussian, or none.
    #[arg(long, default_value = "uniform")]
    smoothing: String,
    /// Kernel width.
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    /// Epochs between learning-rate halvings (0 = constant).
    #[arg(long, default_value_t = 100)]
    lr_halving: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    n: usize,
    /// Within-bin sampling: uniform or midpoint.
    #[arg(long, default_value = "uniform")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Grid points per dimension.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Inject a deliberate defect to prove the checks detect it.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

/// Reproduction record written to the output directory before training.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    git_describe: String,
    threads: usize,
    start_unix: u64,
    end_unix: Option<u64>,
    checkpoint_path: String,
    report_path: String,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Worker cap from ADACAT_THREADS; computation is sequential, so the cap is
/// validated and recorded but never exceeded.
fn thread_cap() -> Result<usize, String> {
    match std::env::var("ADACAT_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("ADACAT_THREADS must be a positive integer, got {v:?}")),
        Err(_) => Ok(1),
    }
}

fn build_dataset(args: &DataArgs, default_seed: u64) -> Result<Dataset, AdaCatError> {
    let seed = args.data_seed.unwrap_or(default_seed);
    match args.data.as_str() {
        "synth:mixture1d" => synth_mixture_1d(&MixtureSpec::two_scale_canonical(), args.n, seed),
        "synth:twospirals" => synth_two_spirals(args.n, args.noise_sd, seed),
        other => {
            if let Some(path) = other.strip_prefix("csv:") {
                let dims = args.dims.ok_or_else(|| {
                    AdaCatError::Dimension("--dims is required for csv data".into())
                })?;
                load_csv(Path::new(path), dims, args.header)
            } else {
                Err(AdaCatError::Domain(format!(
                    "unknown data spec {other:?}; expected synth:mixture1d, synth:twospirals, or csv:<path>"
                )))
            }
        }
    }
}

fn parse_smoothing(name: &str, lambda: f64) -> Result<Option<SmoothingKernel>, AdaCatError> {
    if !(name == "none") && (!lambda.is_finite() || lambda <= 0.0) {
        return Err(AdaCatError::Domain("--lambda must be positive".into()));
    }
    match name {
        "none" => Ok(None),
        "uniform" => Ok(Some(SmoothingKernel::Uniform { lambda })),
        "gaussian" => Ok(Some(SmoothingKernel::TruncatedGaussian { lambda })),
        other => Err(AdaCatError::Domain(format!(
            "unknown smoothing {other:?}; expected uniform, gaussian, or none"
        ))),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<u8, AdaCatError> {
    if args.bins == 0 {
        return Err(AdaCatError::Domain("--bins must be at least 1".into()));
    }
    let head = HeadMode::parse(&args.mode)?;
    let fourier = FourierConfig::new(args.fourier)?;
    let smoothing = parse_smoothing(&args.smoothing, args.lambda)?;
    let threads = thread_cap().map_err(AdaCatError::Domain)?;
    let dataset = build_dataset(&args.data, args.seed)?;

    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        lr_halving_period: args.lr_halving,
        weight_decay: args.weight_decay,
        smoothing,
        seed: args.seed,
        ..TrainConfig::default()
    };
    config.validate()?;

    let fixed_widths = if head == HeadMode::FixedQuantile {
        // quantiles come from the training split only
        let (train_rows, _) = split_dataset(&dataset, config.seed);
        let train_view = Dataset {
            samples: train_rows,
            scale_meta: dataset.scale_meta.clone(),
            name: dataset.name.clone(),
            true_nll: None,
        };
        Some(marginal_quantiles(&train_view, args.bins)?)
    } else {
        None
    };

    let mut model = ArDensityModel::new(
        dataset.m(),
        args.bins,
        fourier,
        head,
        &args.hidden,
        fixed_widths,
        args.seed,
    )?;

    std::fs::create_dir_all(&args.out)?;
    let checkpoint_path = args.out.join("checkpoint.json");
    let report_path = args.out.join("report.jsonl");
    let manifest_path = args.out.join("manifest.json");

    let mut manifest = RunManifest {
        command: "train".into(),
        config: serde_json::to_value(args).expect("args serialize"),
        seed: args.seed,
        git_describe: git_describe(),
        threads,
        start_unix: unix_now(),
        end_unix: None,
        checkpoint_path: checkpoint_path.display().to_string(),
        report_path: report_path.display().to_string(),
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest"))?;

    eprintln!(
        "training {} on {} ({} rows, m={}) for {} epochs",
        args.mode,
        dataset.name,
        dataset.n(),
        dataset.m(),
        args.epochs
    );
    let report = train(&mut model, &dataset, &config)?;
    for rec in &report.records {
        eprintln!(
            "epoch {:4}  objective {:+.4}  val_nll {:+.4}  min_w {:.2e}",
            rec.epoch, rec.objective_nats, rec.val_nll_nats, rec.min_bin_width
        );
    }

    let ck = Checkpoint::new(model, dataset.scale_meta.clone());
    std::fs::write(&checkpoint_path, ck.to_json())?;
    std::fs::write(&report_path, report.to_jsonl())?;
    manifest.end_unix = Some(unix_now());
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest"))?;

    if let Some(reason) = &report.abort_reason {
        eprintln!("training aborted: {reason}");
        return Ok(EXIT_TRAIN_ABORTED);
    }
    println!("{}", serde_json::json!({
        "checkpoint": checkpoint_path.display().to_string(),
        "report": report_path.display().to_string(),
        "manifest": manifest_path.display().to_string(),
        "final_val_nll_nats": report.records.last().map(|r| r.val_nll_nats),
    }));
    Ok(0)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, AdaCatError> {
    let text = std::fs::read_to_string(path)?;
    Checkpoint::from_json(&text)
}

fn cmd_eval(args: &EvalArgs) -> Result<u8, AdaCatError> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let dataset = build_dataset(&args.data, args.seed)?;
    if dataset.m() != ck.model.m {
        return Err(AdaCatError::Dimension(format!(
            "checkpoint models {} dimensions, dataset has {}",
            ck.model.m,
            dataset.m()
        )));
    }
    let result = evaluate(&ck.model, &dataset)?;
    println!("{}", serde_json::to_string(&result).expect("result serializes"));
    Ok(0)
}

fn cmd_sample(args: &SampleArgs) -> Result<u8, AdaCatError> {
    let mode = match args.mode.as_str() {
        "uniform" => SampleMode::WithinBinUniform,
        "midpoint" => SampleMode::MidPoint,
        other => {
            return Err(AdaCatError::Domain(format!(
                "unknown sample mode {other:?}; expected uniform or midpoint"
            )))
        }
    };
    let ck = load_checkpoint(&args.checkpoint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut out = String::new();
    for _ in 0..args.n {
        let row = ck.model.ar_sample(&mut rng, mode)?;
        let line: Vec<String> = row
            .iter()
            .zip(&ck.scale_meta)
            .map(|(&x, s)| s.unscale(x).to_string())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    print!("{out}");
    Ok(0)
}

fn cmd_grid(args: &GridArgs) -> Result<u8, AdaCatError> {
    if args.resolution == 0 {
        return Err(AdaCatError::Domain("--resolution must be at least 1".into()));
    }
    let ck = load_checkpoint(&args.checkpoint)?;
    let model = &ck.model;
    let res = args.resolution;
    let step = 1.0 / res as f64;
    let mut out = String::new();
    match model.m {
        1 => {
            for i in 0..res {
                let x = (i as f64 + 0.5) * step;
                let density = model.joint_log_likelihood(&[x])?.exp();
                out.push_str(&format!("{x},{density}\n"));
            }
        }
        2 => {
            for i in 0..res {
                let x1 = (i as f64 + 0.5) * step;
                for j in 0..res {
                    let x2 = (j as f64 + 0.5) * step;
                    let density = model.joint_log_likelihood(&[x1, x2])?.exp();
                    out.push_str(&format!("{x1},{x2},{density}\n"));
                }
            }
        }
        m => {
            return Err(AdaCatError::Dimension(format!(
                "density grids support 1 or 2 dimensions, checkpoint has {m}"
            )))
        }
    }
    print!("{out}");
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8, AdaCatError> {
    let fault = match &args.inject_fault {
        None => None,
        Some(name) => Some(
            Fault::parse(name)
                .ok_or_else(|| AdaCatError::Domain(format!("unknown fault {name:?}")))?,
        ),
    };
    let report = run_all(fault);
    for check in &report.checks {
        println!(
            "{:28} {}  max_error {:.3e}  tolerance {:.3e}  cases {}",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.max_error,
            check.tolerance,
            check.cases
        );
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(if report.all_passed { 0 } else { EXIT_VERIFY_FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}
