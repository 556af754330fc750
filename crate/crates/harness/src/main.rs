//! `cfnn` command line: run one experiment, print or save the JSON report,
//! optionally emit the curve tables as CSV files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfnn_harness::config::{ExperimentConfig, ExperimentKind};
use cfnn_harness::error::Result;
use cfnn_harness::experiments::run_experiment;
use cfnn_harness::report::ExperimentReport;

#[derive(Parser)]
#[command(name = "cfnn", version, about = "Randomized-classifier experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Hypernet,
    Dropout,
    Plain,
}

impl Arch {
    fn name(&self) -> &'static str {
        match self {
            Arch::Hypernet => "hypernet",
            Arch::Dropout => "dropout",
            Arch::Plain => "plain",
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Input dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Ball radius R
    #[arg(long)]
    radius: Option<f64>,
    /// Coin probability alpha in (1/2, 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Samples per majority vote / per grid point
    #[arg(long)]
    samples: Option<u64>,
    /// Dataset size or grid point count
    #[arg(long)]
    points: Option<usize>,
    /// Shell half-width phi
    #[arg(long)]
    phi: Option<f64>,
    /// Target MSE epsilon
    #[arg(long)]
    eps: Option<f64>,
    /// Target function: zero|linear|sin|abs-saw
    #[arg(long)]
    target_fn: Option<String>,
    /// Lipschitz constant of the target
    #[arg(long)]
    lipschitz: Option<f64>,
    /// Scale of the apex-sampling normal distribution
    #[arg(long)]
    zeta_scale: Option<f64>,
    /// Dataset name: shell|circles|moons|blobs
    #[arg(long)]
    dataset: Option<String>,
    /// Model architecture
    #[arg(long)]
    arch: Option<Arch>,
    /// Random-port samples per training loss
    #[arg(long)]
    n_train: Option<u64>,
    /// Comma-separated inference sample counts
    #[arg(long, value_delimiter = ',')]
    n_test: Option<Vec<u64>>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Evaluation repeats for sweeps
    #[arg(long)]
    repeats: Option<u64>,
    /// Root seed
    #[arg(long)]
    seed: Option<u64>,
    /// Wall-clock cap in seconds
    #[arg(long)]
    max_seconds: Option<f64>,
    /// Report path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// json writes the report; csv additionally writes one file per curve
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian-direction ball classifier on a shell dataset
    Ball(CommonArgs),
    /// 2-D tangent-line ball classifier
    Tangent(CommonArgs),
    /// Cone separation and slice classification
    Cone(CommonArgs),
    /// Majority-vote MSE against the sample-size bound
    Mse(CommonArgs),
    /// Train a coin-flipping model
    Train(CommonArgs),
    /// Sampling-generalization sweep over inference sample counts
    Sweep(CommonArgs),
    /// Two-layer shell combiner vs its exact target
    Gtilde(CommonArgs),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Ball(_) => ExperimentKind::Ball,
            Command::Tangent(_) => ExperimentKind::Tangent,
            Command::Cone(_) => ExperimentKind::Cone,
            Command::Mse(_) => ExperimentKind::Mse,
            Command::Train(_) => ExperimentKind::Train,
            Command::Sweep(_) => ExperimentKind::Sweep,
            Command::Gtilde(_) => ExperimentKind::Gtilde,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Ball(a)
            | Command::Tangent(a)
            | Command::Cone(a)
            | Command::Mse(a)
            | Command::Train(a)
            | Command::Sweep(a)
            | Command::Gtilde(a) => a,
        }
    }
}

fn build_config(kind: ExperimentKind, args: &CommonArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_kind(kind);
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.radius {
        cfg.radius = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if let Some(v) = args.points {
        cfg.points = v;
    }
    if let Some(v) = args.phi {
        cfg.phi = v;
    }
    if let Some(v) = args.eps {
        cfg.eps = v;
    }
    if let Some(v) = &args.target_fn {
        cfg.target_fn = v.clone();
    }
    if let Some(v) = args.lipschitz {
        cfg.lipschitz = v;
    }
    if let Some(v) = args.zeta_scale {
        cfg.zeta_scale = v;
    }
    if let Some(v) = &args.dataset {
        cfg.dataset = v.clone();
    }
    if let Some(v) = args.arch {
        cfg.arch = v.name().into();
    }
    if let Some(v) = args.n_train {
        cfg.n_train = v;
    }
    if let Some(v) = &args.n_test {
        cfg.n_test = v.clone();
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.max_seconds {
        cfg.max_seconds = Some(v);
    }
    cfg
}

fn emit(report: &ExperimentReport, args: &CommonArgs) -> Result<()> {
    match &args.out {
        Some(path) => {
            report.write_json(File::create(path)?)?;
            eprintln!("report written to {}", path.display());
            if matches!(args.format, OutputFormat::Csv) {
                for curve in &report.curves {
                    let csv_path = curve_path(path, &curve.name);
                    let mut f = File::create(&csv_path)?;
                    f.write_all(curve.to_csv().as_bytes())?;
                    eprintln!("curve written to {}", csv_path.display());
                }
            }
        }
        None => match args.format {
            OutputFormat::Json => {
                println!("{}", report.to_json()?);
            }
            OutputFormat::Csv => {
                for curve in &report.curves {
                    println!("# {}", curve.name);
                    print!("{}", curve.to_csv());
                }
            }
        },
    }
    Ok(())
}

fn curve_path(report_path: &Path, curve: &str) -> PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report_path.with_file_name(format!("{stem}_{curve}.csv"))
}

fn run(cli: Cli) -> Result<()> {
    let kind = cli.command.kind();
    let args = cli.command.args();
    let cfg = build_config(kind, args);
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    emit(&report, args)
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors, matching config errors below
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
