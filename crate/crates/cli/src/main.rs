//! `gapscreen` command-line front end.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gapscreen::dataio::{lambda_max, parse_libsvm};
use gapscreen::runner::{parse_coefficients, run, write_coefficients, write_metrics_csv};
use gapscreen::solvers::{pgd_solve_with, saga_solve_with, SolveOptions};
use gapscreen::{
    Algo, Dataset, Error, GroupRegularizer, GroupStructure, LossKind, LossModel, MetricsLog,
    RegKind, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "gapscreen",
    version,
    about = "Prox-SGD with safe feature screening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stochastic solver and write metrics.csv and model.txt.
    Run(RunArgs),
    /// Run proxsgd, fs-proxsgd and os-proxsgd with a shared seed.
    Compare(RunArgs),
    /// Solve to a duality-gap tolerance and write ref.txt.
    SolveRef(SolveArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// LIBSVM data file.
    #[arg(long)]
    data: PathBuf,
    /// Feature count, at least the largest index in the file.
    #[arg(long)]
    n_override: Option<usize>,
    /// Scale each feature column to max |x_ij| = 1.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value = "squared")]
    loss: LossKind,
    #[arg(long, default_value = "l1")]
    reg: RegKind,
    /// Whitespace-separated group sizes summing to n.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// lambda = lambda_max / ratio.
    #[arg(long, default_value_t = 2.0)]
    lambda_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "os-proxsgd")]
    algo: Algo,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Exponent of the online weights mu_t = 1/t^w, in (0.5, 1].
    #[arg(long, default_value_t = 0.51)]
    w: f64,
    /// Segment length T = factor * m.
    #[arg(long = "T-factor", default_value_t = 4)]
    t_factor: usize,
    /// Reference solution file for the error column.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    no_screen: bool,
    /// Report elapsed_s as zero so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "saga")]
    algo: Algo,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

struct Problem {
    data: Dataset,
    loss: LossModel,
    reg: GroupRegularizer,
}

fn load_problem(args: &ProblemArgs) -> Result<Problem> {
    let file =
        File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let mut data = parse_libsvm(BufReader::new(file))
        .with_context(|| format!("reading {}", args.data.display()))?;
    if let Some(n) = args.n_override {
        data = data.with_feature_count(n)?;
    }
    if args.normalize {
        data.normalize_max_abs();
    }
    let n = data.n();
    let groups = match &args.groups {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GroupStructure::parse_sizes(&text, n)?
        }
        None => GroupStructure::singletons(n),
    };
    let reg = GroupRegularizer::new(args.reg, groups)?;
    let loss = LossModel::new(args.loss);
    loss.validate_labels(data.labels())?;
    Ok(Problem { data, loss, reg })
}

fn config_from(args: &RunArgs, algo: Algo, reference: Option<Vec<f64>>) -> RunConfig {
    RunConfig {
        algo,
        lambda_ratio: args.problem.lambda_ratio,
        epochs: args.epochs,
        seed: args.problem.seed,
        schedule: None,
        w: args.w,
        t_factor: args.t_factor,
        screen: !args.no_screen,
        reference,
        record_time: !args.no_timing,
    }
}

fn load_reference(path: Option<&Path>, n: usize) -> Result<Option<Vec<f64>>> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let beta = parse_coefficients(&text)?;
    if beta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: beta.len(),
        }
        .into());
    }
    Ok(Some(beta))
}

fn create_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_metrics(dir: &Path, logs: &[MetricsLog]) -> Result<()> {
    let mut out = create_file(dir, "metrics.csv")?;
    write_metrics_csv(logs, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    if !args.algo.is_stochastic_run() {
        return Err(Error::InvalidParameter(format!(
            "run expects proxsgd, fs-proxsgd or os-proxsgd, got {}",
            args.algo
        ))
        .into());
    }
    let p = load_problem(&args.problem)?;
    let reference = load_reference(args.reference.as_deref(), p.data.n())?;
    let config = config_from(args, args.algo, reference);
    let (model, log) = run(&config, &p.data, &p.loss, &p.reg)?;
    write_metrics(&args.problem.out, std::slice::from_ref(&log))?;
    let mut out = create_file(&args.problem.out, "model.txt")?;
    write_coefficients(&model.to_full(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<()> {
    let p = load_problem(&args.problem)?;
    let reference = load_reference(args.reference.as_deref(), p.data.n())?;
    let algos = [Algo::ProxSgd, Algo::FsProxSgd, Algo::OsProxSgd];
    let configs: Vec<RunConfig> = algos
        .iter()
        .map(|&a| config_from(args, a, reference.clone()))
        .collect();
    let results: Vec<gapscreen::Result<MetricsLog>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(|| run(c, &p.data, &p.loss, &p.reg).map(|(_, log)| log)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let logs = results.into_iter().collect::<gapscreen::Result<Vec<_>>>()?;
    write_metrics(&args.problem.out, &logs)
}

fn cmd_solve_ref(args: &SolveArgs) -> Result<()> {
    if !args.problem.lambda_ratio.is_finite() || args.problem.lambda_ratio < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda ratio must be >= 1, got {}",
            args.problem.lambda_ratio
        ))
        .into());
    }
    let p = load_problem(&args.problem)?;
    let lambda = lambda_max(&p.data, &p.loss, &p.reg)? / args.problem.lambda_ratio;
    let opts = SolveOptions {
        seed: args.problem.seed,
        ..SolveOptions::new(args.tol)
    };
    let beta = match args.algo {
        Algo::Saga => saga_solve_with(&p.data, &p.loss, &p.reg, lambda, &opts)?,
        Algo::Pgd => pgd_solve_with(&p.data, &p.loss, &p.reg, lambda, &opts)?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "solve-ref expects saga or pgd, got {other}"
            ))
            .into())
        }
    };
    let mut out = create_file(&args.problem.out, "ref.txt")?;
    write_coefficients(&beta, &mut out)?;
    out.flush()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidParameter(_)
            | Error::InvalidGroups(_)
            | Error::InvalidLabel { .. }
            | Error::DimensionMismatch { .. },
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::SolveRef(a) => cmd_solve_ref(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
