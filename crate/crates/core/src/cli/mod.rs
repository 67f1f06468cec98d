//! `generate`, `fit` and `evaluate` subcommands.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

pub mod files;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalgen::{generate, kl_divergence_mc, mean_log_predictive, recovery_report, McEstimate, RecoveryReport};
use crate::inference::fit;
use crate::model::PriorConfig;
use crate::specfun::RandomSeed;
use files::{read_dataset, read_json, resolve_model, write_dataset, write_json, write_trace, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "invdir-mix", version, about = "Infinite inverted Dirichlet mixtures by extended variational inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset from a known mixture.
    Generate(GenerateArgs),
    /// Fit the truncated infinite mixture to a dataset.
    Fit(FitArgs),
    /// Compare a fitted model file against the true mixture.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// A, B, C, corrected-A, or a ground-truth JSON file.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Ground-truth JSON [default: OUTPUT with extension `truth.json`].
    #[arg(long)]
    pub truth_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Model JSON.
    #[arg(long)]
    pub output: PathBuf,
    /// ELBO trace CSV [default: OUTPUT with extension `trace.csv`].
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub truncation: usize,
    #[arg(long, default_value_t = 1.0)]
    pub s0: f64,
    #[arg(long, default_value_t = 0.005)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub u0: f64,
    #[arg(long, default_value_t = 0.005)]
    pub v0: f64,
    /// Relative ELBO change that stops the ascent.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Components with smaller estimated weight are dropped.
    #[arg(long, default_value_t = 1e-5)]
    pub prune: f64,
}

impl FitArgs {
    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            truncation: self.truncation,
            s0: self.s0,
            t0: self.t0,
            u0: self.u0,
            v0: self.v0,
            max_iterations: self.max_iters,
            elbo_rel_tolerance: self.tol,
            prune_threshold: self.prune,
            seed: RandomSeed(self.seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// True mixture: A, B, C, corrected-A, or a ground-truth JSON file.
    #[arg(long)]
    pub model: String,
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub input: PathBuf,
    /// Dataset CSV for the mean predictive log-density.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Metrics JSON [default: standard output].
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub kl_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub truth: String,
    pub kl: McEstimate,
    pub kl_samples: usize,
    pub recovery: RecoveryReport,
    pub elbo_final: f64,
    pub iterations: usize,
    pub runtime_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_log_predictive: Option<f64>,
}

fn sibling(path: &Path, extension: &str) -> PathBuf {
    path.with_extension(extension)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let data = generate(&model, args.n, RandomSeed(args.seed))?;
    write_dataset(&args.output, &data)?;
    let truth_path = args.truth_output.clone().unwrap_or_else(|| sibling(&args.output, "truth.json"));
    write_json(&truth_path, &model)
}

pub fn cmd_fit(args: &FitArgs) -> Result<ModelFile> {
    let prior = args.prior();
    prior.validate()?;
    let data = read_dataset(&args.input)?;
    let start = Instant::now();
    let result = fit(&data, &prior)?;
    let file = ModelFile::from_fit(&result, &prior, start.elapsed().as_secs_f64());
    write_json(&args.output, &file)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&args.output, "trace.csv"));
    write_trace(&trace_path, &result.trace)?;
    Ok(file)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Metrics> {
    let truth = resolve_model(&args.model)?;
    let file: ModelFile = read_json(&args.input)?;
    let estimate = file.estimate()?;
    let kl = kl_divergence_mc(&truth, &estimate, args.kl_samples, RandomSeed(args.seed))?;
    let recovery = recovery_report(&truth, &estimate)?;
    let mean_log_predictive = match &args.data {
        Some(path) => Some(mean_log_predictive(&estimate, &read_dataset(path)?)?),
        None => None,
    };
    let metrics = Metrics {
        truth: truth.name().to_string(),
        kl,
        kl_samples: args.kl_samples,
        recovery,
        elbo_final: file.elbo_final,
        iterations: file.iterations,
        runtime_seconds: file.runtime_seconds,
        mean_log_predictive,
    };
    match &args.output {
        Some(path) => write_json(path, &metrics)?,
        None => {
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
            // A closed downstream pipe is ignored.
            if let Err(source) = writeln!(std::io::stdout(), "{text}") {
                if source.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(Error::Io { path: "<stdout>".into(), source });
                }
            }
        }
    }
    Ok(metrics)
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical { .. } => 1,
        _ => 2,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Fit(args) => {
            let file = cmd_fit(args)?;
            eprintln!(
                "K = {} after {} iterations, final ELBO {:.6}, {:.3} s",
                file.k, file.iterations, file.elbo_final, file.runtime_seconds
            );
            Ok(())
        }
        Command::Evaluate(args) => cmd_evaluate(args).map(|_| ()),
    }
}

/// Parses the process arguments and runs the chosen command.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
