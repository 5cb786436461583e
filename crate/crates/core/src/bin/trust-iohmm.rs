use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use trust_iohmm::analysis::{
    cmd_evaluate_policy, cmd_filter, cmd_fit, cmd_ground, cmd_simulate, resolve_model, PairMode,
    ReportFormat,
};
use trust_iohmm::iohmm::{FitConfig, ModelParams};
use trust_iohmm::service::{serve, ServiceConfig};
use trust_iohmm::simulator::{ComplexitySchedule, EnvConfig, MessagePolicy};
use trust_iohmm::trust::{read_log_paths, SessionLog};

#[derive(Parser)]
#[command(name = "trust-iohmm", version, about = "Trust IOHMM estimation, filtering, simulation and live trials")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a cohort and write one log (plus hidden-trust sidecar) per session.
    Simulate(SimulateArgs),
    /// Fit the model to session logs and compare with the reference parameters.
    Fit(FitArgs),
    /// Per-trial predictive P(high trust) for every session.
    Filter(FilterArgs),
    /// Fit the logistic curve between averaged self-reports and filtered trust.
    Ground(GroundArgs),
    /// Compare message policies by Monte Carlo on common random numbers.
    EvaluatePolicy(EvaluateArgs),
    /// Run the live-trial HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Structured,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Output file (directory for `simulate`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelChoice {
    /// Use the reference parameters (the default when no model is given).
    #[arg(long, conflicts_with = "model")]
    paper_params: bool,
    /// Parameters JSON, or a report written by `fit --format structured`.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelChoice {
    fn load(&self) -> Result<ModelParams> {
        Ok(resolve_model(self.model.as_deref())?)
    }
}

#[derive(Args)]
struct EnvArgs {
    #[arg(long, default_value_t = 60)]
    trials: u32,
    #[arg(long, default_value_t = 0.75)]
    success_probability: f64,
    #[arg(long, default_value_t = 0.5)]
    p_high_complexity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EnvArgs {
    fn env(&self) -> EnvConfig {
        EnvConfig {
            success_probability: self.success_probability,
            complexity: ComplexitySchedule::Iid {
                p_high: self.p_high_complexity,
            },
            n_trials: self.trials,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 16)]
    participants: usize,
    #[arg(long, default_value = "round-robin")]
    policy: MessagePolicy,
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    model: ModelChoice,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FitArgs {
    /// Log files or directories of `*.jsonl` logs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    model: ModelChoice,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pairs {
    Median,
    Mean,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Fit to per-level medians or to every per-session pair.
    #[arg(long, value_enum, default_value = "median")]
    pairs: Pairs,
    #[command(flatten)]
    model: ModelChoice,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(
        long,
        value_delimiter = ';',
        default_value = "fixed:short;fixed:long;fixed:apology;fixed:denial"
    )]
    policies: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    n_mc: usize,
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    model: ModelChoice,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "TRUST_IOHMM_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "TRUST_IOHMM_DATA_DIR", default_value = "sessions")]
    data_dir: PathBuf,
    #[arg(long, env = "TRUST_IOHMM_COUNTING_LIMIT", default_value_t = 15)]
    counting_limit_secs: u32,
    #[arg(long, env = "TRUST_IOHMM_POLICY", default_value = "uniform")]
    policy: MessagePolicy,
    #[arg(long, env = "TRUST_IOHMM_TRIALS", default_value_t = 60)]
    trials: u32,
    #[arg(long, env = "TRUST_IOHMM_SUCCESS_PROBABILITY", default_value_t = 0.75)]
    success_probability: f64,
    #[arg(long, env = "TRUST_IOHMM_P_HIGH_COMPLEXITY", default_value_t = 0.5)]
    p_high_complexity: f64,
    #[command(flatten)]
    model: ModelChoice,
}

fn load_sessions(inputs: &[PathBuf]) -> Result<Vec<SessionLog>> {
    Ok(read_log_paths(inputs)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn warn_all<'a>(warnings: impl IntoIterator<Item = &'a String>) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Simulate(a) => {
            let Some(dir) = a.common.out.as_deref() else {
                bail!("simulate needs --out <directory>");
            };
            let summary = cmd_simulate(&a.model.load()?, &a.env.env(), &a.policy, a.participants, dir)?;
            print!("{}", summary.render(a.common.format.into()));
        }
        Cmd::Fit(a) => {
            let sessions = load_sessions(&a.inputs)?;
            let config = FitConfig {
                tolerance: a.tol,
                max_iterations: a.max_iter,
                restarts: a.restarts,
                seed: a.seed,
                ..FitConfig::default()
            };
            let report = cmd_fit(&sessions, &config)?;
            if matches!(a.common.format, Format::Structured) {
                warn_all(&report.warnings);
            }
            emit(a.common.out.as_deref(), &report.render(a.common.format.into()))?;
        }
        Cmd::Filter(a) => {
            let table = cmd_filter(&load_sessions(&a.inputs)?, &a.model.load()?)?;
            for (id, why) in &table.skipped {
                eprintln!("warning: session {id} skipped: {why}");
            }
            emit(a.common.out.as_deref(), &table.render(a.common.format.into()))?;
        }
        Cmd::Ground(a) => {
            let mode = match a.pairs {
                Pairs::Median => PairMode::Median,
                Pairs::Mean => PairMode::Mean,
            };
            let report = cmd_ground(&load_sessions(&a.inputs)?, &a.model.load()?, mode)?;
            warn_all(&report.warnings);
            match (a.common.out.as_deref(), a.common.format) {
                (Some(path), Format::Table) => {
                    emit(Some(path), &report.pairs_csv())?;
                    emit(Some(&path.with_extension("curve.csv")), &report.curve_csv())?;
                }
                (out, format) => emit(out, &report.render(format.into()))?,
            }
        }
        Cmd::EvaluatePolicy(a) => {
            let table = cmd_evaluate_policy(&a.model.load()?, &a.env.env(), &a.policies, a.n_mc)?;
            emit(a.common.out.as_deref(), &table.render(a.common.format.into()))?;
        }
        Cmd::Serve(a) => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let mut config = ServiceConfig::new(a.data_dir);
            config.params = a.model.load()?;
            config.default_policy = a.policy;
            config.counting_time_limit_secs = a.counting_limit_secs;
            config.default_env = EnvConfig {
                success_probability: a.success_probability,
                complexity: ComplexitySchedule::Iid {
                    p_high: a.p_high_complexity,
                },
                n_trials: a.trials,
                seed: 0,
            };
            config.default_env.validate()?;
            tokio::runtime::Runtime::new()?.block_on(serve(config, a.bind))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        // Library errors already embed their cause; only show causes not yet printed.
        let mut message = e.to_string();
        for cause in e.chain().skip(1) {
            let text = cause.to_string();
            if !message.contains(&text) {
                message = format!("{message}: {text}");
            }
        }
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}
