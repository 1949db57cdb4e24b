//! Command-line harness for the SDRE benchmark study: config parsing,
//! presets, batch orchestration and CSV/markdown output.

pub mod config;
pub mod output;
pub mod selftest;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sdre::estimators::EstimatorKind;
use sdre::sim::{compute_metrics, monte_carlo, run_closed_loop, SimConfig, SimError};

use config::{parse_config, ConfigError, Experiment, ExperimentPreset, Overrides};
use output::{emit_outputs, metrics_markdown, state_labels, EstimatorResults};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0} invariant violation(s)")]
    Invariants(usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// 1: parse/validation, 2: numerical failure, 3: I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Sim(SimError::InvalidConfig(_) | SimError::Model(_)) => 1,
            CliError::Sim(_) | CliError::Invariants(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sdre",
    version,
    about = "SDRE control and estimation benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a single closed-loop run.
    Run(Common),
    /// Monte-Carlo batch for one estimator.
    Batch(Common),
    /// Batches for several estimators on the same noise realizations.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated estimators (default: sdre-kf,ekf,pf).
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<EstimatorKind>>,
    },
    /// Invariant checks on both presets.
    Selftest {
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    #[arg(long)]
    pub preset: Option<ExperimentPreset>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config file with dotted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for the batch runner (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset,
            model: self.model.clone(),
            estimator: self.estimator,
            runs: self.runs,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            particles: self.particles,
        }
    }

    fn load(&self) -> Result<Experiment, CliError> {
        let text = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path)?),
            None => None,
        };
        Ok(parse_config(text.as_deref(), &self.overrides())?)
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(ConfigError::Validation {
            field: "threads".into(),
            message: "must be at least 1".into(),
        }
        .into());
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn n_states(cfg: &SimConfig) -> Result<usize, CliError> {
    Ok(cfg.model.build().map_err(SimError::from)?.n_states())
}

fn write_bundle(
    common: &Common,
    cfg: &SimConfig,
    command: &str,
    results: &[EstimatorResults],
) -> Result<(), CliError> {
    if let Some(dir) = &common.out {
        emit_outputs(dir, cfg, command, results)?;
    }
    Ok(())
}

fn report(
    out: &mut dyn Write,
    cfg: &SimConfig,
    results: &[EstimatorResults],
) -> Result<(), CliError> {
    let labels = state_labels(&cfg.model, n_states(cfg)?);
    write!(out, "{}", metrics_markdown(results, &labels))?;
    for r in results {
        if let Some(m) = &r.metrics {
            if !m.excluded.is_empty() {
                writeln!(out, "{}: excluded diverged runs {:?}", r.kind, m.excluded)?;
            }
        }
    }
    Ok(())
}

fn batch_results(cfg: &SimConfig) -> (EstimatorResults, Option<SimError>) {
    match monte_carlo(cfg) {
        Ok(outcome) => (
            EstimatorResults {
                kind: cfg.estimator,
                runs: outcome.runs,
                metrics: Some(outcome.metrics),
            },
            None,
        ),
        Err(e) => (
            EstimatorResults {
                kind: cfg.estimator,
                runs: Vec::new(),
                metrics: None,
            },
            Some(e),
        ),
    }
}

fn cmd_run(common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = common.load()?.config;
    init_threads(common.threads)?;
    let run = run_closed_loop(&cfg, 0)?;
    let diverged = run.diverged.clone();
    let metrics = match &diverged {
        None => Some(compute_metrics(cfg.estimator, std::slice::from_ref(&run))?),
        Some(_) => None,
    };
    let results = [EstimatorResults {
        kind: cfg.estimator,
        runs: vec![run],
        metrics,
    }];
    write_bundle(common, &cfg, "run", &results)?;
    report(out, &cfg, &results)?;
    match diverged {
        Some(d) => {
            writeln!(out, "run diverged at step {}: {}", d.step, d.reason)?;
            Err(SimError::TooManyDiverged {
                diverged: 1,
                total: 1,
            }
            .into())
        }
        None => Ok(()),
    }
}

fn cmd_batch(common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = common.load()?.config;
    init_threads(common.threads)?;
    let (results, failure) = batch_results(&cfg);
    let results = [results];
    write_bundle(common, &cfg, "batch", &results)?;
    report(out, &cfg, &results)?;
    failure.map_or(Ok(()), |e| Err(e.into()))
}

fn cmd_compare(
    common: &Common,
    estimators: Option<&[EstimatorKind]>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let exp = common.load()?;
    init_threads(common.threads)?;
    let kinds: Vec<EstimatorKind> = estimators
        .map(<[_]>::to_vec)
        .or(exp.estimators)
        .unwrap_or_else(|| EstimatorKind::ALL_FILTERS.to_vec());
    if kinds.is_empty() {
        return Err(CliError::Usage(
            "compare needs at least one estimator".into(),
        ));
    }
    let mut cfg = exp.config;
    cfg.estimator = kinds[0];
    let mut results = Vec::new();
    let mut failure = None;
    for &kind in &kinds {
        // Same seed for every estimator: run r sees the same noise draws.
        let (r, err) = batch_results(&SimConfig {
            estimator: kind,
            ..cfg.clone()
        });
        results.push(r);
        failure = failure.or(err);
    }
    write_bundle(common, &cfg, "compare", &results)?;
    report(out, &cfg, &results)?;
    failure.map_or(Ok(()), |e| Err(e.into()))
}

fn cmd_selftest(
    runs: usize,
    seed: u64,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    init_threads(threads)?;
    if runs == 0 {
        return Err(ConfigError::Validation {
            field: "runs".into(),
            message: "must be at least 1".into(),
        }
        .into());
    }
    let rep = selftest::selftest(runs, seed)?;
    for c in &rep.cases {
        writeln!(
            out,
            "{:<15} {:<8} runs={} checks={} violations={}",
            c.preset.as_str(),
            c.estimator.as_str(),
            c.runs,
            c.checks,
            c.violations.len()
        )?;
        for v in c.violations.iter().take(5) {
            writeln!(out, "    {v}")?;
        }
    }
    writeln!(
        out,
        "total: {} checks, {} violations",
        rep.checks(),
        rep.violations()
    )?;
    match rep.violations() {
        0 => Ok(()),
        n => Err(CliError::Invariants(n)),
    }
}

/// Executes a parsed command, writing the human-readable report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(c) => cmd_run(c, out),
        Command::Batch(c) => cmd_batch(c, out),
        Command::Compare { common, estimators } => cmd_compare(common, estimators.as_deref(), out),
        Command::Selftest {
            runs,
            seed,
            threads,
        } => cmd_selftest(*runs, *seed, *threads, out),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
