//! Command-line surface. Four commands: `solve` coordinates one score
//! vector, `run` traces instances and writes one JSON file per trace,
//! `ablate` produces CSV reports (policy sweeps, strategy decomposition),
//! and `report` re-summarizes previously written traces.
//!
//! Precedence everywhere: command-line flag, then config file, then
//! built-in default. Exit codes: 0 success, 1 data/backend failure,
//! 2 usage/config failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{RemoteResources, RunConfig};
use crate::equilibrium::{solve_equilibrium, RawScoreVector, StubbornnessVector};
use crate::error::{Error, Result};
use crate::exec;
use crate::harness::{
    self, fmt_sig6, Pipeline, SweepConfig, SweepParameter, DEFAULT_EPSILON_GRID, DEFAULT_TAU_GRID,
};
use crate::judges::{Judge, JudgeKind, ScoreFixture};
use crate::orchestrator::fixtures::{load_instances, InstanceFixture};
use crate::orchestrator::generator::Generator;
use crate::orchestrator::{ConfigSnapshot, TerminalRules, TraceRecord, TraceRunner};
use crate::policy::Strategy;

pub const ENV_BASE_URL: &str = "NASHVERIFY_BASE_URL";
pub const ENV_API_KEY: &str = "NASHVERIFY_API_KEY";

/// Printed whenever synthetic judges produced the numbers.
pub const SYNTHETIC_NOTE: &str =
    "synthetic judge scores: results are illustrative, not benchmark numbers";

#[derive(Parser)]
#[command(
    name = "nashverify",
    version,
    about = "Verify reasoning chains step by step with a judge-ensemble agreement game"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Coordinate one raw score vector and print the solution as JSON.
    Solve(SolveArgs),
    /// Trace instances through generate-verify-select; one JSON per trace.
    Run(RunArgs),
    /// Sweep a policy axis or decompose strategies into a CSV report.
    Ablate(AblateArgs),
    /// Summarize trace files written by `run`.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    /// Comma-separated raw scores in [0, 1].
    #[arg(long, value_delimiter = ',', required = true)]
    pub scores: Vec<f64>,
    /// Comma-separated stubbornness weights (> 0), one per score.
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
}

/// Judge and generator backing for `run` / `ablate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    /// Replay candidates and judge scores from fixtures.
    Scripted,
    /// Replay candidates, draw judge scores from the seeded noise model.
    Synthetic,
    /// Sample candidates and scores from a chat-completions endpoint.
    Remote,
}

impl RunMode {
    fn kind(self) -> JudgeKind {
        match self {
            RunMode::Scripted => JudgeKind::Scripted,
            RunMode::Synthetic => JudgeKind::Synthetic,
            RunMode::Remote => JudgeKind::Remote,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            RunMode::Scripted => "scripted",
            RunMode::Synthetic => "synthetic",
            RunMode::Remote => "remote",
        }
    }
}

/// Flags shared by `run` and `ablate`; each one overrides the loaded
/// config.
#[derive(Args, Debug, Clone)]
pub struct SharedArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RunMode::Scripted)]
    pub mode: RunMode,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence threshold (accept needs mean > tau).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Dispersion tolerance (accept needs dispersion < epsilon).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Candidates sampled per step.
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<Strategy>,
    /// Worker threads for the instance/judge fan-out.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Instance fixture (JSON Lines).
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Scripted judge score fixture (JSON Lines).
    #[arg(long)]
    pub judge_scores: Option<PathBuf>,
    /// Chat-completions endpoint root for remote mode.
    #[arg(long)]
    pub base_url: Option<String>,
}

impl SharedArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(tau) = self.tau {
            config.policy.tau = tau;
        }
        if let Some(epsilon) = self.epsilon {
            config.policy.epsilon = epsilon;
        }
        if let Some(candidates) = self.candidates {
            config.generator.num_candidates = candidates;
        }
        if let Some(path) = &self.instances {
            config.instances = Some(path.clone());
        }
        if let Some(path) = &self.judge_scores {
            config.judge_scores = Some(path.clone());
        }
    }

    fn resources(&self) -> RemoteResources {
        RemoteResources {
            base_url: self
                .base_url
                .clone()
                .or_else(|| std::env::var(ENV_BASE_URL).ok()),
            api_key: std::env::var(ENV_API_KEY).ok(),
        }
    }
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Directory for trace JSON files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblateKind {
    Tau,
    Epsilon,
    Strategy,
}

impl AblateKind {
    fn as_str(self) -> &'static str {
        match self {
            AblateKind::Tau => "tau",
            AblateKind::Epsilon => "epsilon",
            AblateKind::Strategy => "strategy",
        }
    }
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[arg(long, value_enum)]
    pub kind: AblateKind,
    /// Comma-separated grid values (tau/epsilon kinds only).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// CSV destination; default ablate_<kind>.csv in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a JSON twin of the report next to the CSV.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory of trace JSON files written by `run`.
    #[arg(long)]
    pub traces: PathBuf,
    /// Instance fixture providing gold answers for accuracy.
    #[arg(long)]
    pub instances: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Run(args) => cmd_run(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let raw = RawScoreVector::new(args.scores)?;
    let lambdas = StubbornnessVector::new(args.lambdas)?;
    let solution = solve_equilibrium(&raw, &lambdas)?;
    println!("{}", to_pretty(&solution)?);
    Ok(())
}

/// Everything `run` and `ablate` assemble before touching instances.
struct Workbench {
    config: RunConfig,
    mode: RunMode,
    instances: Vec<InstanceFixture>,
    judges: Vec<Judge>,
    generator: Generator,
    terminal: TerminalRules,
}

fn build_workbench(shared: &SharedArgs) -> Result<Workbench> {
    configure_jobs(shared.jobs);
    let mut config = match &shared.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    shared.apply(&mut config);
    config.validate()?;

    let mode = shared.mode;
    let resources = shared.resources();
    let instances = load_instance_set(&config)?;
    let fixture = score_fixture(&config, mode)?;
    let judges = config.build_judges(mode.kind(), fixture, &resources)?;
    let generator = config.build_generator(mode.kind(), &resources)?;
    let terminal = config.terminal_rules()?;
    Ok(Workbench {
        config,
        mode,
        instances,
        judges,
        generator,
        terminal,
    })
}

fn configure_jobs(jobs: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        // First caller wins; later attempts (tests, repeat calls) are fine
        // to ignore.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

fn load_instance_set(config: &RunConfig) -> Result<Vec<InstanceFixture>> {
    let path = config.instances.as_ref().ok_or_else(|| {
        Error::Config("an instance fixture is required (--instances or config.instances)".into())
    })?;
    let instances = load_instances(path)?;
    if instances.is_empty() {
        return Err(Error::FixtureShape(format!(
            "{}: fixture holds no instances",
            path.display()
        )));
    }
    Ok(instances)
}

fn score_fixture(config: &RunConfig, mode: RunMode) -> Result<Option<Arc<ScoreFixture>>> {
    if mode != RunMode::Scripted {
        return Ok(None);
    }
    let path = config.judge_scores.as_ref().ok_or_else(|| {
        Error::Config(
            "scripted mode needs a judge score fixture (--judge-scores or config.judge_scores)"
                .into(),
        )
    })?;
    Ok(Some(Arc::new(ScoreFixture::load(path)?)))
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trace filenames come from instance ids; anything outside a conservative
/// charset becomes '_' so ids can't escape the output directory.
fn trace_filename(instance_id: &str) -> String {
    let safe: String = instance_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

fn fallback_fraction(traces: &[TraceRecord]) -> f64 {
    harness::metrics_row(0.0, traces, &[]).fallback_pct
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let bench = build_workbench(&args.shared)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| bench.config.output_dir.clone())
        .ok_or_else(|| {
            Error::Config("an output directory is required (--out or config.output_dir)".into())
        })?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let strategy = args.shared.strategy.unwrap_or(Strategy::FullNash);
    let policy = bench.config.policy;
    let snapshot = ConfigSnapshot::new(
        bench.mode.as_str(),
        strategy,
        bench.config.seed,
        &policy,
        &bench.config.generator,
        &bench.judges,
    );
    let runner = TraceRunner {
        judges: &bench.judges,
        generator: &bench.generator,
        generator_config: &bench.config.generator,
        terminal: &bench.terminal,
        policy,
        strategy,
        seed: bench.config.seed,
        snapshot,
    };

    let results = exec::map_ordered(&bench.instances, |instance| runner.run(instance));
    let mut traces = Vec::new();
    let mut aborted = 0usize;
    for result in results {
        match result {
            Ok(trace) => {
                write_json(&out_dir.join(trace_filename(&trace.instance_id)), &trace)?;
                traces.push(trace);
            }
            Err(abort) => {
                aborted += 1;
                write_json(&out_dir.join(trace_filename(&abort.instance_id)), &abort)?;
            }
        }
    }

    if bench.mode == RunMode::Synthetic {
        println!("note: {SYNTHETIC_NOTE}");
    }
    let mut summary = format!("instances={} aborted={}", bench.instances.len(), aborted);
    if bench.instances.iter().any(|i| i.gold_answer.is_some()) {
        summary.push_str(&format!(
            " accuracy={}",
            fmt_sig6(harness::accuracy_of(&traces, &bench.instances))
        ));
    }
    summary.push_str(&format!(" fallback_rate={}", fmt_sig6(fallback_fraction(&traces))));
    println!("{summary}");

    if aborted > 0 {
        return Err(Error::Backend {
            message: format!("{aborted} instance(s) aborted; see trace stubs in {}", out_dir.display()),
            status: None,
        });
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let bench = build_workbench(&args.shared)?;
    let out_path = args.out.clone().unwrap_or_else(|| {
        let name = format!("ablate_{}.csv", args.kind.as_str());
        match &bench.config.output_dir {
            Some(dir) => dir.join(name),
            None => PathBuf::from(name),
        }
    });
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }

    let pipeline = Pipeline {
        judges: &bench.judges,
        generator: &bench.generator,
        generator_config: &bench.config.generator,
        terminal: &bench.terminal,
        seed: bench.config.seed,
        mode: bench.mode.as_str(),
    };
    let note = (bench.mode == RunMode::Synthetic).then_some(SYNTHETIC_NOTE);

    let json_path = args.json.then(|| out_path.with_extension("json"));
    match args.kind {
        AblateKind::Tau | AblateKind::Epsilon => {
            let (parameter, default_grid, fixed) = match args.kind {
                AblateKind::Tau => (
                    SweepParameter::Tau,
                    DEFAULT_TAU_GRID.to_vec(),
                    bench.config.policy.epsilon,
                ),
                _ => (
                    SweepParameter::Epsilon,
                    DEFAULT_EPSILON_GRID.to_vec(),
                    bench.config.policy.tau,
                ),
            };
            let sweep = SweepConfig {
                parameter,
                grid: args.grid.clone().unwrap_or(default_grid),
                fixed_policy_other: fixed,
                strategy: args.shared.strategy.unwrap_or(Strategy::FullNash),
            };
            let rows = pipeline.run_sweep(&bench.instances, &sweep)?;
            harness::write_report(&rows, &out_path)?;
            if let Some(path) = &json_path {
                write_json(path, &harness::report_json(bench.mode.as_str(), note, &rows))?;
            }
        }
        AblateKind::Strategy => {
            if args.grid.is_some() {
                return Err(Error::Config(
                    "--grid applies to tau/epsilon sweeps, not the strategy decomposition".into(),
                ));
            }
            let rows = pipeline.run_decomposition(
                &bench.instances,
                bench.config.policy,
                &Strategy::ALL,
            )?;
            harness::write_report(&rows, &out_path)?;
            if let Some(path) = &json_path {
                write_json(path, &harness::report_json(bench.mode.as_str(), note, &rows))?;
            }
        }
    }

    if let Some(note) = note {
        println!("note: {note}");
    }
    println!("wrote {}", out_path.display());
    if let Some(path) = &json_path {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let entries = std::fs::read_dir(&args.traces).map_err(|e| Error::io(&args.traces, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();

    let mut traces = Vec::new();
    let mut aborted = 0usize;
    for file in &files {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::FixtureShape(format!("{}: {e}", file.display())))?;
        if value.get("aborted").and_then(|v| v.as_bool()) == Some(true) {
            aborted += 1;
            continue;
        }
        let trace: TraceRecord = serde_json::from_value(value)
            .map_err(|e| Error::FixtureShape(format!("{}: {e}", file.display())))?;
        traces.push(trace);
    }

    let instances = match &args.instances {
        Some(path) => load_instances(path)?,
        None => Vec::new(),
    };

    let mut summary = format!("traces={} aborted={aborted}", traces.len());
    if instances.iter().any(|i| i.gold_answer.is_some()) {
        summary.push_str(&format!(
            " accuracy={}",
            fmt_sig6(harness::accuracy_of(&traces, &instances))
        ));
    }
    summary.push_str(&format!(" fallback_rate={}", fmt_sig6(fallback_fraction(&traces))));
    println!("{summary}");
    Ok(())
}
