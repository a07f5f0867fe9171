//! Batch evaluation: grid sweeps over the acceptance policy, the
//! five-strategy decomposition, the serving-cost model, and report
//! rendering.
//!
//! Every grid point (and every strategy) replays the full step loop over
//! the same instances with the same seed. Judge draws are keyed by
//! (instance, step, candidate, judge) — not by policy — so rows differ
//! only through the parameter under study. All rate columns are fractions
//! in `[0, 1]`.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::judges::Judge;
use crate::orchestrator::fixtures::InstanceFixture;
use crate::orchestrator::generator::{Generator, GeneratorConfig};
use crate::orchestrator::{ConfigSnapshot, TerminalRules, TraceAbort, TraceRecord, TraceRunner};
use crate::policy::{AcceptancePolicy, SelectionMode, Strategy};

pub const DEFAULT_TAU_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 0.6, 1.0, 10.0];
pub const DEFAULT_EPSILON_GRID: [f64; 7] = [0.001, 0.05, 0.1, 0.5, 1.0, 2.5, 3.0];

/// Which acceptance-policy axis a sweep walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Tau,
    Epsilon,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::Tau => "tau",
            SweepParameter::Epsilon => "epsilon",
        }
    }
}

/// One sweep: the axis, its grid, the held-fixed other threshold, and the
/// selection strategy in force at every grid point.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub fixed_policy_other: f64,
    pub strategy: Strategy,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grid must be non-empty".into()));
        }
        for pair in self.grid.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::InvalidArgument(format!(
                    "sweep grid must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for &v in &self.grid {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    name: "sweep grid value",
                    value: v,
                });
            }
        }
        Ok(())
    }

    fn policy_at(&self, value: f64) -> AcceptancePolicy {
        match self.parameter {
            SweepParameter::Tau => AcceptancePolicy {
                tau: value,
                epsilon: self.fixed_policy_other,
            },
            SweepParameter::Epsilon => AcceptancePolicy {
                tau: self.fixed_policy_other,
                epsilon: value,
            },
        }
    }
}

/// One sweep grid point's aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub sweep_value: f64,
    pub accuracy: f64,
    pub accept_rate: f64,
    pub mean_eq_score: f64,
    pub mean_dispersion: f64,
    pub fallback_pct: f64,
    pub normal_mode_pct: f64,
}

/// One strategy's aggregate metrics in the mechanism decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub strategy: Strategy,
    pub avg_accepted_per_step: f64,
    pub all_rejected_pct: f64,
    pub accuracy: f64,
}

/// The shared machinery a batch run needs; policies and strategies vary
/// per call.
pub struct Pipeline<'a> {
    pub judges: &'a [Judge],
    pub generator: &'a Generator,
    pub generator_config: &'a GeneratorConfig,
    pub terminal: &'a TerminalRules,
    pub seed: u64,
    /// Label recorded in trace snapshots ("scripted" / "synthetic" / "remote").
    pub mode: &'a str,
}

fn abort_error(abort: TraceAbort) -> Error {
    Error::Backend {
        message: format!("instance {:?} aborted: {}", abort.instance_id, abort.error),
        status: None,
    }
}

impl Pipeline<'_> {
    /// Traces every instance under one policy/strategy. Instances are
    /// independent, so they fan out; results keep instance order. The
    /// first abort fails the whole batch, named.
    pub fn run_batch(
        &self,
        instances: &[InstanceFixture],
        policy: AcceptancePolicy,
        strategy: Strategy,
    ) -> Result<Vec<TraceRecord>> {
        policy.validate()?;
        let snapshot = ConfigSnapshot::new(
            self.mode,
            strategy,
            self.seed,
            &policy,
            self.generator_config,
            self.judges,
        );
        let runner = TraceRunner {
            judges: self.judges,
            generator: self.generator,
            generator_config: self.generator_config,
            terminal: self.terminal,
            policy,
            strategy,
            seed: self.seed,
            snapshot,
        };
        exec::map_ordered(instances, |instance| runner.run(instance))
            .into_iter()
            .map(|r| r.map_err(abort_error))
            .collect()
    }

    /// One [`MetricsRow`] per grid value, in grid order.
    pub fn run_sweep(
        &self,
        instances: &[InstanceFixture],
        sweep: &SweepConfig,
    ) -> Result<Vec<MetricsRow>> {
        sweep.validate()?;
        sweep
            .grid
            .iter()
            .map(|&value| {
                let traces = self.run_batch(instances, sweep.policy_at(value), sweep.strategy)?;
                Ok(metrics_row(value, &traces, instances))
            })
            .collect()
    }

    /// One [`DecompositionRow`] per strategy, same policy and seed for all.
    pub fn run_decomposition(
        &self,
        instances: &[InstanceFixture],
        policy: AcceptancePolicy,
        strategies: &[Strategy],
    ) -> Result<Vec<DecompositionRow>> {
        strategies
            .iter()
            .map(|&strategy| {
                let traces = self.run_batch(instances, policy, strategy)?;
                Ok(decomposition_row(strategy, &traces, instances))
            })
            .collect()
    }
}

fn normalized(answer: &str) -> String {
    answer.trim().to_lowercase()
}

/// Fraction of gold-labeled instances whose extracted answer matches the
/// gold answer after trimming and lowercasing. Instances without a gold
/// answer don't count either way; no gold answers at all reads as 0.
pub fn accuracy_of(traces: &[TraceRecord], instances: &[InstanceFixture]) -> f64 {
    let golds: HashMap<&str, String> = instances
        .iter()
        .filter_map(|i| {
            i.gold_answer
                .as_deref()
                .map(|g| (i.instance_id.as_str(), normalized(g)))
        })
        .collect();
    let mut graded = 0usize;
    let mut correct = 0usize;
    for trace in traces {
        if let Some(gold) = golds.get(trace.instance_id.as_str()) {
            graded += 1;
            if trace.extracted_answer.as_deref().map(normalized).as_ref() == Some(gold) {
                correct += 1;
            }
        }
    }
    if graded == 0 {
        0.0
    } else {
        correct as f64 / graded as f64
    }
}

/// Aggregates one grid point's traces. Candidate-level columns average
/// over every assessed candidate; mode columns average over steps.
pub fn metrics_row(
    sweep_value: f64,
    traces: &[TraceRecord],
    instances: &[InstanceFixture],
) -> MetricsRow {
    let mut candidates = 0usize;
    let mut accepted = 0usize;
    let mut eq_sum = 0.0;
    let mut dispersion_sum = 0.0;
    let mut steps = 0usize;
    let mut fallback = 0usize;
    let mut normal = 0usize;
    for trace in traces {
        for step in &trace.steps {
            steps += 1;
            match step.selection.mode {
                SelectionMode::Fallback => fallback += 1,
                SelectionMode::Normal => normal += 1,
            }
            for candidate in &step.candidates {
                candidates += 1;
                if candidate.accepted {
                    accepted += 1;
                }
                eq_sum += candidate.equilibrium.mean;
                dispersion_sum += candidate.equilibrium.dispersion;
            }
        }
    }
    let per_candidate = |sum: f64| if candidates == 0 { 0.0 } else { sum / candidates as f64 };
    let per_step = |count: usize| if steps == 0 { 0.0 } else { count as f64 / steps as f64 };
    MetricsRow {
        sweep_value,
        accuracy: accuracy_of(traces, instances),
        accept_rate: per_candidate(accepted as f64),
        mean_eq_score: per_candidate(eq_sum),
        mean_dispersion: per_candidate(dispersion_sum),
        fallback_pct: per_step(fallback),
        normal_mode_pct: per_step(normal),
    }
}

pub fn decomposition_row(
    strategy: Strategy,
    traces: &[TraceRecord],
    instances: &[InstanceFixture],
) -> DecompositionRow {
    let mut steps = 0usize;
    let mut accepted = 0usize;
    let mut all_rejected_steps = 0usize;
    for trace in traces {
        for step in &trace.steps {
            steps += 1;
            let step_accepted = step.candidates.iter().filter(|c| c.accepted).count();
            accepted += step_accepted;
            if step_accepted == 0 {
                all_rejected_steps += 1;
            }
        }
    }
    let per_step = |count: f64| if steps == 0 { 0.0 } else { count / steps as f64 };
    DecompositionRow {
        strategy,
        avg_accepted_per_step: per_step(accepted as f64),
        all_rejected_pct: per_step(all_rejected_steps as f64),
        accuracy: accuracy_of(traces, instances),
    }
}

/// Predicted inference-cost multiple of verified decoding over plain
/// decoding: `k` candidate generations plus `k * m` judge calls each
/// costing `alpha` of a generation. Assumes `k >= 1`, `m >= 0`,
/// `alpha >= 0`.
pub fn overhead_ratio(candidates: usize, judges: usize, alpha: f64) -> f64 {
    let k = candidates as f64;
    k + k * judges as f64 * alpha
}

/// Decimal formatting for reports: at least six significant digits AND at
/// least six decimal places, so values round-trip within 1e-6 under both
/// relative and absolute readings.
pub fn fmt_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let decimals = if x == 0.0 {
        6
    } else {
        (5 - x.abs().log10().floor() as i64).max(6) as usize
    };
    format!("{x:.decimals$}")
}

/// A report row type: its fixed header plus its formatted fields.
pub trait ReportRow {
    const HEADER: &'static str;
    fn to_fields(&self) -> Vec<String>;
}

impl ReportRow for MetricsRow {
    const HEADER: &'static str =
        "sweep_value,accuracy,accept_rate,mean_eq_score,mean_dispersion,fallback_pct,normal_mode_pct";

    fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_sig6(self.sweep_value),
            fmt_sig6(self.accuracy),
            fmt_sig6(self.accept_rate),
            fmt_sig6(self.mean_eq_score),
            fmt_sig6(self.mean_dispersion),
            fmt_sig6(self.fallback_pct),
            fmt_sig6(self.normal_mode_pct),
        ]
    }
}

impl ReportRow for DecompositionRow {
    const HEADER: &'static str = "strategy,avg_accepted_per_step,all_rejected_pct,accuracy";

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.strategy.as_str().to_string(),
            fmt_sig6(self.avg_accepted_per_step),
            fmt_sig6(self.all_rejected_pct),
            fmt_sig6(self.accuracy),
        ]
    }
}

pub fn render_report<R: ReportRow>(rows: &[R]) -> String {
    let mut out = String::from(R::HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_fields().join(","));
        out.push('\n');
    }
    out
}

pub fn write_report<R: ReportRow>(rows: &[R], path: &Path) -> Result<()> {
    std::fs::write(path, render_report(rows)).map_err(|e| Error::io(path, e))
}

/// JSON twin of the CSV report, with room for a dataset label and a note —
/// synthetic-fixture outputs get labeled so nobody mistakes them for real
/// benchmark numbers.
pub fn report_json<R: ReportRow + Serialize>(
    dataset: &str,
    note: Option<&str>,
    rows: &[R],
) -> serde_json::Value {
    let mut value = serde_json::json!({
        "dataset": dataset,
        "rows": rows,
    });
    if let Some(note) = note {
        value["note"] = note.into();
    }
    value
}
