//! Step-loop driver: for each step it collects candidate continuations,
//! has every judge score every candidate, solves the agreement game per
//! candidate, applies the acceptance policy, and appends the winner to the
//! growing chain. A chain ends when the selected step carries an end marker
//! or an answer line, or when the step budget runs out.
//!
//! The emitted trace is a complete audit record: every candidate's raw
//! score vector and coordinated solution appears exactly once, alongside a
//! snapshot of the configuration that produced it.

pub mod fixtures;
pub mod generator;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumSolution, RawScoreVector, StubbornnessVector};
use crate::error::{Error, Result};
use crate::exec;
use crate::judges::{Judge, JudgeContext, JudgeKind, ScoreKey};
use crate::policy::{select_with_strategy, AcceptancePolicy, SelectionMode, SelectionOutcome, Strategy};
use crate::streams::selection_stream;

use fixtures::InstanceFixture;
use generator::{GeneratedCandidate, Generator, GeneratorConfig};

/// Answer lines look like "... answer is (A) ...", case-insensitively; the
/// single capture group holds the answer token.
pub const DEFAULT_ANSWER_PATTERN: &str = r"(?i)answer\s+is\s*\(([A-Za-z0-9]+)\)";

pub const DEFAULT_END_MARKER: &str = "<eos>";

/// When a chain stops: an end marker / answer line, or the step budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndToken,
    MaxSteps,
}

/// Decides when a selected step ends the chain and how the final answer is
/// read back out of it.
#[derive(Debug, Clone)]
pub struct TerminalRules {
    markers: Vec<String>,
    pattern: Regex,
}

impl TerminalRules {
    pub fn new(markers: Vec<String>, answer_pattern: &str) -> Result<Self> {
        let pattern = Regex::new(answer_pattern)
            .map_err(|e| Error::Config(format!("answer pattern: {e}")))?;
        // captures_len counts the implicit whole-match group.
        if pattern.captures_len() != 2 {
            return Err(Error::Config(format!(
                "answer pattern must have exactly one capture group, {answer_pattern:?} has {}",
                pattern.captures_len() - 1
            )));
        }
        Ok(Self { markers, pattern })
    }

    /// True when the text contains any end marker or any of its lines
    /// matches the answer pattern. Empty markers are ignored — every string
    /// contains them.
    pub fn is_terminal(&self, text: &str) -> bool {
        self.markers
            .iter()
            .any(|m| !m.is_empty() && text.contains(m.as_str()))
            || text.lines().any(|line| self.pattern.is_match(line))
    }

    /// The capture of the last pattern match across the selected steps, in
    /// order — later answers supersede earlier ones.
    pub fn extract_answer(&self, selected_steps: &[String]) -> Option<String> {
        let mut answer = None;
        for step in selected_steps {
            for caps in self.pattern.captures_iter(step) {
                if let Some(m) = caps.get(1) {
                    answer = Some(m.as_str().to_string());
                }
            }
        }
        answer
    }
}

impl Default for TerminalRules {
    fn default() -> Self {
        Self::new(vec![DEFAULT_END_MARKER.to_string()], DEFAULT_ANSWER_PATTERN)
            .expect("default terminal rules compile")
    }
}

/// One candidate's full audit entry for one step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub text: String,
    pub raw_scores: Vec<f64>,
    pub equilibrium: EquilibriumSolution,
    pub accepted: bool,
    pub rank_score: f64,
}

/// The decision alone; the per-candidate evidence lives in
/// [`StepRecord::candidates`] so each score appears exactly once.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub chosen_index: usize,
    pub mode: SelectionMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub candidates: Vec<CandidateRecord>,
    pub selection: SelectionSummary,
    pub selected_text: String,
}

impl StepRecord {
    fn compose(
        step_index: usize,
        candidates: Vec<GeneratedCandidate>,
        outcome: SelectionOutcome,
    ) -> Self {
        let selected_text = candidates[outcome.chosen_index].text.clone();
        let selection = SelectionSummary {
            chosen_index: outcome.chosen_index,
            mode: outcome.mode,
        };
        let candidates = candidates
            .into_iter()
            .zip(outcome.assessments)
            .map(|(candidate, a)| CandidateRecord {
                text: candidate.text,
                raw_scores: a.raw.scores().to_vec(),
                equilibrium: a.equilibrium,
                accepted: a.accepted,
                rank_score: a.rank_score,
            })
            .collect();
        Self {
            step_index,
            candidates,
            selection,
            selected_text,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeSnapshot {
    pub name: String,
    pub kind: JudgeKind,
    pub stubbornness: f64,
}

/// The run parameters embedded into every trace so it can be interpreted
/// (and replayed) without the original invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub mode: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub tau: f64,
    pub epsilon: f64,
    pub generator: GeneratorConfig,
    pub judges: Vec<JudgeSnapshot>,
}

impl ConfigSnapshot {
    pub fn new(
        mode: &str,
        strategy: Strategy,
        seed: u64,
        policy: &AcceptancePolicy,
        generator: &GeneratorConfig,
        judges: &[Judge],
    ) -> Self {
        Self {
            mode: mode.to_string(),
            strategy,
            seed,
            tau: policy.tau,
            epsilon: policy.epsilon,
            generator: generator.clone(),
            judges: judges
                .iter()
                .map(|j| JudgeSnapshot {
                    name: j.name().to_string(),
                    kind: j.spec().kind,
                    stubbornness: j.stubbornness(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub instance_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_reference: Option<String>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_answer: Option<String>,
    pub config: ConfigSnapshot,
}

/// A run that died mid-instance. Completed steps are kept for forensics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceAbort {
    pub instance_id: String,
    pub question: String,
    pub aborted: bool,
    pub error: String,
    pub steps: Vec<StepRecord>,
}

/// Everything needed to push one instance through the verify-select loop.
pub struct TraceRunner<'a> {
    pub judges: &'a [Judge],
    pub generator: &'a Generator,
    pub generator_config: &'a GeneratorConfig,
    pub terminal: &'a TerminalRules,
    pub policy: AcceptancePolicy,
    pub strategy: Strategy,
    pub seed: u64,
    pub snapshot: ConfigSnapshot,
}

impl TraceRunner<'_> {
    pub fn run(&self, instance: &InstanceFixture) -> std::result::Result<TraceRecord, TraceAbort> {
        let mut steps = Vec::new();
        let mut selected = Vec::new();
        match self.drive(instance, &mut steps, &mut selected) {
            Ok(termination) => Ok(TraceRecord {
                instance_id: instance.instance_id.clone(),
                question: instance.question.clone(),
                image_reference: instance.image_path.clone(),
                extracted_answer: self.terminal.extract_answer(&selected),
                steps,
                termination,
                config: self.snapshot.clone(),
            }),
            Err(e) => Err(TraceAbort {
                instance_id: instance.instance_id.clone(),
                question: instance.question.clone(),
                aborted: true,
                error: e.to_string(),
                steps,
            }),
        }
    }

    fn drive(
        &self,
        instance: &InstanceFixture,
        steps: &mut Vec<StepRecord>,
        selected: &mut Vec<String>,
    ) -> Result<Termination> {
        self.generator_config.validate()?;
        let lambdas = StubbornnessVector::new(
            self.judges.iter().map(|j| j.stubbornness()).collect(),
        )?;
        let m = self.judges.len();

        for step_index in 0..self.generator_config.max_steps {
            let candidates = self.generator.generate_candidates(
                instance,
                step_index,
                selected,
                self.generator_config,
            )?;
            let contexts: Vec<JudgeContext> = candidates
                .iter()
                .map(|c| JudgeContext {
                    question: instance.question.clone(),
                    image_reference: instance.image_path.clone(),
                    prior_steps: selected.clone(),
                    candidate_step: c.text.clone(),
                })
                .collect();

            // Judge queries are independent; fan out over every
            // (candidate, judge) pair, keeping results in pair order.
            let pairs: Vec<(usize, usize)> = (0..candidates.len())
                .flat_map(|c| (0..m).map(move |j| (c, j)))
                .collect();
            let scored = exec::map_ordered(&pairs, |&(c, j)| {
                let key = ScoreKey {
                    instance_id: &instance.instance_id,
                    step_index,
                    candidate_index: c,
                    step_is_correct: candidates[c].is_correct,
                };
                self.judges[j].score(&key, &contexts[c])
            });

            let mut scored = scored.into_iter();
            let mut raw_matrix = Vec::with_capacity(candidates.len());
            for _ in 0..candidates.len() {
                let row = (0..m)
                    .map(|_| scored.next().expect("one result per pair"))
                    .collect::<Result<Vec<f64>>>()?;
                raw_matrix.push(RawScoreVector::new(row)?);
            }

            let mut rng = selection_stream(self.seed, &instance.instance_id, step_index);
            let outcome = select_with_strategy(
                self.strategy,
                &raw_matrix,
                &lambdas,
                &self.policy,
                Some(&mut rng),
            )?;

            let record = StepRecord::compose(step_index, candidates, outcome);
            selected.push(record.selected_text.clone());
            let terminal = self.terminal.is_terminal(&record.selected_text);
            steps.push(record);
            if terminal {
                return Ok(Termination::EndToken);
            }
        }
        Ok(Termination::MaxSteps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judges::{JudgeSpec, ScoreFixture, ScoreRecord};
    use std::sync::Arc;

    fn rules() -> TerminalRules {
        TerminalRules::default()
    }

    #[test]
    fn default_rules_fire_on_marker_or_answer_line() {
        let rules = rules();
        assert!(rules.is_terminal("compute 3 + 4 = 7 <eos>"));
        assert!(rules.is_terminal("So the answer is (B)."));
        assert!(rules.is_terminal("so THE ANSWER IS (b)"));
        assert!(!rules.is_terminal("take the derivative"));
        assert!(!rules.is_terminal("the answer is B"));
    }

    #[test]
    fn empty_marker_never_terminates() {
        let rules = TerminalRules::new(vec![String::new()], DEFAULT_ANSWER_PATTERN).unwrap();
        assert!(!rules.is_terminal("an ordinary step"));
    }

    #[test]
    fn answer_extraction_keeps_the_last_match() {
        let rules = rules();
        let steps = vec![
            "first the answer is (A)".to_string(),
            "no answer here".to_string(),
            "correction: the answer is (C) <eos>".to_string(),
        ];
        assert_eq!(rules.extract_answer(&steps).as_deref(), Some("C"));
        assert_eq!(rules.extract_answer(&steps[1..2]), None);
    }

    #[test]
    fn pattern_must_have_exactly_one_capture_group() {
        let err = TerminalRules::new(vec![], r"answer is \w+").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = TerminalRules::new(vec![], r"(a)(b)").unwrap_err();
        assert!(err.to_string().contains("has 2"), "{err}");
        let err = TerminalRules::new(vec![], r"(unclosed").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    fn record(
        instance: &str,
        step: usize,
        candidate: usize,
        judge: &str,
        score: f64,
    ) -> ScoreRecord {
        ScoreRecord {
            instance_id: instance.to_string(),
            step_index: step,
            candidate_index: candidate,
            judge_name: judge.to_string(),
            score,
        }
    }

    fn scripted_judges(records: Vec<ScoreRecord>) -> Vec<Judge> {
        let fixture = Arc::new(ScoreFixture::from_records(records).unwrap());
        [("visual", 1.5), ("logical", 1.0), ("contextual", 0.8)]
            .into_iter()
            .map(|(name, stubbornness)| {
                Judge::scripted(
                    JudgeSpec {
                        name: name.to_string(),
                        kind: JudgeKind::Scripted,
                        stubbornness,
                        prompt_template_ref: None,
                        backend_ref: None,
                    },
                    Arc::clone(&fixture),
                )
                .unwrap()
            })
            .collect()
    }

    fn instance(id: &str, steps: Vec<Vec<&str>>) -> InstanceFixture {
        InstanceFixture {
            instance_id: id.to_string(),
            question: "what is 3 + 4?".to_string(),
            image_path: None,
            gold_answer: Some("A".to_string()),
            steps: steps
                .into_iter()
                .map(|candidates| fixtures::StepFixture {
                    candidates: candidates
                        .into_iter()
                        .map(|text| fixtures::CandidateFixture {
                            text: text.to_string(),
                            is_correct: None,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn runner<'a>(
        judges: &'a [Judge],
        generator: &'a Generator,
        config: &'a GeneratorConfig,
        terminal: &'a TerminalRules,
        strategy: Strategy,
        seed: u64,
    ) -> TraceRunner<'a> {
        let policy = AcceptancePolicy::default();
        let snapshot =
            ConfigSnapshot::new("scripted", strategy, seed, &policy, config, judges);
        TraceRunner {
            judges,
            generator: &*generator,
            generator_config: config,
            terminal,
            policy,
            strategy,
            seed,
            snapshot,
        }
    }

    #[test]
    fn single_step_trace_selects_the_agreed_candidate() {
        let id = "t1";
        let mut records = Vec::new();
        let matrix = [
            [0.9, 0.85, 0.9],
            [0.2, 0.3, 0.25],
            [0.7, 0.6, 0.65],
        ];
        for (c, row) in matrix.iter().enumerate() {
            for (j, judge) in ["visual", "logical", "contextual"].iter().enumerate() {
                records.push(record(id, 0, c, judge, row[j]));
            }
        }
        let judges = scripted_judges(records);
        let inst = instance(
            id,
            vec![vec![
                "3 + 4 = 7, so the answer is (A) <eos>",
                "3 + 4 = 8, so the answer is (B) <eos>",
                "3 + 4 = 7, so the answer is (C) <eos>",
            ]],
        );
        let config = GeneratorConfig::default();
        let terminal = rules();
        let generator = Generator::Scripted;
        let trace = runner(&judges, &generator, &config, &terminal, Strategy::FullNash, 42)
            .run(&inst)
            .unwrap();

        assert_eq!(trace.steps.len(), 1);
        let step = &trace.steps[0];
        assert_eq!(step.selection.chosen_index, 0);
        assert_eq!(step.selection.mode, SelectionMode::Normal);
        assert!(step.candidates[0].accepted);
        assert!(!step.candidates[1].accepted);
        assert_eq!(trace.termination, Termination::EndToken);
        assert_eq!(trace.extracted_answer.as_deref(), Some("A"));
        assert_eq!(step.candidates[0].raw_scores, matrix[0]);

        // Audit completeness: steps × candidates × judges raw scores, each
        // exactly once.
        let total: usize = trace
            .steps
            .iter()
            .flat_map(|s| s.candidates.iter())
            .map(|c| c.raw_scores.len())
            .sum();
        assert_eq!(total, trace.steps.len() * 3 * 3);
    }

    #[test]
    fn uniform_low_scores_fall_back() {
        let id = "t2";
        let mut records = Vec::new();
        for c in 0..3 {
            for judge in ["visual", "logical", "contextual"] {
                records.push(record(id, 0, c, judge, 0.5));
            }
        }
        let judges = scripted_judges(records);
        let inst = instance(
            id,
            vec![vec![
                "the answer is (B) <eos>",
                "the answer is (B) <eos>",
                "the answer is (B) <eos>",
            ]],
        );
        let config = GeneratorConfig::default();
        let terminal = rules();
        let generator = Generator::Scripted;
        let trace = runner(&judges, &generator, &config, &terminal, Strategy::FullNash, 42)
            .run(&inst)
            .unwrap();
        let step = &trace.steps[0];
        assert_eq!(step.selection.mode, SelectionMode::Fallback);
        assert_eq!(step.selection.chosen_index, 0);
        assert!(step.candidates.iter().all(|c| !c.accepted));
        assert_eq!(trace.extracted_answer.as_deref(), Some("B"));
    }

    #[test]
    fn step_budget_caps_the_chain() {
        let id = "t3";
        let mut records = Vec::new();
        for step in 0..2 {
            for c in 0..3 {
                for judge in ["visual", "logical", "contextual"] {
                    records.push(record(id, step, c, judge, 0.8));
                }
            }
        }
        let judges = scripted_judges(records);
        let inst = instance(
            id,
            vec![
                vec!["expand the square", "draw a diagram", "guess"],
                vec!["collect terms", "integrate", "differentiate"],
            ],
        );
        let config = GeneratorConfig {
            max_steps: 2,
            ..GeneratorConfig::default()
        };
        let terminal = rules();
        let generator = Generator::Scripted;
        let trace = runner(&judges, &generator, &config, &terminal, Strategy::FullNash, 42)
            .run(&inst)
            .unwrap();
        assert_eq!(trace.termination, Termination::MaxSteps);
        assert_eq!(trace.steps.len(), 2);
        assert!(trace.extracted_answer.is_none());
        assert_eq!(trace.steps[1].step_index, 1);
    }

    #[test]
    fn traces_replay_byte_identically() {
        let id = "t4";
        let mut records = Vec::new();
        for c in 0..3 {
            for (j, judge) in ["visual", "logical", "contextual"].iter().enumerate() {
                records.push(record(id, 0, c, judge, 0.55 + 0.05 * (c as f64) + 0.01 * j as f64));
            }
        }
        let judges = scripted_judges(records);
        let inst = instance(
            id,
            vec![vec![
                "the answer is (A) <eos>",
                "the answer is (B) <eos>",
                "the answer is (C) <eos>",
            ]],
        );
        let config = GeneratorConfig::default();
        let terminal = rules();
        let generator = Generator::Scripted;
        // Random consults the keyed selection stream, so byte-identity
        // exercises seeding, not just arithmetic.
        let a = runner(&judges, &generator, &config, &terminal, Strategy::Random, 7)
            .run(&inst)
            .unwrap();
        let b = runner(&judges, &generator, &config, &terminal, Strategy::Random, 7)
            .run(&inst)
            .unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn missing_scores_abort_with_context() {
        let id = "t5";
        // Only candidate 0 is scored; candidate 1 lookups must fail.
        let mut records = Vec::new();
        for judge in ["visual", "logical", "contextual"] {
            records.push(record(id, 0, 0, judge, 0.9));
        }
        let judges = scripted_judges(records);
        let inst = instance(id, vec![vec!["a <eos>", "b <eos>", "c <eos>"]]);
        let config = GeneratorConfig::default();
        let terminal = rules();
        let generator = Generator::Scripted;
        let abort = runner(&judges, &generator, &config, &terminal, Strategy::FullNash, 42)
            .run(&inst)
            .unwrap_err();
        assert!(abort.aborted);
        assert_eq!(abort.instance_id, id);
        assert!(abort.steps.is_empty());
        assert!(abort.error.contains("t5"), "{}", abort.error);
    }
}
