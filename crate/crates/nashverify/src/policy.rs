//! Acceptance filtering, ranking, and the selection strategies used by the
//! mechanism-decomposition ablations.
//!
//! A candidate is accepted only when the coordinated scores both agree
//! (dispersion strictly below `epsilon`) and clear the confidence bar
//! (mean strictly above `tau`). Selection then runs in one of two modes:
//! `Normal` picks the highest mean among accepted candidates, `Fallback`
//! (no candidate accepted) picks the highest `mean - dispersion` across
//! all of them. Ties always break toward the lowest candidate index.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    solve_equilibrium, EquilibriumSolution, RawScoreVector, StubbornnessVector,
};
use crate::error::{Error, Result};

/// Default confidence threshold.
pub const DEFAULT_TAU: f64 = 0.6;
/// Default dispersion tolerance.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// The two acceptance knobs: confidence threshold `tau` and dispersion
/// tolerance `epsilon`. Both comparisons are strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptancePolicy {
    pub tau: f64,
    pub epsilon: f64,
}

impl Default for AcceptancePolicy {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl AcceptancePolicy {
    pub fn new(tau: f64, epsilon: f64) -> Result<Self> {
        let policy = Self { tau, epsilon };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::NonFinite {
                name: "policy.tau",
                value: self.tau,
            });
        }
        if !self.epsilon.is_finite() {
            return Err(Error::NonFinite {
                name: "policy.epsilon",
                value: self.epsilon,
            });
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "policy.epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One candidate's full verification record.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAssessment {
    pub candidate_index: usize,
    pub raw: RawScoreVector,
    pub equilibrium: EquilibriumSolution,
    pub accepted: bool,
    /// Continuous ranking key `mean - dispersion`, used in fallback mode.
    pub rank_score: f64,
}

/// How the step's winner was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Normal,
    Fallback,
}

/// The decided step: which candidate won, in which mode, plus every
/// assessment that fed the decision.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub chosen_index: usize,
    pub mode: SelectionMode,
    pub assessments: Vec<CandidateAssessment>,
}

/// Selection strategies: the full mechanism and its four ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Strategy {
    /// Accept-filter then argmax mean (fallback on `mean - dispersion`).
    FullNash,
    /// No filtering: every candidate counts as accepted, argmax `mean - dispersion`.
    NoRejection,
    /// Keep the filter, replace argmax by a uniform draw among accepted.
    NoSelection,
    /// Raw mean / raw deviation substituted for the coordinated statistics.
    RawAverage,
    /// Uniform draw over all candidates.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::FullNash,
        Strategy::NoRejection,
        Strategy::NoSelection,
        Strategy::RawAverage,
        Strategy::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::FullNash => "full_nash",
            Strategy::NoRejection => "no_rejection",
            Strategy::NoSelection => "no_selection",
            Strategy::RawAverage => "raw_average",
            Strategy::Random => "random",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Applies the acceptance policy to one solved candidate.
pub fn assess(
    equilibrium: EquilibriumSolution,
    raw: RawScoreVector,
    candidate_index: usize,
    policy: &AcceptancePolicy,
) -> CandidateAssessment {
    let accepted = equilibrium.dispersion < policy.epsilon && equilibrium.mean > policy.tau;
    let rank_score = equilibrium.mean - equilibrium.dispersion;
    CandidateAssessment {
        candidate_index,
        raw,
        equilibrium,
        accepted,
        rank_score,
    }
}

/// Picks the step winner from a non-empty assessment list.
///
/// `Normal` mode (some candidate accepted): argmax mean over the accepted.
/// `Fallback` mode (none accepted): argmax `rank_score` over all. Ties
/// break toward the lowest candidate index in both modes.
pub fn select(assessments: Vec<CandidateAssessment>) -> Result<SelectionOutcome> {
    if assessments.is_empty() {
        return Err(Error::InvalidArgument(
            "select: empty candidate list".into(),
        ));
    }
    let any_accepted = assessments.iter().any(|a| a.accepted);
    let (chosen_index, mode) = if any_accepted {
        let mut best: Option<(usize, f64)> = None;
        for (i, a) in assessments.iter().enumerate() {
            if !a.accepted {
                continue;
            }
            if best.map_or(true, |(_, mean)| a.equilibrium.mean > mean) {
                best = Some((i, a.equilibrium.mean));
            }
        }
        (best.expect("at least one accepted").0, SelectionMode::Normal)
    } else {
        (argmax_rank(&assessments), SelectionMode::Fallback)
    };
    Ok(SelectionOutcome {
        chosen_index,
        mode,
        assessments,
    })
}

fn argmax_rank(assessments: &[CandidateAssessment]) -> usize {
    let mut best = 0;
    for (i, a) in assessments.iter().enumerate().skip(1) {
        if a.rank_score > assessments[best].rank_score {
            best = i;
        }
    }
    best
}

/// Runs one step's verification under the given strategy.
///
/// Every strategy still solves (or summarizes) all candidates so the audit
/// record stays complete; they differ only in how acceptance and the final
/// pick are derived. `rng` is consulted only by the randomized strategies
/// (`NoSelection`, `Random`) and is an error to omit for those.
pub fn select_with_strategy(
    strategy: Strategy,
    raw_matrix: &[RawScoreVector],
    lambdas: &StubbornnessVector,
    policy: &AcceptancePolicy,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<SelectionOutcome> {
    if raw_matrix.is_empty() {
        return Err(Error::InvalidArgument(
            "select_with_strategy: empty candidate list".into(),
        ));
    }
    policy.validate()?;

    let mut assessments = Vec::with_capacity(raw_matrix.len());
    for (i, raw) in raw_matrix.iter().enumerate() {
        let equilibrium = match strategy {
            // Raw statistics stand in for the coordinated ones wholesale.
            Strategy::RawAverage => EquilibriumSolution::from_scores(raw.scores().to_vec())?,
            _ => solve_equilibrium(raw, lambdas)?,
        };
        assessments.push(assess(equilibrium, raw.clone(), i, policy));
    }

    match strategy {
        Strategy::FullNash | Strategy::RawAverage => select(assessments),
        Strategy::NoRejection => {
            for a in &mut assessments {
                a.accepted = true;
            }
            let chosen_index = argmax_rank(&assessments);
            Ok(SelectionOutcome {
                chosen_index,
                mode: SelectionMode::Normal,
                assessments,
            })
        }
        Strategy::NoSelection => {
            let accepted: Vec<usize> = assessments
                .iter()
                .enumerate()
                .filter(|(_, a)| a.accepted)
                .map(|(i, _)| i)
                .collect();
            if accepted.is_empty() {
                let chosen_index = argmax_rank(&assessments);
                return Ok(SelectionOutcome {
                    chosen_index,
                    mode: SelectionMode::Fallback,
                    assessments,
                });
            }
            let rng = rng.as_deref_mut().ok_or_else(|| {
                Error::InvalidArgument("strategy no_selection requires an rng".into())
            })?;
            let chosen_index = accepted[rng.gen_range(0..accepted.len())];
            Ok(SelectionOutcome {
                chosen_index,
                mode: SelectionMode::Normal,
                assessments,
            })
        }
        Strategy::Random => {
            for a in &mut assessments {
                a.accepted = true;
            }
            let rng = rng
                .as_deref_mut()
                .ok_or_else(|| Error::InvalidArgument("strategy random requires an rng".into()))?;
            let chosen_index = rng.gen_range(0..assessments.len());
            Ok(SelectionOutcome {
                chosen_index,
                mode: SelectionMode::Normal,
                assessments,
            })
        }
    }
}
