//! Judge backends and their shared plumbing.
//!
//! A judge sees the question, the accepted steps so far, and one candidate
//! step — never another judge's opinion and never a rejected candidate.
//! That isolation is structural: [`JudgeContext`] simply has no field that
//! could carry a score, so coordination happens only later, in the
//! equilibrium layer.
//!
//! Three backends implement the same `score` contract: scripted lookup
//! from a fixture table, a synthetic noise model driven by per-query keyed
//! streams, and a remote chat-completions endpoint.

pub mod prompt;
pub mod remote;
pub mod scripted;
pub mod synthetic;

use std::path::PathBuf;
use std::sync::Arc;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams;

pub use prompt::{render_prompt, PromptPart};
pub use remote::{ChatClient, RemoteJudge, Sampling};
pub use scripted::{ScoreFixture, ScoreRecord};
pub use synthetic::{synthetic_sample, SyntheticJudgeParams};

/// Everything a judge is allowed to see for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeContext {
    pub question: String,
    /// Opaque locator for an optional image (a file path for the remote
    /// backend, which inlines it as a data URL).
    pub image_reference: Option<String>,
    /// Accepted steps so far, in order.
    pub prior_steps: Vec<String>,
    pub candidate_step: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Scripted,
    Synthetic,
    Remote,
}

/// Static description of one judge: its name, backend kind, and
/// stubbornness weight, plus backend locators where they apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSpec {
    pub name: String,
    pub kind: JudgeKind,
    pub stubbornness: f64,
    /// Prompt template path; required by the remote backend.
    pub prompt_template_ref: Option<PathBuf>,
    /// Endpoint locator; required by the remote backend.
    pub backend_ref: Option<String>,
}

impl JudgeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidArgument("judge name must be non-empty".into()));
        }
        if !self.stubbornness.is_finite() {
            return Err(Error::NonFinite {
                name: "judge stubbornness",
                value: self.stubbornness,
            });
        }
        if self.stubbornness <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "judge {:?} stubbornness must be > 0, got {}",
                self.name, self.stubbornness
            )));
        }
        if self.kind == JudgeKind::Remote {
            if self.prompt_template_ref.is_none() {
                return Err(Error::Config(format!(
                    "judge {:?}: remote kind requires a prompt template",
                    self.name
                )));
            }
            if self.backend_ref.is_none() {
                return Err(Error::Config(format!(
                    "judge {:?}: remote kind requires a backend endpoint",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Coordinates identifying one judge query within a run. The scripted
/// backend uses them as the fixture key; the synthetic backend folds them
/// into its random stream; `step_is_correct` carries the fixture's label
/// for the synthetic noise model.
#[derive(Debug, Clone, Copy)]
pub struct ScoreKey<'a> {
    pub instance_id: &'a str,
    pub step_index: usize,
    pub candidate_index: usize,
    pub step_is_correct: Option<bool>,
}

enum Backend {
    Scripted(Arc<ScoreFixture>),
    Synthetic { params: SyntheticJudgeParams, seed: u64 },
    Remote(Box<RemoteJudge>),
}

/// A [`JudgeSpec`] bound to its runtime resources.
pub struct Judge {
    spec: JudgeSpec,
    backend: Backend,
}

impl std::fmt::Debug for Judge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Judge").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Judge {
    pub fn scripted(spec: JudgeSpec, fixture: Arc<ScoreFixture>) -> Result<Self> {
        spec.validate()?;
        if spec.kind != JudgeKind::Scripted {
            return Err(Error::Config(format!(
                "judge {:?}: scripted backend bound to {:?} spec",
                spec.name, spec.kind
            )));
        }
        Ok(Self {
            spec,
            backend: Backend::Scripted(fixture),
        })
    }

    pub fn synthetic(spec: JudgeSpec, params: SyntheticJudgeParams, seed: u64) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        if spec.kind != JudgeKind::Synthetic {
            return Err(Error::Config(format!(
                "judge {:?}: synthetic backend bound to {:?} spec",
                spec.name, spec.kind
            )));
        }
        Ok(Self {
            spec,
            backend: Backend::Synthetic { params, seed },
        })
    }

    pub fn remote(spec: JudgeSpec, remote: RemoteJudge) -> Result<Self> {
        spec.validate()?;
        if spec.kind != JudgeKind::Remote {
            return Err(Error::Config(format!(
                "judge {:?}: remote backend bound to {:?} spec",
                spec.name, spec.kind
            )));
        }
        Ok(Self {
            spec,
            backend: Backend::Remote(Box::new(remote)),
        })
    }

    pub fn spec(&self) -> &JudgeSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn stubbornness(&self) -> f64 {
        self.spec.stubbornness
    }

    /// Scores one candidate step in `[0, 1]`.
    pub fn score(&self, key: &ScoreKey<'_>, ctx: &JudgeContext) -> Result<f64> {
        match &self.backend {
            Backend::Scripted(fixture) => fixture.lookup(
                key.instance_id,
                key.step_index,
                key.candidate_index,
                &self.spec.name,
            ),
            Backend::Synthetic { params, seed } => {
                let is_correct = key.step_is_correct.ok_or_else(|| {
                    Error::FixtureShape(format!(
                        "instance {:?} step {} candidate {}: synthetic judges need is_correct",
                        key.instance_id, key.step_index, key.candidate_index
                    ))
                })?;
                let mut rng = streams::judge_stream(
                    *seed,
                    key.instance_id,
                    key.step_index,
                    key.candidate_index,
                    &self.spec.name,
                );
                Ok(synthetic_sample(params, is_correct, &mut rng))
            }
            Backend::Remote(remote) => remote.score(ctx),
        }
    }
}

static NUMBER_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:[0-9]+(?:\.[0-9]+)?|\.[0-9]+)").unwrap());

/// Extracts the first decimal-number token from judge output and clamps it
/// to `[0, 1]`. Dot is the only decimal separator. Text with no numeric
/// token is a parse error carrying the offending output.
pub fn parse_score(text: &str) -> Result<f64> {
    let token = NUMBER_TOKEN.find(text).ok_or_else(|| Error::ScoreParse {
        text: text.to_string(),
    })?;
    let value: f64 = token.as_str().parse().map_err(|_| Error::ScoreParse {
        text: text.to_string(),
    })?;
    Ok(value.clamp(0.0, 1.0))
}
