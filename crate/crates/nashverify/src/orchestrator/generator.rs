//! Candidate-step sources. Scripted runs replay a fixture's pre-authored
//! candidate pool verbatim; remote runs sample fresh continuations from a
//! chat-completions endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judges::prompt::PromptPart;
use crate::judges::remote::{run_attempts, ChatClient, Sampling};
use crate::orchestrator::fixtures::InstanceFixture;

fn default_num_candidates() -> usize {
    3
}
fn default_temperature() -> f64 {
    0.8
}
fn default_top_p() -> f64 {
    0.6
}
fn default_max_new_tokens() -> u32 {
    1000
}
fn default_max_steps() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub num_candidates: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub max_steps: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_candidates: default_num_candidates(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_new_tokens: default_max_new_tokens(),
            max_steps: default_max_steps(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_candidates < 1 {
            return Err(Error::Config(
                "generator.num_candidates must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(
                "generator.temperature must be finite and non-negative".into(),
            ));
        }
        if !self.top_p.is_finite() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(Error::Config(
                "generator.top_p must lie in (0, 1]".into(),
            ));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::Config(
                "generator.max_new_tokens must be at least 1".into(),
            ));
        }
        if self.max_steps < 1 {
            return Err(Error::Config("generator.max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One freshly produced candidate step. The correctness label survives only
/// for scripted pools that carry it; it feeds the synthetic judge backend.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCandidate {
    pub text: String,
    pub is_correct: Option<bool>,
}

pub struct RemoteGenerator {
    client: ChatClient,
    retry_budget: usize,
}

impl RemoteGenerator {
    pub fn new(client: ChatClient, retry_budget: usize) -> Self {
        Self {
            client,
            retry_budget,
        }
    }
}

pub enum Generator {
    /// Replay candidates recorded in the instance fixture.
    Scripted,
    /// Sample candidates from a chat-completions endpoint.
    Remote(RemoteGenerator),
}

impl Generator {
    /// Produces exactly `config.num_candidates` candidates for one step.
    pub fn generate_candidates(
        &self,
        instance: &InstanceFixture,
        step_index: usize,
        prior_steps: &[String],
        config: &GeneratorConfig,
    ) -> Result<Vec<GeneratedCandidate>> {
        match self {
            Generator::Scripted => {
                scripted_candidates(instance, step_index, config.num_candidates)
            }
            Generator::Remote(remote) => {
                remote_candidates(remote, instance, prior_steps, config)
            }
        }
    }
}

fn scripted_candidates(
    instance: &InstanceFixture,
    step_index: usize,
    k: usize,
) -> Result<Vec<GeneratedCandidate>> {
    let step = instance.steps.get(step_index).ok_or_else(|| {
        Error::FixtureShape(format!(
            "instance {:?} has no scripted step {step_index}",
            instance.instance_id
        ))
    })?;
    if step.candidates.len() < k {
        return Err(Error::FixtureShape(format!(
            "instance {:?} step {step_index} offers {} candidates, {k} required",
            instance.instance_id,
            step.candidates.len()
        )));
    }
    step.candidates[..k]
        .iter()
        .map(|c| {
            if c.text.is_empty() {
                return Err(Error::FixtureShape(format!(
                    "instance {:?} step {step_index} has an empty candidate",
                    instance.instance_id
                )));
            }
            Ok(GeneratedCandidate {
                text: c.text.clone(),
                is_correct: c.is_correct,
            })
        })
        .collect()
}

fn remote_candidates(
    remote: &RemoteGenerator,
    instance: &InstanceFixture,
    prior_steps: &[String],
    config: &GeneratorConfig,
) -> Result<Vec<GeneratedCandidate>> {
    let parts = continuation_prompt(instance, prior_steps);
    let sampling = Sampling {
        temperature: config.temperature,
        top_p: config.top_p,
        max_tokens: config.max_new_tokens,
    };
    (0..config.num_candidates)
        .map(|_| {
            let text = run_attempts(remote.retry_budget, || {
                let content = remote.client.complete(&parts, &sampling)?;
                // One step per request: keep only the first line.
                let step = content.lines().next().unwrap_or("").trim().to_string();
                if step.is_empty() {
                    return Err(Error::Backend {
                        message: "endpoint returned an empty step".into(),
                        status: None,
                    });
                }
                Ok(step)
            })?;
            Ok(GeneratedCandidate {
                text,
                is_correct: None,
            })
        })
        .collect()
}

fn continuation_prompt(instance: &InstanceFixture, prior_steps: &[String]) -> Vec<PromptPart> {
    let mut user = format!("Problem:\n{}\n\n", instance.question);
    if prior_steps.is_empty() {
        user.push_str("No steps taken yet.\n");
    } else {
        user.push_str("Steps so far:\n");
        for (i, step) in prior_steps.iter().enumerate() {
            user.push_str(&format!("{}. {}\n", i + 1, step));
        }
    }
    user.push_str("\nWrite the single next step of the solution.");
    let mut parts = vec![
        PromptPart::System(
            "You extend a partial solution one step at a time. Reply with exactly one \
             step and nothing else."
                .to_string(),
        ),
        PromptPart::UserText(user),
    ];
    if let Some(image) = &instance.image_path {
        parts.push(PromptPart::ImageRef(image.clone()));
    }
    parts
}
