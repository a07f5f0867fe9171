//! Run configuration: one strict JSON document. Unknown keys are rejected,
//! every field has a default, and relative paths resolve against the
//! config file's directory so a config stays valid from any working
//! directory. Precedence is handled by the CLI: flags overwrite the loaded
//! config before anything reads it.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judges::remote::{ChatClient, RemoteJudge};
use crate::judges::{Judge, JudgeKind, JudgeSpec, ScoreFixture, SyntheticJudgeParams};
use crate::orchestrator::generator::{Generator, GeneratorConfig, RemoteGenerator};
use crate::orchestrator::{TerminalRules, DEFAULT_ANSWER_PATTERN, DEFAULT_END_MARKER};
use crate::policy::AcceptancePolicy;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    pub name: String,
    pub stubbornness: f64,
    /// Prompt template path for remote mode; defaults to
    /// `{templates_dir}/{name}.txt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<PathBuf>,
    /// Per-judge noise model override for synthetic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticJudgeParams>,
}

/// The stock ensemble: three perspectives with descending stubbornness.
pub fn default_judges() -> Vec<JudgeConfig> {
    [("visual", 1.5), ("logical", 1.0), ("contextual", 0.8)]
        .into_iter()
        .map(|(name, stubbornness)| JudgeConfig {
            name: name.to_string(),
            stubbornness,
            prompt_template: None,
            synthetic: None,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    /// Chat-completions endpoint root; flag and environment override.
    pub base_url: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub retry_budget: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: None,
            model: "default".to_string(),
            timeout_secs: 60,
            retry_budget: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub judges: Vec<JudgeConfig>,
    pub policy: AcceptancePolicy,
    pub generator: GeneratorConfig,
    pub seed: u64,
    pub instances: Option<PathBuf>,
    pub judge_scores: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Regex with exactly one capture group; overrides the stock answer
    /// pattern.
    pub answer_pattern: Option<String>,
    pub eos_markers: Vec<String>,
    pub remote: RemoteConfig,
    /// Noise model for synthetic mode, unless a judge overrides it.
    pub synthetic: SyntheticJudgeParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            judges: default_judges(),
            policy: AcceptancePolicy::default(),
            generator: GeneratorConfig::default(),
            seed: 0,
            instances: None,
            judge_scores: None,
            templates_dir: None,
            output_dir: None,
            answer_pattern: None,
            eos_markers: vec![DEFAULT_END_MARKER.to_string()],
            remote: RemoteConfig::default(),
            synthetic: SyntheticJudgeParams::default(),
        }
    }
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *path = Some(base.join(&p));
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        config.resolve_paths(&base);
        config.validate()?;
        Ok(config)
    }

    /// Rebases every relative path in the config onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.instances);
        resolve(base, &mut self.judge_scores);
        resolve(base, &mut self.templates_dir);
        resolve(base, &mut self.output_dir);
        for judge in &mut self.judges {
            resolve(base, &mut judge.prompt_template);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.judges.len() < 2 {
            return Err(Error::Config(format!(
                "judges: at least two are required, got {}",
                self.judges.len()
            )));
        }
        let mut names = std::collections::HashSet::new();
        for (i, judge) in self.judges.iter().enumerate() {
            if judge.name.is_empty() {
                return Err(Error::Config(format!("judges[{i}].name: must be non-empty")));
            }
            if !judge.stubbornness.is_finite() || judge.stubbornness <= 0.0 {
                return Err(Error::Config(format!(
                    "judges[{i}].stubbornness: must be finite and > 0, got {}",
                    judge.stubbornness
                )));
            }
            if !names.insert(judge.name.as_str()) {
                return Err(Error::Config(format!(
                    "judges[{i}].name: duplicate {:?}",
                    judge.name
                )));
            }
            if let Some(params) = &judge.synthetic {
                params
                    .validate()
                    .map_err(|e| Error::Config(format!("judges[{i}].synthetic: {e}")))?;
            }
        }
        self.policy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.generator.validate()?;
        self.synthetic
            .validate()
            .map_err(|e| Error::Config(format!("synthetic: {e}")))?;
        // Compile eagerly so a bad pattern fails at load, not mid-run.
        self.terminal_rules()?;
        Ok(())
    }

    pub fn terminal_rules(&self) -> Result<TerminalRules> {
        TerminalRules::new(
            self.eos_markers.clone(),
            self.answer_pattern.as_deref().unwrap_or(DEFAULT_ANSWER_PATTERN),
        )
    }

    fn stubbornness_spec(&self, judge: &JudgeConfig, kind: JudgeKind) -> JudgeSpec {
        JudgeSpec {
            name: judge.name.clone(),
            kind,
            stubbornness: judge.stubbornness,
            prompt_template_ref: None,
            backend_ref: None,
        }
    }

    fn template_path(&self, judge: &JudgeConfig) -> Result<PathBuf> {
        if let Some(path) = &judge.prompt_template {
            return Ok(path.clone());
        }
        let dir = self.templates_dir.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "judge {:?}: remote mode needs prompt_template or templates_dir",
                judge.name
            ))
        })?;
        Ok(dir.join(format!("{}.txt", judge.name)))
    }

    fn chat_client(&self, resources: &RemoteResources) -> Result<ChatClient> {
        let base_url = resources
            .base_url
            .as_deref()
            .or(self.remote.base_url.as_deref())
            .ok_or_else(|| {
                Error::Config(
                    "remote mode needs a base URL (flag, environment, or config)".into(),
                )
            })?;
        ChatClient::new(
            base_url,
            &self.remote.model,
            resources.api_key.clone(),
            Duration::from_secs(self.remote.timeout_secs),
        )
    }

    /// Builds the judge ensemble for one mode. Scripted mode needs the
    /// score fixture; remote mode needs endpoint resources and templates.
    pub fn build_judges(
        &self,
        mode: JudgeKind,
        fixture: Option<Arc<ScoreFixture>>,
        remote: &RemoteResources,
    ) -> Result<Vec<Judge>> {
        self.judges
            .iter()
            .map(|judge| match mode {
                JudgeKind::Scripted => {
                    let fixture = fixture.clone().ok_or_else(|| {
                        Error::Config("scripted mode needs a judge_scores fixture".into())
                    })?;
                    Judge::scripted(self.stubbornness_spec(judge, mode), fixture)
                }
                JudgeKind::Synthetic => {
                    let params = judge.synthetic.unwrap_or(self.synthetic);
                    Judge::synthetic(self.stubbornness_spec(judge, mode), params, self.seed)
                }
                JudgeKind::Remote => {
                    let template_path = self.template_path(judge)?;
                    let template = std::fs::read_to_string(&template_path)
                        .map_err(|e| Error::io(&template_path, e))?;
                    let client = self.chat_client(remote)?;
                    let mut spec = self.stubbornness_spec(judge, mode);
                    spec.prompt_template_ref = Some(template_path);
                    spec.backend_ref = Some(format!(
                        "{}#{}",
                        resources_url(self, remote),
                        self.remote.model
                    ));
                    Judge::remote(
                        spec,
                        RemoteJudge::new(client, template, self.remote.retry_budget),
                    )
                }
            })
            .collect()
    }

    /// Scripted and synthetic modes replay fixture candidates; remote mode
    /// samples candidates from the endpoint.
    pub fn build_generator(&self, mode: JudgeKind, remote: &RemoteResources) -> Result<Generator> {
        match mode {
            JudgeKind::Scripted | JudgeKind::Synthetic => Ok(Generator::Scripted),
            JudgeKind::Remote => {
                let client = self.chat_client(remote)?;
                Ok(Generator::Remote(RemoteGenerator::new(
                    client,
                    self.remote.retry_budget,
                )))
            }
        }
    }
}

fn resources_url(config: &RunConfig, resources: &RemoteResources) -> String {
    resources
        .base_url
        .as_deref()
        .or(config.remote.base_url.as_deref())
        .unwrap_or("")
        .to_string()
}

/// Endpoint overrides gathered by the CLI (flags and environment).
#[derive(Debug, Clone, Default)]
pub struct RemoteResources {
    pub base_url: Option<String>,
    pub api_key: Option<String>,
}
