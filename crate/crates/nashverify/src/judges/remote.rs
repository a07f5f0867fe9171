//! Remote judge backend speaking the ubiquitous chat-completions wire
//! format: `POST {base_url}/chat/completions` with `model`, `messages`,
//! `temperature`, `top_p`, and `max_tokens`; the score is parsed from the
//! first choice's message content.
//!
//! Failed attempts — transport errors, non-success statuses, malformed
//! bodies, unparseable scores — are retried up to the configured budget;
//! the terminal error reports the attempt count and, for HTTP failures,
//! the last status code.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::judges::prompt::{render_prompt, PromptPart};
use crate::judges::{parse_score, JudgeContext};

/// Per-request sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Sampling {
    /// Judge queries: deterministic and capped to a handful of tokens —
    /// the reply is just a number.
    pub fn judge() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 16,
        }
    }
}

/// Minimal blocking chat-completions client.
pub struct ChatClient {
    http: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl ChatClient {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        if base_url.is_empty() {
            return Err(Error::Config("remote endpoint base URL is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            http,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
        })
    }

    /// One request/response round trip; every failure mode maps to a
    /// [`Error::Backend`] describing the attempt.
    pub fn complete(&self, parts: &[PromptPart], sampling: &Sampling) -> Result<String> {
        let messages = build_messages(parts)?;
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
            "max_tokens": sampling.max_tokens,
        });
        let mut request = self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Error::Backend {
            message: format!("transport: {e}"),
            status: None,
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Backend {
                message: format!("HTTP {}", status.as_u16()),
                status: Some(status.as_u16()),
            });
        }
        let parsed: ChatResponse = response.json().map_err(|e| Error::Backend {
            message: format!("malformed response body: {e}"),
            status: None,
        })?;
        let choice = parsed.choices.into_iter().next().ok_or(Error::Backend {
            message: "response carried no choices".into(),
            status: None,
        })?;
        Ok(choice.message.content)
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Maps the rendered message sequence onto wire messages. An image part is
/// folded into the user message as a base64 data URL.
pub fn build_messages(parts: &[PromptPart]) -> Result<Vec<Value>> {
    let mut system: Option<&str> = None;
    let mut user: Option<&str> = None;
    let mut image: Option<&str> = None;
    for part in parts {
        match part {
            PromptPart::System(text) => system = Some(text),
            PromptPart::UserText(text) => user = Some(text),
            PromptPart::ImageRef(path) => image = Some(path),
        }
    }
    let user = user.ok_or_else(|| {
        Error::InvalidArgument("message sequence has no user text".into())
    })?;

    let mut messages = Vec::new();
    if let Some(text) = system {
        if !text.is_empty() {
            messages.push(json!({"role": "system", "content": text}));
        }
    }
    match image {
        None => messages.push(json!({"role": "user", "content": user})),
        Some(path) => {
            let url = image_data_url(Path::new(path))?;
            messages.push(json!({
                "role": "user",
                "content": [
                    {"type": "text", "text": user},
                    {"type": "image_url", "image_url": {"url": url}},
                ],
            }));
        }
    }
    Ok(messages)
}

fn image_data_url(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{encoded}"))
}

/// Runs `attempt` up to `retry_budget + 1` times; the terminal error keeps
/// the last HTTP status and reports the attempt count.
pub(crate) fn run_attempts<T>(
    retry_budget: usize,
    mut attempt: impl FnMut() -> Result<T>,
) -> Result<T> {
    let attempts = retry_budget + 1;
    let mut last: Option<Error> = None;
    for _ in 0..attempts {
        match attempt() {
            Ok(value) => return Ok(value),
            Err(e) => last = Some(e),
        }
    }
    let last = last.expect("at least one attempt runs");
    let status = match &last {
        Error::Backend { status, .. } => *status,
        _ => None,
    };
    Err(Error::Backend {
        message: format!("failed after {attempts} attempt(s): {last}"),
        status,
    })
}

/// Scores one candidate via the remote endpoint: render, complete, parse,
/// retrying the whole attempt on any failure.
pub fn remote_score(
    client: &ChatClient,
    template: &str,
    ctx: &JudgeContext,
    sampling: &Sampling,
    retry_budget: usize,
) -> Result<f64> {
    let parts = render_prompt(template, ctx)?;
    run_attempts(retry_budget, || {
        let content = client.complete(&parts, sampling)?;
        parse_score(&content)
    })
}

/// A chat-completions judge: endpoint client plus its prompt template.
pub struct RemoteJudge {
    client: ChatClient,
    template: String,
    sampling: Sampling,
    retry_budget: usize,
}

impl RemoteJudge {
    pub fn new(client: ChatClient, template: String, retry_budget: usize) -> Self {
        Self {
            client,
            template,
            sampling: Sampling::judge(),
            retry_budget,
        }
    }

    pub fn score(&self, ctx: &JudgeContext) -> Result<f64> {
        remote_score(
            &self.client,
            &self.template,
            ctx,
            &self.sampling,
            self.retry_budget,
        )
    }
}
