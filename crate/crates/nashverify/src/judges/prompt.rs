//! Prompt templates and their rendering.
//!
//! A template is plain text with three placeholders — `{question}`,
//! `{prior_steps}`, `{candidate_step}` — and an optional system section:
//! everything above the first line consisting of `---` is the system text,
//! everything below is the user text. Without a separator the whole file
//! is the user text and the system part is empty.
//!
//! Rendering yields an ordered message sequence: system text, user text,
//! then the image attachment when the context carries one. Prior steps are
//! rendered as numbered lines, or the `(none)` sentinel when the chain is
//! still empty. Any `{name}` token outside the known set is an error
//! naming that placeholder; braces that do not form such a token pass
//! through untouched.

use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::judges::JudgeContext;

/// One element of the rendered message sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptPart {
    System(String),
    UserText(String),
    /// Opaque image locator, resolved by the backend that ships it.
    ImageRef(String),
}

pub const PRIOR_STEPS_EMPTY_SENTINEL: &str = "(none)";

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

/// Renders `template` against `ctx` into the message sequence.
pub fn render_prompt(template: &str, ctx: &JudgeContext) -> Result<Vec<PromptPart>> {
    let (system, user) = split_sections(template);
    let prior = render_prior_steps(&ctx.prior_steps);
    let system = substitute(system, ctx, &prior)?;
    let user = substitute(user, ctx, &prior)?;
    let mut parts = vec![PromptPart::System(system), PromptPart::UserText(user)];
    if let Some(image) = &ctx.image_reference {
        parts.push(PromptPart::ImageRef(image.clone()));
    }
    Ok(parts)
}

fn split_sections(template: &str) -> (&str, &str) {
    let mut offset = 0;
    for line in template.split_inclusive('\n') {
        if line.trim_end_matches(['\r', '\n']).trim() == "---" {
            let system = &template[..offset];
            let user = &template[offset + line.len()..];
            return (system.trim_end_matches('\n'), user);
        }
        offset += line.len();
    }
    ("", template)
}

fn render_prior_steps(prior: &[String]) -> String {
    if prior.is_empty() {
        return PRIOR_STEPS_EMPTY_SENTINEL.to_string();
    }
    prior
        .iter()
        .enumerate()
        .map(|(i, step)| format!("{}. {}", i + 1, step))
        .collect::<Vec<_>>()
        .join("\n")
}

fn substitute(section: &str, ctx: &JudgeContext, prior: &str) -> Result<String> {
    let mut out = String::with_capacity(section.len());
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(section) {
        let whole = caps.get(0).expect("group 0");
        let name = &caps[1];
        out.push_str(&section[last..whole.start()]);
        match name {
            "question" => out.push_str(&ctx.question),
            "prior_steps" => out.push_str(prior),
            "candidate_step" => out.push_str(&ctx.candidate_step),
            other => {
                return Err(Error::Template {
                    placeholder: other.to_string(),
                })
            }
        }
        last = whole.end();
    }
    out.push_str(&section[last..]);
    Ok(out)
}
