//! On-disk problem instances: one JSON object per line, each carrying the
//! question, an optional image path, the gold answer when known, and the
//! scripted candidate pool per step.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFixture {
    pub text: String,
    /// Ground-truth label used only by the synthetic judge backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_correct: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFixture {
    pub candidates: Vec<CandidateFixture>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFixture {
    pub instance_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default)]
    pub steps: Vec<StepFixture>,
}

/// Loads a JSONL instance file. Blank lines are skipped; malformed lines
/// and duplicate instance ids are rejected with the offending location.
pub fn load_instances(path: &Path) -> Result<Vec<InstanceFixture>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut instances: Vec<InstanceFixture> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let instance: InstanceFixture = serde_json::from_str(&line).map_err(|e| {
            Error::FixtureShape(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if instance.instance_id.is_empty() {
            return Err(Error::FixtureShape(format!(
                "{}:{}: empty instance_id",
                path.display(),
                lineno + 1
            )));
        }
        if !seen.insert(instance.instance_id.clone()) {
            return Err(Error::FixtureShape(format!(
                "{}:{}: duplicate instance_id {:?}",
                path.display(),
                lineno + 1,
                instance.instance_id
            )));
        }
        instances.push(instance);
    }
    Ok(instances)
}
