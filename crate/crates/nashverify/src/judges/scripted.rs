//! Scripted judge scores: a JSON Lines fixture mapping
//! `(instance, step, candidate, judge)` to a fixed score.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One fixture line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub step_index: usize,
    pub candidate_index: usize,
    pub judge_name: String,
    pub score: f64,
}

type Key = (String, usize, usize, String);

/// In-memory lookup table over a score fixture.
#[derive(Debug, Default)]
pub struct ScoreFixture {
    map: HashMap<Key, f64>,
}

impl ScoreFixture {
    pub fn from_records(records: Vec<ScoreRecord>) -> Result<Self> {
        let mut map = HashMap::with_capacity(records.len());
        for r in records {
            if !r.score.is_finite() || !(0.0..=1.0).contains(&r.score) {
                return Err(Error::FixtureShape(format!(
                    "instance {:?} step {} candidate {} judge {:?}: score {} outside [0, 1]",
                    r.instance_id, r.step_index, r.candidate_index, r.judge_name, r.score
                )));
            }
            let key = (r.instance_id, r.step_index, r.candidate_index, r.judge_name);
            if map.insert(key.clone(), r.score).is_some() {
                return Err(Error::FixtureShape(format!(
                    "duplicate score entry for instance {:?} step {} candidate {} judge {:?}",
                    key.0, key.1, key.2, key.3
                )));
            }
        }
        Ok(Self { map })
    }

    /// Loads a JSON Lines fixture; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScoreRecord = serde_json::from_str(line).map_err(|e| {
                Error::FixtureShape(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            records.push(record);
        }
        Self::from_records(records)
    }

    pub fn lookup(
        &self,
        instance_id: &str,
        step_index: usize,
        candidate_index: usize,
        judge_name: &str,
    ) -> Result<f64> {
        let key = (
            instance_id.to_string(),
            step_index,
            candidate_index,
            judge_name.to_string(),
        );
        self.map.get(&key).copied().ok_or_else(|| {
            Error::FixtureShape(format!(
                "no score for instance {instance_id:?} step {step_index} candidate {candidate_index} judge {judge_name:?}"
            ))
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
