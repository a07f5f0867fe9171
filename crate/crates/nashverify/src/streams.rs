//! Deterministic per-query random streams.
//!
//! Every stochastic draw in a run is keyed by its coordinates — instance,
//! step, candidate, judge — plus the run seed and a domain tag, never by
//! arrival order. Two consequences the test suite leans on: scheduling
//! (sequential or parallel) cannot change any draw, and changing the
//! acceptance policy cannot shift the judge-score stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream for one judge's score draw on one candidate step.
pub fn judge_stream(
    seed: u64,
    instance_id: &str,
    step_index: usize,
    candidate_index: usize,
    judge_name: &str,
) -> ChaCha8Rng {
    keyed(
        seed,
        &[
            b"judge",
            instance_id.as_bytes(),
            &(step_index as u64).to_le_bytes(),
            &(candidate_index as u64).to_le_bytes(),
            judge_name.as_bytes(),
        ],
    )
}

/// Stream for the per-step selection draw used by randomized strategies.
/// Domain-separated from judge streams so policy choices and score draws
/// can never interfere.
pub fn selection_stream(seed: u64, instance_id: &str, step_index: usize) -> ChaCha8Rng {
    keyed(
        seed,
        &[
            b"selection",
            instance_id.as_bytes(),
            &(step_index as u64).to_le_bytes(),
        ],
    )
}

fn keyed(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"nashverify.stream.v1");
    hasher.update(seed.to_le_bytes());
    for part in parts {
        // Length-prefix every component so concatenations cannot collide.
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
