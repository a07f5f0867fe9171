//! Synthetic judge: a two-mode gaussian noise model.
//!
//! Correct steps draw from `N(mu_correct, sigma)`. Incorrect steps are
//! detected with probability `detect_probability` and draw from
//! `N(mu_incorrect, sigma)`; otherwise the judge is fooled and draws from
//! the correct-step distribution. Samples are clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticJudgeParams {
    pub mu_correct: f64,
    pub mu_incorrect: f64,
    pub sigma: f64,
    pub detect_probability: f64,
}

impl Default for SyntheticJudgeParams {
    fn default() -> Self {
        Self {
            mu_correct: 0.85,
            mu_incorrect: 0.30,
            sigma: 0.08,
            detect_probability: 0.6,
        }
    }
}

impl SyntheticJudgeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("synthetic.mu_correct", self.mu_correct),
            ("synthetic.mu_incorrect", self.mu_incorrect),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFinite { name, value });
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in [0, 1], got {value}"
                )));
            }
        }
        if !self.sigma.is_finite() {
            return Err(Error::NonFinite {
                name: "synthetic.sigma",
                value: self.sigma,
            });
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "synthetic.sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !self.detect_probability.is_finite() {
            return Err(Error::NonFinite {
                name: "synthetic.detect_probability",
                value: self.detect_probability,
            });
        }
        if !(0.0..=1.0).contains(&self.detect_probability) {
            return Err(Error::InvalidArgument(format!(
                "synthetic.detect_probability must be in [0, 1], got {}",
                self.detect_probability
            )));
        }
        Ok(())
    }
}

/// Draws one synthetic score. Consumes at most two values from `rng`: the
/// detection draw (incorrect steps only), then the gaussian.
pub fn synthetic_sample<R: Rng + ?Sized>(
    params: &SyntheticJudgeParams,
    step_is_correct: bool,
    rng: &mut R,
) -> f64 {
    let mu = if step_is_correct {
        params.mu_correct
    } else if rng.gen::<f64>() < params.detect_probability {
        params.mu_incorrect
    } else {
        params.mu_correct
    };
    let normal = Normal::new(mu, params.sigma).expect("sigma validated at construction");
    normal.sample(rng).clamp(0.0, 1.0)
}
