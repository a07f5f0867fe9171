//! The agreement game and its closed-form equilibrium.
//!
//! `m >= 2` judges each report a raw confidence `raw_i` in `[0, 1]`. Judge
//! `i` then commits to a coordinated score `s_i` under the payoff
//!
//! ```text
//! u_i = -(s_i - mean_others)^2 - lambda_i * (s_i - raw_i)^2
//! ```
//!
//! so every judge trades agreement with the rest of the ensemble against
//! fidelity to its own evidence, weighted by its stubbornness `lambda_i`.
//! Stationarity of all payoffs at once is the linear system
//!
//! ```text
//! (1 + lambda_i) * s_i - (1 / (m - 1)) * sum_{j != i} s_j = lambda_i * raw_i
//! ```
//!
//! whose matrix is strictly diagonally dominant for positive lambda
//! (diagonal `1 + lambda_i` vs. off-diagonal mass `1`), so the equilibrium
//! exists, is unique, and falls out of a direct dense solve. Two structural
//! facts are worth keeping in mind when reading the tests:
//!
//! * the lambda-weighted total is conserved: summing the system gives
//!   `sum lambda_i * s_i = sum lambda_i * raw_i`;
//! * with a shared lambda, deviations contract linearly:
//!   `s_i - mean(s) = kappa * (raw_i - mean(raw))` with
//!   `kappa = lambda / (1 + lambda + 1/(m-1))`, strictly inside `(0, 1)`.
//!
//! [`iterate_equilibrium`] reaches the same point by repeated best-response
//! updates and deliberately shares no code with the direct solve; it is the
//! independent cross-check used throughout the test suite.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Per-judge stubbornness weights; every entry is finite and `> 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StubbornnessVector(Vec<f64>);

impl StubbornnessVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "stubbornness vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    name: "stubbornness",
                    value: v,
                });
            }
            if v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "stubbornness[{i}] must be > 0, got {v}"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Raw judge scores for one candidate step; every entry is in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScoreVector(Vec<f64>);

impl RawScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "raw score vector needs at least 2 entries, got {}",
                scores.len()
            )));
        }
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    name: "raw score",
                    value: s,
                });
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "raw score[{i}] must be in [0, 1], got {s}"
                )));
            }
        }
        Ok(Self(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Serialize for RawScoreVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RawScoreVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        RawScoreVector::new(values).map_err(D::Error::custom)
    }
}

/// Whether the direct solve succeeded or the raw scores were passed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Exact,
    FallbackRaw,
}

/// Coordinated scores plus their summary statistics.
///
/// `mean` is the arithmetic mean of `scores` and `dispersion` their mean
/// absolute deviation; `status` is [`SolveStatus::FallbackRaw`] only when
/// the linear solve failed and `scores` are the raw inputs unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub dispersion: f64,
    pub status: SolveStatus,
}

impl EquilibriumSolution {
    /// Builds a solution record from already-coordinated scores, computing
    /// the summary statistics. Scores must be finite and in `[0, 1]`.
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidArgument(
                "equilibrium solution needs at least one score".into(),
            ));
        }
        for &s in &scores {
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    name: "equilibrium score",
                    value: s,
                });
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "equilibrium score must be in [0, 1], got {s}"
                )));
            }
        }
        let (mean, dispersion) = mean_and_mad(&scores);
        Ok(Self {
            scores,
            mean,
            dispersion,
            status: SolveStatus::Exact,
        })
    }

    fn fallback_raw(raw: &RawScoreVector) -> Self {
        let scores = raw.scores().to_vec();
        let (mean, dispersion) = mean_and_mad(&scores);
        Self {
            scores,
            mean,
            dispersion,
            status: SolveStatus::FallbackRaw,
        }
    }
}

fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { name, value })
    }
}

/// Mean and mean absolute deviation, assuming a non-empty slice.
fn mean_and_mad(scores: &[f64]) -> (f64, f64) {
    let m = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / m;
    let mad = scores.iter().map(|s| (s - mean).abs()).sum::<f64>() / m;
    (mean, mad)
}

/// Payoff for one judge: `-(own - others_mean)^2 - lambda * (own - raw)^2`.
///
/// Always `<= 0`, and `0` exactly when the judge agrees with both the
/// ensemble and its own raw score.
pub fn payoff(own_score: f64, others_mean: f64, own_raw: f64, stubbornness: f64) -> Result<f64> {
    ensure_finite("own_score", own_score)?;
    ensure_finite("others_mean", others_mean)?;
    ensure_finite("own_raw", own_raw)?;
    ensure_finite("stubbornness", stubbornness)?;
    let agree = own_score - others_mean;
    let hold = own_score - own_raw;
    Ok(-(agree * agree) - stubbornness * hold * hold)
}

/// The unique maximizer of [`payoff`] in the judge's own coordinate:
/// `(others_mean + lambda * raw) / (1 + lambda)`, a strict convex
/// combination of the ensemble mean and the judge's raw score.
pub fn best_response(others_mean: f64, own_raw: f64, stubbornness: f64) -> Result<f64> {
    ensure_finite("others_mean", others_mean)?;
    ensure_finite("own_raw", own_raw)?;
    ensure_finite("stubbornness", stubbornness)?;
    Ok(best_response_unchecked(others_mean, own_raw, stubbornness))
}

#[inline]
fn best_response_unchecked(others_mean: f64, own_raw: f64, stubbornness: f64) -> f64 {
    (others_mean + stubbornness * own_raw) / (1.0 + stubbornness)
}

/// Solves the best-response system directly and clips the result to
/// `[0, 1]` (a no-op for valid inputs; the solution is a fixed point of
/// convex combinations and cannot leave the hull of the raw scores).
///
/// A failed solve is not an error: the solution degrades to the raw scores
/// with [`SolveStatus::FallbackRaw`]. With positive stubbornness the matrix
/// is strictly diagonally dominant, so this path is unreachable in valid
/// use and exists as a numerical safety net.
pub fn solve_equilibrium(
    raw: &RawScoreVector,
    lambdas: &StubbornnessVector,
) -> Result<EquilibriumSolution> {
    if lambdas.len() != raw.len() {
        return Err(Error::LengthMismatch {
            expected: raw.len(),
            actual: lambdas.len(),
        });
    }
    match solve_unclipped(raw.scores(), lambdas.values()) {
        Some(mut scores) => {
            for s in &mut scores {
                *s = s.clamp(0.0, 1.0);
            }
            let (mean, dispersion) = mean_and_mad(&scores);
            Ok(EquilibriumSolution {
                scores,
                mean,
                dispersion,
                status: SolveStatus::Exact,
            })
        }
        None => Ok(EquilibriumSolution::fallback_raw(raw)),
    }
}

/// Dense solve of the stationarity system; `None` on numerical failure.
fn solve_unclipped(raw: &[f64], lambdas: &[f64]) -> Option<Vec<f64>> {
    let m = raw.len();
    let off = -1.0 / (m as f64 - 1.0);
    let mut a = vec![vec![off; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..m {
        a[i][i] = 1.0 + lambdas[i];
        b[i] = lambdas[i] * raw[i];
    }
    solve_dense(a, b)
}

/// Gaussian elimination with partial pivoting for the small dense systems
/// this crate produces (one row per judge).
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Fixed-point route to the same equilibrium: simultaneous best-response
/// updates starting from the raw scores, stopping once the largest
/// per-coordinate change drops below `tolerance`.
///
/// The update map is a sup-norm contraction with factor
/// `max_i 1 / (1 + lambda_i)`, so convergence is geometric and the iterate
/// never leaves `[0, 1]`. This function is the independent oracle for
/// [`solve_equilibrium`] and must stay free of any shared solver code.
pub fn iterate_equilibrium(
    raw: &RawScoreVector,
    lambdas: &StubbornnessVector,
    tolerance: f64,
    max_iterations: usize,
) -> Result<EquilibriumSolution> {
    if lambdas.len() != raw.len() {
        return Err(Error::LengthMismatch {
            expected: raw.len(),
            actual: lambdas.len(),
        });
    }
    ensure_finite("tolerance", tolerance)?;
    if tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be > 0, got {tolerance}"
        )));
    }
    if max_iterations == 0 {
        return Err(Error::InvalidArgument(
            "max_iterations must be at least 1".into(),
        ));
    }
    let scores = iterate_from(
        raw.scores(),
        raw.scores(),
        lambdas.values(),
        tolerance,
        max_iterations,
    )?;
    let (mean, dispersion) = mean_and_mad(&scores);
    Ok(EquilibriumSolution {
        scores,
        mean,
        dispersion,
        status: SolveStatus::Exact,
    })
}

/// Best-response iteration from an arbitrary starting point. Split out so
/// tests can confirm that every start converges to the same fixed point.
fn iterate_from(
    initial: &[f64],
    raw: &[f64],
    lambdas: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<f64>> {
    let m = raw.len();
    let mut current = initial.to_vec();
    let mut next = vec![0.0; m];
    for _ in 0..max_iterations {
        let total: f64 = current.iter().sum();
        let mut delta: f64 = 0.0;
        for i in 0..m {
            let others_mean = (total - current[i]) / (m as f64 - 1.0);
            next[i] = best_response_unchecked(others_mean, raw[i], lambdas[i]);
            delta = delta.max((next[i] - current[i]).abs());
        }
        std::mem::swap(&mut current, &mut next);
        if delta < tolerance {
            return Ok(current);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        last_iterate: current,
    })
}

/// Max-abs stationarity violation of `candidate` against the best-response
/// system: `max_i |(1 + lambda_i) * c_i - mean_{j != i}(c_j) - lambda_i * raw_i|`.
/// Zero (up to rounding) exactly at the equilibrium.
pub fn residual(
    raw: &RawScoreVector,
    lambdas: &StubbornnessVector,
    candidate: &[f64],
) -> Result<f64> {
    let m = raw.len();
    if lambdas.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: lambdas.len(),
        });
    }
    if candidate.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: candidate.len(),
        });
    }
    for &c in candidate {
        ensure_finite("candidate score", c)?;
    }
    let total: f64 = candidate.iter().sum();
    let raw = raw.scores();
    let lambdas = lambdas.values();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let others_mean = (total - candidate[i]) / (m as f64 - 1.0);
        let row = (1.0 + lambdas[i]) * candidate[i] - others_mean - lambdas[i] * raw[i];
        worst = worst.max(row.abs());
    }
    Ok(worst)
}

/// Arithmetic mean and mean absolute deviation of a non-empty score slice.
pub fn summarize(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(
            "summarize: empty score list".into(),
        ));
    }
    for &s in scores {
        ensure_finite("score", s)?;
    }
    Ok(mean_and_mad(scores))
}
