//! Step-wise verification of multi-step reasoning chains.
//!
//! A generator proposes candidate steps; an ensemble of judges scores each
//! candidate independently; the agreement game coordinates those raw scores
//! into equilibrium scores; an acceptance policy filters and ranks the
//! candidates; and the orchestrator threads the winners into an auditable,
//! replayable trace. A sweep harness reproduces the threshold, tolerance,
//! and mechanism-decomposition ablations over scripted or synthetic
//! fixtures, and a CLI exposes the whole pipeline.
//!
//! Modules, bottom-up:
//!
//! * [`equilibrium`] — the agreement game, its closed-form solve, and the
//!   fixed-point iteration that cross-checks it.
//! * [`policy`] — acceptance filtering, ranking, selection strategies.
//! * [`judges`] — scripted, synthetic, and remote judge backends plus
//!   prompt rendering and score parsing.
//! * [`orchestrator`] — the step loop, trace records, answer extraction.
//! * [`harness`] — parameter sweeps, strategy decomposition, CSV reports.
//! * [`cli`] — the `nashverify` binary's argument surface and commands.

pub mod cli;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod harness;
pub mod judges;
pub mod orchestrator;
pub mod policy;
pub mod streams;

pub use error::{Error, Result};
