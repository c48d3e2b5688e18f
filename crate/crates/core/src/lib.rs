//! Streaming vital-signs fusion and triage.
//!
//! Samples arrive over a line-oriented wire format, pass a quality gate, are
//! aligned into per-patient epochs, labelled as reading errors or anomalies,
//! and banded against age-specific normal ranges. A rule table maps band
//! patterns to a risk level; patterns it does not list fall back to
//! Dempster-Shafer evidence fusion. An LSTM forecaster predicts next-epoch
//! readings.

mod error;

pub mod anomaly;
pub mod clean;
pub mod cli;
pub mod config;
pub mod eventlog;
pub mod features;
pub mod forecast;
pub mod fusion;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod triage;

pub use error::{Error, Result};
