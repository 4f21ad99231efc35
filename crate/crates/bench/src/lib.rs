//! Benchmark runner: parameter sweeps as CSV, Ising gate export, and
//! single composed evolutions.

pub mod config;
pub mod ops;
pub mod report;
pub mod runner;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{Experiment, SweepConfig};
pub use report::{Check, Report, Row};
pub use runner::run;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}': {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("config line {line}: expected key=value")]
    MalformedLine { line: usize },
    #[error("{name}: {reason}")]
    InvalidGrid { name: String, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] tdtrotter::models::ModelError),
    #[error(transparent)]
    Reference(#[from] tdtrotter::reference::ReferenceError),
}
