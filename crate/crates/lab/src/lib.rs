//! Command-line lab around `wkahler_core`: run configs, ledgers, CSV tables,
//! ledger diffs and plot-data views.

pub mod cli;
pub mod config;
pub mod format;
pub mod ledger;
pub mod plot;
pub mod run;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("schema error{}{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default(), if field.is_empty() { String::new() } else { format!(" in `{field}`") })]
    Schema { line: Option<usize>, field: String, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("incomparable ledgers: {0}")]
    Incomparable(String),
    #[error("invariant failed: {}", .0.join("; "))]
    Invariant(Vec<String>),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(String),
}

impl LabError {
    /// 2: schema / usage; 3: numeric invariants; 1: everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Schema { .. } | LabError::Usage(_) | LabError::Incomparable(_) => 2,
            LabError::Invariant(_) | LabError::Numeric(_) => 3,
            LabError::Io(_) => 1,
        }
    }
}
