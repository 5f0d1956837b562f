//! The run ledger: one JSON document per run, plus one CSV per table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wkahler_core::energy::{EvalPath, FunctionalReport};

pub const SCHEMA: &str = "wkahler-lab/ledger/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub schema: String,
    /// sha256 of the canonical resolved config
    pub run_id: String,
    /// sha256 of the config with seed / grid scale / oracle blanked
    pub structure_hash: String,
    pub tool_version: String,
    pub timestamps: Timestamps,
    pub config: Value,
    pub fixture: FixtureInfo,
    pub experiments: Vec<ExperimentRecord>,
}

/// Only reproducible stamps are recorded (SOURCE_DATE_EPOCH), so equal
/// configs give byte-identical ledgers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub source_date_epoch: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureInfo {
    pub dim: usize,
    pub volume: f64,
    pub vertices: Vec<Vec<f64>>,
    pub quad_nodes: usize,
    pub sgrid_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub index: usize,
    pub kind: String,
    #[serde(default)]
    pub reports: Vec<Report>,
    #[serde(default)]
    pub tables: Vec<Table>,
    #[serde(default)]
    pub summary: BTreeMap<String, Value>,
    #[serde(default)]
    pub invariants: Vec<Invariant>,
    #[serde(default)]
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.invariants.iter().filter(|i| !i.pass).map(|i| format!("experiments[{}] {}: {}", self.index, i.name, i.detail)).collect();
        if let Some(e) = &self.error {
            out.push(format!("experiments[{}] {}: {e}", self.index, self.kind));
        }
        out
    }
}

/// A scalar functional value with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub value: f64,
    pub path: String,
    pub oracle_path: Option<String>,
    pub oracle: Option<f64>,
    pub discrepancy: Option<f64>,
    pub tolerance: f64,
    pub tail_error: Option<f64>,
    pub flagged: bool,
}

impl Report {
    pub fn from_core(r: &FunctionalReport, oracle_path: &str) -> Report {
        let path = match r.path {
            EvalPath::XGrid => "x",
            EvalPath::SGrid => "s",
            EvalPath::Both => "x",
        };
        Report {
            name: r.name.clone(),
            value: r.value,
            path: path.into(),
            oracle_path: r.oracle.map(|_| oracle_path.to_string()),
            oracle: r.oracle,
            discrepancy: r.discrepancy,
            tolerance: r.tolerance,
            tail_error: r.tail_error,
            flagged: r.flagged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub tolerance: Option<f64>,
    pub tail: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub provenance: Provenance,
}

impl Table {
    pub fn new(name: &str, columns: Vec<String>, path: &str) -> Table {
        Table { name: name.into(), columns, rows: Vec::new(), provenance: Provenance { path: path.into(), tolerance: None, tail: None } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Invariant {
    pub fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Invariant {
        Invariant { name: name.into(), pass, detail: detail.into() }
    }
}

pub fn num(x: f64) -> Value {
    // non-finite values serialise as null
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
