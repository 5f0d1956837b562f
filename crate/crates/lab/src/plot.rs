//! Plot-ready CSV series extracted from a ledger.

use clap::ValueEnum;
use serde_json::Value;

use crate::format::csv_bytes;
use crate::ledger::{cols, indexed};
use crate::LabError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum View {
    FamilyTrends,
    GeodesicTraces,
    ThresholdCensus,
    CurvatureFields,
}

impl View {
    pub fn table(self) -> &'static str {
        match self {
            View::FamilyTrends => "family_trends",
            View::GeodesicTraces => "geodesic_traces",
            View::ThresholdCensus => "threshold_census",
            View::CurvatureFields => "curvature_fields",
        }
    }

    /// Columns of the ledger table backing this view, for dimension `n`.
    pub fn columns(self, n: usize) -> Vec<String> {
        match self {
            View::FamilyTrends => {
                let mut c = cols(&["j", "eps", "volume", "ell_c"]);
                c.extend(indexed("ell_", n));
                c.extend(cols(&["mrel", "sigma", "energy", "entropy", "d1", "window_distance"]));
                c
            }
            View::GeodesicTraces => cols(&["geodesic", "t", "energy", "mrel", "d1"]),
            View::ThresholdCensus => {
                cols(&["ray", "excluded", "diverged", "slope", "t_1", "t_2", "t_3", "slope_1", "slope_2", "slope_3", "richardson", "calibration", "torus_shift"])
            }
            View::CurvatureFields => {
                let mut c = cols(&["point"]);
                c.extend(indexed("x_", n));
                c.extend(cols(&["scal", "scal_abreu", "s_v", "s_lah"]));
                c
            }
        }
    }
}

/// Long-format CSV: the view's table from every experiment, prefixed by the
/// experiment index.  A ledger without such tables gives the header only.
pub fn plotdata(ledger: &Value, view: View) -> Result<Vec<u8>, LabError> {
    let n = ledger.pointer("/fixture/dim").and_then(Value::as_u64).unwrap_or(2) as usize;
    let mut header = vec!["experiment".to_string()];
    header.extend(view.columns(n));
    let mut rows = Vec::new();
    let exps = ledger.get("experiments").and_then(Value::as_array).cloned().unwrap_or_default();
    for e in &exps {
        let idx = e.get("index").cloned().unwrap_or(Value::Null);
        for t in e.get("tables").and_then(Value::as_array).into_iter().flatten() {
            if t.get("name").and_then(Value::as_str) != Some(view.table()) {
                continue;
            }
            let tc: Vec<String> =
                t.get("columns").and_then(Value::as_array).into_iter().flatten().filter_map(|c| c.as_str().map(String::from)).collect();
            if tc != header[1..] {
                return Err(LabError::Usage(format!("table '{}' in experiment {idx} has unexpected columns", view.table())));
            }
            for r in t.get("rows").and_then(Value::as_array).into_iter().flatten() {
                let mut row = vec![idx.clone()];
                row.extend(r.as_array().cloned().unwrap_or_default());
                rows.push(row);
            }
        }
    }
    csv_bytes(&header, &rows)
}
