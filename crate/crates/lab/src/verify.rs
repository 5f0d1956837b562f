//! `verify`: numeric diff of two ledgers of the same experiment design.

use serde::Serialize;
use serde_json::Value;

use crate::LabError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffRow {
    /// JSON pointer into `experiments`
    pub path: String,
    pub a: Value,
    pub b: Value,
    pub abs: f64,
    pub rel: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffReport {
    pub tolerance: f64,
    pub compared: usize,
    pub rows: Vec<DiffRow>,
    pub pass: bool,
}

/// Only values that differ are listed; a numeric row passes when
/// |a − b| ≤ tol·max(1, |a|, |b|).  Anything non-numeric that differs fails.
pub fn verify(a: &Value, b: &Value, tol: f64) -> Result<DiffReport, LabError> {
    for key in ["schema", "structure_hash"] {
        let (x, y) = (a.get(key), b.get(key));
        if x.is_none() || x != y {
            return Err(LabError::Incomparable(format!("`{key}` differs ({} vs {})", show(x), show(y))));
        }
    }
    let mut rows = Vec::new();
    let mut compared = 0;
    walk(a.get("experiments").unwrap_or(&Value::Null), b.get("experiments").unwrap_or(&Value::Null), "/experiments".into(), tol, &mut rows, &mut compared);
    let pass = rows.iter().all(|r| r.pass);
    Ok(DiffReport { tolerance: tol, compared, rows, pass })
}

fn show(v: Option<&Value>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "missing".into())
}

fn walk(a: &Value, b: &Value, path: String, tol: f64, out: &mut Vec<DiffRow>, n: &mut usize) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let p = format!("{path}/{}", k.replace('~', "~0").replace('/', "~1"));
                walk(x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), p, tol, out, n);
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                walk(u, v, format!("{path}/{i}"), tol, out, n);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            *n += 1;
            let (u, v) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            if u != v {
                let abs = (u - v).abs();
                let scale = u.abs().max(v.abs());
                out.push(DiffRow {
                    path,
                    a: a.clone(),
                    b: b.clone(),
                    abs,
                    rel: if scale > 0.0 { abs / scale } else { 0.0 },
                    pass: abs <= tol * scale.max(1.0),
                });
            }
        }
        _ => {
            *n += 1;
            if a != b {
                out.push(DiffRow { path, a: a.clone(), b: b.clone(), abs: f64::NAN, rel: f64::NAN, pass: false });
            }
        }
    }
}
