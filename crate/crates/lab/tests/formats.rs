use proptest::prelude::*;
use serde_json::{json, Value};
use wkahler_lab::format::{cell, f17, to_json};
use wkahler_lab::verify::verify;

fn ledger(vals: &[f64]) -> Value {
    json!({
        "schema": "wkahler-lab/ledger/1",
        "structure_hash": "h",
        "experiments": [{ "index": 0, "summary": { "xs": vals } }]
    })
}

proptest! {
    #[test]
    fn f17_round_trips(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(f17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn json_ledgers_reload_bit_exactly(xs in prop::collection::vec(-1e300f64..1e300, 1..20)) {
        let l = ledger(&xs);
        let back: Value = serde_json::from_slice(&to_json(&l)).unwrap();
        prop_assert_eq!(&back, &l);
        let r = verify(&l, &back, 0.0).unwrap();
        prop_assert!(r.pass && r.rows.is_empty());
        prop_assert_eq!(r.compared, xs.len() + 1);
    }

    #[test]
    fn verify_tolerance_is_relative(x in -1e6f64..1e6, rel in 0.0f64..1e-3) {
        let y = x + rel * x.abs().max(1.0);
        let r = verify(&ledger(&[x]), &ledger(&[y]), 1e-3).unwrap();
        prop_assert!(r.pass);
        let s = verify(&ledger(&[x]), &ledger(&[y]), 0.0).unwrap();
        prop_assert_eq!(s.pass, x == y);
        // symmetric in its arguments
        let t = verify(&ledger(&[y]), &ledger(&[x]), 1e-3).unwrap();
        prop_assert_eq!(r.rows.len(), t.rows.len());
    }

    #[test]
    fn csv_cells_parse_back(x in any::<f64>()) {
        let c = cell(&json!(x));
        if x.is_finite() {
            prop_assert_eq!(c.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}

#[test]
fn non_finite_values_serialise_as_null() {
    let b = to_json(&json!({ "a": 1.5 }));
    assert!(String::from_utf8(b).unwrap().contains("1.5000000000000000e0"));
    assert_eq!(cell(&Value::Null), "");
    let v: Value = serde_json::from_slice(&to_json(&vec![f64::NAN, f64::INFINITY])).unwrap();
    assert_eq!(v, json!([null, null]));
}
