use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wkahler_lab::config::{parse, RunConfig};
use wkahler_lab::format::f17;
use wkahler_lab::plot::{plotdata, View};
use wkahler_lab::verify::verify;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wkahler-lab")).args(args).env("WKAHLER_THREADS", "1").output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn ledger(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("ledger.json")).unwrap()).unwrap()
}

fn run_ok(cfg: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = lab(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    ledger(out)
}

const MINIMAL: &str = r#"
name = "minimal"
[fixture]
polytope = "p1"
[[experiments]]
kind = "functionals"
names = ["energy"]
"#;

#[test]
fn minimal_config_gives_zero_energy() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "min.toml", MINIMAL);
    let l = run_ok(&cfg, &d.path().join("out"), &[]);
    let r = &l["experiments"][0]["reports"][0];
    assert_eq!(r["name"], "energy");
    assert_eq!(r["value"].as_f64(), Some(0.0));
    assert_eq!(l["fixture"]["dim"], 1);
    // no temporary files are left behind
    let names: Vec<_> = std::fs::read_dir(d.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("ledger.json")]);
}

#[test]
fn json_config_is_accepted() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "min.json", r#"{"fixture": {"polytope": "p2"}, "experiments": [{"kind": "functionals", "names": ["energy", "d1"]}]}"#);
    let l = run_ok(&cfg, &d.path().join("out"), &[]);
    let reps = l["experiments"][0]["reports"].as_array().unwrap();
    assert_eq!(reps.len(), 2);
    assert_eq!(reps[1]["oracle_path"], "darvas");
}

#[test]
fn schema_errors_exit_2_with_diagnostics() {
    let d = TempDir::new().unwrap();
    let cases = [
        ("[fixture]\npolytope = \"p1\"\n\n[[experiments]]\nkind = \"geodesics\"\npairs = \"ten\"\n", "line 4"),
        ("[fixture]\npolytope = \"p1\"\ncolour = 3\n", "colour"),
        ("[fixture]\npolytope = \"p7\"\n", "fixture.polytope"),
        ("[fixture]\npolytope = \"p2\"\n[weights.v]\nkind = \"affine\"\nparams = [0.0, 1.0, 0.0]\n", "weights.v"),
        ("[fixture]\npolytope = \"p2\"\n[[experiments]]\nkind = \"fano\"\nvertex = [0.0, 0.0]\neps = 0.5\n", "experiments[0].vertex"),
        ("[fixture\n", "line 1"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let cfg = write(d.path(), &format!("bad{i}.toml"), body);
        let o = lab(&["run", "--config", cfg.to_str().unwrap(), "--out", d.path().join("o").to_str().unwrap()]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(2), "{body}: {err}");
        assert!(err.contains(needle), "{needle} not in {err}");
    }
    assert!(!d.path().join("o").join("ledger.json").exists());
}

#[test]
fn invariant_failures_exit_3_and_name_the_invariant() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "c.toml", "[fixture]\npolytope = \"p1\"\n[tolerances]\nlahdili = -1.0\n[[experiments]]\nkind = \"curvature\"\n");
    let o = lab(&["run", "--config", cfg.to_str().unwrap(), "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lahdili"));
    // the ledger is still written for inspection
    assert!(d.path().join("o").join("ledger.json").exists());
}

const MIXED: &str = r#"
seed = 5
[fixture]
polytope = "p2"
[grid]
quad_order = 6
sgrid_points = 33
sgrid_half_width = 6.0
[[potential]]
kind = "quadratic"
center = [0.0, 0.0]
a = 0.1
[[experiments]]
kind = "functionals"
names = ["energy", "entropy", "mabuchi_relative"]
[[experiments]]
kind = "geodesics"
pairs = 2
samples = 3
[[experiments]]
kind = "probes"
samples = 2
"#;

#[test]
fn runs_are_byte_identical_and_verify_clean() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "m.toml", MIXED);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let la = run_ok(&cfg, &a, &[]);
    run_ok(&cfg, &b, &[]);
    for f in ["ledger.json", "01_geodesics_geodesic_traces.csv", "02_probes_probe_rows.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let r = verify(&la, &ledger(&b), 0.0).unwrap();
    assert!(r.rows.is_empty() && r.pass && r.compared > 0);
    let o = lab(&["verify", a.join("ledger.json").to_str().unwrap(), b.join("ledger.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn seed_change_only_moves_sampled_rows() {
    let d = TempDir::new().unwrap();
    let body = MIXED.replace("[[experiments]]\nkind = \"geodesics\"\npairs = 2\nsamples = 3\n", "");
    let cfg = write(d.path(), "m.toml", &body);
    let la = run_ok(&cfg, &d.path().join("a"), &[]);
    let lb = run_ok(&cfg, &d.path().join("b"), &["--seed", "6"]);
    assert_ne!(la["run_id"], lb["run_id"]);
    assert_eq!(la["structure_hash"], lb["structure_hash"]);
    let r = verify(&la, &lb, 1e-12).unwrap();
    assert!(!r.pass && !r.rows.is_empty());
    for row in &r.rows {
        assert!(row.path.starts_with("/experiments/1/"), "{}", row.path);
    }
    let o = lab(&["verify", d.path().join("a/ledger.json").to_str().unwrap(), d.path().join("b/ledger.json").to_str().unwrap(), "--tolerance", "1e-12"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ledgers_of_different_designs_are_incomparable() {
    let d = TempDir::new().unwrap();
    let a = run_ok(&write(d.path(), "a.toml", MINIMAL), &d.path().join("a"), &[]);
    let b = run_ok(&write(d.path(), "b.toml", &MINIMAL.replace("p1", "p2")), &d.path().join("b"), &[]);
    assert!(matches!(verify(&a, &b, 1.0), Err(wkahler_lab::LabError::Incomparable(_))));
    let o = lab(&["verify", d.path().join("a/ledger.json").to_str().unwrap(), d.path().join("b/ledger.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_refined_rerun_stays_within_budget() {
    let d = TempDir::new().unwrap();
    let body = "[fixture]\npolytope = \"p2\"\n[[potential]]\nkind = \"quadratic\"\ncenter = [0.1, 0.0]\na = 0.2\n[[experiments]]\nkind = \"functionals\"\nnames = [\"energy\", \"weighted_energy\", \"mabuchi\"]\n";
    let cfg = write(d.path(), "g.toml", body);
    let a = run_ok(&cfg, &d.path().join("a"), &[]);
    let b = run_ok(&cfg, &d.path().join("b"), &["--grid-scale", "2"]);
    let r = verify(&a, &b, 1e-6).unwrap();
    assert!(r.pass, "{:?}", r.rows);
}

#[test]
fn plot_views() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "f.toml", r#"
[fixture]
polytope = "p2"
[grid]
quad_order = 6
[[experiments]]
kind = "family"
corners = [[-1.0, -1.0]]
j_max = 3
psi = [{ kind = "quadratic", center = [0.1, -0.2], a = 0.3 }]
[[experiments]]
kind = "geodesics"
pairs = 1
samples = 4
"#);
    let out = d.path().join("o");
    let l = run_ok(&cfg, &out, &[]);
    let csv = String::from_utf8(plotdata(&l, View::FamilyTrends).unwrap()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "experiment,j,eps,volume,ell_c,ell_1,ell_2,mrel,sigma,energy,entropy,d1,window_distance");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,0,0.0000000000000000e0,"));
    assert!(lines[4].starts_with("0,3,1.2500000000000000e-1,"));
    let g = lab(&["plotdata", out.join("ledger.json").to_str().unwrap(), "--view", "geodesic_traces"]);
    let g = String::from_utf8(g.stdout).unwrap();
    assert!(g.starts_with("experiment,geodesic,t,energy,mrel,d1\n"));
    assert_eq!(g.lines().count(), 5);
    // no such tables: header only
    let t = String::from_utf8(plotdata(&l, View::ThresholdCensus).unwrap()).unwrap();
    assert_eq!(t.lines().count(), 1);
    let empty = String::from_utf8(plotdata(&Value::Object(Default::default()), View::CurvatureFields).unwrap()).unwrap();
    assert_eq!(empty, "experiment,point,x_1,x_2,scal,scal_abreu,s_v,s_lah\n");
    assert_eq!(lab(&["plotdata", out.join("ledger.json").to_str().unwrap(), "--view", "nope"]).status.code(), Some(2));
}

#[test]
fn fixtures_list() {
    let o = lab(&["fixtures", "list"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8(o.stdout).unwrap();
    for n in ["p1", "p2", "p1xp1", "blp2", "simplex3"] {
        assert!(s.lines().any(|l| l.starts_with(n)));
    }
}

#[test]
fn ledger_floats_round_trip() {
    for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE, f64::MAX] {
        assert_eq!(f17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
    let cfg: RunConfig = parse(MINIMAL, None).unwrap();
    let bytes = wkahler_lab::format::to_json(&cfg);
    let back: RunConfig = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(back, cfg);
}
