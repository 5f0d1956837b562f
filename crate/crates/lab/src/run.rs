//! `run`: build the fixture, execute the configured experiments, write the
//! ledger and tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use wkahler_core::energy::*;
use wkahler_core::experiments::*;
use wkahler_core::legendre::*;
use wkahler_core::probes::estimate_probe_suite;
use wkahler_core::quadrature::QuadOptions;
use wkahler_core::torus::{Polytope, Weight};

use crate::config::{parse_lift, parse_reference, ExperimentConfig, RunConfig};
use crate::format::{csv_bytes, to_json, write_atomic};
use crate::ledger::*;
use crate::plot::View;
use crate::LabError;

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub oracle: bool,
    pub grid_scale: Option<f64>,
}

pub struct Outcome {
    pub ledger: Ledger,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

pub fn sha256_hex(v: &Value) -> String {
    let bytes = serde_json::to_vec(v).expect("JSON");
    format!("{:x}", Sha256::digest(&bytes))
}

pub fn apply(mut cfg: RunConfig, o: &Overrides) -> Result<RunConfig, LabError> {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.oracle {
        cfg.oracle = true;
    }
    if let Some(g) = o.grid_scale {
        cfg.grid.scale *= g;
    }
    if let Some(d) = &o.out {
        cfg.output_dir = Some(d.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// WKAHLER_THREADS caps the worker pool (default: available cores).
pub fn worker_count() -> usize {
    std::env::var("WKAHLER_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    p: &'a Polytope,
    base: &'a KahlerState,
    phi: &'a KahlerState,
    v: Weight,
    w: Weight,
}

/// Execute without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<Ledger, LabError> {
    let p = cfg.polytope()?;
    let (v, w) = (cfg.weight("v")?, cfg.weight("w")?);
    let needs_s = cfg.oracle || cfg.experiments.iter().any(|e| matches!(e, ExperimentConfig::Curvature {}));
    let base = guillemin_state(p.clone(), needs_s.then(|| cfg.grid.sgrid()), &cfg.grid.quad()).map_err(numeric("reference state"))?;
    for (which, g) in [("v", &v), ("w", &w)] {
        g.check_positive(base.quad.nodes.iter()).map_err(|e| LabError::Schema { line: None, field: format!("weights.{which}"), msg: e.to_string() })?;
    }
    let phi = perturb_state(&base, cfg.correction(&cfg.potential, &base)).map_err(numeric("potential"))?;
    let ctx = Ctx { cfg, p: &p, base: &base, phi: &phi, v, w };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build().map_err(|e| LabError::Io(e.to_string()))?;
    let experiments: Vec<ExperimentRecord> = pool.install(|| {
        cfg.experiments
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let mut rec = ExperimentRecord { index: i, kind: e.kind().into(), ..Default::default() };
                if let Err(err) = run_one(&ctx, e, &mut rec) {
                    rec.error = Some(err.to_string());
                }
                rec
            })
            .collect()
    });
    Ok(Ledger {
        schema: SCHEMA.into(),
        run_id: sha256_hex(&cfg.canonical()),
        structure_hash: sha256_hex(&cfg.structural()),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        timestamps: Timestamps { source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) },
        config: cfg.canonical(),
        fixture: FixtureInfo {
            dim: p.dim,
            volume: base.volume(),
            vertices: p.vertices.iter().map(|v| v.x.as_slice().to_vec()).collect(),
            quad_nodes: base.quad.nodes.len(),
            sgrid_points: base.sdata().ok().map(|s| s.pts.len()),
        },
        experiments,
    })
}

fn numeric(what: &'static str) -> impl Fn(wkahler_core::Error) -> LabError {
    move |e| LabError::Numeric(format!("{what}: {e}"))
}

/// Execute and write `<out>/NN_kind_table.csv` files, then `ledger.json`
/// last, each by write-then-rename.
pub fn run(cfg: &RunConfig) -> Result<Outcome, LabError> {
    let ledger = execute(cfg)?;
    let out_dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "wkahler-out".into()));
    let mut files = Vec::new();
    for e in &ledger.experiments {
        for t in &e.tables {
            let path = out_dir.join(format!("{:02}_{}_{}.csv", e.index, e.kind, t.name));
            write_atomic(&path, &csv_bytes(&t.columns, &t.rows)?)?;
            files.push(path);
        }
    }
    let lp = out_dir.join("ledger.json");
    write_atomic(&lp, &to_json(&ledger))?;
    files.push(lp);
    let failures = ledger.experiments.iter().flat_map(|e| e.failures()).collect();
    Ok(Outcome { ledger, out_dir, files, failures })
}

pub fn load_ledger(path: &Path) -> Result<Value, LabError> {
    let s = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| LabError::Schema { line: Some(e.line()), field: String::new(), msg: format!("{}: {e}", path.display()) })
}

// ---------------------------------------------------------------- experiments

fn run_one(c: &Ctx, e: &ExperimentConfig, rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    match e {
        ExperimentConfig::Functionals { names, other } => functionals(c, names, other, rec),
        ExperimentConfig::Curvature {} => curvature(c, rec),
        ExperimentConfig::Geodesics { pairs, samples } => geodesics(c, *pairs, *samples, rec),
        ExperimentConfig::Threshold { ray_budget, t_max } => threshold(c, *ray_budget, *t_max, rec),
        ExperimentConfig::Family { .. } => family(c, e, rec),
        ExperimentConfig::Probes { samples, quad_order, sgrid_points } => probes(c, *samples, *quad_order, *sgrid_points, rec),
        ExperimentConfig::Fano { vertex, eps } => {
            let vid = c.p.vertex_index_near(vertex).ok_or(wkahler_core::Error::Invalid("not a vertex".into()))?;
            let f = fano_type_certificate(c.p, vid, *eps)?;
            let s = &mut rec.summary;
            s.insert("corner".into(), json!(f.corner));
            s.insert("eps".into(), num(f.eps));
            s.insert("discrepancy".into(), f.discrepancy.map(num).unwrap_or(Value::Null));
            s.insert("anticanonical_degree".into(), f.anticanonical_degree.map(num).unwrap_or(Value::Null));
            s.insert("relatively_ample".into(), json!(f.relatively_ample));
            s.insert("verdict".into(), json!(format!("{:?}", f.verdict)));
            s.insert("note".into(), json!(f.note));
            Ok(())
        }
    }
}

fn functionals(c: &Ctx, names: &[String], other: &[crate::config::CorrectionConfig], rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    let (base, phi, v, w) = (c.base, c.phi, &c.v, &c.w);
    let nodes = &phi.nodes;
    let oracle = if c.cfg.oracle { Some((SPotential::of(base, phi)?, sgrid_tail(base)?)) } else { None };
    let tol = |x: f64, tail: f64| c.cfg.tolerances.dual_path * x.abs().max(1.0) + tail;
    let push = |rec: &mut ExperimentRecord, r: FunctionalReport, s: Option<wkahler_core::Result<f64>>| -> wkahler_core::Result<()> {
        let r = match (s, &oracle) {
            (Some(s), Some((_, tail))) => {
                let t = tol(r.value, *tail);
                r.with_oracle(s?, *tail, t)
            }
            _ => r,
        };
        if let Some(d) = r.discrepancy {
            rec.invariants.push(Invariant::check(format!("dual_path:{}", r.name), !r.flagged, format!("discrepancy {d:e}, tolerance {:e}", r.tolerance)));
        }
        rec.reports.push(Report::from_core(&r, "s"));
        Ok(())
    };
    let sp = oracle.as_ref().map(|o| &o.0);
    for name in names {
        match name.as_str() {
            "energy" => push(rec, FunctionalReport::x("energy", energy(base, nodes)?), sp.map(|s| energy_s(base, s)))?,
            "weighted_energy" => push(rec, FunctionalReport::x("weighted_energy", weighted_energy(base, nodes, v)?), sp.map(|s| weighted_energy_s(base, s, v)))?,
            "ricci_energy" => push(rec, FunctionalReport::x("ricci_energy", ricci_energy(base, nodes, v)?), sp.map(|s| ricci_energy_s(base, s, v)))?,
            "entropy" => push(rec, FunctionalReport::x("entropy", entropy_v(base, nodes, v)?), sp.map(|s| entropy_v_s(base, s, v)))?,
            "mabuchi" => {
                let m = mabuchi(base, nodes, v, w)?;
                for (k, x) in [("mabuchi", m.total), ("mabuchi.entropy", m.entropy), ("mabuchi.ricci", m.ricci), ("mabuchi.energy", m.energy)] {
                    push(rec, FunctionalReport::x(k, x), None)?;
                }
            }
            "mabuchi_relative" => {
                let m = MabuchiSetup::new(base, v.clone(), w.clone())?;
                push(rec, FunctionalReport::x("mabuchi_relative", m.mrel(base, nodes)?), None)?;
            }
            "futaki" => {
                let ext = extremal_function(base, v, w)?;
                for (k, x) in ext.ell.coords().into_iter().enumerate() {
                    push(rec, FunctionalReport::x(&format!("ell_ext[{k}]"), x), None)?;
                }
                rec.summary.insert("extremal_ill_conditioned".into(), json!(ext.ill_conditioned));
            }
            "d1" => {
                let o = perturb_state(base, c.cfg.correction(other, base))?;
                let d = d1_l1(base, nodes, &o.nodes)?;
                // the envelope formula is the second path; no truncation tail
                let r = FunctionalReport::x("d1", d).with_oracle(d1_darvas(base, nodes, &o.nodes)?, 0.0, 1e-8);
                rec.invariants.push(Invariant::check("dual_formula:d1", !r.flagged, format!("discrepancy {:?}", r.discrepancy)));
                rec.reports.push(Report::from_core(&r, "darvas"));
            }
            _ => unreachable!("validated"),
        }
    }
    Ok(())
}

fn curvature(c: &Ctx, rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    let n = c.p.dim;
    let cf = wkahler_core::ma::scalar_curvatures(c.phi, &c.v, None)?;
    let sd = c.phi.sdata()?;
    let mut t = Table::new("curvature_fields", View::CurvatureFields.columns(n), "s");
    t.provenance.tolerance = Some(c.cfg.tolerances.lahdili);
    t.provenance.tail = Some(sd.tail_mass);
    for (k, (p, node)) in cf.points.iter().zip(&sd.pts).enumerate() {
        let mut row = vec![json!(k)];
        row.extend(node.x.as_slice().iter().map(|x| num(*x)));
        row.extend([num(p.scal), num(p.scal_abreu), num(p.s_v), num(p.s_lah)]);
        t.rows.push(row);
    }
    rec.tables.push(t);
    rec.summary.insert("lahdili_defect".into(), num(cf.lahdili_defect));
    rec.invariants.push(Invariant::check(
        "lahdili",
        cf.lahdili_defect <= c.cfg.tolerances.lahdili,
        format!("defect {:e}", cf.lahdili_defect),
    ));
    Ok(())
}

fn geodesics(c: &Ctx, pairs: usize, samples: usize, rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    let m = MabuchiSetup::new(c.base, c.v.clone(), c.w.clone())?;
    let paths = geodesic_suite(c.base, &m, pairs, samples, c.cfg.seed)?;
    let tol = &c.cfg.tolerances;
    let gt = GeodesicTolerances { energy_affine: tol.energy_affine, speed: tol.speed, convexity: tol.convexity };
    let mut t = Table::new("geodesic_traces", View::GeodesicTraces.columns(c.p.dim), "x");
    t.provenance.tolerance = Some(tol.energy_affine);
    for (g, path) in paths.iter().enumerate() {
        for k in 0..path.ts.len() {
            t.rows.push(vec![json!(g), num(path.ts[k]), num(path.energy[k]), num(path.mrel[k]), num(path.d1_from_start[k])]);
        }
        let res = path.check(&gt);
        rec.invariants.push(Invariant::check(format!("geodesic[{g}]"), res.is_ok(), res.err().unwrap_or_default()));
    }
    rec.tables.push(t);
    let worst = |f: &dyn Fn(&GeodesicPath) -> f64| paths.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    rec.summary.insert("max_energy_affine_dev".into(), num(worst(&|p| p.energy_affine_dev)));
    rec.summary.insert("max_speed_dev".into(), num(worst(&|p| p.speed_dev)));
    rec.summary.insert("min_second_diff".into(), num(-worst(&|p| -p.min_second_diff)));
    Ok(())
}

fn census(th: &ThresholdEstimate, n: usize) -> Table {
    let mut t = Table::new("threshold_census", View::ThresholdCensus.columns(n), "x");
    for r in &th.rays {
        let mut row = vec![json!(r.index), json!(r.excluded), json!(r.diverged), num(r.slope())];
        row.extend(r.ts.iter().map(|x| num(*x)));
        row.extend(r.slopes.iter().map(|x| num(*x)));
        row.extend([num(r.richardson), num(r.calibration), num(r.torus_shift.norm_inf())]);
        t.rows.push(row);
    }
    t
}

fn threshold(c: &Ctx, budget: usize, t_max: f64, rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    let m = MabuchiSetup::new(c.phi, c.v.clone(), c.w.clone())?;
    let th = coercivity_threshold(c.phi, &m, budget, t_max, c.cfg.seed)?;
    let mut t = census(&th, c.p.dim);
    t.provenance.tolerance = Some(c.cfg.tolerances.calibration);
    rec.tables.push(t);
    rec.summary.insert("sigma".into(), num(th.sigma));
    rec.summary.insert("t_max".into(), num(th.t_max));
    let cal = th.max_calibration();
    rec.summary.insert("max_calibration".into(), num(cal));
    rec.invariants.push(Invariant::check("threshold:calibration", cal <= c.cfg.tolerances.calibration, format!("{cal:e}")));
    Ok(())
}

fn family(c: &Ctx, e: &ExperimentConfig, rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    let ExperimentConfig::Family { corners, j_max, eps, reference, lift, window, psi, psi2, threshold } = e else { unreachable!() };
    let n = c.p.dim;
    let eps: Vec<f64> = if eps.is_empty() { (1..=*j_max).map(|j| dyadic(j)).collect() } else { eps.clone() };
    let cs = corners.iter().map(|x| c.p.vertex_index_near(x).expect("validated")).collect();
    let reference = parse_reference(reference).expect("validated");
    let mode = parse_lift(lift).expect("validated");
    let spec = FamilySpec { base: c.p.clone(), corners: cs, eps, reference };
    let fam = make_family(&spec, &c.cfg.grid.quad(), *window)?;
    let h = c.cfg.correction(psi, &fam.base);
    let h2 = c.cfg.correction(psi2, &fam.base);
    let tab = family_convergence_experiment(&fam, &h, &h2, &c.v, &c.w, mode)?;
    let semi = match threshold {
        Some(t) => Some(threshold_semicontinuity_experiment(&fam, &c.v, &c.w, t.ray_budget, t.t_max, c.cfg.seed, t.j_min)?),
        None => None,
    };
    let sigma_of = |j: usize| -> f64 {
        match &semi {
            None => f64::NAN,
            Some(s) if j == 0 => s.sigma_x,
            Some(s) => s.members.iter().find(|m| m.0 == j).map(|m| m.2).unwrap_or(f64::NAN),
        }
    };
    let mut t = Table::new("family_trends", View::FamilyTrends.columns(n), "x");
    for r in std::iter::once(&tab.base).chain(&tab.rows) {
        let mut row = vec![json!(r.j), num(r.eps), num(r.volume)];
        row.extend(r.ell.iter().map(|x| num(*x)));
        row.extend([num(r.mrel), num(sigma_of(r.j)), num(r.energy), num(r.entropy), num(r.d1), num(r.window_distance)]);
        t.rows.push(row);
    }
    rec.tables.push(t);
    let diffs = |d: &FamilyDiffs| json!({"ell": num(d.ell), "energy": num(d.energy), "mrel": num(d.mrel), "d1": num(d.d1), "volume": num(d.volume)});
    let s = &mut rec.summary;
    s.insert("last_step".into(), diffs(&tab.last_step));
    s.insert("terminal_gap".into(), diffs(&tab.terminal_gap));
    s.insert("extrapolated_gap".into(), diffs(&tab.extrapolated_gap));
    s.insert("weak_usc".into(), Value::Array(tab.weak_usc.iter().map(|x| num(*x)).collect()));
    if let Some(sm) = &semi {
        s.insert(
            "semicontinuity".into(),
            json!({"sigma_x": num(sm.sigma_x), "delta": num(sm.delta), "j_min": sm.j_min, "min_tail": num(sm.min_tail), "holds": sm.holds}),
        );
    }
    Ok(())
}

fn dyadic(j: usize) -> f64 {
    0.5f64.powi(j as i32)
}

fn probes(c: &Ctx, samples: usize, order: usize, points: usize, rec: &mut ExperimentRecord) -> wkahler_core::Result<()> {
    let st = guillemin_state(c.p.clone(), Some(SGridSpec { half_width: 6.0, points }), &QuadOptions { order, grading_levels: 0 })?;
    let r = estimate_probe_suite(&st, &c.v, samples, c.cfg.seed)?;
    let mut t = Table::new("probe_rows", cols(&["name", "exact", "worst", "worst_half", "violations", "nonfinite", "stable"]), "x+s");
    for row in &r.rows {
        t.rows.push(vec![
            json!(row.name),
            json!(row.exact),
            num(row.worst),
            num(row.worst_half),
            json!(row.violations),
            json!(row.nonfinite),
            json!(row.stable()),
        ]);
        if row.exact {
            rec.invariants.push(Invariant::check(format!("probe:{}", row.name), row.violations == 0, format!("{} violations", row.violations)));
        }
    }
    rec.tables.push(t);
    let s: &mut BTreeMap<String, Value> = &mut rec.summary;
    s.insert("samples".into(), json!(r.n_samples));
    s.insert("radius".into(), num(r.radius));
    s.insert("t_omega_hat".into(), num(r.t_omega_hat));
    s.insert("all_stable".into(), json!(r.all_stable()));
    Ok(())
}
