//! Acceptance suite: one PASS/FAIL line per criterion with runtime against
//! its budget.  Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use wkahler_core::energy::*;
use wkahler_core::experiments::*;
use wkahler_core::fixtures;
use wkahler_core::legendre::*;
use wkahler_core::linalg::Vecd;
use wkahler_core::ma::*;
use wkahler_core::nodal::NodalPotential;
use wkahler_core::potential::Correction;
use wkahler_core::probes::{estimate_probe_suite, probe_state};
use wkahler_core::quadrature::QuadOptions;
use wkahler_core::rng::substream;
use wkahler_core::sample::{random_bump, random_correction, random_direction};
use wkahler_core::torus::{Polytope, Weight};
use wkahler_core::Error;

type Outcome = Result<(bool, String), Error>;

const ULPS: f64 = 16.0 * f64::EPSILON;

fn exp_weight(n: usize) -> Weight {
    Weight::builtin("exponential", n, &[0.5, -0.3][..n]).unwrap()
}

fn weights(n: usize) -> Vec<(&'static str, Weight)> {
    vec![
        ("1", Weight::one(n)),
        ("affine", Weight::builtin("affine", n, &[2.0, 0.3, -0.2][..n + 1]).unwrap()),
        ("exponential", exp_weight(n)),
    ]
}

fn xstate(p: Polytope) -> Result<KahlerState, Error> {
    guillemin_state(p, None, &QuadOptions::default())
}

fn c1() -> Outcome {
    let st = guillemin_state(fixtures::p1(), Some(SGridSpec { half_width: 9.0, points: 145 }), &QuadOptions::default())?;
    let sd = st.sdata()?;
    let ma0 = ma(&st)?;
    let vol = ma0.mass_x.unwrap();
    // Ric = ω: the Ricci moment equals the moment, and S ≡ 1
    let rd = ricci_data(&st)?;
    let mut einstein: f64 = rd.centering_defect;
    for (m, p) in rd.moment.iter().zip(&sd.pts) {
        einstein = einstein.max((m.c[0] - p.x.c[0]).abs());
    }
    let curv = scalar_curvatures(&st, &Weight::one(1), None)?;
    for c in &curv.points {
        einstein = einstein.max((c.scal_abreu - 1.0).abs());
    }
    let dens = ma0.s.as_ref().unwrap();
    let gb = sd.grid.integrate(&curv.scal().iter().zip(dens).map(|(a, b)| a * b).collect::<Vec<_>>());
    let ok = (vol - 4.0 * PI).abs() <= 1e-12 * 4.0 * PI && einstein <= 1e-8 && (gb - 4.0 * PI).abs() <= 1e-6;
    Ok((ok, format!("∫ω = {vol:.12} (4π = {:.12}), Einstein residual {einstein:.2e}, ∫Sω − 4π = {:.2e}", 4.0 * PI, gb - 4.0 * PI)))
}

fn c2() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, p) in [fixtures::p2(), fixtures::blp2()].into_iter().enumerate() {
        let base = guillemin_state(p, Some(SGridSpec::dh()), &QuadOptions::default())?;
        let mut r = substream(202, i as u64);
        for _ in 0..10 {
            let st = perturb_state(&base, random_correction(&mut r, &base, 0.3))?;
            worst = worst.max(dh_check(&st, 4)?.w1);
        }
    }
    Ok((worst <= 5e-3, format!("worst W1 over 2×10 states {worst:.3e} (≤ 5e-3)")))
}

fn c3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, p) in fixtures::all() {
        let n = p.dim;
        let st = guillemin_state(p, Some(SGridSpec { half_width: 6.0, points: if n == 1 { 61 } else { 21 } }), &QuadOptions::default())?;
        let mut r = substream(303, n as u64);
        let pert = perturb_state(&st, random_correction(&mut r, &st, 0.3))?;
        for s in [&st, &pert] {
            for (_, v) in weights(n) {
                worst = worst.max(scalar_curvatures(s, &v, None)?.lahdili_defect);
                count += 1;
            }
        }
    }
    Ok((worst <= 1e-8, format!("sup relative deviation {worst:.2e} over {count} (fixture, state, weight) cases")))
}

fn c4() -> Outcome {
    let xi = 0.5;
    let tol = 1e-6;
    let v = Weight::builtin("exponential", 1, &[xi]).unwrap();
    // the ODE oracle yields a soliton profile only if the shot closes at x = 1
    let shot = p1_soliton_shoot(xi, 400);
    let closes = shot.mismatch.abs() <= tol;
    let root = p1_soliton_xi(2.0, 400)?;
    let fs = guillemin_state(fixtures::p1(), Some(SGridSpec { half_width: 8.0, points: 65 }), &QuadOptions::default())?;
    let r_fs = soliton_residual(&fs, &v)?;
    let fs_fails = r_fs >= 10.0 * tol;
    Ok((
        closes && fs_fails,
        format!(
            "ODE shot y(1) = {:.6e} at ξ = {xi} ({}); only closing drift ξ = {root:.1e}; FS residual at ξ = {xi}: {r_fs:.3e} ({})",
            shot.mismatch,
            if closes { "soliton found" } else { "no soliton profile, residual undefined" },
            if fs_fails { "≥ 10× tol" } else { "< 10× tol" }
        ),
    ))
}

fn nodal(base: &KahlerState, h: &Correction) -> Result<NodalPotential, Error> {
    NodalPotential::from_potential(&base.potential.add_correction(h.clone()), &base.quad)
}

fn c5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let mut triples = 0;
    for (name, p) in fixtures::all() {
        let base = xstate(p)?;
        let mut r = substream(505, name.len() as u64 + base.dim() as u64 * 31);
        let pots = (0..100).map(|_| nodal(&base, &random_correction(&mut r, &base, 0.4))).collect::<Result<Vec<_>, _>>()?;
        let d = |a: &NodalPotential, b: &NodalPotential| d1_l1(&base, a, b);
        for k in 0..50 {
            let (a, b) = (&pots[2 * k], &pots[2 * k + 1]);
            let l1 = d(a, b)?;
            worst = worst.max((d1_darvas(&base, a, b)? - l1).abs());
            for c in &pots {
                triples += 1;
                let via = d(a, c)? + d(c, b)?;
                // a few ulps of slack for the floating-point sums
                if l1 > via + ULPS * via {
                    violations += 1;
                }
            }
        }
    }
    Ok((worst <= 1e-8 && violations == 0, format!("max |dual − L¹| {worst:.2e}; triangle violations {violations}/{triples}")))
}

fn c6() -> Outcome {
    let qo = QuadOptions { order: 24, grading_levels: 0 };
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["p1", "p2", "blp2"] {
        let p = fixtures::by_name(name)?;
        let n = p.dim;
        let base = guillemin_state(p, None, &qo)?;
        let mut r = substream(606, n as u64);
        let st = perturb_state(&base, random_correction(&mut r, &base, 0.3))?;
        let f = random_direction(&mut r, n, 0.5);
        let g = random_bump(&mut r, n, 2, 1.0);
        for row in euler_lagrange_suite(&base, &st, &exp_weight(n), &g, &f, [1e-3, 5e-4])? {
            let pass = row.pass && (row.exact || row.order >= 1.8);
            ok &= pass;
            if !pass {
                lines.push(format!("{name}/{} order {:.2}", row.name, row.order));
            }
            if name == "blp2" {
                lines.push(format!("{}: {}", row.name, if row.exact { "exact".into() } else { format!("{:.2}", row.order) }));
            }
        }
    }
    Ok((ok, format!("orders on blp2 [{}]", lines.join(", "))))
}

fn c7() -> Outcome {
    let tol = GeodesicTolerances::default();
    let (mut aff, mut speed, mut convex) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut failed = Vec::new();
    let mut total = 0;
    for (name, p) in fixtures::all() {
        let st = xstate(p)?;
        let n = st.dim();
        let m = MabuchiSetup::new(&st, Weight::one(n), Weight::one(n))?;
        for (i, g) in geodesic_suite(&st, &m, 50, 5, 707)?.iter().enumerate() {
            total += 1;
            aff = aff.max(g.energy_affine_dev);
            speed = speed.max(g.speed_dev);
            convex = convex.min(g.min_second_diff);
            if let Err(e) = g.check(&tol) {
                failed.push(format!("{name}[{i}]: {e}"));
            }
        }
    }
    Ok((
        failed.is_empty(),
        format!("{total} geodesics; max E deviation {aff:.2e}, speed deviation {speed:.2e}, min M^rel second difference {convex:.2e}; failures {failed:?}"),
    ))
}

fn c8() -> Outcome {
    let base = guillemin_state(fixtures::p2(), Some(SGridSpec { half_width: 6.0, points: 33 }), &QuadOptions::default())?;
    let sd = base.sdata()?;
    let w = &sd.grid.weights;
    let nu: Vec<f64> = sd.pts.iter().map(|p| base.cn * (-p.ld_g).exp()).collect();
    let mut ok = true;
    let (mut chain_err, mut over, mut nonmono): (f64, usize, usize) = (0.0, 0, 0);
    let mut r = substream(808, 0);
    for _ in 0..10 {
        let rho = random_direction(&mut r, 2, 0.5);
        let rho2 = random_direction(&mut r, 2, 0.5);
        let mu: Vec<f64> = nu.iter().zip(&sd.pts).map(|(n, p)| n * (2.0 * rho.jet(&p.x, 0).v).exp()).collect();
        let nu2: Vec<f64> = nu.iter().zip(&sd.pts).map(|(n, p)| n * rho2.jet(&p.x, 0).v.exp()).collect();
        let ent = relative_entropy(w, &mu, &nu)?;
        ok &= ent >= entropy_mass_bound(w, &mu, &nu);
        let lin: f64 = w.iter().zip(&mu).zip(&sd.pts).map(|((w, m), p)| w * m * rho2.jet(&p.x, 0).v).sum();
        chain_err = chain_err.max((ent - relative_entropy(w, &mu, &nu2)? - lin).abs() / (1.0 + ent.abs()));
        let curve = legendre_bound_curve(w, &mu, &nu, 20)?;
        // the last step is the equality case, so compare to within a few ulps
        let slack = ULPS * ent.abs().max(1.0);
        over += curve.iter().filter(|b| **b > ent + slack).count();
        nonmono += curve.windows(2).filter(|p| p[1] < p[0] - slack).count();
    }
    let mut sandwich = 0;
    for p in [fixtures::p1(), fixtures::p2(), fixtures::blp2()] {
        let n = p.dim;
        let base = xstate(p)?;
        let mut r = substream(809, n as u64);
        for _ in 0..3 {
            let phi = nodal(&base, &random_correction(&mut r, &base, 0.5))?;
            for (_, v) in weights(n) {
                sandwich += usize::from(!entropy_sandwich(&base, &phi, &v)?.holds);
            }
        }
    }
    ok &= chain_err <= 1e-8 && over == 0 && nonmono == 0 && sandwich == 0;
    Ok((
        ok,
        format!("chain-rule error {chain_err:.2e}; Legendre bounds above Ent: {over}; gap increases: {nonmono}; sandwich failures {sandwich}"),
    ))
}

fn blowup_family(eps: Vec<f64>, order: usize) -> Result<Family, Error> {
    let p2 = fixtures::p2();
    let corner = p2.vertex_index_near(&[-1.0, -1.0]).expect("corner");
    let spec = FamilySpec { base: p2, corners: vec![corner], eps, reference: FamilyReference::Matched };
    make_family(&spec, &QuadOptions { order, grading_levels: 0 }, 3.0)
}

fn c9() -> Outcome {
    let eps: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
    let fam = blowup_family(eps, 8)?;
    let one = Weight::one(2);
    let psi = Correction::quadratic_iso(Vecd::from_slice(&[0.1, -0.2]), 0.3).plus(Correction::Affine { xi: Vecd::from_slice(&[0.2, 0.1]), c: 0.1 });
    let t = family_convergence_experiment(&fam, &psi, &psi, &one, &one, LiftMode::Restricted)?;
    let (l, g) = (&t.last_step, &t.terminal_gap);
    let ok = l.energy <= 1e-3 && l.mrel <= 1e-3 && l.ell <= 1e-3 && g.ell <= 1e-3 && g.mrel <= 5e-3 && g.energy <= 5e-3;
    Ok((
        ok,
        format!(
            "last step: E {:.2e}, M^rel {:.2e}, ℓ {:.2e}; terminal gap: E {:.2e}, M^rel {:.2e}, ℓ {:.2e}",
            l.energy, l.mrel, l.ell, g.energy, g.mrel, g.ell
        ),
    ))
}

fn c10() -> Outcome {
    let eps: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
    let fam = blowup_family(eps, 8)?;
    let one = Weight::one(2);
    let t = threshold_semicontinuity_experiment(&fam, &one, &one, 64, 50.0, 9, 4)?;
    Ok((t.holds, format!("σ_X = {:.4}, min_(j≥4) σ_j = {:.4}, δ = {:.4}", t.sigma_x, t.min_tail, t.delta)))
}

fn c11() -> Outcome {
    let (mut violations, mut unstable) = (0, Vec::new());
    for (name, p) in fixtures::all() {
        let n = p.dim;
        let st = probe_state(p)?;
        let v = Weight::builtin("exponential", n, &[0.3, -0.2][..n]).unwrap();
        let r = estimate_probe_suite(&st, &v, 200, 11)?;
        violations += r.violations();
        for row in r.rows.iter().filter(|row| !row.stable()) {
            unstable.push(format!("{name}/{}", row.name));
        }
    }
    Ok((violations == 0 && unstable.is_empty(), format!("violations {violations}; unstable ratios {unstable:?}")))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("calibration fixture", 1, c1),
        ("DH invariance", 30, c2),
        ("Lahdili identity", 10, c3),
        ("soliton equivalence", 5, c4),
        ("Darvas dual formula", 30, c5),
        ("Euler–Lagrange suite", 60, c6),
        ("geodesic suite", 120, c7),
        ("entropy suite", 10, c8),
        ("family convergence", 600, c9),
        ("threshold semicontinuity", 1800, c10),
        ("probe suites", 300, c11),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f));
        let dt = t0.elapsed();
        let in_budget = dt <= Duration::from_secs(*budget);
        let (ok, detail) = match res {
            Ok(Ok((ok, d))) => (ok && in_budget, d),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {:<26} {} [{:.2}s / {}s{}] {detail}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            budget,
            if in_budget { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
