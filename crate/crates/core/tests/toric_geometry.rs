use std::sync::Arc;

use wkahler_core::legendre::*;
use wkahler_core::linalg::Vecd;
use wkahler_core::nodal::NodalPotential;
use wkahler_core::potential::{Correction, SymplecticPotential};
use wkahler_core::quadrature::QuadOptions;
use wkahler_core::torus::Polytope;
use wkahler_core::Error;

fn simplex3() -> Polytope {
    Polytope::simplex(2, 3.0).unwrap()
}

#[test]
fn interval_moment_map_is_logistic() {
    let st = guillemin_state(Polytope::interval(0.0, 1.0).unwrap(), Some(SGridSpec::default()), &QuadOptions::default()).unwrap();
    let sd = st.sdata().unwrap();
    for (s, p) in sd.grid.nodes.iter().zip(&sd.pts) {
        let e = (2.0 * s.c[0]).exp();
        assert!((p.x.c[0] - e / (1.0 + e)).abs() < 1e-14);
    }
    assert!(sd.roundtrip < 1e-8 && sd.det_defect < 1e-6);
}

#[test]
fn simplex_state_round_trip() {
    let st = guillemin_state(simplex3(), Some(SGridSpec { half_width: 8.0, points: 41 }), &QuadOptions::default()).unwrap();
    let sd = st.sdata().unwrap();
    assert!(sd.roundtrip < 1e-8, "{}", sd.roundtrip);
    assert!(sd.det_defect < 1e-6);
    assert!(sd.tail_mass.abs() < 1e-3 * st.volume());
}

#[test]
fn degenerate_interval_rejected() {
    assert_eq!(Polytope::interval(0.5, 0.5).unwrap_err(), Error::DegeneratePolytope);
}

#[test]
fn perturbations() {
    let base = guillemin_state(simplex3(), Some(SGridSpec { half_width: 6.0, points: 25 }), &QuadOptions::default()).unwrap();
    let xbar = base.barycenter();
    let same = perturb_state(&base, Correction::Zero).unwrap();
    assert_eq!(same.nodes, base.nodes);
    let ok = perturb_state(&base, Correction::quadratic_iso(xbar, 0.05)).unwrap();
    for p in &ok.sdata().unwrap().pts {
        assert!(base.polytope().contains_interior(&p.x));
    }
    let bad = perturb_state(&base, Correction::quadratic_iso(xbar, -10.0));
    assert!(matches!(bad, Err(Error::ConvexityViolation { .. })), "{bad:?}");
}

#[test]
fn kahler_potential_identities() {
    let spec = SGridSpec { half_width: 5.0, points: 21 };
    let base = guillemin_state(Polytope::interval(-1.0, 1.0).unwrap(), Some(spec), &QuadOptions::default()).unwrap();
    let phi0 = kahler_potential_of(&base, &base).unwrap();
    assert!(phi0.iter().all(|v| *v == 0.0));
    let shifted = perturb_state(&base, Correction::Constant(0.3)).unwrap();
    for v in kahler_potential_of(&shifted, &base).unwrap() {
        assert!((v + 0.3).abs() < 1e-12);
    }
    // G + a x  ⇒  F(s) ↦ F(s − a): here F = log cosh s
    let a = 0.4;
    let lin = perturb_state(&base, Correction::Affine { xi: Vecd::from_slice(&[a]), c: 0.0 }).unwrap();
    let phi = kahler_potential_of(&lin, &base).unwrap();
    for (s, v) in base.sdata().unwrap().grid.nodes.iter().zip(phi) {
        let s = s.c[0];
        let want = (s - a).cosh().ln() - s.cosh().ln();
        assert!((v - want).abs() < 1e-11);
    }
}

#[test]
fn translation_group_law() {
    let p = Arc::new(simplex3());
    let g = SymplecticPotential::guillemin(p.clone());
    let a = Vecd::from_slice(&[0.3, -0.2]);
    let b = Vecd::from_slice(&[-0.5, 0.7]);
    let ab = torus_translate_potential(&torus_translate_potential(&g, &a), &b);
    let direct = torus_translate_potential(&g, &(a + b));
    for x in [[0.5, 0.5], [1.0, 1.7], [0.01, 2.9]] {
        let x = Vecd::from_slice(&x);
        assert!((ab.value(&x) - direct.value(&x)).abs() < 1e-13);
    }
    // s ↦ s + a on the Kähler side
    let s = Vecd::from_slice(&[0.4, -1.1]);
    let f0 = g.kahler_value(&(s + a)).unwrap();
    let fa = torus_translate_potential(&g, &a).kahler_value(&s).unwrap();
    let c = a.dot(&p.barycenter());
    assert!((fa - (f0 - c)).abs() < 1e-12);
}

#[test]
fn perturbed_nodes_match_exact_legendre_1d() {
    // F_t = F + t f̃(F'), compared with a brute-force Legendre transform
    let p = Arc::new(Polytope::interval(-1.0, 1.0).unwrap());
    let g = SymplecticPotential::guillemin(p.clone());
    let q = wkahler_core::quadrature::PolytopeQuadrature::new(&p, &QuadOptions { order: 4, grading_levels: 2 });
    let ft = Correction::quadratic_iso(Vecd::from_slice(&[0.2]), 0.7);
    let t = 0.05;
    let np = NodalPotential::perturbed(&g, &q, &ft, t).unwrap();
    for (i, x) in q.nodes.iter().enumerate() {
        let x = x.c[0];
        // ∇G_t(x) = s with F_t'(s) = x, F_t' = tanh s + t f̃'(tanh s) sech² s
        let ftp = |s: f64| -> f64 {
            let m = s.tanh();
            m + t * 1.4 * (m - 0.2) * (1.0 - m * m)
        };
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ftp(mid) < x { lo = mid } else { hi = mid }
        }
        let s = 0.5 * (lo + hi);
        let m = s.tanh();
        let fts = s.cosh().ln() + t * 0.7 * (m - 0.2).powi(2);
        let gt = x * s - fts;
        assert!((np.grad[i].c[0] - s).abs() < 1e-9, "{} {}", np.grad[i].c[0], s);
        assert!((np.g[i] - gt).abs() < 1e-12);
        let fpp = (ftp(s + 1e-5) - ftp(s - 1e-5)) / 2e-5;
        assert!((np.ld[i] + fpp.ln()).abs() < 1e-8);
    }
}

#[test]
fn blowup_family_volumes_and_window() {
    let spec = FamilySpec {
        base: simplex3(),
        corners: vec![0],
        eps: (1..=8).map(|j| 0.5f64.powi(j)).collect(),
        reference: FamilyReference::Matched,
    };
    let fam = make_family(&spec, &QuadOptions::default(), 2.0).unwrap();
    let vx = fam.base.volume();
    let cn = calibration_cn(2);
    let mut prev = f64::INFINITY;
    for m in &fam.members {
        assert!((m.state.polytope().volume() - (4.5 - 0.5 * m.eps * m.eps)).abs() < 1e-12);
        assert!(m.volume < vx);
        assert!(((vx - m.volume) / cn - 0.5 * m.eps * m.eps).abs() < 1e-10);
        assert!(m.window_distance < prev, "{} {}", m.window_distance, prev);
        prev = m.window_distance;
    }
    let zero = FamilySpec { eps: vec![0.0], ..spec };
    let fz = make_family(&zero, &QuadOptions::default(), 2.0).unwrap();
    assert_eq!(fz.members[0].state.nodes, fz.base.nodes);
}
