use std::f64::consts::PI;

use wkahler_core::fixtures;
use wkahler_core::legendre::*;
use wkahler_core::linalg::Vecd;
use wkahler_core::ma::*;
use wkahler_core::potential::Correction;
use wkahler_core::quadrature::QuadOptions;
use wkahler_core::torus::{Polytope, Weight};
use wkahler_core::Error;

fn state(p: Polytope, l: f64, pts: usize) -> KahlerState {
    guillemin_state(p, Some(SGridSpec { half_width: l, points: pts }), &QuadOptions::default()).unwrap()
}

fn bump(st: &KahlerState, amp: f64) -> Correction {
    let n = st.dim();
    let xi = |a: f64, b: f64| Vecd::from_slice(&[a, b][..n]);
    Correction::LogSumExp { xis: vec![xi(1.0, 0.3), xi(-0.4, 0.8), xi(0.2, -1.0)], bs: vec![0.1, -0.2, 0.0], tau: 0.7, amp }
}

fn weights(n: usize) -> Vec<Weight> {
    let w: &[f64] = if n == 1 { &[2.0, 0.3] } else { &[2.0, 0.3, -0.2] };
    vec![
        Weight::one(n),
        Weight::builtin("affine", n, w).unwrap(),
        Weight::builtin("exponential", n, &[0.5, -0.3][..n]).unwrap(),
    ]
}

#[test]
fn fubini_study_is_einstein_with_gauss_bonnet_total() {
    let st = state(fixtures::p1(), 9.0, 145);
    let rd = ricci_data(&st).unwrap();
    let sd = st.sdata().unwrap();
    for (m, p) in rd.moment.iter().zip(&sd.pts) {
        assert!((m.c[0] - p.x.c[0]).abs() < 1e-12);
    }
    assert!(rd.centering_defect < 1e-12);
    let curv = scalar_curvatures(&st, &Weight::one(1), None).unwrap();
    for c in &curv.points {
        assert!((c.scal - 1.0).abs() < 1e-9 && (c.scal_abreu - 1.0).abs() < 1e-12, "{}", c.scal);
    }
    // ∫ S ω on the s-grid and on P
    let ma0 = ma(&st).unwrap();
    let s_path: f64 = sd.grid.integrate(&curv.scal().iter().zip(ma0.s.as_ref().unwrap()).map(|(a, b)| a * b).collect::<Vec<_>>());
    assert!((s_path - 4.0 * PI).abs() < 1e-6, "{s_path}");
    assert!((ma0.mass_x.unwrap() - 4.0 * PI).abs() < 1e-12);
}

#[test]
fn weighted_and_plain_ma_agree_for_unit_weight() {
    let st = state(fixtures::p2(), 6.0, 25);
    let a = ma(&st).unwrap();
    let b = ma_v(&st, &Weight::builtin("constant", 2, &[1.0]).unwrap()).unwrap();
    assert_eq!(a, b);
    let v = Weight::builtin("exponential", 2, &[0.4, 0.1]).unwrap();
    let m = ma_v(&st, &v).unwrap();
    let rel = m.mass_discrepancy().unwrap() / m.mass_x.unwrap();
    assert!(rel < 1e-3, "{rel}");
    let bad = Weight::builtin("affine", 2, &[0.0, 1.0, 0.0]).unwrap();
    assert!(matches!(ma_v(&st, &bad), Err(Error::NonPositiveWeight { .. })));
}

#[test]
fn lahdili_identity_on_all_fixtures() {
    for (name, p) in fixtures::all() {
        let n = p.dim;
        let st = state(p, 6.0, if n == 1 { 61 } else { 21 });
        let pert = perturb_state(&st, bump(&st, 0.2)).unwrap();
        for s in [&st, &pert] {
            for v in weights(n) {
                let c = scalar_curvatures(s, &v, None).unwrap();
                assert!(c.lahdili_defect <= 1e-8, "{name}: {}", c.lahdili_defect);
                for pt in &c.points {
                    assert!((pt.scal - pt.scal_abreu).abs() <= 1e-8 * (1.0 + pt.scal.abs()), "{name}");
                }
            }
        }
    }
}

#[test]
fn unit_weight_reduces_to_scalar_curvature() {
    let st = state(fixtures::blp2(), 5.0, 15);
    let c = scalar_curvatures(&st, &Weight::one(2), None).unwrap();
    for p in &c.points {
        assert!((p.s_v - p.scal).abs() < 1e-14 && (p.s_lah - p.scal_abreu).abs() < 1e-14);
    }
}

#[test]
fn zero_twist_gives_zero_density() {
    let st = state(fixtures::p1(), 6.0, 31);
    let d = ma_twisted(&st, &Weight::one(1), &EquivariantTwist::zero(&st.potential)).unwrap();
    assert!(d.x.unwrap().iter().chain(d.s.unwrap().iter()).all(|v| *v == 0.0));
}

fn pullback(st: &KahlerState, f: Correction) -> SFunction {
    SFunction::Pullback { pot: st.potential.clone(), f }
}

fn integrate_x(st: &KahlerState, f: &Correction, dens: &[f64]) -> f64 {
    st.quad.nodes.iter().zip(&st.quad.weights).zip(dens).map(|((x, w), d)| w * f.jet(x, 0).v * d).sum()
}

#[test]
fn twisted_operator_is_symmetric() {
    for p in [fixtures::p1(), fixtures::p2(), fixtures::blp2()] {
        let n = p.dim;
        let st = state(p, 6.0, if n == 1 { 61 } else { 21 });
        let st = perturb_state(&st, bump(&st, 0.15)).unwrap();
        let c = st.barycenter();
        let f = bump(&st, 1.0);
        let g = Correction::Quadratic { center: c, a: wkahler_core::linalg::Matd::identity(n).scale(0.7) }
            .plus(Correction::Affine { xi: Vecd::from_slice(&[0.3, -0.5][..n]), c: 0.0 });
        for v in weights(n) {
            let tf = EquivariantTwist::Exact(pullback(&st, f.clone()));
            let tg = EquivariantTwist::Exact(pullback(&st, g.clone()));
            let a = integrate_x(&st, &g, ma_twisted(&st, &v, &tf).unwrap().x.as_ref().unwrap());
            let b = integrate_x(&st, &f, ma_twisted(&st, &v, &tg).unwrap().x.as_ref().unwrap());
            assert!((a - b).abs() <= 1e-7 * (1.0 + a.abs()), "{a} {b}");
            // ∫ f Δf MA_v ≤ 0
            let ff = integrate_x(&st, &f, ma_twisted(&st, &v, &tf).unwrap().x.as_ref().unwrap());
            assert!(ff < 0.0);
        }
    }
}

#[test]
fn laplacian_self_adjoint_on_the_s_grid() {
    let st = state(fixtures::p1(), 14.0, 281);
    let st = perturb_state(&st, bump(&st, 0.2)).unwrap();
    let sd = st.sdata().unwrap();
    let v = Weight::builtin("exponential", 1, &[0.5]).unwrap();
    let f = pullback(&st, bump(&st, 1.0));
    let g = pullback(&st, Correction::quadratic_iso(Vecd::from_slice(&[0.2]), 0.8));
    let mav = ma_v(&st, &v).unwrap().s.unwrap();
    let lf = weighted_laplacian(&st, &v, &f).unwrap();
    let lg = weighted_laplacian(&st, &v, &g).unwrap();
    let fv = sfunction_on_grid(sd, &f).unwrap();
    let gv = sfunction_on_grid(sd, &g).unwrap();
    let int = |a: &[f64], b: &[f64]| sd.grid.integrate(&a.iter().zip(b).zip(&mav).map(|((x, y), m)| x * y * m).collect::<Vec<_>>());
    let (a, b) = (int(&gv, &lf), int(&fv, &lg));
    assert!((a - b).abs() < 1e-7, "{a} {b}");
    assert!(int(&fv, &lf) < 0.0);
    let c = weighted_laplacian(&st, &v, &pullback(&st, Correction::Constant(3.0))).unwrap();
    assert!(c.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn kernel_of_weighted_laplacian_is_constants() {
    for p in [fixtures::p1(), fixtures::p1xp1(), fixtures::blp2()] {
        let st = guillemin_state(p, None, &QuadOptions::default()).unwrap();
        let n = st.dim();
        for v in weights(n) {
            let gap = laplacian_spectral_gap(&st, &v, 3).unwrap();
            assert!(gap > 0.1, "{gap}");
        }
    }
}

#[test]
fn trace_of_own_form() {
    for p in [fixtures::p1(), fixtures::p2()] {
        let n = p.dim;
        let st = state(p, 6.0, if n == 1 { 41 } else { 17 });
        let v = Weight::builtin("exponential", n, &[0.5, -0.25][..n]).unwrap();
        let tr = weighted_trace(&st, &v, &EquivariantTwist::StateForm(st.potential.clone())).unwrap();
        let xi = Vecd::from_slice(&[0.5, -0.25][..n]);
        for (t, pt) in tr.iter().zip(&st.sdata().unwrap().pts) {
            assert!((t - (n as f64 + xi.dot(&pt.x))).abs() < 1e-10);
        }
    }
}

#[test]
fn ricci_moment_is_minus_half_laplacian_of_moment() {
    for p in [fixtures::p2(), fixtures::blp2(), fixtures::simplex3()] {
        let st = state(p, 5.0, 15);
        let st = perturb_state(&st, bump(&st, 0.2)).unwrap();
        let rd = ricci_data(&st).unwrap();
        let c = scalar_curvatures(&st, &Weight::one(2), None).unwrap();
        for (m, pt) in rd.moment.iter().zip(&c.points) {
            assert!((*m - pt.lap_m.scale(-0.5)).norm_inf() < 1e-6);
        }
        assert!(rd.centering_defect < 1e-6, "{}", rd.centering_defect);
    }
}

#[test]
fn product_ricci_moment_splits() {
    let st = state(fixtures::p1xp1(), 5.0, 11);
    let rd = ricci_data(&st).unwrap();
    for (m, pt) in rd.moment.iter().zip(&st.sdata().unwrap().pts) {
        assert!((m.c[0] - pt.x.c[0]).abs() < 1e-12 && (m.c[1] - pt.x.c[1]).abs() < 1e-12);
    }
}

#[test]
fn total_weighted_scalar_curvature_is_cohomological() {
    let st = guillemin_state(fixtures::blp2(), None, &QuadOptions::default()).unwrap();
    let v = Weight::builtin("affine", 2, &[2.0, 0.3, -0.2]).unwrap();
    let total = |s: &KahlerState| -> f64 {
        let p = s.polytope();
        s.quad
            .nodes
            .iter()
            .zip(&s.quad.weights)
            .map(|(x, w)| w * s.cn * lahdili_scalar(p, &s.potential.eval(x, 4).unwrap(), &v))
            .sum()
    };
    let a = total(&st);
    let b = total(&perturb_state(&st, bump(&st, 0.3)).unwrap());
    assert!((a - b).abs() < 1e-8 * a.abs(), "{a} {b}");
}

#[test]
fn fubini_study_soliton_residuals() {
    let st = state(fixtures::p1(), 8.0, 65);
    let r0 = soliton_residual(&st, &Weight::one(1)).unwrap();
    assert!(r0 < 1e-10, "{r0}");
    let r = soliton_residual(&st, &Weight::builtin("exponential", 1, &[0.5]).unwrap()).unwrap();
    assert!(r > 1e-2, "{r}");
    let s3 = state(fixtures::simplex3(), 4.0, 9);
    assert_eq!(soliton_residual(&s3, &Weight::one(2)), Err(Error::NonFanoNormalization));
}

#[test]
fn soliton_shot_closes_only_at_zero_drift() {
    let fs = p1_soliton_shoot(0.0, 400);
    assert!(fs.mismatch.abs() < 1e-12 && fs.slope_mismatch.abs() < 1e-12);
    for (x, h) in &fs.profile {
        assert!((h - (1.0 - x * x)).abs() < 1e-12);
    }
    let xi: f64 = 0.5;
    let s = p1_soliton_shoot(xi, 400);
    // y(1) = −2∫x e^{ξx} dx
    let exact = -2.0 * ((xi - 1.0) * xi.exp() + (xi + 1.0) * (-xi).exp()) / (xi * xi);
    assert!((s.mismatch - exact).abs() < 1e-10, "{} {exact}", s.mismatch);
    assert!(s.slope_mismatch.abs() < 1e-10);
    assert!(p1_soliton_xi(2.0, 400).unwrap().abs() < 1e-12);
}
