use wkahler_core::fixtures;
use wkahler_core::legendre::perturb_state;
use wkahler_core::linalg::{Matd, Vecd};
use wkahler_core::potential::Correction;
use wkahler_core::probes::*;
use wkahler_core::torus::Weight;

fn base(name: &str) -> wkahler_core::legendre::KahlerState {
    probe_state(fixtures::by_name(name).unwrap()).unwrap()
}

#[test]
fn empty_suite() {
    let st = base("p1");
    let r = estimate_probe_suite(&st, &Weight::one(1), 0, 7).unwrap();
    assert!(r.rows.is_empty() && r.n_samples == 0);
}

#[test]
fn mixed_density_of_equal_matrices_is_ma() {
    let a = Matd::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]);
    assert!((mixed_density(3.0, &[a, a]) - 3.0 * a.det()).abs() < 1e-12);
    let b = Matd::identity(2);
    // D(A, I) = tr A / 2 in two variables
    assert!((mixed_density(1.0, &[a, b]) - 1.5).abs() < 1e-12);
}

#[test]
fn kahler_values_match_the_s_grid_oracle() {
    let st = base("p2");
    let h = Correction::quadratic_iso(st.barycenter(), 0.4).plus(Correction::Affine { xi: Vecd::from_slice(&[0.2, -0.1]), c: 0.3 });
    let pert = perturb_state(&st, h).unwrap();
    let kv = kahler_on_nodes(&st, &pert.potential).unwrap();
    // ∫ φ ω^n: pushforward to P against the s-grid integral
    let x: f64 = st.quad.weights.iter().zip(&kv).map(|(w, p)| st.cn * w * p).sum();
    let sp = wkahler_core::energy::SPotential::of(&st, &pert).unwrap();
    let sd = st.sdata().unwrap();
    let vals: Vec<f64> = sd.pts.iter().zip(&sp.phi).map(|(p, f)| f * st.cn * (-p.ld_g).exp()).collect();
    let s = sd.grid.integrate(&vals);
    assert!((x - s).abs() < 1e-2 * (1.0 + x.abs()), "{x} {s}");
}

#[test]
fn mean_of_identical_potentials_is_the_potential() {
    let st = base("p1");
    let pert = perturb_state(&st, Correction::quadratic_iso(Vecd::from_slice(&[0.1]), 0.5)).unwrap();
    let gm = mean_potential_values(&st, &[pert.potential.clone(), pert.potential.clone()]).unwrap();
    for (a, b) in gm.iter().zip(&pert.nodes.g) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn no_violations_and_stable_ratios_on_p1() {
    let st = base("p1");
    let v = Weight::builtin("exponential", 1, &[0.3]).unwrap();
    let r = estimate_probe_suite(&st, &v, 200, 11).unwrap();
    assert_eq!(r.rows.len(), RATIO_NAMES.len() + EXACT_NAMES.len());
    assert_eq!(r.violations(), 0);
    assert!(r.all_stable(), "{:?}", r.rows);
    assert!(r.t_omega_hat > 0.0 && r.radius > 0.0);
    assert_eq!(r, estimate_probe_suite(&st, &v, 200, 11).unwrap());
}

#[test]
fn no_violations_in_two_dimensions() {
    for name in ["p2", "blp2"] {
        let st = base(name);
        let v = Weight::builtin("exponential", 2, &[0.3, -0.2]).unwrap();
        let r = estimate_probe_suite(&st, &v, 6, 2).unwrap();
        assert_eq!(r.violations(), 0, "{name}");
        assert!(r.row("MAcont").unwrap().worst.is_finite());
        // the seed moves the sampled rows
        let o = estimate_probe_suite(&st, &v, 6, 3).unwrap();
        assert_ne!(r.row("MAcont").unwrap().worst, o.row("MAcont").unwrap().worst);
    }
}

#[test]
fn joint_and_nested_mean_agree() {
    let st = base("blp2");
    let mut r = wkahler_core::rng::substream(3, 0);
    let pots: Vec<_> = (0..3)
        .map(|_| perturb_state(&st, wkahler_core::sample::random_correction(&mut r, &st, 0.5)).unwrap().potential)
        .collect();
    let a = mean_potential_values(&st, &pots).unwrap();
    let b = mean_potential_values_nested(&st, &pots).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{x} {y}");
    }
}
