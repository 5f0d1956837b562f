//! Randomised estimate probes for the pluripotential inequalities of the
//! finite-energy theory: Hölder continuity of mixed Monge–Ampère pairings,
//! the mean and sup bounds, the J–d₁ comparison and the continuity of the
//! weighted energies.
//!
//! Inequalities with an explicit constant are checked exactly and counted as
//! violations; the `≲` ones report the worst observed ratio, which must be
//! finite and stable under doubling the sample count.

use alloc::string::String;
use alloc::vec::Vec;

use crate::energy::{d1_l1, energy, i_functional, ricci_energy, rooftop, weighted_energy, SPotential};
use crate::error::{Error, Result};
use crate::legendre::{guillemin_state, perturb_state, KahlerState, SGridSpec};
use crate::linalg::{Matd, Vecd};
use crate::nodal::NodalPotential;
use crate::par;
use crate::potential::{Correction, SymplecticPotential};
use crate::quadrature::QuadOptions;
use crate::rng::{substream, uniform};
use crate::sample::random_correction;
use crate::torus::{Polytope, Weight};

/// Relative slack for the exact inequalities (round-off only).
const EXACT_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub name: String,
    /// explicit-constant inequality (violations counted) or `≲` ratio
    pub exact: bool,
    /// worst ratio over all samples
    pub worst: f64,
    /// worst ratio over the first half of the samples
    pub worst_half: f64,
    pub violations: usize,
    pub nonfinite: usize,
}

impl ProbeRow {
    /// Worst ratio finite and within 2× of the half-sample value.
    pub fn stable(&self) -> bool {
        self.worst.is_finite() && (self.worst <= 2.0 * self.worst_half || self.worst == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub n_samples: usize,
    pub seed: u64,
    /// d₁-ball radius the samples are drawn from
    pub radius: f64,
    /// sampled lower bound for T_ω over invariant potentials
    pub t_omega_hat: f64,
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations + r.nonfinite).sum()
    }

    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(|r| r.stable())
    }

    pub fn row(&self, name: &str) -> Option<&ProbeRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Guillemin state the probe suites run on: s-grid [−6,6]^n with 33 points
/// per axis, order-4 x-quadrature.  Inequality checks do not need the
/// default resolution and the suite evaluates hundreds of states.
pub fn probe_state(p: Polytope) -> Result<KahlerState> {
    guillemin_state(p, Some(SGridSpec { half_width: 6.0, points: 33 }), &QuadOptions { order: 4, grading_levels: 0 })
}

/// φ(∇G_0(x)) = F_φ(s) − F_0(s) at s = ∇G_0(x), for every interior node.
pub fn kahler_on_nodes(base: &KahlerState, pot: &SymplecticPotential) -> Result<Vec<f64>> {
    let q = &base.quad;
    par::try_map(q.nodes.len(), |i| {
        let x = &q.nodes[i];
        let s = &base.nodes.grad[i];
        let y = pot.legendre_warm(s, *x, pot.ells(x), 0)?;
        let f = y.eval.x.dot(s) - y.eval.g;
        let f0 = x.dot(s) - base.nodes.g[i];
        Ok::<_, Error>(f - f0)
    })
}

/// Symplectic potential of the Kähler mean (1/k)Σ F_i at every interior
/// node.  Joint Newton on (y_1..y_k, s) with ∇G_i(y_i) = s, avg y_i = x;
/// falls back to nested Legendre solves if that stalls.
pub fn mean_potential_values(base: &KahlerState, pots: &[SymplecticPotential]) -> Result<Vec<f64>> {
    let q = &base.quad;
    par::try_map(q.nodes.len(), |i| match mean_joint(pots, q.nodes[i]) {
        Some(g) => Ok(g),
        None => mean_nested(base, pots, i),
    })
}

fn mean_joint(pots: &[SymplecticPotential], x: Vecd) -> Option<f64> {
    let k = pots.len() as f64;
    let p = &*pots.first()?.polytope;
    let scale = 1.0 + x.norm_inf();
    let mut ys: Vec<Vecd> = alloc::vec![x; pots.len()];
    let mut ls: Vec<Vec<f64>> = pots.iter().map(|q| q.ells(&x)).collect();
    let mut s = Vecd::zeros(x.n);
    for _ in 0..60 {
        let es: Vec<_> = pots.iter().zip(ys.iter().zip(&ls)).map(|(q, (y, l))| q.eval_with(y, l, 2)).collect::<Result<_>>().ok()?;
        if s.norm_inf() == 0.0 {
            s = es.iter().fold(Vecd::zeros(x.n), |a, e| a + e.grad).scale(1.0 / k);
        }
        let rs: Vec<Vecd> = es.iter().map(|e| s - e.grad).collect();
        let ybar = ys.iter().fold(Vecd::zeros(x.n), |a, y| a + *y).scale(1.0 / k);
        let res = rs.iter().map(|r| r.norm_inf()).fold((ybar - x).norm_inf(), f64::max);
        if res <= 1e-13 * scale {
            let f: f64 = es.iter().zip(&ys).map(|(e, y)| y.dot(&s) - e.g).sum::<f64>() / k;
            return Some(x.dot(&s) - f);
        }
        let hbar = es.iter().fold(Matd::zeros(x.n), |a, e| a + e.hinv).scale(1.0 / k);
        let hr = es.iter().zip(&rs).fold(Vecd::zeros(x.n), |a, (e, r)| a + e.hinv.mul_vec(r)).scale(1.0 / k);
        let ds = hbar.solve(&(x - ybar - hr))?;
        let dys: Vec<Vecd> = es.iter().zip(&rs).map(|(e, r)| e.hinv.mul_vec(&(*r + ds))).collect();
        let mut a: f64 = 1.0;
        for (l, dy) in ls.iter().zip(&dys) {
            for (li, f) in l.iter().zip(&p.facets) {
                let d = f.u.dot(dy);
                if d < 0.0 {
                    a = a.min(0.95 * li / -d);
                }
            }
        }
        s = s + ds.scale(a);
        for ((y, l), dy) in ys.iter_mut().zip(ls.iter_mut()).zip(&dys) {
            *y = *y + dy.scale(a);
            for (li, f) in l.iter_mut().zip(&p.facets) {
                *li += a * f.u.dot(dy);
            }
        }
    }
    None
}

/// Oracle for `mean_potential_values`: Newton on s ↦ (1/k)ΣF_i(s) − ⟨x, s⟩
/// with inner Legendre solves.
pub fn mean_potential_values_nested(base: &KahlerState, pots: &[SymplecticPotential]) -> Result<Vec<f64>> {
    par::try_map(base.quad.nodes.len(), |i| mean_nested(base, pots, i))
}

fn mean_nested(base: &KahlerState, pots: &[SymplecticPotential], i: usize) -> Result<f64> {
    let q = &base.quad;
    let k = pots.len() as f64;
    let x = q.nodes[i];
    // seed: s = mean of ∇G_i(x), exact when the G_i differ by affine terms
    let mut s = Vecd::zeros(x.n);
    for p in pots {
        s = s + p.eval(&x, 2)?.grad;
    }
    s = s.scale(1.0 / k);
    let mut warm: Vec<(Vecd, Vec<f64>)> = pots.iter().map(|p| (x, p.ells(&x))).collect();
    let eval = |s: &Vecd, warm: &[(Vecd, Vec<f64>)]| -> Result<(f64, Vecd, Matd, Vec<(Vecd, Vec<f64>)>)> {
        let mut f = 0.0;
        let mut m = Vecd::zeros(x.n);
        let mut h = Matd::zeros(x.n);
        let mut next = Vec::with_capacity(pots.len());
        for (p, (x0, l0)) in pots.iter().zip(warm) {
            let y = p.legendre_warm(s, *x0, l0.clone(), 0)?;
            f += y.eval.x.dot(s) - y.eval.g;
            m = m + y.eval.x;
            h = h + y.eval.hinv;
            next.push((y.eval.x, y.eval.ells.clone()));
        }
        Ok((f / k - x.dot(s), m.scale(1.0 / k) - x, h.scale(1.0 / k), next))
    };
    let (mut f, mut g, mut h, w) = eval(&s, &warm)?;
    warm = w;
    for _ in 0..80 {
        if g.norm_inf() <= 1e-12 * (1.0 + x.norm_inf()) {
            break;
        }
        let step = h.solve(&g).ok_or(Error::Singular("mean potential Hessian"))?;
        let mut lam = 1.0;
        loop {
            let st = s - step.scale(lam);
            match eval(&st, &warm) {
                Ok((fn_, gn, hn, wn)) if fn_ <= f + 1e-12 * (1.0 + f.abs()) => {
                    s = st;
                    f = fn_;
                    g = gn;
                    h = hn;
                    warm = wn;
                    break;
                }
                _ => {
                    lam *= 0.5;
                    if lam < 1e-12 {
                        return Err(Error::LegendreFailure { residual: g.norm_inf() });
                    }
                }
            }
        }
    }
    Ok(-f)
}

/// c_n times the mixed discriminant of n symmetric matrices (polarisation).
pub fn mixed_density(cn: f64, hs: &[Matd]) -> f64 {
    let n = hs.len();
    let mut fact = 1.0;
    for i in 2..=n {
        fact *= i as f64;
    }
    let mut s = 0.0;
    for mask in 1u32..(1 << n) {
        let mut a = Matd::zeros(hs[0].n);
        for (i, m) in hs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                a = a + *m;
            }
        }
        let sign = if (n as u32 - mask.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * a.det();
    }
    cn * s / fact
}

struct Member {
    pot: SymplecticPotential,
    nodes: NodalPotential,
    sp: SPotential,
    /// φ(∇G_0(x)) at the interior nodes
    kv: Vec<f64>,
    d0: f64,
    sup: f64,
}

fn member(base: &KahlerState, h: Correction) -> Result<Member> {
    let st = perturb_state(base, h)?;
    let sp = SPotential::of(base, &st)?;
    let kv = kahler_on_nodes(base, &st.potential)?;
    let d0 = d1_l1(base, &st.nodes, &base.nodes)?;
    // sup φ = max over P̄ of G_0 − G_φ, on the interior and facet nodes
    let sup = st
        .nodes
        .g
        .iter()
        .zip(&base.nodes.g)
        .chain(st.nodes.gb.iter().zip(&base.nodes.gb))
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Member { pot: st.potential, nodes: st.nodes, sp, kv, d0, sup })
}

/// Per-sample probe data.  T̂-dependent rows are finished in `aggregate`.
struct SampleValues {
    /// `≲` ratios, indexed like `RATIO_NAMES`
    ratios: [f64; 8],
    /// lhs/rhs of the T̂-free exact inequalities (first entries of `EXACT_NAMES`)
    exact: [f64; 4],
    /// sup φ − V⁻¹∫φ ω^n for the three members
    t: [f64; 3],
    /// |sup φ|, V⁻¹∫|φ|ω^n, V⁻¹d₁(φ,0)
    supd: [f64; 3],
    /// V sup φ̂ and ∫φ̂ ω^n for φ̂ = φ − E(φ)/V
    hat: [f64; 2],
}

pub const RATIO_NAMES: [&str; 9] =
    ["MAcont", "MAbd", "MAhold", "I_le_d1", "d1_env", "mean", "Rv_holder", "dJ_lower", "supd_ratio"];
pub const EXACT_NAMES: [&str; 6] = ["mean_le_average", "E_lipschitz", "Ev_lipschitz", "d1_le_2Vsup", "supd", "dJ_upper"];

fn sup_on(base: &KahlerState, v: &Weight) -> f64 {
    let p = base.polytope();
    base.quad
        .nodes
        .iter()
        .chain(p.vertices.iter().map(|w| &w.x))
        .map(|x| v.eval(x).abs())
        .fold(0.0, f64::max)
}

fn sample(base: &KahlerState, v: &Weight, seed: u64, idx: usize, radius: f64) -> Result<SampleValues> {
    let mut r = substream(seed, idx as u64);
    let n = base.dim();
    let vol = base.volume();
    let mut ms = Vec::with_capacity(3);
    for _ in 0..3 {
        let amp = uniform(&mut r, 0.05, 0.6);
        let c = uniform(&mut r, -0.5, 0.5);
        let h = random_correction(&mut r, base, amp).plus(Correction::Constant(-c));
        let m = member(base, h.clone())?;
        ms.push(if m.d0 > radius { member(base, h.scaled(0.99 * radius / m.d0))? } else { m });
    }
    let (a, b, c) = (&ms[0], &ms[1], &ms[2]);
    let sd = base.sdata()?;
    let q = &base.quad;
    let cn = base.cn;
    let alpha = libm::pow(2.0, -(n as f64));
    let rad = a.d0.max(b.d0).max(c.d0);
    let dab = d1_l1(base, &a.nodes, &b.nodes)?;
    let holder = |d: f64, r: f64| libm::pow(d, alpha) * libm::pow(r, 1.0 - alpha);

    // mixed measure ω_τ ∧ ω_φ ∧ ω_ψ ∧ … (cycling), on the s-grid
    let cyc = [c, a, b];
    let sint = |f: &dyn Fn(usize) -> f64| -> f64 {
        let vals: Vec<f64> = (0..sd.pts.len()).map(f).collect();
        sd.grid.integrate(&vals)
    };
    let mixed = |k: usize| -> f64 {
        let hs: Vec<Matd> = (0..n).map(|i| cyc[i % 3].sp.hess[k]).collect();
        mixed_density(cn, &hs)
    };
    let macont = sint(&|k| (a.sp.phi[k] - b.sp.phi[k]).abs() * mixed(k));
    let mabd = sint(&|k| a.sp.phi[k].abs() * mixed(k));
    let mahold = sint(&|k| c.sp.phi[k] * (a.sp.ma[k] - b.sp.ma[k])).abs();
    let i_ab = i_functional(base, &a.sp, &b.sp)?;
    let d_env = d1_l1(base, &rooftop(&a.nodes, &b.nodes), &base.nodes)?;

    // Kähler mean of the three members against their average
    let pots = [a.pot.clone(), b.pot.clone(), c.pot.clone()];
    let gm = mean_potential_values(base, &pots)?;
    let mut d_mean = 0.0;
    let mut above = 0.0f64;
    for i in 0..gm.len() {
        d_mean += q.weights[i] * (gm[i] - base.nodes.g[i]).abs();
        let avg = (a.nodes.g[i] + b.nodes.g[i] + c.nodes.g[i]) / 3.0;
        above = above.max((gm[i] - avg) / (1.0 + avg.abs()));
    }
    d_mean *= cn;

    let e_ab = (energy(base, &a.nodes)? - energy(base, &b.nodes)?).abs();
    let ev_ab = (weighted_energy(base, &a.nodes, v)? - weighted_energy(base, &b.nodes, v)?).abs();
    let r_ab = (ricci_energy(base, &a.nodes, v)? - ricci_energy(base, &b.nodes, v)?).abs();

    let int_mu = |m: &Member, f: &dyn Fn(f64) -> f64| -> f64 {
        cn * q.weights.iter().zip(&m.kv).map(|(w, p)| w * f(*p)).sum::<f64>()
    };
    let t = [a, b, c].map(|m| m.sup - int_mu(m, &|p| p) / vol);

    // φ̂ = φ − E(φ)/V has E(φ̂) = 0, so J(φ̂) = ∫φ̂ ω^n
    let shift = -energy(base, &a.nodes)? / vol;
    let d_hat = d1_l1(base, &a.nodes.shifted(shift), &base.nodes)?;
    let j_hat = int_mu(a, &|p| p) + shift * vol;
    let sup_hat = a.sup + shift;

    Ok(SampleValues {
        ratios: [
            macont / holder(dab, rad),
            mabd / rad,
            mahold / libm::sqrt(dab * rad),
            i_ab / dab,
            d_env / a.d0.max(b.d0),
            d_mean / rad,
            r_ab / holder(dab, a.d0.max(b.d0)),
            j_hat / d_hat,
        ],
        exact: [1.0 + above, e_ab / dab, ev_ab / (sup_on(base, v) * dab), d_hat / (2.0 * vol * sup_hat)],
        t,
        supd: [a.sup.abs(), int_mu(a, &|p| p.abs()) / vol, a.d0 / vol],
        hat: [vol * sup_hat, j_hat],
    })
}

#[derive(Clone, Copy, Default)]
struct Acc {
    worst: f64,
    violations: usize,
    nonfinite: usize,
}

impl Acc {
    fn push(&mut self, r: f64, exact: bool) {
        if !r.is_finite() {
            self.nonfinite += 1;
            return;
        }
        self.worst = self.worst.max(r);
        if exact && r > 1.0 + EXACT_SLACK {
            self.violations += 1;
        }
    }
}

fn aggregate(vals: &[SampleValues], vol: f64) -> (f64, Vec<Acc>, Vec<Acc>) {
    let t_hat = vals.iter().flat_map(|s| s.t).fold(0.0, f64::max);
    let mut ratio = alloc::vec![Acc::default(); RATIO_NAMES.len()];
    let mut exact = alloc::vec![Acc::default(); EXACT_NAMES.len()];
    for s in vals {
        for (k, r) in s.ratios.iter().enumerate() {
            ratio[k].push(*r, false);
        }
        ratio[8].push(s.supd[0] / (s.supd[2] + t_hat), false);
        for (k, r) in s.exact.iter().enumerate() {
            exact[k].push(*r, true);
        }
        exact[4].push(s.supd[0] / (s.supd[1] + t_hat), true);
        exact[5].push(s.hat[0] / (s.hat[1] + vol * t_hat), true);
    }
    (t_hat, ratio, exact)
}

/// Worst ratios and violation counts over `n_samples` seeded triples
/// (φ, ψ, τ) in the d₁-ball of radius ½V.
pub fn estimate_probe_suite(base: &KahlerState, v: &Weight, n_samples: usize, seed: u64) -> Result<ProbeReport> {
    let radius = 0.5 * base.volume();
    if n_samples == 0 {
        return Ok(ProbeReport { n_samples, seed, radius, t_omega_hat: 0.0, rows: Vec::new() });
    }
    base.sdata()?;
    let vals = par::try_map(n_samples, |i| sample(base, v, seed, i, radius))?;
    let vol = base.volume();
    let (t_hat, fr, fe) = aggregate(&vals, vol);
    let (_, hr, he) = aggregate(&vals[..(n_samples / 2).max(1)], vol);
    let row = |name: &str, exact: bool, f: &Acc, h: &Acc| ProbeRow {
        name: String::from(name),
        exact,
        worst: f.worst,
        worst_half: h.worst,
        violations: f.violations,
        nonfinite: f.nonfinite,
    };
    let mut rows = Vec::new();
    for (k, name) in RATIO_NAMES.iter().enumerate() {
        rows.push(row(name, false, &fr[k], &hr[k]));
    }
    for (k, name) in EXACT_NAMES.iter().enumerate() {
        rows.push(row(name, true, &fe[k], &he[k]));
    }
    Ok(ProbeReport { n_samples, seed, radius, t_omega_hat: t_hat, rows })
}
