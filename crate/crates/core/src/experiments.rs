//! Experiments: toric geodesics, d₁ modulo the torus, coercivity thresholds
//! along seeded rays, blowup-family convergence and the Fano-type
//! certificate for corner chops.

use alloc::string::String;
use alloc::vec::Vec;

use crate::energy::{d1_l1, energy, entropy_v, extremal_function, mabuchi_relative};
use crate::error::{Error, Result};
use crate::legendre::{lift_correction, perturb_state, Family, KahlerState, LiftMode};
use crate::linalg::{Matd, Vecd};
use crate::nodal::NodalPotential;
use crate::par;
use crate::potential::{Correction, SymplecticPotential};
use crate::rng::{normal, substream, uniform};
use crate::sample::{random_bump, random_correction};
use crate::torus::{AffineFunction, Polytope, Weight};

/// Weights and extremal function for M^rel = M_{v, w·ℓ^ext}.
#[derive(Clone, Debug, PartialEq)]
pub struct MabuchiSetup {
    pub v: Weight,
    pub w: Weight,
    pub lext: AffineFunction,
}

impl MabuchiSetup {
    pub fn new(st: &KahlerState, v: Weight, w: Weight) -> Result<MabuchiSetup> {
        let lext = extremal_function(st, &v, &w)?.ell;
        Ok(MabuchiSetup { v, w, lext })
    }

    pub fn mrel(&self, st: &KahlerState, phi: &NodalPotential) -> Result<f64> {
        mabuchi_relative(st, phi, &self.v, &self.w, &self.lext)
    }
}

fn integrate_x(st: &KahlerState, f: impl Fn(usize, &Vecd) -> f64) -> f64 {
    let q = &st.quad;
    st.cn * q.nodes.iter().zip(&q.weights).enumerate().map(|(i, (x, w))| w * f(i, x)).sum::<f64>()
}

fn corr_values(st: &KahlerState, h: &Correction) -> Vec<f64> {
    st.quad.nodes.iter().map(|x| h.jet(x, 0).v).collect()
}

// ------------------------------------------------------------------ geodesics

/// Toric geodesic G_t = (1−t)G_0 + tG_1 sampled on a uniform t-mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    pub ts: Vec<f64>,
    pub energy: Vec<f64>,
    /// d₁(φ_0, φ_t)
    pub d1_from_start: Vec<f64>,
    pub mrel: Vec<f64>,
    /// d₁(φ_0, φ_1)
    pub speed: f64,
    /// max |E(φ_t) − ((1−t)E(φ_0) + tE(φ_1))|
    pub energy_affine_dev: f64,
    /// max |d₁(φ_{t_k}, φ_{t_{k+1}}) − Δt·speed| / speed (0 for constant paths)
    pub speed_dev: f64,
    /// min second difference of M^rel on the mesh
    pub min_second_diff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicTolerances {
    pub energy_affine: f64,
    pub speed: f64,
    pub convexity: f64,
}

impl Default for GeodesicTolerances {
    fn default() -> Self {
        GeodesicTolerances { energy_affine: 1e-7, speed: 1e-6, convexity: 1e-6 }
    }
}

impl GeodesicPath {
    /// First violated invariant, if any.
    pub fn check(&self, tol: &GeodesicTolerances) -> core::result::Result<(), String> {
        if !(self.energy_affine_dev <= tol.energy_affine) {
            return Err(alloc::format!("geodesic energy not affine (deviation {:e})", self.energy_affine_dev));
        }
        if !(self.speed_dev <= tol.speed) {
            return Err(alloc::format!("geodesic speed not constant (relative deviation {:e})", self.speed_dev));
        }
        if !(self.min_second_diff >= -tol.convexity) {
            return Err(alloc::format!("M^rel not convex along geodesic (second difference {:e})", self.min_second_diff));
        }
        Ok(())
    }
}

/// Geodesic between G_base + h0 and G_base + h1.
pub fn geodesic(base: &KahlerState, h0: &Correction, h1: &Correction, samples: usize, m: &MabuchiSetup) -> Result<GeodesicPath> {
    let k = samples.max(2);
    let ts: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let states: Vec<KahlerState> = par::try_map(k, |i| {
        let t = ts[i];
        let h = h0.clone().scaled(1.0 - t).plus(h1.clone().scaled(t));
        perturb_state(base, h)
    })?;
    let mut en = Vec::with_capacity(k);
    let mut d1 = Vec::with_capacity(k);
    let mut mr = Vec::with_capacity(k);
    for st in &states {
        en.push(energy(base, &st.nodes)?);
        d1.push(d1_l1(base, &states[0].nodes, &st.nodes)?);
        mr.push(m.mrel(base, &st.nodes)?);
    }
    let speed = d1[k - 1];
    let mut e_dev: f64 = 0.0;
    for (t, e) in ts.iter().zip(&en) {
        e_dev = e_dev.max((e - ((1.0 - t) * en[0] + t * en[k - 1])).abs());
    }
    let mut s_dev: f64 = 0.0;
    if speed > 0.0 {
        for i in 0..k - 1 {
            let d = d1_l1(base, &states[i].nodes, &states[i + 1].nodes)?;
            s_dev = s_dev.max((d - (ts[i + 1] - ts[i]) * speed).abs() / speed);
        }
    }
    let mut sd = f64::INFINITY;
    for i in 1..k - 1 {
        sd = sd.min(mr[i + 1] - 2.0 * mr[i] + mr[i - 1]);
    }
    if k < 3 {
        sd = 0.0;
    }
    Ok(GeodesicPath { ts, energy: en, d1_from_start: d1, mrel: mr, speed, energy_affine_dev: e_dev, speed_dev: s_dev, min_second_diff: sd })
}

/// `pairs` geodesics between seeded random endpoints.
pub fn geodesic_suite(base: &KahlerState, m: &MabuchiSetup, pairs: usize, samples: usize, seed: u64) -> Result<Vec<GeodesicPath>> {
    let ends: Vec<(Correction, Correction)> = (0..pairs)
        .map(|i| {
            let mut r = substream(seed, i as u64);
            let a0 = uniform(&mut r, 0.05, 0.5);
            let a1 = uniform(&mut r, 0.05, 0.5);
            (random_correction(&mut r, base, a0), random_correction(&mut r, base, a1))
        })
        .collect();
    // paths run sequentially; geodesic() parallelises over its samples
    ends.iter().map(|(a, b)| geodesic(base, a, b, samples, m)).collect()
}

// ------------------------------------------------------------ torus quotient

/// min over a of Σ w_i |r_i − ⟨a, z_i⟩|: Nelder–Mead, then IRLS polish.
/// Returns (value, argmin, converged).
pub fn l1_translation(w: &[f64], r: &[f64], z: &[Vecd]) -> (f64, Vecd, bool) {
    let n = z.first().map(|v| v.n).unwrap_or(1);
    let f = |a: &Vecd| -> f64 { w.iter().zip(r).zip(z).map(|((wi, ri), zi)| wi * (ri - a.dot(zi)).abs()).sum() };
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let (mut best, mut conv) = nelder_mead(&f, Vecd::zeros(n), 0.5 * scale, 1e-13 * (1.0 + scale), 2000);
    // restart from the best vertex if the first run stalled
    if !conv {
        let r2 = nelder_mead(&f, best, 0.05 * scale, 1e-13 * (1.0 + scale), 2000);
        best = r2.0;
        conv = r2.1;
    }
    let mut a = best;
    let mut fa = f(&a);
    let mut eta = 1e-6 * scale;
    for _ in 0..60 {
        let mut m = Matd::zeros(n);
        let mut b = Vecd::zeros(n);
        for ((wi, ri), zi) in w.iter().zip(r).zip(z) {
            let c = wi / (ri - a.dot(zi)).abs().max(eta);
            m = m + zi.outer(zi).scale(c);
            b = b + zi.scale(c * ri);
        }
        let Some(an) = m.solve(&b) else { break };
        let fn_ = f(&an);
        if fn_ < fa {
            a = an;
            fa = fn_;
        }
        eta *= 0.5;
        if eta < 1e-15 * scale {
            break;
        }
    }
    (fa, a, conv)
}

fn nelder_mead(f: &dyn Fn(&Vecd) -> f64, x0: Vecd, step: f64, tol: f64, max_iter: usize) -> (Vecd, bool) {
    let n = x0.n;
    let mut pts: Vec<(Vecd, f64)> = Vec::with_capacity(n + 1);
    pts.push((x0, f(&x0)));
    for i in 0..n {
        let x = x0 + Vecd::unit(n, i).scale(step);
        pts.push((x, f(&x)));
    }
    for _ in 0..max_iter {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = pts.iter().map(|p| (p.0 - pts[0].0).norm_inf()).fold(0.0, f64::max);
        if pts[n].1 - pts[0].1 <= tol && size <= 1e-12 * (1.0 + pts[0].0.norm_inf()) || size == 0.0 {
            return (pts[0].0, true);
        }
        let mut c = Vecd::zeros(n);
        for p in &pts[..n] {
            c = c + p.0;
        }
        c = c.scale(1.0 / n as f64);
        let worst = pts[n];
        let xr = c + (c - worst.0);
        let fr = f(&xr);
        if fr < pts[0].1 {
            let xe = c + (c - worst.0).scale(2.0);
            let fe = f(&xe);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
        } else {
            let xc = if fr < worst.1 { c + (xr - c).scale(0.5) } else { c + (worst.0 - c).scale(0.5) };
            let fc = f(&xc);
            if fc < worst.1.min(fr) {
                pts[n] = (xc, fc);
            } else {
                let b = pts[0].0;
                for p in pts.iter_mut().skip(1) {
                    p.0 = b + (p.0 - b).scale(0.5);
                    p.1 = f(&p.0);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    (pts[0].0, false)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusDistance {
    /// d_{1,T}(φ, ψ)
    pub value: f64,
    /// translation a* of φ attaining it: φ^{a*} has G_φ − ⟨a*, x − x̄⟩
    pub a_star: Vecd,
    pub d1: f64,
    /// J(φ) and J_T(φ) = inf_a J(φ^a) with its minimiser
    pub j: f64,
    pub j_t: f64,
    pub j_t_a: Vecd,
    pub converged: bool,
}

/// d_{1,T}(φ, ψ) = min_a c_n∫|G_φ − ⟨a, x − x̄⟩ − G_ψ| dx.
pub fn d1_torus_nodes(base: &KahlerState, a: &NodalPotential, b: &NodalPotential) -> Result<(f64, Vecd, bool)> {
    let q = &base.quad;
    let xbar = base.barycenter();
    let r: Vec<f64> = a.g.iter().zip(&b.g).map(|(x, y)| x - y).collect();
    let z: Vec<Vecd> = q.nodes.iter().map(|x| *x - xbar).collect();
    let w: Vec<f64> = q.weights.iter().map(|w| base.cn * w).collect();
    if r.len() != z.len() {
        return Err(Error::IncompatibleGrids);
    }
    Ok(l1_translation(&w, &r, &z))
}

/// J(φ^a) = ∫φ^a ω^n − E(φ) using F_{φ^a}(s) = F_φ(s + a) − ⟨a, x̄⟩.
fn j_translated(base: &KahlerState, pot: &SymplecticPotential, e: f64, a: &Vecd) -> Result<(f64, Vecd, Matd)> {
    let q = &base.quad;
    let xbar = base.barycenter();
    let vals = par::try_map(q.nodes.len(), |i| {
        let s = base.nodes.grad[i] + *a;
        let y = pot.legendre_warm(&s, q.nodes[i], pot.ells(&q.nodes[i]), 0)?;
        let f = y.eval.x.dot(&s) - y.eval.g - a.dot(&xbar);
        let f0 = q.nodes[i].dot(&base.nodes.grad[i]) - base.nodes.g[i];
        Ok::<_, Error>((f - f0, y.eval.x, y.eval.hinv))
    })?;
    let n = base.dim();
    let mut j = 0.0;
    let mut g = Vecd::zeros(n);
    let mut h = Matd::zeros(n);
    for ((v, y, hi), w) in vals.iter().zip(&q.weights) {
        j += w * v;
        g = g + (*y - xbar).scale(*w);
        h = h + hi.scale(*w);
    }
    Ok((base.cn * j - e, g.scale(base.cn), h.scale(base.cn)))
}

/// Newton for J_T(φ) = min_a J(φ^a) (J∘τ_a is convex in a).
pub fn j_mod_torus(base: &KahlerState, st: &KahlerState) -> Result<(f64, f64, Vecd)> {
    let e = energy(base, &st.nodes)?;
    let n = base.dim();
    let mut a = Vecd::zeros(n);
    let (j0, mut g, mut h) = j_translated(base, &st.potential, e, &a)?;
    let mut j = j0;
    for _ in 0..40 {
        if g.norm_inf() <= 1e-12 * (1.0 + j.abs()) {
            break;
        }
        let step = h.solve(&g).ok_or(Error::Singular("J_T Hessian"))?;
        let mut lam = 1.0;
        loop {
            let an = a - step.scale(lam);
            let (jn, gn, hn) = j_translated(base, &st.potential, e, &an)?;
            if jn <= j + 1e-14 * (1.0 + j.abs()) {
                a = an;
                j = jn;
                g = gn;
                h = hn;
                break;
            }
            lam *= 0.5;
            if lam < 1e-10 {
                return Ok((j0, j, a));
            }
        }
    }
    Ok((j0, j, a))
}

pub fn d1_mod_torus(base: &KahlerState, phi: &KahlerState, psi: &KahlerState) -> Result<TorusDistance> {
    let (value, a_star, converged) = d1_torus_nodes(base, &phi.nodes, &psi.nodes)?;
    let d1 = d1_l1(base, &phi.nodes, &psi.nodes)?;
    let (j, j_t, j_t_a) = j_mod_torus(base, phi)?;
    Ok(TorusDistance { value: value.min(d1), a_star, d1, j, j_t, j_t_a, converged })
}

// ---------------------------------------------------------------- thresholds

/// Ray direction i: a smoothed max of random affine functions (convex), so
/// G_0 + t h is admissible for all t ≥ 0.  Depends only on (seed, i, n).
pub fn ray_direction(seed: u64, i: usize, dim: usize) -> Correction {
    let mut r = substream(seed, 1_000_000 + i as u64);
    let terms = 2 + (uniform(&mut r, 0.0, 3.0) as usize);
    random_bump(&mut r, dim, terms, 1.0)
}

/// E-normalised, torus-minimal, unit-d₁-speed version of `h` on `st`, or
/// None when h is (numerically) a translation direction.
pub fn normalize_ray(st: &KahlerState, h: &Correction) -> Result<Option<(Correction, Vecd)>> {
    let vals = corr_values(st, h);
    let vol = st.volume();
    let mean = integrate_x(st, |i, _| vals[i]) / vol;
    let r: Vec<f64> = vals.iter().map(|v| v - mean).collect();
    let raw = integrate_x(st, |i, _| r[i].abs());
    let xbar = st.barycenter();
    let z: Vec<Vecd> = st.quad.nodes.iter().map(|x| *x - xbar).collect();
    let w: Vec<f64> = st.quad.weights.iter().map(|w| st.cn * w).collect();
    let (speed, a, _) = l1_translation(&w, &r, &z);
    if !(speed > 1e-9 * raw.max(1e-300)) || !(speed > 0.0) {
        return Ok(None);
    }
    let lin = Correction::Affine { xi: a.scale(-1.0), c: a.dot(&xbar) - mean };
    Ok(Some((h.clone().plus(lin).scaled(1.0 / speed), a)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayRecord {
    pub index: usize,
    /// translation direction (or degenerate): no slope
    pub excluded: bool,
    /// M^rel entropy blew up along the ray
    pub diverged: bool,
    /// sample times t_max/4, t_max/2, t_max
    pub ts: [f64; 3],
    /// [M^rel(φ_t) − M^rel(0)] / d_{1,T}(φ_t, 0)
    pub slopes: [f64; 3],
    /// 2·slope(t) − slope(t/2)
    pub richardson: f64,
    /// max_t |d_{1,T}(φ_t,0) − d₁(φ_t,0)| / d₁(φ_t,0)
    pub calibration: f64,
    pub torus_shift: Vecd,
}

impl RayRecord {
    pub fn slope(&self) -> f64 {
        if self.excluded {
            f64::NAN
        } else if self.diverged {
            f64::INFINITY
        } else {
            self.slopes[2]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdEstimate {
    pub sigma: f64,
    pub t_max: f64,
    pub rays: Vec<RayRecord>,
}

impl ThresholdEstimate {
    fn from_rays(t_max: f64, rays: Vec<RayRecord>) -> Result<ThresholdEstimate> {
        let sigma = rays.iter().map(|r| r.slope()).filter(|s| !s.is_nan()).fold(f64::INFINITY, f64::min);
        if rays.iter().all(|r| r.excluded) {
            return Err(Error::Invalid("empty ray census".into()));
        }
        Ok(ThresholdEstimate { sigma, t_max, rays })
    }

    /// σ̂ over the first `budget` rays (nested census).
    pub fn truncated(&self, budget: usize) -> Result<ThresholdEstimate> {
        Self::from_rays(self.t_max, self.rays.iter().take(budget).cloned().collect())
    }

    pub fn max_calibration(&self) -> f64 {
        self.rays.iter().filter(|r| !r.excluded && !r.diverged).map(|r| r.calibration).fold(0.0, f64::max)
    }
}

fn ray_record(st: &KahlerState, m: &MabuchiSetup, m0: f64, index: usize, h: &Correction, t_max: f64) -> Result<RayRecord> {
    let ts = [0.25 * t_max, 0.5 * t_max, t_max];
    let Some((u, shift)) = normalize_ray(st, h)? else {
        return Ok(RayRecord { index, excluded: true, diverged: false, ts, slopes: [f64::NAN; 3], richardson: f64::NAN, calibration: 0.0, torus_shift: Vecd::zeros(st.dim()) });
    };
    let mut slopes = [0.0; 3];
    let mut cal: f64 = 0.0;
    for (k, &t) in ts.iter().enumerate() {
        let ray = match perturb_state(st, u.clone().scaled(t)) {
            Ok(s) => s,
            Err(Error::ConvexityViolation { .. }) | Err(Error::LegendreFailure { .. }) => {
                return Ok(RayRecord { index, excluded: false, diverged: true, ts, slopes: [f64::INFINITY; 3], richardson: f64::INFINITY, calibration: cal, torus_shift: shift });
            }
            Err(e) => return Err(e),
        };
        let mr = m.mrel(st, &ray.nodes)?;
        let d1 = d1_l1(st, &ray.nodes, &st.nodes)?;
        let (d1t, _, _) = d1_torus_nodes(st, &ray.nodes, &st.nodes)?;
        let d1t = d1t.min(d1);
        cal = cal.max((d1 - d1t).abs() / d1);
        if !mr.is_finite() {
            return Ok(RayRecord { index, excluded: false, diverged: true, ts, slopes: [f64::INFINITY; 3], richardson: f64::INFINITY, calibration: cal, torus_shift: shift });
        }
        slopes[k] = (mr - m0) / d1t;
    }
    Ok(RayRecord { index, excluded: false, diverged: false, ts, slopes, richardson: 2.0 * slopes[2] - slopes[1], calibration: cal, torus_shift: shift })
}

/// σ̂ = min over `ray_budget` seeded rays of the M^rel slope against
/// d_{1,T} at t = t_max.
pub fn coercivity_threshold(st: &KahlerState, m: &MabuchiSetup, ray_budget: usize, t_max: f64, seed: u64) -> Result<ThresholdEstimate> {
    let dirs: Vec<Correction> = (0..ray_budget).map(|i| ray_direction(seed, i, st.dim())).collect();
    threshold_for_directions(st, m, &dirs, t_max)
}

pub fn threshold_for_directions(st: &KahlerState, m: &MabuchiSetup, dirs: &[Correction], t_max: f64) -> Result<ThresholdEstimate> {
    if dirs.is_empty() {
        return Err(Error::Invalid("ray budget must be positive".into()));
    }
    let m0 = m.mrel(st, &st.nodes)?;
    let rays = dirs.iter().enumerate().map(|(i, h)| ray_record(st, m, m0, i, h, t_max)).collect::<Result<Vec<_>>>()?;
    ThresholdEstimate::from_rays(t_max, rays)
}

// ------------------------------------------------------------------- families

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyRow {
    pub j: usize,
    pub eps: f64,
    pub volume: f64,
    /// ℓ^ext coordinates (constant, then linear)
    pub ell: Vec<f64>,
    pub energy: f64,
    pub entropy: f64,
    pub mrel: f64,
    /// d₁ between the lifts of ψ and ψ₂
    pub d1: f64,
    pub window_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyDiffs {
    pub ell: f64,
    pub energy: f64,
    pub mrel: f64,
    pub d1: f64,
    pub volume: f64,
}

impl FamilyDiffs {
    fn between(a: &FamilyRow, b: &FamilyRow) -> FamilyDiffs {
        let ell = a.ell.iter().zip(&b.ell).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        FamilyDiffs {
            ell,
            energy: (a.energy - b.energy).abs(),
            mrel: (a.mrel - b.mrel).abs(),
            d1: (a.d1 - b.d1).abs(),
            volume: (a.volume - b.volume).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyTable {
    /// j = 0, ε = 0: the base polytope
    pub base: FamilyRow,
    pub rows: Vec<FamilyRow>,
    pub last_step: FamilyDiffs,
    pub terminal_gap: FamilyDiffs,
    /// gap of the first-order extrapolation 2·row_J − row_{J−1} (halving ε)
    pub extrapolated_gap: FamilyDiffs,
    /// E_j(φ_j) − E_X(ψ) per row (weak upper semicontinuity)
    pub weak_usc: Vec<f64>,
}

fn family_row(st: &KahlerState, j: usize, eps: f64, wd: f64, h: &Correction, h2: &Correction, v: &Weight, w: &Weight) -> Result<FamilyRow> {
    let m = MabuchiSetup::new(st, v.clone(), w.clone())?;
    let a = perturb_state(st, h.clone())?;
    let b = perturb_state(st, h2.clone())?;
    Ok(FamilyRow {
        j,
        eps,
        volume: st.volume(),
        ell: m.lext.coords(),
        energy: energy(st, &a.nodes)?,
        entropy: entropy_v(st, &a.nodes, v)?,
        mrel: m.mrel(st, &a.nodes)?,
        d1: d1_l1(st, &a.nodes, &b.nodes)?,
        window_distance: wd,
    })
}

/// Per-member quantities for the lifts of ψ (and ψ₂ for d₁), with Cauchy
/// and terminal-gap diagnostics against the base polytope.
pub fn family_convergence_experiment(family: &Family, psi: &Correction, psi2: &Correction, v: &Weight, w: &Weight, mode: LiftMode) -> Result<FamilyTable> {
    let base = family_row(&family.base, 0, 0.0, 0.0, psi, psi2, v, w)?;
    let rows = par::try_map(family.members.len(), |k| {
        let mem = &family.members[k];
        family_row(&mem.state, mem.j, mem.eps, mem.window_distance, &lift_correction(psi, mem.eps, mode), &lift_correction(psi2, mem.eps, mode), v, w)
    })?;
    let n = rows.len();
    if n == 0 {
        return Err(Error::Invalid("empty family".into()));
    }
    let last_step = if n >= 2 { FamilyDiffs::between(&rows[n - 1], &rows[n - 2]) } else { FamilyDiffs::between(&rows[0], &rows[0]) };
    let terminal_gap = FamilyDiffs::between(&rows[n - 1], &base);
    let extrapolated_gap = if n >= 2 {
        let (a, b) = (&rows[n - 1], &rows[n - 2]);
        let lin = |x: f64, y: f64| 2.0 * x - y;
        let ex = FamilyRow {
            j: a.j + 1,
            eps: 0.0,
            volume: lin(a.volume, b.volume),
            ell: a.ell.iter().zip(&b.ell).map(|(x, y)| lin(*x, *y)).collect(),
            energy: lin(a.energy, b.energy),
            entropy: lin(a.entropy, b.entropy),
            mrel: lin(a.mrel, b.mrel),
            d1: lin(a.d1, b.d1),
            window_distance: 0.0,
        };
        FamilyDiffs::between(&ex, &base)
    } else {
        terminal_gap.clone()
    };
    let weak_usc = rows.iter().map(|r| r.energy - base.energy).collect();
    Ok(FamilyTable { base, rows, last_step, terminal_gap, extrapolated_gap, weak_usc })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemicontinuityTable {
    pub sigma_x: f64,
    /// (j, ε_j, σ̂_j)
    pub members: Vec<(usize, f64, f64)>,
    pub delta: f64,
    pub j_min: usize,
    /// min_{j ≥ j_min} σ̂_j
    pub min_tail: f64,
    pub holds: bool,
}

/// σ̂ on the base and on every member with the same seeded ray directions;
/// checks min_{j≥j_min} σ̂_j ≥ σ̂_X − δ with δ = 0.1·max(1, |σ̂_X|).
pub fn threshold_semicontinuity_experiment(family: &Family, v: &Weight, w: &Weight, ray_budget: usize, t_max: f64, seed: u64, j_min: usize) -> Result<SemicontinuityTable> {
    let n = family.base.dim();
    let dirs: Vec<Correction> = (0..ray_budget).map(|i| ray_direction(seed, i, n)).collect();
    let mx = MabuchiSetup::new(&family.base, v.clone(), w.clone())?;
    let sigma_x = threshold_for_directions(&family.base, &mx, &dirs, t_max)?.sigma;
    let mut members = Vec::with_capacity(family.members.len());
    for mem in &family.members {
        let m = MabuchiSetup::new(&mem.state, v.clone(), w.clone())?;
        let s = threshold_for_directions(&mem.state, &m, &dirs, t_max)?.sigma;
        members.push((mem.j, mem.eps, s));
    }
    let delta = 0.1 * sigma_x.abs().max(1.0);
    let min_tail = members.iter().filter(|m| m.0 >= j_min).map(|m| m.2).fold(f64::INFINITY, f64::min);
    Ok(SemicontinuityTable { sigma_x, members, delta, j_min, min_tail, holds: min_tail >= sigma_x - delta })
}

// ------------------------------------------------------------ entropy growth

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyGrowth {
    pub delta: f64,
    pub c: f64,
    pub fit_samples: usize,
    pub holdout_samples: usize,
    pub holdout_violations: usize,
    /// largest holdout excess δ ent − C(d+1) − M^rel (≤ 0 when it holds)
    pub holdout_worst: f64,
}

struct GrowthPoint {
    mrel: f64,
    ent: f64,
    d1: f64,
}

fn growth_points(family: &Family, v: &Weight, w: &Weight, count: usize, seed: u64, offset: u64) -> Result<Vec<GrowthPoint>> {
    let n = family.base.dim();
    let hs: Vec<Correction> = (0..count)
        .map(|i| {
            let mut r = substream(seed, offset + i as u64);
            let amp = uniform(&mut r, 0.1, 2.0);
            let mut xi = Vecd::zeros(n);
            for k in 0..n {
                xi.c[k] = 0.3 * normal(&mut r);
            }
            let c = uniform(&mut r, -1.0, 1.0);
            random_bump(&mut r, n, 3, amp).plus(Correction::Affine { xi, c })
        })
        .collect();
    let mut states = Vec::with_capacity(family.members.len() + 1);
    states.push(&family.base);
    states.extend(family.members.iter().map(|m| &m.state));
    let mut out = Vec::new();
    for st in states {
        let m = MabuchiSetup::new(st, v.clone(), w.clone())?;
        let pts = par::try_map(hs.len(), |i| {
            let s = perturb_state(st, hs[i].clone())?;
            Ok::<_, Error>(GrowthPoint { mrel: m.mrel(st, &s.nodes)?, ent: entropy_v(st, &s.nodes, &Weight::one(n))?, d1: d1_l1(st, &s.nodes, &st.nodes)? })
        })?;
        out.extend(pts);
    }
    Ok(out)
}

fn growth_c(pts: &[GrowthPoint], delta: f64) -> f64 {
    pts.iter().map(|p| (delta * p.ent - p.mrel) / (p.d1 + 1.0)).fold(f64::NEG_INFINITY, f64::max).max(0.0)
}

/// Fit M^rel_j(φ) ≥ δ ent_j(φ) − C(d_{1,j}(φ,0) + 1) uniformly over the
/// members and the base: δ̂ is the largest δ ∈ [0, inf_P v], Ĉ the smallest
/// C for it; then count violations on a held-out sample.
pub fn entropy_growth_probe(family: &Family, v: &Weight, w: &Weight, samples: usize, seed: u64) -> Result<EntropyGrowth> {
    let p = family.base.polytope();
    let inf_v = family
        .base
        .quad
        .nodes
        .iter()
        .chain(p.vertices.iter().map(|x| &x.x))
        .map(|x| v.eval(x))
        .fold(f64::INFINITY, f64::min);
    let fit = growth_points(family, v, w, samples, seed, 0)?;
    let hold = growth_points(family, v, w, samples, seed, 500_000)?;
    let delta = inf_v.max(0.0);
    let c = growth_c(&fit, delta);
    let mut worst = f64::NEG_INFINITY;
    let mut viol = 0;
    for q in &hold {
        let ex = delta * q.ent - c * (q.d1 + 1.0) - q.mrel;
        worst = worst.max(ex);
        if ex > 1e-9 * (1.0 + q.mrel.abs()) {
            viol += 1;
        }
    }
    Ok(EntropyGrowth { delta, c, fit_samples: fit.len(), holdout_samples: hold.len(), holdout_violations: viol, holdout_worst: worst })
}

// ------------------------------------------------------------------ Fano type

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    FanoType,
    NotFanoType,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FanoTypeCertificate {
    pub corner: usize,
    pub eps: f64,
    /// a(E) for the exceptional ray u_E
    pub discrepancy: Option<f64>,
    /// −K_Y · E
    pub anticanonical_degree: Option<f64>,
    pub relatively_ample: Option<bool>,
    pub verdict: Verdict,
    pub note: String,
}

fn det2(a: &Vecd, b: &Vecd) -> f64 {
    a.c[0] * b.c[1] - a.c[1] * b.c[0]
}

/// Certificate for chopping the corner `corner` of a 2-d polytope at depth
/// ε: exceptional ray u_E = u_1 + u_2, discrepancy from u_E = αu_1 + βu_2
/// (a(E) = α + β − 1) and −K_Y·E from the toric intersection numbers.
pub fn fano_type_certificate(base: &Polytope, corner: usize, eps: f64) -> Result<FanoTypeCertificate> {
    if base.dim != 2 {
        return Err(Error::Invalid("Fano-type certificate is for 2-d corner chops".into()));
    }
    let vert = base.vertices.get(corner).ok_or(Error::UnknownVertex(corner))?;
    let mut cert = FanoTypeCertificate {
        corner,
        eps,
        discrepancy: None,
        anticanonical_degree: None,
        relatively_ample: None,
        verdict: Verdict::Unknown,
        note: String::new(),
    };
    if eps == 0.0 {
        cert.verdict = Verdict::FanoType;
        cert.note = "no chop: identity map, vacuous".into();
        return Ok(cert);
    }
    if !base.is_delzant_vertex(corner) || vert.facets.len() != 2 {
        cert.note = "corner is not Delzant: out of scope".into();
        return Ok(cert);
    }
    let bound = base.chop_bound(corner)?;
    if !(eps > 0.0 && eps < bound) {
        return Err(Error::InfeasibleChop { eps, bound });
    }
    let u1 = base.facets[vert.facets[0]].u;
    let u2 = base.facets[vert.facets[1]].u;
    let ue = u1 + u2;
    let d = det2(&u1, &u2);
    // u_E = α u_1 + β u_2
    let alpha = det2(&ue, &u2) / d;
    let beta = det2(&u1, &ue) / d;
    let a_e = alpha + beta - 1.0;
    // smooth star u_1, u_E, u_2: D_i·E = 1/|det(u_i, u_E)|, u_1 + u_2 = −E²·u_E
    let d1e = 1.0 / det2(&u1, &ue).abs();
    let d2e = 1.0 / det2(&ue, &u2).abs();
    let e2 = -(det2(&u1, &u2).abs()) / (det2(&u1, &ue).abs() * det2(&ue, &u2).abs());
    let deg = d1e + d2e + e2;
    cert.discrepancy = Some(a_e);
    cert.anticanonical_degree = Some(deg);
    cert.relatively_ample = Some(deg > 0.0);
    cert.verdict = if a_e > -1.0 && deg > 0.0 { Verdict::FanoType } else { Verdict::NotFanoType };
    cert.note = alloc::format!("u_E = {alpha}·u_1 + {beta}·u_2, E² = {e2}");
    Ok(cert)
}
