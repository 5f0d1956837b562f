//! Legendre duality between symplectic potentials G on P and Kähler
//! potentials F on log-coordinates, truncated s-grids, Kähler states and
//! blowup families.
//!
//! Conventions (fixed by the P¹ Fubini–Study calibration): s = log|z|,
//! dd^c = 2i∂∂̄, moment map m = ∇_s F, ω^n = c_n det∇²F ds dθ with
//! c_n = n!(2π)^n, and ∇²F(s) = (∇²G(m(s)))⁻¹.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Matd, Vecd};
use crate::nodal::NodalPotential;
use crate::par;
use crate::potential::{Correction, PointEval, SymplecticPotential};
use crate::quadrature::{PolytopeQuadrature, QuadOptions};
use crate::torus::Polytope;

/// Volume density constant: ω^n/ (ds dθ) = c_n det∇²F.
pub fn calibration_cn(n: usize) -> f64 {
    let mut f = 1.0;
    for k in 1..=n {
        f *= k as f64 * 2.0 * core::f64::consts::PI;
    }
    f
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegendreOptions {
    /// Stop when |s − ∇G(x)|_∞ ≤ tol·(1 + |s|_∞).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        LegendreOptions { tol: 1e-14, max_iter: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct LegendrePoint {
    pub eval: PointEval,
    pub iterations: usize,
    pub residual: f64,
}

impl SymplecticPotential {
    /// Starting point for ∇G(x) = s from the asymptotics of G in the cone of
    /// the vertex maximizing ⟨v, s⟩, or the vertex centroid if that is worse.
    pub fn legendre_seed(&self, s: &Vecd) -> (Vecd, Vec<f64>) {
        let p = &*self.polytope;
        let n = p.dim;
        let c0 = p.vertex_centroid();
        let l0 = self.ells(&c0);
        let phi = |x: &Vecd, l: &[f64]| self.value_with(x, l) - s.dot(x);
        let best = (c0, l0.clone(), phi(&c0, &l0));
        let vid = (0..p.vertices.len())
            .max_by(|&a, &b| p.vertices[a].x.dot(s).partial_cmp(&p.vertices[b].x.dot(s)).unwrap())
            .unwrap();
        let vert = &p.vertices[vid];
        if vert.facets.len() != n {
            return (best.0, best.1);
        }
        let mut u = Matd::zeros(n);
        for (r, &f) in vert.facets.iter().enumerate() {
            for c in 0..n {
                u.c[r][c] = p.facets[f].u.c[c];
            }
        }
        let vx = vert.x;
        let mut c = self.h.jet(&vx, 1).g;
        for (j, f) in p.facets.iter().enumerate() {
            if !vert.facets.contains(&j) {
                let l = f.ell(&vx);
                if l > 0.0 {
                    c = c + f.u.scale(0.5 * (libm::log(l) + 1.0));
                }
            }
        }
        let a = match u.transpose().solve(&(*s - c)) {
            Some(a) => a,
            None => return (best.0, best.1),
        };
        let mut lv = Vecd::zeros(n);
        for i in 0..n {
            lv.c[i] = libm::exp((2.0 * a.c[i] - 1.0).min(50.0));
        }
        let uinv = match u.inverse() {
            Some(m) => m,
            None => return (best.0, best.1),
        };
        let mut tau = 1.0;
        for _ in 0..80 {
            let x = vx + uinv.mul_vec(&lv.scale(tau));
            let mut l = self.ells(&x);
            for (r, &f) in vert.facets.iter().enumerate() {
                l[f] = tau * lv.c[r];
            }
            if l.iter().all(|&v| v > 0.0) {
                let ph = phi(&x, &l);
                return if ph <= best.2 { (x, l) } else { (best.0, best.1) };
            }
            tau *= 0.5;
        }
        (best.0, best.1)
    }

    /// Solve ∇G(x) = s; the returned evaluation carries h-jets of `order`.
    pub fn legendre(&self, s: &Vecd, order: u8) -> Result<LegendrePoint> {
        let (x0, l0) = self.legendre_seed(s);
        self.legendre_from(s, x0, l0, order, &LegendreOptions::default())
    }

    /// Damped Newton from a warm start, falling back to the cone seed.
    pub fn legendre_warm(&self, s: &Vecd, x0: Vecd, l0: Vec<f64>, order: u8) -> Result<LegendrePoint> {
        match self.legendre_from(s, x0, l0, order, &LegendreOptions::default()) {
            Ok(r) => Ok(r),
            Err(_) => self.legendre(s, order),
        }
    }

    /// Newton on Φ(x) = G(x) − ⟨s, x⟩ with step H(s − ∇G), fraction-to-boundary
    /// damping and Armijo backtracking.  Slacks are updated incrementally so
    /// that tiny ℓ_i keep full relative precision.
    pub fn legendre_from(&self, s: &Vecd, x0: Vecd, l0: Vec<f64>, order: u8, opts: &LegendreOptions) -> Result<LegendrePoint> {
        let p = &*self.polytope;
        let mut x = x0;
        let mut l = l0;
        if l.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::LegendreFailure { residual: f64::INFINITY });
        }
        let scale = 1.0 + s.norm_inf();
        let mut last = f64::INFINITY;
        for it in 0..opts.max_iter {
            let e = self.eval_with(&x, &l, 2)?;
            let r = *s - e.grad;
            let res = r.norm_inf();
            if !res.is_finite() {
                return Err(Error::LegendreFailure { residual: res });
            }
            let dx = e.hinv.mul_vec(&r);
            let dec = r.dot(&dx);
            // stop on tolerance, or once Newton stagnates at rounding level
            if res <= opts.tol * scale || (res <= 1e-11 * scale && res >= 0.5 * last) {
                let eval = if order > 2 { self.eval_with(&x, &l, order)? } else { e };
                return Ok(LegendrePoint { eval, iterations: it, residual: res });
            }
            last = res;
            if !(dec >= 0.0) {
                return Err(Error::ConvexityViolation { min_eigenvalue: f64::NAN });
            }
            let dl: Vec<f64> = p.facets.iter().map(|f| f.u.dot(&dx)).collect();
            let mut amax: f64 = 1.0;
            for (li, di) in l.iter().zip(&dl) {
                if *di < 0.0 {
                    amax = amax.min(0.95 * li / -di);
                }
            }
            let mut a = amax;
            if dec > 1e-6 {
                let phi0 = e.g - s.dot(&x);
                for _ in 0..60 {
                    let xn = x + dx.scale(a);
                    let ln: Vec<f64> = l.iter().zip(&dl).map(|(li, di)| li + a * di).collect();
                    let phin = self.value_with(&xn, &ln) - s.dot(&xn);
                    if phin <= phi0 - 1e-4 * a * dec {
                        break;
                    }
                    a *= 0.5;
                }
            }
            x = x + dx.scale(a);
            for (li, di) in l.iter_mut().zip(&dl) {
                *li += a * di;
            }
        }
        let e = self.eval_with(&x, &l, 2)?;
        Err(Error::LegendreFailure { residual: (*s - e.grad).norm_inf() })
    }

    /// F(s) = sup_x ⟨x, s⟩ − G(x).
    pub fn kahler_value(&self, s: &Vecd) -> Result<f64> {
        let q = self.legendre(s, 2)?;
        Ok(q.eval.x.dot(s) - q.eval.g)
    }
}

/// Uniform box [−L, L]^k with trapezoid weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SGridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl Default for SGridSpec {
    fn default() -> Self {
        SGridSpec { half_width: 6.0, points: 49 }
    }
}

impl SGridSpec {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Finer grid used for the Duistermaat–Heckman pushforward check.
    pub fn dh() -> SGridSpec {
        SGridSpec { half_width: 7.0, points: 193 }
    }

    pub fn scaled(&self, f: f64) -> SGridSpec {
        let pts = libm::round((self.points - 1) as f64 * f) as usize + 1;
        SGridSpec { half_width: self.half_width, points: pts.max(3) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SGrid {
    pub dim: usize,
    pub spec: SGridSpec,
    pub nodes: Vec<Vecd>,
    pub weights: Vec<f64>,
}

impl SGrid {
    pub fn new(dim: usize, spec: SGridSpec) -> Self {
        let m = spec.points;
        let h = spec.spacing();
        let total = m.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for idx in 0..total {
            let mut v = Vecd::zeros(dim);
            let mut w = 1.0;
            let mut r = idx;
            for a in 0..dim {
                let i = r % m;
                r /= m;
                v.c[a] = -spec.half_width + h * i as f64;
                w *= if i == 0 || i == m - 1 { 0.5 * h } else { h };
            }
            nodes.push(v);
            weights.push(w);
        }
        SGrid { dim, spec, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, vals: &[f64]) -> f64 {
        vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Nodes with |s|_∞ ≤ r.
    pub fn window(&self, r: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.nodes[i].norm_inf() <= r + 1e-12).collect()
    }
}

/// Data of F at one s-node: m = ∇F(s), slacks at m, F(s), ∇²F(s), log det ∇²G(m).
#[derive(Clone, Debug)]
pub struct SNode {
    pub x: Vecd,
    pub ells: Vec<f64>,
    pub f: f64,
    pub hess: Matd,
    pub ld_g: f64,
}

#[derive(Clone, Debug)]
pub struct SData {
    pub grid: Arc<SGrid>,
    pub pts: Vec<SNode>,
    /// max |∇G(∇F(s)) − s|
    pub roundtrip: f64,
    /// max |det∇²F(s)·det∇²G(∇F(s)) − 1|
    pub det_defect: f64,
    /// c_n Vol(P) − ∫_box c_n det∇²F: mass outside the truncation box.
    pub tail_mass: f64,
}

impl SData {
    pub fn build(pot: &SymplecticPotential, grid: Arc<SGrid>) -> Result<SData> {
        let pts: Vec<(SNode, f64, f64)> = par::try_map(grid.len(), |i| {
            let s = grid.nodes[i];
            let q = pot.legendre(&s, 2)?;
            let e = q.eval;
            let ld = e.logdet();
            let det_f = e.hinv.det();
            let defect = (det_f * libm::exp(ld) - 1.0).abs();
            let node = SNode { x: e.x, f: e.x.dot(&s) - e.g, hess: e.hinv, ld_g: ld, ells: e.ells };
            Ok((node, q.residual, defect))
        })?;
        let mut roundtrip: f64 = 0.0;
        let mut det_defect: f64 = 0.0;
        let mut out = Vec::with_capacity(pts.len());
        for (nd, r, d) in pts {
            roundtrip = roundtrip.max(r);
            det_defect = det_defect.max(d);
            out.push(nd);
        }
        let n = grid.dim;
        let cn = calibration_cn(n);
        let dens: Vec<f64> = out.iter().map(|p| libm::exp(-p.ld_g)).collect();
        let tail_mass = cn * pot.polytope.volume() - cn * grid.integrate(&dens);
        Ok(SData { grid, pts: out, roundtrip, det_defect, tail_mass })
    }

    pub fn moments(&self) -> impl Iterator<Item = &Vecd> {
        self.pts.iter().map(|p| &p.x)
    }
}

/// One T-invariant Kähler structure: its symplectic potential, nodal x-grid
/// data and (optionally) the dual s-grid realization.
#[derive(Clone, Debug)]
pub struct KahlerState {
    pub potential: SymplecticPotential,
    pub quad: Arc<PolytopeQuadrature>,
    pub nodes: NodalPotential,
    pub sdata: Option<SData>,
    pub cn: f64,
}

impl KahlerState {
    /// x-grid only; convexity checked at every quadrature node.
    pub fn x_only(potential: SymplecticPotential, quad: Arc<PolytopeQuadrature>) -> Result<KahlerState> {
        let n = potential.dim();
        potential.check_convex(quad.nodes.iter(), 0.0)?;
        let nodes = NodalPotential::from_potential(&potential, &quad)?;
        Ok(KahlerState { potential, quad, nodes, sdata: None, cn: calibration_cn(n) })
    }

    pub fn with_sgrid(potential: SymplecticPotential, quad: Arc<PolytopeQuadrature>, grid: Arc<SGrid>) -> Result<KahlerState> {
        let mut st = KahlerState::x_only(potential, quad)?;
        st.attach_sgrid(grid)?;
        Ok(st)
    }

    pub fn attach_sgrid(&mut self, grid: Arc<SGrid>) -> Result<()> {
        if grid.dim != self.dim() {
            return Err(Error::IncompatibleGrids);
        }
        let sd = SData::build(&self.potential, grid)?;
        if let Some(bad) = sd.pts.iter().find(|p| !self.potential.polytope.contains_interior(&p.x)) {
            let _ = bad;
            return Err(Error::Invalid("moment image left int(P)".into()));
        }
        self.sdata = Some(sd);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn polytope(&self) -> &Polytope {
        &self.potential.polytope
    }

    /// c_n Vol(P) — the class volume ∫ω^n.
    pub fn volume(&self) -> f64 {
        self.cn * self.polytope().volume()
    }

    pub fn barycenter(&self) -> Vecd {
        self.polytope().barycenter()
    }

    pub fn sdata(&self) -> Result<&SData> {
        self.sdata.as_ref().ok_or(Error::IncompatibleGrids)
    }

    /// Same conformation (polytope, quadrature) with another potential.
    pub fn sibling(&self, potential: SymplecticPotential) -> Result<KahlerState> {
        if !potential.polytope.same_as(self.polytope()) {
            return Err(Error::MismatchedPolytopes);
        }
        let mut st = KahlerState::x_only(potential, self.quad.clone())?;
        if let Some(sd) = &self.sdata {
            st.attach_sgrid(sd.grid.clone())?;
        }
        Ok(st)
    }
}

/// Canonical (Guillemin) state h ≡ 0.
pub fn guillemin_state(p: Polytope, grid: Option<SGridSpec>, qopts: &QuadOptions) -> Result<KahlerState> {
    if !p.is_delzant() {
        return Err(Error::NonDelzantVertex(
            (0..p.vertices.len()).find(|&v| !p.is_delzant_vertex(v)).unwrap_or(0),
        ));
    }
    let quad = Arc::new(PolytopeQuadrature::new(&p, qopts));
    let p = Arc::new(p);
    let pot = SymplecticPotential::guillemin(p.clone());
    match grid {
        Some(g) => KahlerState::with_sgrid(pot, quad, Arc::new(SGrid::new(p.dim, g))),
        None => KahlerState::x_only(pot, quad),
    }
}

/// G_base + h; fails with a convexity violation if the sum is not strictly
/// convex at the quadrature (and s-grid) nodes.
pub fn perturb_state(base: &KahlerState, h: Correction) -> Result<KahlerState> {
    if h.is_zero() {
        return Ok(base.clone());
    }
    base.sibling(base.potential.add_correction(h))
}

/// Values of φ = F_state − F_ref on the shared s-grid.
pub fn kahler_potential_of(state: &KahlerState, reference: &KahlerState) -> Result<Vec<f64>> {
    let a = state.sdata()?;
    let b = reference.sdata()?;
    if a.grid.spec != b.grid.spec || a.grid.dim != b.grid.dim {
        return Err(Error::IncompatibleGrids);
    }
    Ok(a.pts.iter().zip(&b.pts).map(|(p, q)| p.f - q.f).collect())
}

/// Torus action s ↦ s + a: G ↦ G − ⟨a, x − x̄⟩, so that the cocycle has E(τ_a) = 0.
pub fn torus_translate_potential(pot: &SymplecticPotential, a: &Vecd) -> SymplecticPotential {
    let xbar = pot.polytope.barycenter();
    pot.add_correction(translation_correction(a, &xbar))
}

pub fn translation_correction(a: &Vecd, xbar: &Vecd) -> Correction {
    if a.norm_inf() == 0.0 {
        Correction::Zero
    } else {
        Correction::Affine { xi: a.scale(-1.0), c: a.dot(xbar) }
    }
}

pub fn torus_translate(state: &KahlerState, a: &Vecd) -> Result<KahlerState> {
    if a.norm_inf() == 0.0 {
        return Ok(state.clone());
    }
    state.sibling(torus_translate_potential(&state.potential, a))
}

/// Reference potential used for each chopped polytope.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyReference {
    /// G_can(P_j): the literal chopped Guillemin potential.
    Guillemin,
    /// G_can(P_j) − ½ ℓ⁰ log ℓ⁰ per chopped vertex, with ℓ⁰ the sum of the
    /// facet functions through that vertex; tends to G_can(P_X) as ε → 0.
    Matched,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub base: Polytope,
    /// Vertex ids of P_X to chop.
    pub corners: Vec<usize>,
    pub eps: Vec<f64>,
    pub reference: FamilyReference,
}

impl FamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::Invalid("empty ε schedule".into()));
        }
        for w in self.eps.windows(2) {
            if !(w[1] < w[0]) && !(w[1] == w[0]) {
                return Err(Error::Invalid("ε schedule must be non-increasing".into()));
            }
        }
        for &v in &self.corners {
            if v >= self.base.vertices.len() {
                return Err(Error::UnknownVertex(v));
            }
        }
        Ok(())
    }

    /// Chopped polytope and matched reference correction at ε.
    pub fn member_polytope(&self, eps: f64) -> Result<(Polytope, Correction)> {
        if eps == 0.0 {
            return Ok((self.base.clone(), Correction::Zero));
        }
        let corners: Vec<(Vecd, f64)> = self.corners.iter().map(|&v| (self.base.vertices[v].x, eps)).collect();
        for &v in &self.corners {
            let b = self.base.chop_bound(v)?;
            if !(eps < b) || eps < 0.0 {
                return Err(Error::InfeasibleChop { eps, bound: b });
            }
        }
        let pj = self.base.chop_corners(&corners)?;
        let mut corr = Correction::Zero;
        if self.reference == FamilyReference::Matched {
            for &v in &self.corners {
                let vert = &self.base.vertices[v];
                let mut u = Vecd::zeros(self.base.dim);
                let mut lam = 0.0;
                for &f in &vert.facets {
                    u = u + self.base.facets[f].u;
                    lam += self.base.facets[f].lambda;
                }
                corr = corr.plus(Correction::EllLogEll { u, lambda: lam, coef: -0.5 });
            }
        }
        Ok((pj, corr))
    }
}

#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub j: usize,
    pub eps: f64,
    pub state: KahlerState,
    /// G_{0,j} − G_can(P_j)
    pub reference_correction: Correction,
    pub volume: f64,
    /// sup over the s-window of |m_j − m_X|
    pub window_distance: f64,
}

#[derive(Clone, Debug)]
pub struct Family {
    pub spec: FamilySpec,
    pub base: KahlerState,
    pub members: Vec<FamilyMember>,
}

/// Window nodes used for the moment-map convergence diagnostic.
pub fn window_nodes(dim: usize, r: f64, per_dim: usize) -> Vec<Vecd> {
    let g = SGrid::new(dim, SGridSpec { half_width: r, points: per_dim });
    g.nodes
}

pub fn make_family(spec: &FamilySpec, qopts: &QuadOptions, window: f64) -> Result<Family> {
    spec.validate()?;
    let base = guillemin_state(spec.base.clone(), None, qopts)?;
    let wn = window_nodes(spec.base.dim, window, 9);
    let mx: Vec<Vecd> = par::try_map(wn.len(), |i| Ok::<_, Error>(base.potential.legendre(&wn[i], 2)?.eval.x))?;
    let mut members = Vec::with_capacity(spec.eps.len());
    for (j, &eps) in spec.eps.iter().enumerate() {
        let state = if eps == 0.0 {
            base.clone()
        } else {
            let (pj, corr) = spec.member_polytope(eps)?;
            let quad = Arc::new(PolytopeQuadrature::new(&pj, qopts));
            let pot = SymplecticPotential::with_correction(Arc::new(pj), corr);
            KahlerState::x_only(pot, quad)?
        };
        let corr = state.potential.h.clone();
        let dist = par::try_map(wn.len(), |i| {
            let x = state.potential.legendre(&wn[i], 2)?.eval.x;
            Ok::<_, Error>((x - mx[i]).norm_inf())
        })?
        .into_iter()
        .fold(0.0, f64::max);
        members.push(FamilyMember { j: j + 1, eps, volume: state.volume(), state, reference_correction: corr, window_distance: dist });
    }
    Ok(Family { spec: spec.clone(), base, members })
}

/// How a base potential ψ (G_ψ = G_X + h) is carried to P_j.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftMode {
    /// G_{0,j} + (1 − ε_j) h|_{P_j}: the (1−ε_j)π*ψ sequence.
    Scaled,
    /// G_{0,j} + h|_{P_j}.
    Restricted,
}

pub fn lift_correction(h: &Correction, eps: f64, mode: LiftMode) -> Correction {
    match mode {
        LiftMode::Scaled => h.clone().scaled(1.0 - eps),
        LiftMode::Restricted => h.clone(),
    }
}

pub fn lift_potential(member: &FamilyMember, h: &Correction, mode: LiftMode) -> Result<KahlerState> {
    let c = lift_correction(h, member.eps, mode);
    perturb_state(&member.state, c)
}

/// Helper: the correction for a constant potential φ ≡ c (G_φ = G − c).
pub fn constant_potential(c: f64) -> Correction {
    if c == 0.0 {
        Correction::Zero
    } else {
        Correction::Constant(-c)
    }
}
