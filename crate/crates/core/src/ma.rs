//! Weighted and twisted Monge–Ampère operators, weighted traces and
//! Laplacians, Ricci data and weighted scalar curvature.
//!
//! Functions on X are torus invariant, i.e. functions of s; they are kept in
//! closed form ([`SFunction`]) so that their s-derivatives are exact.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::legendre::{calibration_cn, KahlerState, SData};
use crate::linalg::{DenseSym, Matd, Vecd};
use crate::par;
use crate::potential::{Correction, PointDerivs, PointEval, SymplecticPotential};
use crate::torus::{Polytope, Weight};

/// A T-invariant function of s given in closed form.
#[derive(Clone, Debug, PartialEq)]
pub enum SFunction {
    /// f̃(∇F(s)) for the Kähler potential F dual to `pot`.
    Pullback { pot: SymplecticPotential, f: Correction },
    /// F(s) itself.
    KahlerPotential(SymplecticPotential),
    /// ρ(s) = ½ log(c_n det ∇²F(s)), so that Ric(ω^n) = −dd^c ρ.
    RicciPotential(SymplecticPotential),
}

/// Value, s-gradient and s-Hessian.
#[derive(Clone, Copy, Debug)]
pub struct SJet {
    pub v: f64,
    pub g: Vecd,
    pub h: Matd,
}

impl SFunction {
    pub fn potential(&self) -> &SymplecticPotential {
        match self {
            SFunction::Pullback { pot, .. } | SFunction::KahlerPotential(pot) | SFunction::RicciPotential(pot) => pot,
        }
    }

    fn order(&self) -> u8 {
        match self {
            SFunction::Pullback { .. } => 3,
            SFunction::KahlerPotential(_) => 2,
            SFunction::RicciPotential(_) => 4,
        }
    }

    /// Jet at s = ∇G(e.x), from an evaluation of the own potential carrying
    /// h-jets of order ≥ `self.order()`.
    pub fn jet_at_moment(&self, e: &PointEval, s: &Vecd) -> SJet {
        let pot = self.potential();
        let p = &*pot.polytope;
        let n = p.dim;
        let h = &e.hinv;
        match self {
            SFunction::KahlerPotential(_) => SJet { v: e.x.dot(s) - e.g, g: e.x, h: *h },
            SFunction::Pullback { f, .. } => {
                let d = e.derivs(p, false);
                let fj = f.jet(&e.x, 2);
                let a = pullback_jacobian(h, &d, &fj.g, &fj.h);
                let hs = a.mul_mat(h);
                SJet { v: fj.v, g: h.mul_vec(&fj.g), h: symmetrize(&hs) }
            }
            SFunction::RicciPotential(_) => {
                let cn = calibration_cn(n);
                let d = e.derivs(p, true);
                let d2 = d.d2h.as_ref().unwrap();
                // ∂_k div H_a = Σ_i ∂_k∂_i H_ia
                let mut b = Matd::zeros(n);
                for a in 0..n {
                    for k in 0..n {
                        let mut acc = 0.0;
                        for i in 0..n {
                            acc += d2[k][i].c[i][a];
                        }
                        b.c[a][k] = acc;
                    }
                }
                let hs = b.mul_mat(h).scale(0.5);
                SJet { v: 0.5 * libm::log(cn) - 0.5 * e.logdet(), g: d.div.scale(0.5), h: symmetrize(&hs) }
            }
        }
    }

    /// Jet at an arbitrary s (Legendre solve, warm-started at `hint`).
    pub fn jet(&self, s: &Vecd, hint: Option<(&Vecd, &[f64])>) -> Result<SJet> {
        let pot = self.potential();
        let q = match hint {
            Some((x, l)) => pot.legendre_warm(s, *x, l.to_vec(), self.order())?,
            None => pot.legendre(s, self.order())?,
        };
        Ok(self.jet_at_moment(&q.eval, s))
    }

    /// ⟨∇_s g, u_F⟩ in the limit s → facet F: the boundary flux entering the
    /// twisted energy.
    pub fn facet_flux(&self, facet: usize) -> f64 {
        match self {
            SFunction::Pullback { .. } => 0.0,
            SFunction::KahlerPotential(pot) => -pot.polytope.facets[facet].lambda,
            SFunction::RicciPotential(_) => 1.0,
        }
    }
}

fn symmetrize(m: &Matd) -> Matd {
    (*m + m.transpose()).scale(0.5)
}

/// A_{ak} = ∂_k (H∇f̃)_a.
pub fn pullback_jacobian(h: &Matd, d: &PointDerivs, fg: &Vecd, fh: &Matd) -> Matd {
    let n = h.n;
    let mut a = h.mul_mat(fh);
    for i in 0..n {
        for k in 0..n {
            for c in 0..n {
                a.c[i][k] += d.dh.c[k][i][c] * fg.c[c];
            }
        }
    }
    a
}

/// Closed enumeration of the equivariant twists in scope.
#[derive(Clone, Debug, PartialEq)]
pub enum EquivariantTwist {
    /// dd^c_T f, moment ∇_s f.
    Exact(SFunction),
    /// −Ric^T(ν_X) for ν_X the Monge–Ampère measure of the reference.
    RicciOfReference(SymplecticPotential),
    /// Ω_ψ for another state.
    StateForm(SymplecticPotential),
}

impl EquivariantTwist {
    /// g with Θ = dd^c_T g on the open orbit.
    pub fn generator(&self) -> SFunction {
        match self {
            EquivariantTwist::Exact(f) => f.clone(),
            EquivariantTwist::RicciOfReference(p) => SFunction::RicciPotential(p.clone()),
            EquivariantTwist::StateForm(p) => SFunction::KahlerPotential(p.clone()),
        }
    }

    pub fn zero(pot: &SymplecticPotential) -> EquivariantTwist {
        EquivariantTwist::Exact(SFunction::Pullback { pot: pot.clone(), f: Correction::Zero })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    /// density with respect to ds (s-grid) or dx (x-grid)
    Absolute,
    /// density relative to the reference measure ν_X
    Relative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub kind: MeasureKind,
    pub s: Option<Vec<f64>>,
    pub x: Option<Vec<f64>>,
    pub mass_s: Option<f64>,
    pub mass_x: Option<f64>,
}

impl DensityField {
    pub fn mass_discrepancy(&self) -> Option<f64> {
        Some((self.mass_s? - self.mass_x?).abs())
    }
}

fn positive_weight(st: &KahlerState, v: &Weight) -> Result<()> {
    v.check_positive(st.quad.nodes.iter())?;
    Ok(())
}

/// MA_v(φ) = v(m_φ) ω_φ^n for the state Ω_φ.
pub fn ma_v(st: &KahlerState, v: &Weight) -> Result<DensityField> {
    positive_weight(st, v)?;
    let cn = st.cn;
    let x: Vec<f64> = st.quad.nodes.iter().map(|x| cn * v.eval(x)).collect();
    let mass_x = st.quad.weights.iter().zip(&x).map(|(w, d)| w * d).sum();
    let (s, mass_s) = match &st.sdata {
        Some(sd) => {
            let s: Vec<f64> = sd.pts.iter().map(|p| cn * v.eval(&p.x) * libm::exp(-p.ld_g)).collect();
            let m = sd.grid.integrate(&s);
            (Some(s), Some(m))
        }
        None => (None, None),
    };
    Ok(DensityField { kind: MeasureKind::Absolute, s, x: Some(x), mass_s, mass_x: Some(mass_x) })
}

pub fn ma(st: &KahlerState) -> Result<DensityField> {
    ma_v(st, &Weight::one(st.dim()))
}

/// Twisted density factor v·tr(∇²F⁻¹∇²g) + ⟨v′, ∇g⟩ at a point with moment x.
fn twisted_factor(v: &Weight, x: &Vecd, hess_g_inv: &Matd, gj: &SJet) -> f64 {
    let vj = v.jet(x, 1);
    vj.v * hess_g_inv.frob(&gj.h) + vj.g.dot(&gj.g)
}

/// MA_v^Θ(φ) on both grids.  x-grid values are the pushforward densities
/// c_n[v tr(∇²G ∇²_s g) + ⟨v′, ∇_s g⟩] at s = ∇G(x).
pub fn ma_twisted(st: &KahlerState, v: &Weight, theta: &EquivariantTwist) -> Result<DensityField> {
    positive_weight(st, v)?;
    let gfun = theta.generator();
    let cn = st.cn;
    let pot = &st.potential;
    let p = &*pot.polytope;
    let q = &st.quad;
    let x = par::try_map(q.nodes.len(), |i| {
        let xi = &q.nodes[i];
        let e = pot.eval(xi, 2)?;
        let gj = gfun.jet(&e.grad, Some((xi, &e.ells)))?;
        Ok::<_, Error>(cn * twisted_factor(v, xi, &e.hessian(p), &gj))
    })?;
    let mass_x = q.weights.iter().zip(&x).map(|(w, d)| w * d).sum();
    let (s, mass_s) = match &st.sdata {
        Some(sd) => {
            let s = par::try_map(sd.pts.len(), |i| {
                let pt = &sd.pts[i];
                let sv = &sd.grid.nodes[i];
                let gj = gfun.jet(sv, Some((&pt.x, &pt.ells)))?;
                let minv = pt.hess.inverse().ok_or(Error::Singular("∇²F"))?;
                Ok::<_, Error>(cn * libm::exp(-pt.ld_g) * twisted_factor(v, &pt.x, &minv, &gj))
            })?;
            let m = sd.grid.integrate(&s);
            (Some(s), Some(m))
        }
        None => (None, None),
    };
    Ok(DensityField { kind: MeasureKind::Absolute, s, x: Some(x), mass_s, mass_x: Some(mass_x) })
}

/// tr_{Ω,v}(Θ) = MA_v^Θ/MA_v on the s-grid.
pub fn weighted_trace(st: &KahlerState, v: &Weight, theta: &EquivariantTwist) -> Result<Vec<f64>> {
    let sd = st.sdata()?;
    let gfun = theta.generator();
    par::try_map(sd.pts.len(), |i| {
        let pt = &sd.pts[i];
        let vv = v.eval(&pt.x);
        if !(vv > 0.0) {
            return Err(Error::NonPositiveWeight { value: vv });
        }
        let gj = gfun.jet(&sd.grid.nodes[i], Some((&pt.x, &pt.ells)))?;
        let minv = pt.hess.inverse().ok_or(Error::Singular("∇²F"))?;
        Ok(twisted_factor(v, &pt.x, &minv, &gj) / vv)
    })
}

/// Δ_{Ω,v} f on the s-grid.
pub fn weighted_laplacian(st: &KahlerState, v: &Weight, f: &SFunction) -> Result<Vec<f64>> {
    weighted_trace(st, v, &EquivariantTwist::Exact(f.clone()))
}

/// Values of an s-function on the state's s-grid.
pub fn sfunction_on_grid(sd: &SData, f: &SFunction) -> Result<Vec<f64>> {
    par::try_map(sd.pts.len(), |i| {
        let pt = &sd.pts[i];
        Ok::<_, Error>(f.jet(&sd.grid.nodes[i], Some((&pt.x, &pt.ells)))?.v)
    })
}

/// Galerkin spectrum of −Δ_{Ω,v} on pullbacks of monomials of degree
/// 1..=`degree`, made MA_v-mean-zero: returns the smallest generalized
/// eigenvalue of the Dirichlet form against the L² form.
pub fn laplacian_spectral_gap(st: &KahlerState, v: &Weight, degree: u32) -> Result<f64> {
    let n = st.dim();
    let mut exps: Vec<[u32; 3]> = Vec::new();
    for a in 0..=degree {
        for b in 0..=(if n > 1 { degree } else { 0 }) {
            for c in 0..=(if n > 2 { degree } else { 0 }) {
                let deg = a + b + c;
                if deg >= 1 && deg <= degree {
                    exps.push([a, b, c]);
                }
            }
        }
    }
    let k = exps.len();
    let q = &st.quad;
    let pot = &st.potential;
    let cn = st.cn;
    let mut mass = 0.0;
    let mut mean = alloc::vec![0.0; k];
    let mut stiff = DenseSym::zeros(k);
    let mut l2 = DenseSym::zeros(k);
    let polys: Vec<crate::torus::Polynomial> = exps.iter().map(|e| crate::torus::Polynomial::new(n, alloc::vec![(1.0, *e)])).collect();
    let mut vals = Vec::with_capacity(q.nodes.len());
    for (x, w) in q.nodes.iter().zip(&q.weights) {
        let e = pot.eval(x, 2)?;
        let vv = v.eval(x);
        let jets: Vec<_> = polys.iter().map(|p| p.jet(x, 1)).collect();
        let wt = w * cn * vv;
        mass += wt;
        for a in 0..k {
            mean[a] += wt * jets[a].v;
        }
        vals.push((wt, e.hinv, jets));
    }
    for a in 0..k {
        mean[a] /= mass;
    }
    for (wt, h, jets) in &vals {
        for a in 0..k {
            for b in a..k {
                let sab = stiff.get(a, b) + wt * h.quad(&jets[a].g, &jets[b].g);
                stiff.set(a, b, sab);
                stiff.set(b, a, sab);
                let lab = l2.get(a, b) + wt * (jets[a].v - mean[a]) * (jets[b].v - mean[b]);
                l2.set(a, b, lab);
                l2.set(b, a, lab);
            }
        }
    }
    // L = chol(l2); eigenvalues of L⁻¹ S L⁻ᵀ
    let lc = l2.cholesky().ok_or(Error::Singular("L² Gram"))?;
    let mut c = DenseSym::zeros(k);
    let linv = lower_inverse(k, &lc);
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for a in 0..k {
                for b in 0..k {
                    s += linv[i * k + a] * stiff.get(a, b) * linv[j * k + b];
                }
            }
            c.set(i, j, s);
        }
    }
    let ev = c.eigenvalues();
    Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn lower_inverse(k: usize, l: &[f64]) -> Vec<f64> {
    let mut inv = alloc::vec![0.0; k * k];
    for col in 0..k {
        for i in col..k {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for j in col..i {
                s -= l[i * k + j] * inv[j * k + col];
            }
            inv[i * k + col] = s / l[i * k + i];
        }
    }
    inv
}

/// Curvature scalars at one point of int(P).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvaturePoint {
    /// S(ω) = Δ_ω (½ log det ∇²G∘m)
    pub scal: f64,
    /// S(ω) = −½ Σ ∂_ij H^{ij}
    pub scal_abreu: f64,
    /// S_v = S − (⟨v′, Δm⟩ + Δ v(m)) / 2v
    pub s_v: f64,
    /// S_v^Lah = −½ Σ ∂_ij (v H^{ij})
    pub s_lah: f64,
    /// Δ_ω m, evaluated in s-coordinates from ∇²_s m
    pub lap_m: Vecd,
    /// moment of Ric(ω^n): −½ div H
    pub ricci_moment: Vecd,
}

/// ∇ and ∇² of log|det K| for the bordered matrix K behind `e`; both are
/// bounded up to ∂P.
fn ld_reg_derivs(p: &Polytope, e: &PointEval) -> (Vecd, Matd) {
    let n = p.dim;
    let m = p.facets.len();
    let h = &e.hinv;
    let tk: Vec<Matd> = (0..n).map(|k| e.jet.t.slice(k)).collect();
    let mut g = Vecd::zeros(n);
    for k in 0..n {
        let mut s = h.frob(&tk[k]);
        for (i, f) in p.facets.iter().enumerate() {
            s += 2.0 * e.w[i * m + i] * f.u.c[k];
        }
        g.c[k] = s;
    }
    // B D_k Bᵀ with D_k = diag(−2 u_ik)
    let bdb: Vec<Matd> = (0..n)
        .map(|k| {
            let mut a = Matd::zeros(n);
            for (i, f) in p.facets.iter().enumerate() {
                a = a + e.p[i].outer(&e.p[i]).scale(-2.0 * f.u.c[k]);
            }
            a
        })
        .collect();
    let mut hh = Matd::zeros(n);
    for k in 0..n {
        for l in k..n {
            let mut s = h.frob(&e.jet.q.slice2(k, l));
            s -= h.mul_mat(&tk[k]).mul_mat(h).frob(&tk[l]);
            s -= bdb[k].frob(&tk[l]) + bdb[l].frob(&tk[k]);
            let mut ww = 0.0;
            for (i, fi) in p.facets.iter().enumerate() {
                for (j, fj) in p.facets.iter().enumerate() {
                    let wij = e.w[i * m + j];
                    ww += wij * wij * fj.u.c[k] * fi.u.c[l];
                }
            }
            s -= 4.0 * ww;
            hh.c[k][l] = s;
            hh.c[l][k] = s;
        }
    }
    (g, hh)
}

/// Requires `e` with h-jets of order 4.
pub fn curvature_point(p: &Polytope, e: &PointEval, v: &Weight) -> CurvaturePoint {
    let n = p.dim;
    let d = e.derivs(p, true);
    let h = &e.hinv;
    let vj = v.jet(&e.x, 2);
    let scal_abreu = -0.5 * d.ddh;
    let s_lah = -0.5 * (vj.h.frob(h) + 2.0 * vj.g.dot(&d.div) + vj.v * d.ddh);
    // Δ_ω u = ⟨div H, ∇u⟩ + H:∇²u for u on P.  With log det ∇²G =
    // ld_reg − Σ log 2ℓ_i, the facet terms collapse to −2 div p_i.
    let (gl, hl) = ld_reg_derivs(p, e);
    let mut facet = 0.0;
    for i in 0..p.facets.len() {
        for l in 0..n {
            facet += d.dp[l][i].c[l];
        }
    }
    let scal = 0.5 * (d.div.dot(&gl) + h.frob(&hl)) - facet;
    let lap_v = d.div.dot(&vj.g) + h.frob(&vj.h);
    let s_v = scal - (vj.g.dot(&d.div) + lap_v) / (2.0 * vj.v);
    // independent: Δm from ∂_{s_b}∂_{s_c} m_a = Σ_k ∂_k H_ab H_kc and ∇²_s F = H
    let minv = e.hessian(p);
    let mut lap_m = Vecd::zeros(n);
    for a in 0..n {
        let mut m2 = Matd::zeros(n);
        for b in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += d.dh.c[k][a][b] * h.c[k][c];
                }
                m2.c[b][c] = s;
            }
        }
        lap_m.c[a] = minv.frob(&symmetrize(&m2));
    }
    CurvaturePoint { scal, scal_abreu, s_v, s_lah, lap_m, ricci_moment: d.div.scale(-0.5) }
}

/// S_v^Lah alone (bounded up to ∂P; usable at quadrature nodes).
pub fn lahdili_scalar(p: &Polytope, e: &PointEval, v: &Weight) -> f64 {
    let d = e.derivs(p, true);
    let vj = v.jet(&e.x, 2);
    -0.5 * (vj.h.frob(&e.hinv) + 2.0 * vj.g.dot(&d.div) + vj.v * d.ddh)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureField {
    pub points: Vec<CurvaturePoint>,
    /// ρ_φ = ½ log(MA_v(φ)/ν_X) when a reference is supplied
    pub rho: Option<Vec<f64>>,
    /// sup |S_v^Lah − v S_v| / (1 + |S_v^Lah|)
    pub lahdili_defect: f64,
}

impl CurvatureField {
    pub fn scal(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.scal).collect()
    }
    pub fn s_v(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.s_v).collect()
    }
    pub fn s_lah(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.s_lah).collect()
    }
}

pub fn scalar_curvatures(st: &KahlerState, v: &Weight, reference: Option<&KahlerState>) -> Result<CurvatureField> {
    let sd = st.sdata()?;
    let pot = &st.potential;
    let p = &*pot.polytope;
    let points = par::try_map(sd.pts.len(), |i| {
        let pt = &sd.pts[i];
        let vv = v.eval(&pt.x);
        if !(vv > 0.0) {
            return Err(Error::NonPositiveWeight { value: vv });
        }
        let e = pot.eval_with(&pt.x, &pt.ells, 4)?;
        Ok(curvature_point(p, &e, v))
    })?;
    let mut defect: f64 = 0.0;
    for (c, pt) in points.iter().zip(&sd.pts) {
        let vv = v.eval(&pt.x);
        defect = defect.max((c.s_lah - vv * c.s_v).abs() / (1.0 + c.s_lah.abs()));
    }
    let rho = match reference {
        Some(r) => {
            let rs = r.sdata()?;
            if rs.grid.spec != sd.grid.spec {
                return Err(Error::IncompatibleGrids);
            }
            Some(
                sd.pts
                    .iter()
                    .zip(&rs.pts)
                    .map(|(a, b)| 0.5 * (libm::log(v.eval(&a.x)) - a.ld_g + b.ld_g))
                    .collect(),
            )
        }
        None => None,
    };
    Ok(CurvatureField { points, rho, lahdili_defect: defect })
}

/// Ricci form of ω_φ^n as a twist, with its moment field on the s-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RicciData {
    /// Ric^T(ω^n) = −dd^c_T ρ: the twist −Ric is `Exact(ρ)`.
    pub minus_ricci: EquivariantTwist,
    /// m_ν = −½ div H at each s-node
    pub moment: Vec<Vecd>,
    /// |∫ m_ν ω^n| (x-path), which must vanish
    pub centering_defect: f64,
}

pub fn ricci_data(st: &KahlerState) -> Result<RicciData> {
    let sd = st.sdata()?;
    let pot = &st.potential;
    let p = &*pot.polytope;
    let moment = par::try_map(sd.pts.len(), |i| {
        let pt = &sd.pts[i];
        let e = pot.eval_with(&pt.x, &pt.ells, 3)?;
        Ok::<_, Error>(e.derivs(p, false).div.scale(-0.5))
    })?;
    let mut c = Vecd::zeros(p.dim);
    for (x, w) in st.quad.nodes.iter().zip(&st.quad.weights) {
        let e = pot.eval(x, 3)?;
        c = c + e.derivs(p, false).div.scale(-0.5 * w * st.cn);
    }
    Ok(RicciData { minus_ricci: EquivariantTwist::Exact(SFunction::RicciPotential(pot.clone())), moment, centering_defect: c.norm_inf() })
}

/// Soliton residual for a Fano-normalized polytope: the larger of
/// sup|S_v − w(m)| with w = n + ⟨(log v)′, ·⟩ and the sup-norm of
/// Ric_v^T(Ω) − Ω (moment part and its s-derivative).
pub fn soliton_residual(st: &KahlerState, v: &Weight) -> Result<f64> {
    let p = st.polytope();
    if !p.is_fano_normalized() {
        return Err(Error::NonFanoNormalization);
    }
    let n = p.dim;
    let w = Weight::soliton_w_of(v.clone(), n as f64);
    let curv = scalar_curvatures(st, v, None)?;
    let sd = st.sdata()?;
    let mut r1: f64 = 0.0;
    for (c, pt) in curv.points.iter().zip(&sd.pts) {
        r1 = r1.max((c.s_v - w.eval(&pt.x)).abs());
    }
    let pot = &st.potential;
    let r2 = par::try_map(sd.pts.len(), |i| {
        let pt = &sd.pts[i];
        let e = pot.eval_with(&pt.x, &pt.ells, 4)?;
        let d = e.derivs(p, true);
        let d2 = d.d2h.as_ref().unwrap();
        let lv = v.jet(&pt.x, 2).ln();
        // moment of Ric_v: −½ div H − ½ H (log v)′
        let mom = d.div.scale(-0.5) - e.hinv.mul_vec(&lv.g).scale(0.5) - pt.x;
        // x-Jacobian of the moment difference, then ∂_s = ∂_x · H
        let mut jx = Matd::identity(n).scale(-1.0) - e.hinv.mul_mat(&lv.h).scale(0.5);
        for a in 0..n {
            for k in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += d2[k][i].c[i][a];
                }
                let mut dhl = 0.0;
                for c in 0..n {
                    dhl += d.dh.c[k][a][c] * lv.g.c[c];
                }
                jx.c[a][k] += -0.5 * acc - 0.5 * dhl;
            }
        }
        let js = jx.mul_mat(&e.hinv);
        let mut m: f64 = mom.norm_inf();
        for a in 0..n {
            for b in 0..n {
                m = m.max(js.c[a][b].abs());
            }
        }
        Ok::<_, Error>(m)
    })?
    .into_iter()
    .fold(0.0, f64::max);
    Ok(r1.max(r2))
}

/// Shooting solution of the P¹ soliton ODE on [−1, 1] with v = e^{ξx},
/// w = 1 + ξx: y = vH, y'' = −2wv, started from the left boundary data
/// y(−1) = 0, y'(−1) = 2v(−1).
#[derive(Clone, Debug, PartialEq)]
pub struct P1SolitonShot {
    pub xi: f64,
    /// H = y/v on the uniform mesh
    pub profile: Vec<(f64, f64)>,
    /// y(1); zero iff a soliton with this ξ exists
    pub mismatch: f64,
    /// y'(1) + 2v(1); vanishes for every ξ
    pub slope_mismatch: f64,
}

pub fn p1_soliton_shoot(xi: f64, steps: usize) -> P1SolitonShot {
    let steps = steps.max(2);
    let v = |x: f64| libm::exp(xi * x);
    let rhs = |x: f64| -2.0 * (1.0 + xi * x) * v(x);
    let h = 2.0 / steps as f64;
    let (mut y, mut z) = (0.0, 2.0 * v(-1.0));
    let mut profile = Vec::with_capacity(steps + 1);
    profile.push((-1.0, 0.0));
    for i in 0..steps {
        let x = -1.0 + i as f64 * h;
        // RK4 on (y, z)' = (z, rhs(x))
        let (k1y, k1z) = (z, rhs(x));
        let (k2y, k2z) = (z + 0.5 * h * k1z, rhs(x + 0.5 * h));
        let (k3y, k3z) = (z + 0.5 * h * k2z, rhs(x + 0.5 * h));
        let (k4y, k4z) = (z + h * k3z, rhs(x + h));
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        let xn = x + h;
        profile.push((xn, y / v(xn)));
    }
    P1SolitonShot { xi, profile, mismatch: y, slope_mismatch: z + 2.0 * v(1.0) }
}

/// The ξ for which the shot closes up, by bisection on [−b, b].
pub fn p1_soliton_xi(b: f64, steps: usize) -> Result<f64> {
    let f = |xi: f64| p1_soliton_shoot(xi, steps).mismatch;
    let (mut lo, mut hi) = (-b, b);
    let (flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::Invalid(alloc::format!("soliton shot does not bracket a root on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo < 1e-15 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
