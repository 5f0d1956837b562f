//! Energy functionals: E, E_g, E_v^Θ, R_v, ent_v, Mabuchi energies, d₁,
//! rooftop envelopes, I/J/I₁, Futaki–Mabuchi pairing and extremal
//! functions, relative entropy and Duistermaat–Heckman integrals.
//!
//! Potentials are passed as nodal data on the x-quadrature of a shared
//! reference state (φ = 0).  The x-path formulas are exact changes of
//! variables; the s-grid versions (`*_s`) are the independent oracles.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::legendre::{KahlerState, SData};
use crate::linalg::{DenseSym, Matd, Vecd};
use crate::ma::{EquivariantTwist, SFunction, SJet};
use crate::nodal::NodalPotential;
use crate::par;
use crate::potential::Correction;
use crate::quadrature::{fsum, gauss_legendre01};
use crate::torus::{AffineFunction, Polytope, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalPath {
    XGrid,
    SGrid,
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalReport {
    pub name: String,
    pub value: f64,
    pub path: EvalPath,
    /// s-grid oracle value when run
    pub oracle: Option<f64>,
    pub discrepancy: Option<f64>,
    pub tolerance: f64,
    /// mass of the reference measure outside the s-box, when relevant
    pub tail_error: Option<f64>,
    pub flagged: bool,
}

impl FunctionalReport {
    pub fn x(name: &str, value: f64) -> Self {
        FunctionalReport {
            name: String::from(name),
            value,
            path: EvalPath::XGrid,
            oracle: None,
            discrepancy: None,
            tolerance: 0.0,
            tail_error: None,
            flagged: false,
        }
    }

    pub fn with_oracle(mut self, s: f64, tail: f64, tol: f64) -> Self {
        let d = (self.value - s).abs();
        self.path = EvalPath::Both;
        self.oracle = Some(s);
        self.discrepancy = Some(d);
        self.tolerance = tol;
        self.tail_error = Some(tail);
        self.flagged = !(d <= tol);
        self
    }
}

fn same_grid(base: &KahlerState, n: &NodalPotential) -> Result<()> {
    if n.g.len() != base.quad.nodes.len() || n.gb.len() != base.quad.facet_nodes.len() {
        return Err(Error::IncompatibleGrids);
    }
    Ok(())
}

/// Same polytope and same x-quadrature.
pub fn compatible(base: &KahlerState, o: &KahlerState) -> Result<()> {
    if !base.polytope().same_as(o.polytope()) {
        return Err(Error::MismatchedPolytopes);
    }
    if !alloc::sync::Arc::ptr_eq(&base.quad, &o.quad) && base.quad.nodes != o.quad.nodes {
        return Err(Error::IncompatibleGrids);
    }
    Ok(())
}

fn need_derivs(n: &NodalPotential) -> Result<()> {
    if n.has_derivatives() {
        Ok(())
    } else {
        Err(Error::Invalid("functional needs ∇G and log det ∇²G at the nodes".into()))
    }
}

// ---------------------------------------------------------------- x-path

/// E(φ) = −c_n ∫_P (G_φ − G_0) dx.
pub fn energy(base: &KahlerState, phi: &NodalPotential) -> Result<f64> {
    same_grid(base, phi)?;
    let q = &base.quad;
    let s = fsum(q.weights.iter().zip(&phi.g).zip(&base.nodes.g).map(|((w, a), b)| w * (a - b)));
    Ok(-base.cn * s)
}

/// E_g(φ) = −c_n ∫_P g (G_φ − G_0) dx (g need not be positive).
pub fn weighted_energy(base: &KahlerState, phi: &NodalPotential, g: &Weight) -> Result<f64> {
    same_grid(base, phi)?;
    let q = &base.quad;
    let s = fsum(q.nodes.iter().zip(&q.weights).zip(&phi.g).zip(&base.nodes.g).map(|(((x, w), a), b)| w * g.eval(x) * (a - b)));
    Ok(-base.cn * s)
}

/// g(∇G(x)) at every node, via solves for the generator's own potential.
fn generator_on_nodes(base: &KahlerState, gfun: &SFunction, n: &NodalPotential) -> Result<Vec<f64>> {
    let q = &base.quad;
    let gpot = gfun.potential();
    par::try_map(q.nodes.len(), |i| {
        let x = &q.nodes[i];
        let ells = gpot.ells(x);
        Ok::<_, Error>(gfun.jet(&n.grad[i], Some((x, &ells)))?.v)
    })
}

/// E_v^Θ(φ) for Θ = dd^c_T g:  c_n∫ v [g∘∇G_φ − g∘∇G_0] dx plus the facet
/// flux c_n ∫_∂P v κ_g (G_φ − G_0) dσ, which is present when g is not
/// bounded on X (κ_g = lim ⟨∇_s g, u_F⟩).
pub fn twisted_energy(base: &KahlerState, phi: &NodalPotential, v: &Weight, theta: &EquivariantTwist) -> Result<f64> {
    same_grid(base, phi)?;
    need_derivs(phi)?;
    let gfun = theta.generator();
    if let SFunction::Pullback { f, .. } = &gfun {
        if f.is_zero() {
            return Ok(0.0);
        }
    }
    let q = &base.quad;
    let a = generator_on_nodes(base, &gfun, phi)?;
    let b = generator_on_nodes(base, &gfun, &base.nodes)?;
    let s = fsum(q.nodes.iter().zip(&q.weights).zip(&a).zip(&b).map(|(((x, w), ga), gb)| w * v.eval(x) * (ga - gb)));
    let mut bd = 0.0;
    for ((fnode, ga), gb) in q.facet_nodes.iter().zip(&phi.gb).zip(&base.nodes.gb) {
        let k = gfun.facet_flux(fnode.facet);
        if k != 0.0 {
            bd += fnode.w * v.eval(&fnode.x) * k * (ga - gb);
        }
    }
    Ok(base.cn * (s + bd))
}

/// R_v(φ) = E_v^{−Ric^T(ν_X)}(φ), ν_X the Monge–Ampère measure of the base.
pub fn ricci_energy(base: &KahlerState, phi: &NodalPotential, v: &Weight) -> Result<f64> {
    twisted_energy(base, phi, v, &EquivariantTwist::RicciOfReference(base.potential.clone()))
}

/// ent_v(φ) = ½ Ent(MA_v(φ) | ν_X).  At s = ∇G_φ(x) the reference density is
/// evaluated at y = ∇F_0(s), found by a Legendre solve warm-started at x.
pub fn entropy_v(base: &KahlerState, phi: &NodalPotential, v: &Weight) -> Result<f64> {
    entropy_v_against(base, phi, v, &Correction::Zero)
}

/// ent_v against the reweighted reference e^{2ρ}ν_X, ρ = ρ̃∘∇F_0.
pub fn entropy_v_against(base: &KahlerState, phi: &NodalPotential, v: &Weight, rho: &Correction) -> Result<f64> {
    same_grid(base, phi)?;
    need_derivs(phi)?;
    let q = &base.quad;
    let pot0 = &base.potential;
    let terms = par::try_map(q.nodes.len(), |i| {
        let x = &q.nodes[i];
        let vv = v.eval(x);
        if !(vv > 0.0) {
            return Err(Error::NonPositiveWeight { value: vv });
        }
        let y = pot0.legendre_warm(&phi.grad[i], *x, pot0.ells(x), 2)?;
        let r = if rho.is_zero() { 0.0 } else { rho.jet(&y.eval.x, 0).v };
        Ok(q.weights[i] * vv * (libm::log(vv) + y.eval.logdet() - 2.0 * r - phi.ld[i]))
    })?;
    Ok(0.5 * base.cn * fsum(terms))
}

/// ent_v + R_v without reference solves:
/// ½c_n∫ v [log v + log det∇²G_0 − log det∇²G_φ] dx + c_n∫_∂P v (G_φ − G_0) dσ.
pub fn entropy_plus_ricci(base: &KahlerState, phi: &NodalPotential, v: &Weight) -> Result<f64> {
    same_grid(base, phi)?;
    need_derivs(phi)?;
    let q = &base.quad;
    let mut terms = Vec::with_capacity(q.nodes.len());
    for (i, (x, w)) in q.nodes.iter().zip(&q.weights).enumerate() {
        let vv = v.eval(x);
        if !(vv > 0.0) {
            return Err(Error::NonPositiveWeight { value: vv });
        }
        terms.push(w * vv * (libm::log(vv) + base.nodes.ld[i] - phi.ld[i]));
    }
    let s = fsum(terms);
    let bd = fsum(q.facet_nodes.iter().zip(&phi.gb).zip(&base.nodes.gb).map(|((fnode, a), b)| fnode.w * v.eval(&fnode.x) * (a - b)));
    Ok(base.cn * (0.5 * s + bd))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MabuchiReport {
    pub entropy: f64,
    pub ricci: f64,
    pub energy: f64,
    pub total: f64,
}

/// M_{v,w} = ent_v + R_v + E_{vw}, components reported separately.
pub fn mabuchi(base: &KahlerState, phi: &NodalPotential, v: &Weight, w: &Weight) -> Result<MabuchiReport> {
    let entropy = entropy_v(base, phi, v)?;
    let ricci = ricci_energy(base, phi, v)?;
    let energy = weighted_energy(base, phi, &v.clone().times(w.clone()))?;
    Ok(MabuchiReport { entropy, ricci, energy, total: entropy + ricci + energy })
}

/// M_{v,w} with reference measure e^{2ρ}ν_X: the entropy is taken against
/// it and R_v uses its Ricci form −Ric(ν_X) + dd^c ρ.
pub fn mabuchi_with_reference(base: &KahlerState, phi: &NodalPotential, v: &Weight, w: &Weight, rho: &Correction) -> Result<MabuchiReport> {
    let entropy = entropy_v_against(base, phi, v, rho)?;
    let shift = SFunction::Pullback { pot: base.potential.clone(), f: rho.clone() };
    let ricci = ricci_energy(base, phi, v)? + twisted_energy(base, phi, v, &EquivariantTwist::Exact(shift))?;
    let energy = weighted_energy(base, phi, &v.clone().times(w.clone()))?;
    Ok(MabuchiReport { entropy, ricci, energy, total: entropy + ricci + energy })
}

/// M_{v,w} through the solve-free ent+R formula.
pub fn mabuchi_fast(base: &KahlerState, phi: &NodalPotential, v: &Weight, w: &Weight) -> Result<f64> {
    Ok(entropy_plus_ricci(base, phi, v)? + weighted_energy(base, phi, &v.clone().times(w.clone()))?)
}

/// M^rel = M_{v, w·ℓ^ext}, with ℓ^ext supplied (it depends only on the class).
pub fn mabuchi_relative(base: &KahlerState, phi: &NodalPotential, v: &Weight, w: &Weight, lext: &AffineFunction) -> Result<f64> {
    mabuchi_fast(base, phi, v, &w.clone().times(Weight::Affine(*lext)))
}

// ------------------------------------------------------------- s-path oracles

/// s-grid view of a potential relative to the base: φ = F − F_0, m, ∇²F.
#[derive(Clone, Debug)]
pub struct SPotential {
    pub phi: Vec<f64>,
    pub x: Vec<Vecd>,
    pub hess: Vec<Matd>,
    /// c_n det ∇²F
    pub ma: Vec<f64>,
}

impl SPotential {
    pub fn of(base: &KahlerState, st: &KahlerState) -> Result<SPotential> {
        compatible(base, st)?;
        let a = st.sdata()?;
        let b = base.sdata()?;
        if a.grid.spec != b.grid.spec || a.grid.dim != b.grid.dim {
            return Err(Error::IncompatibleGrids);
        }
        Ok(SPotential {
            phi: a.pts.iter().zip(&b.pts).map(|(p, q)| p.f - q.f).collect(),
            x: a.pts.iter().map(|p| p.x).collect(),
            hess: a.pts.iter().map(|p| p.hess).collect(),
            ma: a.pts.iter().map(|p| st.cn * libm::exp(-p.ld_g)).collect(),
        })
    }

    /// Kähler-side pointwise maximum; the Monge–Ampère density is that of
    /// the larger potential at each node.
    pub fn max(&self, o: &SPotential) -> SPotential {
        let mut r = self.clone();
        for i in 0..r.phi.len() {
            if o.phi[i] > r.phi[i] {
                r.phi[i] = o.phi[i];
                r.x[i] = o.x[i];
                r.hess[i] = o.hess[i];
                r.ma[i] = o.ma[i];
            }
        }
        r
    }

    pub fn shifted(&self, c: f64) -> SPotential {
        let mut r = self.clone();
        r.phi.iter_mut().for_each(|v| *v += c);
        r
    }
}

/// Mass of MA(0) outside the s-box: V − ∫_box c_n det∇²F_0 ds.
pub fn sgrid_tail(base: &KahlerState) -> Result<f64> {
    let sd = base.sdata()?;
    let cn = base.cn;
    Ok((base.volume() - sint(sd, |k| cn * libm::exp(-sd.pts[k].ld_g))).abs())
}

fn t_nodes(k: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre01(k)
}

/// ∫_0^1 ∫ φ g(m_t) MA(φ_t) dt on the s-grid, along F_t = F_0 + tφ.
fn path_integral(base: &KahlerState, sp: &SPotential, nt: usize, density: impl Fn(&Vecd, &Matd, usize) -> f64 + Sync) -> Result<f64> {
    let sd = base.sdata()?;
    let (ts, tw) = t_nodes(nt);
    let mut vals = alloc::vec![0.0; sd.pts.len()];
    for (t, wt) in ts.iter().zip(&tw) {
        for (i, p0) in sd.pts.iter().enumerate() {
            let m = p0.x.scale(1.0 - t) + sp.x[i].scale(*t);
            let hm = p0.hess.scale(1.0 - t) + sp.hess[i].scale(*t);
            vals[i] += wt * sp.phi[i] * density(&m, &hm, i);
        }
    }
    Ok(sd.grid.integrate(&vals))
}

/// E(φ) = ∫_0^1∫ φ MA(tφ) dt; det is polynomial of degree n in t, so n+1
/// Gauss nodes are exact.
pub fn energy_s(base: &KahlerState, sp: &SPotential) -> Result<f64> {
    let cn = base.cn;
    path_integral(base, sp, base.dim() + 1, |_, h, _| cn * h.det())
}

pub fn weighted_energy_s(base: &KahlerState, sp: &SPotential, g: &Weight) -> Result<f64> {
    let cn = base.cn;
    path_integral(base, sp, 24, |m, h, _| cn * g.eval(m) * h.det())
}

fn generator_on_sgrid(sd: &SData, gfun: &SFunction) -> Result<Vec<SJet>> {
    let gpot = gfun.potential();
    par::try_map(sd.pts.len(), |i| {
        let s = &sd.grid.nodes[i];
        let x = &sd.pts[i].x;
        gfun.jet(s, Some((x, &gpot.ells(x))))
    })
}

/// E_v^Θ(φ) = ∫_0^1 ∫ φ MA_v^Θ(tφ) dt.
pub fn twisted_energy_s(base: &KahlerState, sp: &SPotential, v: &Weight, theta: &EquivariantTwist) -> Result<f64> {
    let sd = base.sdata()?;
    let jets = generator_on_sgrid(sd, &theta.generator())?;
    let cn = base.cn;
    path_integral(base, sp, 24, |m, h, i| {
        let vj = v.jet(m, 1);
        let inv = h.inverse().unwrap_or(Matd::zeros(h.n));
        cn * h.det() * (vj.v * inv.frob(&jets[i].h) + vj.g.dot(&jets[i].g))
    })
}

pub fn ricci_energy_s(base: &KahlerState, sp: &SPotential, v: &Weight) -> Result<f64> {
    twisted_energy_s(base, sp, v, &EquivariantTwist::RicciOfReference(base.potential.clone()))
}

/// ½Ent(MA_v(φ)|ν_X) by direct s-grid quadrature.
pub fn entropy_v_s(base: &KahlerState, sp: &SPotential, v: &Weight) -> Result<f64> {
    let sd = base.sdata()?;
    let nu: Vec<f64> = sd.pts.iter().map(|p| base.cn * libm::exp(-p.ld_g)).collect();
    let mu: Vec<f64> = sp.ma.iter().zip(&sp.x).map(|(m, x)| m * v.eval(x)).collect();
    Ok(0.5 * relative_entropy(&sd.grid.weights, &mu, &nu)?)
}

// ------------------------------------------------------------- d₁ and friends

pub fn rooftop(a: &NodalPotential, b: &NodalPotential) -> NodalPotential {
    a.max(b)
}

/// d₁ through E(φ) + E(ψ) − 2E(env).
pub fn d1_darvas(base: &KahlerState, a: &NodalPotential, b: &NodalPotential) -> Result<f64> {
    let env = rooftop(a, b);
    Ok(energy(base, a)? + energy(base, b)? - 2.0 * energy(base, &env)?)
}

/// d₁ = c_n ∫_P |G_φ − G_ψ| dx.
pub fn d1_l1(base: &KahlerState, a: &NodalPotential, b: &NodalPotential) -> Result<f64> {
    same_grid(base, a)?;
    same_grid(base, b)?;
    let s = fsum(base.quad.weights.iter().zip(&a.g).zip(&b.g).map(|((w, x), y)| w * (x - y).abs()));
    Ok(base.cn * s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IJI1 {
    pub i: f64,
    pub j_phi: f64,
    pub j_psi: f64,
    pub i1: f64,
}

fn sint(sd: &SData, f: impl Fn(usize) -> f64) -> f64 {
    let v: Vec<f64> = (0..sd.pts.len()).map(f).collect();
    sd.grid.integrate(&v)
}

pub fn i_functional(base: &KahlerState, a: &SPotential, b: &SPotential) -> Result<f64> {
    let sd = base.sdata()?;
    Ok(sint(sd, |k| (a.phi[k] - b.phi[k]) * (b.ma[k] - a.ma[k])))
}

pub fn i1_functional(base: &KahlerState, a: &SPotential, b: &SPotential) -> Result<f64> {
    let sd = base.sdata()?;
    Ok(sint(sd, |k| (a.phi[k] - b.phi[k]).abs() * (a.ma[k] + b.ma[k])))
}

/// J(φ) = ∫ φ MA(0) − E(φ).
pub fn j_functional(base: &KahlerState, a: &SPotential) -> Result<f64> {
    let sd = base.sdata()?;
    let cn = base.cn;
    let e = energy_s(base, a)?;
    Ok(sint(sd, |k| a.phi[k] * cn * libm::exp(-sd.pts[k].ld_g)) - e)
}

pub fn i_j_i1(base: &KahlerState, a: &SPotential, b: &SPotential) -> Result<IJI1> {
    Ok(IJI1 {
        i: i_functional(base, a, b)?,
        j_phi: j_functional(base, a)?,
        j_psi: j_functional(base, b)?,
        i1: i1_functional(base, a, b)?,
    })
}

// ---------------------------------------------------- Futaki–Mabuchi pairing

#[derive(Clone, Debug, PartialEq)]
pub struct PairingMatrix {
    /// basis (1, x_1, .., x_k) of affine functions
    pub gram: DenseSym,
    /// ∫ ℓ_a(m) S_v MA_v(0) on the x-path
    pub rhs: Vec<f64>,
    /// the same on the s-grid, when available
    pub rhs_s: Option<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub condition: f64,
}

fn basis_eval(x: &Vecd) -> Vec<f64> {
    let mut b = alloc::vec![1.0];
    b.extend_from_slice(x.as_slice());
    b
}

/// x-path values of S_v^Lah at the quadrature nodes of an analytic state.
pub fn lahdili_on_nodes(st: &KahlerState, v: &Weight) -> Result<Vec<f64>> {
    let q = &st.quad;
    let p = st.polytope();
    par::try_map(q.nodes.len(), |i| {
        let e = st.potential.eval(&q.nodes[i], 4)?;
        Ok::<_, Error>(crate::ma::lahdili_scalar(p, &e, v))
    })
}

pub fn futaki_mabuchi(st: &KahlerState, v: &Weight, w: &Weight) -> Result<PairingMatrix> {
    let n = st.dim();
    let k = n + 1;
    let q = &st.quad;
    v.check_positive(q.nodes.iter())?;
    w.check_positive(q.nodes.iter())?;
    let slah = lahdili_on_nodes(st, v)?;
    let mut gram = DenseSym::zeros(k);
    let mut rhs = alloc::vec![0.0; k];
    for ((x, wt), s) in q.nodes.iter().zip(&q.weights).zip(&slah) {
        let b = basis_eval(x);
        let vw = st.cn * wt * v.eval(x) * w.eval(x);
        for a in 0..k {
            rhs[a] += st.cn * wt * b[a] * s;
            for c in a..k {
                let val = gram.get(a, c) + vw * b[a] * b[c];
                gram.set(a, c, val);
                gram.set(c, a, val);
            }
        }
    }
    let rhs_s = match &st.sdata {
        Some(sd) => {
            let curv = crate::ma::scalar_curvatures(st, v, None)?;
            let mut r = alloc::vec![0.0; k];
            for a in 0..k {
                r[a] = sint(sd, |j| {
                    let p = &sd.pts[j];
                    basis_eval(&p.x)[a] * curv.points[j].s_v * v.eval(&p.x) * st.cn * libm::exp(-p.ld_g)
                });
            }
            Some(r)
        }
        None => None,
    };
    let ev = gram.eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = gram.condition_number();
    Ok(PairingMatrix { gram, rhs, rhs_s, min_eigenvalue: lo, condition })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalFunction {
    pub ell: AffineFunction,
    pub pairing: PairingMatrix,
    /// condition number above 1e10
    pub ill_conditioned: bool,
}

pub fn extremal_function(st: &KahlerState, v: &Weight, w: &Weight) -> Result<ExtremalFunction> {
    let pm = futaki_mabuchi(st, v, w)?;
    if !(pm.min_eigenvalue > 0.0) {
        return Err(Error::Singular("Futaki–Mabuchi pairing"));
    }
    let c = pm.gram.solve_spd(&pm.rhs).ok_or(Error::Singular("Futaki–Mabuchi pairing"))?;
    let ill = pm.condition > 1e10;
    Ok(ExtremalFunction { ell: AffineFunction::from_coords(st.dim(), &c), pairing: pm, ill_conditioned: ill })
}

/// Fut(ℓ) = ∫ ℓ(m) w(m) MA_v(0) − ∫ ℓ(m) S_v MA_v(0).
pub fn futaki_invariant(st: &KahlerState, v: &Weight, w: &Weight, ell: &AffineFunction) -> Result<f64> {
    if ell.is_zero() {
        return Ok(0.0);
    }
    let q = &st.quad;
    let slah = lahdili_on_nodes(st, v)?;
    let mut s = 0.0;
    for ((x, wt), sl) in q.nodes.iter().zip(&q.weights).zip(&slah) {
        s += wt * ell.eval(x) * (w.eval(x) * v.eval(x) - sl);
    }
    Ok(st.cn * s)
}

// ------------------------------------------------------------------ entropy

pub fn mass(weights: &[f64], d: &[f64]) -> f64 {
    fsum(weights.iter().zip(d).map(|(w, a)| w * a))
}

/// Ent(μ|ν) = ∫ log(μ/ν) dμ for densities on a common quadrature.
pub fn relative_entropy(weights: &[f64], mu: &[f64], nu: &[f64]) -> Result<f64> {
    let mut terms = Vec::with_capacity(mu.len());
    for ((w, m), n) in weights.iter().zip(mu).zip(nu) {
        if *m < 0.0 || *n < 0.0 {
            return Err(Error::Invalid("negative density".into()));
        }
        if *m == 0.0 {
            continue;
        }
        if *n == 0.0 {
            return Err(Error::NotDominated);
        }
        terms.push(w * m * libm::log(m / n));
    }
    Ok(fsum(terms))
}

/// μ(X) log(μ(X)/ν(X)).
pub fn entropy_mass_bound(weights: &[f64], mu: &[f64], nu: &[f64]) -> f64 {
    let a = mass(weights, mu);
    let b = mass(weights, nu);
    a * libm::log(a / b)
}

/// ∫ g dμ − μ(X) log ∫ e^g dν + μ(X) log μ(X) ≤ Ent(μ|ν).
pub fn legendre_bound(weights: &[f64], mu: &[f64], nu: &[f64], g: &[f64]) -> f64 {
    let mm = mass(weights, mu);
    let gm = fsum(weights.iter().zip(mu).zip(g).map(|((w, m), g)| w * m * g));
    // log ∫ e^g dν, shifted for range safety
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = fsum(weights.iter().zip(nu).zip(g).map(|((w, n), g)| w * n * libm::exp(g - gmax)));
    gm - mm * (libm::log(z) + gmax) + mm * libm::log(mm)
}

/// Bounds at g_k = (k/steps)·log(μ/ν), k = 0..=steps.
pub fn legendre_bound_curve(weights: &[f64], mu: &[f64], nu: &[f64], steps: usize) -> Result<Vec<f64>> {
    let mut lr = Vec::with_capacity(mu.len());
    for (m, n) in mu.iter().zip(nu) {
        if *n == 0.0 && *m > 0.0 {
            return Err(Error::NotDominated);
        }
        lr.push(if *m > 0.0 { libm::log(m / n) } else { -700.0 });
    }
    Ok((0..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            let g: Vec<f64> = lr.iter().map(|l| t * l).collect();
            legendre_bound(weights, mu, nu, &g)
        })
        .collect())
}

/// Ent(μ′|ν) ≤ A Ent(μ|ν) + C for μ′ ≤ Aμ, with
/// C = A ν(X) + max(A log A, 0) μ(X).
pub fn entcst_constant(a: f64, nu_mass: f64, mu_mass: f64) -> f64 {
    a * nu_mass + (a * libm::log(a)).max(0.0) * mu_mass
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropySandwich {
    pub ent: f64,
    pub ent_v: f64,
    pub inf_v: f64,
    pub sup_v: f64,
    pub c: f64,
    pub holds: bool,
}

fn weight_range(p: &Polytope, nodes: &[Vecd], v: &Weight) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in nodes.iter().chain(p.vertices.iter().map(|vx| &vx.x)) {
        let a = v.eval(x);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    (lo, hi)
}

/// (inf v)·ent − C ≤ ent_v ≤ (sup v)·ent + C with C from [`entcst_constant`].
pub fn entropy_sandwich(base: &KahlerState, phi: &NodalPotential, v: &Weight) -> Result<EntropySandwich> {
    let n = base.dim();
    let ent = entropy_v(base, phi, &Weight::one(n))?;
    let ent_v = entropy_v(base, phi, v)?;
    let (lo, hi) = weight_range(base.polytope(), &base.quad.nodes, v);
    let vol = base.volume();
    let mav = dh_integral(base, v);
    let c_up = 0.5 * entcst_constant(hi, vol, vol);
    let c_lo = 0.5 * lo * entcst_constant(1.0 / lo, vol, mav);
    let c = c_up.max(c_lo);
    let holds = lo * ent - c <= ent_v && ent_v <= hi * ent + c;
    Ok(EntropySandwich { ent, ent_v, inf_v: lo, sup_v: hi, c, holds })
}

// ------------------------------------------------------ Duistermaat–Heckman

/// ∫ g dDH = c_n ∫_P g dx.
pub fn dh_integral(st: &KahlerState, g: &Weight) -> f64 {
    st.cn * st.quad.integrate(|x| g.eval(x))
}

/// Regular bins over the bounding box of P; 2^levels bins per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub dim: usize,
    pub levels: u32,
    pub lo: Vecd,
    pub hi: Vecd,
    /// row-major masses, normalized to total 1
    pub mass: Vec<f64>,
    /// total before normalization
    pub total: f64,
}

fn bbox(p: &Polytope) -> (Vecd, Vecd) {
    let n = p.dim;
    let mut lo = Vecd::from_slice(&[f64::INFINITY; 3][..n]);
    let mut hi = Vecd::from_slice(&[f64::NEG_INFINITY; 3][..n]);
    for v in &p.vertices {
        for a in 0..n {
            lo.c[a] = lo.c[a].min(v.x.c[a]);
            hi.c[a] = hi.c[a].max(v.x.c[a]);
        }
    }
    (lo, hi)
}

impl Histogram {
    fn empty(p: &Polytope, levels: u32) -> Histogram {
        let (lo, hi) = bbox(p);
        let nb = 1usize << levels;
        Histogram { dim: p.dim, levels, lo, hi, mass: alloc::vec![0.0; nb.pow(p.dim as u32)], total: 0.0 }
    }

    pub fn bins_per_axis(&self) -> usize {
        1 << self.levels
    }

    fn index(&self, x: &Vecd) -> usize {
        let nb = self.bins_per_axis();
        let mut idx = 0;
        for a in 0..self.dim {
            let t = (x.c[a] - self.lo.c[a]) / (self.hi.c[a] - self.lo.c[a]);
            let b = ((t * nb as f64) as isize).clamp(0, nb as isize - 1) as usize;
            idx = idx * nb + b;
        }
        idx
    }

    fn normalize(&mut self) {
        let t: f64 = self.mass.iter().sum();
        self.total = t;
        self.mass.iter_mut().for_each(|m| *m /= t);
    }

    /// Side lengths of one bin.
    pub fn bin_size(&self) -> Vecd {
        let nb = self.bins_per_axis() as f64;
        let mut s = self.hi - self.lo;
        for a in 0..self.dim {
            s.c[a] /= nb;
        }
        s
    }
}

/// Histogram of the s-grid pushforward of c_n det∇²F ds under m = ∇F.
/// Each s-cell carries its quadrature mass and is mapped by the local
/// linearisation m(s_j) + ∇²F(s_j)(s − s_j), so its mass is spread over a
/// parallelogram rather than placed at one atom (3-d: atoms).
pub fn dh_pushforward(st: &KahlerState, levels: u32) -> Result<Histogram> {
    let sd = st.sdata()?;
    let mut h = Histogram::empty(st.polytope(), levels);
    let nb = h.bins_per_axis();
    let bs = h.bin_size();
    let half = 0.5 * sd.grid.spec.spacing();
    for (p, w) in sd.pts.iter().zip(&sd.grid.weights) {
        let m = w * st.cn * libm::exp(-p.ld_g);
        match st.dim() {
            1 => {
                let r = p.hess.c[0][0] * half;
                let (a, b) = (p.x.c[0] - r, p.x.c[0] + r);
                let lo = h.lo.c[0];
                let i0 = (libm::floor((a - lo) / bs.c[0]).max(0.0) as usize).min(nb - 1);
                let i1 = (libm::floor((b - lo) / bs.c[0]).max(0.0) as usize).min(nb - 1);
                for i in i0..=i1 {
                    let (x0, x1) = (lo + i as f64 * bs.c[0], lo + (i + 1) as f64 * bs.c[0]);
                    let ov = (b.min(x1) - a.max(x0)).max(0.0);
                    h.mass[i] += if b > a { m * ov / (b - a) } else if i == i0 { m } else { 0.0 };
                }
            }
            2 => {
                let e1 = Vecd::from_slice(&[p.hess.c[0][0] * half, p.hess.c[1][0] * half]);
                let e2 = Vecd::from_slice(&[p.hess.c[0][1] * half, p.hess.c[1][1] * half]);
                let mut quad = [p.x - e1 - e2, p.x + e1 - e2, p.x + e1 + e2, p.x - e1 + e2];
                if (e1.c[0] * e2.c[1] - e1.c[1] * e2.c[0]) < 0.0 {
                    quad.swap(1, 3);
                }
                let poly: Vec<[f64; 2]> = quad.iter().map(|v| [v.c[0], v.c[1]]).collect();
                let area = clip_area(&poly, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
                let range = |ax: usize| -> (usize, usize) {
                    let lo = quad.iter().map(|v| v.c[ax]).fold(f64::INFINITY, f64::min);
                    let hi = quad.iter().map(|v| v.c[ax]).fold(f64::NEG_INFINITY, f64::max);
                    let f = |t: f64| ((libm::floor((t - h.lo.c[ax]) / bs.c[ax])).max(0.0) as usize).min(nb - 1);
                    (f(lo), f(hi))
                };
                if !(area > 1e-300) {
                    let i = h.index(&p.x);
                    h.mass[i] += m;
                    continue;
                }
                let (i0, i1) = range(0);
                let (j0, j1) = range(1);
                for i in i0..=i1 {
                    for j in j0..=j1 {
                        let x0 = h.lo.c[0] + i as f64 * bs.c[0];
                        let y0 = h.lo.c[1] + j as f64 * bs.c[1];
                        let ov = clip_area(&poly, x0, x0 + bs.c[0], y0, y0 + bs.c[1]);
                        h.mass[i * nb + j] += m * ov / area;
                    }
                }
            }
            _ => {
                let i = h.index(&p.x);
                h.mass[i] += m;
            }
        }
    }
    h.normalize();
    Ok(h)
}

/// Histogram of c_n·Lebesgue on P (exact bin areas by polygon clipping).
pub fn lebesgue_histogram(p: &Polytope, levels: u32) -> Histogram {
    let mut h = Histogram::empty(p, levels);
    let nb = h.bins_per_axis();
    let bs = h.bin_size();
    match p.dim {
        1 => {
            for b in 0..nb {
                h.mass[b] = bs.c[0];
            }
        }
        2 => {
            let poly = polygon(p);
            for i in 0..nb {
                for j in 0..nb {
                    let x0 = h.lo.c[0] + i as f64 * bs.c[0];
                    let y0 = h.lo.c[1] + j as f64 * bs.c[1];
                    h.mass[i * nb + j] = clip_area(&poly, x0, x0 + bs.c[0], y0, y0 + bs.c[1]);
                }
            }
        }
        _ => {
            // 3-d: midpoint sampling of each bin against the facets
            let sub = 8usize;
            for idx in 0..h.mass.len() {
                let (i, j, k) = (idx / (nb * nb), (idx / nb) % nb, idx % nb);
                let mut cnt = 0usize;
                for a in 0..sub {
                    for b in 0..sub {
                        for c in 0..sub {
                            let x = Vecd::from_slice(&[
                                h.lo.c[0] + (i as f64 + (a as f64 + 0.5) / sub as f64) * bs.c[0],
                                h.lo.c[1] + (j as f64 + (b as f64 + 0.5) / sub as f64) * bs.c[1],
                                h.lo.c[2] + (k as f64 + (c as f64 + 0.5) / sub as f64) * bs.c[2],
                            ]);
                            if p.contains(&x, 0.0) {
                                cnt += 1;
                            }
                        }
                    }
                }
                h.mass[idx] = cnt as f64;
            }
        }
    }
    h.normalize();
    h
}

/// Vertices of a 2-d polytope in counter-clockwise order.
fn polygon(p: &Polytope) -> Vec<[f64; 2]> {
    let c = p.vertex_centroid();
    let mut v: Vec<[f64; 2]> = p.vertices.iter().map(|v| [v.x.c[0], v.x.c[1]]).collect();
    v.sort_by(|a, b| {
        let ta = libm::atan2(a[1] - c.c[1], a[0] - c.c[0]);
        let tb = libm::atan2(b[1] - c.c[1], b[0] - c.c[0]);
        ta.partial_cmp(&tb).unwrap()
    });
    v
}

fn clip_area(poly: &[[f64; 2]], x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let mut pts: Vec<[f64; 2]> = poly.to_vec();
    // half-planes a·p ≤ b
    let planes = [([-1.0, 0.0], -x0), ([1.0, 0.0], x1), ([0.0, -1.0], -y0), ([0.0, 1.0], y1)];
    for (a, b) in planes {
        if pts.is_empty() {
            break;
        }
        let mut out = Vec::with_capacity(pts.len() + 1);
        for k in 0..pts.len() {
            let p = pts[k];
            let q = pts[(k + 1) % pts.len()];
            let fp = a[0] * p[0] + a[1] * p[1] - b;
            let fq = a[0] * q[0] + a[1] * q[1] - b;
            if fp <= 0.0 {
                out.push(p);
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                let t = fp / (fp - fq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        pts = out;
    }
    let mut a = 0.0;
    for k in 0..pts.len() {
        let p = pts[k];
        let q = pts[(k + 1) % pts.len()];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a.abs()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W1Bounds {
    /// max over axes of the exact 1-d distance between marginals
    pub lower: f64,
    /// dyadic-tree transport cost
    pub upper: f64,
}

/// W₁ between two histograms on the same bins, both viewed as measures on
/// bin centres.
pub fn w1_histograms(a: &Histogram, b: &Histogram) -> Result<W1Bounds> {
    if a.dim != b.dim || a.levels != b.levels || a.lo != b.lo || a.hi != b.hi {
        return Err(Error::IncompatibleGrids);
    }
    let n = a.dim;
    let nb = a.bins_per_axis();
    let bs = a.bin_size();
    // lower bound: marginals
    let mut lower: f64 = 0.0;
    for ax in 0..n {
        let mut ma = alloc::vec![0.0; nb];
        let mut mb = alloc::vec![0.0; nb];
        for idx in 0..a.mass.len() {
            let mut r = idx;
            let mut coord = 0;
            for d in (0..n).rev() {
                if d == ax {
                    coord = r % nb;
                }
                r /= nb;
            }
            ma[coord] += a.mass[idx];
            mb[coord] += b.mass[idx];
        }
        let mut cum = 0.0;
        let mut w = 0.0;
        for k in 0..nb - 1 {
            cum += ma[k] - mb[k];
            w += cum.abs() * bs.c[ax];
        }
        lower = lower.max(w);
    }
    // upper bound: at each level, imbalance inside a parent cell is moved at
    // most one parent diameter
    let mut diff: Vec<f64> = a.mass.iter().zip(&b.mass).map(|(x, y)| x - y).collect();
    let mut side = nb;
    let mut upper = 0.0;
    let mut level = a.levels;
    while level > 0 {
        let half = side / 2;
        let mut parent = alloc::vec![0.0; half.pow(n as u32)];
        let mut pabs = alloc::vec![0.0; half.pow(n as u32)];
        for idx in 0..diff.len() {
            let mut r = idx;
            let mut pidx = 0;
            let mut mul = 1;
            for _ in 0..n {
                let c = r % side;
                r /= side;
                pidx += (c / 2) * mul;
                mul *= half;
            }
            parent[pidx] += diff[idx];
            pabs[pidx] += diff[idx].abs();
        }
        // parent diameter at this level
        let scale = (nb / half) as f64;
        let mut diam2 = 0.0;
        for ax in 0..n {
            diam2 += (bs.c[ax] * scale) * (bs.c[ax] * scale);
        }
        let diam = libm::sqrt(diam2);
        for (pa, d) in pabs.iter().zip(&parent) {
            upper += 0.5 * (pa - d.abs()) * diam;
        }
        diff = parent;
        side = half;
        level -= 1;
    }
    Ok(W1Bounds { lower, upper })
}

/// Exact W₁ between the interval pushforward (each s-cell spread uniformly
/// over its linearised image, as in [`dh_pushforward`]) and normalized
/// Lebesgue measure: ∫|F_μ − F_ν| with both CDFs piecewise linear.
pub fn w1_atoms_interval(st: &KahlerState) -> Result<f64> {
    let sd = st.sdata()?;
    if st.dim() != 1 {
        return Err(Error::Invalid("interval only".into()));
    }
    let (lo, hi) = bbox(st.polytope());
    let (a, b) = (lo.c[0], hi.c[0]);
    let half = 0.5 * sd.grid.spec.spacing();
    let cells: Vec<(f64, f64, f64)> = sd
        .pts
        .iter()
        .zip(&sd.grid.weights)
        .map(|(p, w)| {
            let r = p.hess.c[0][0] * half;
            ((p.x.c[0] - r).max(a), (p.x.c[0] + r).min(b), w * libm::exp(-p.ld_g))
        })
        .collect();
    let tot: f64 = cells.iter().map(|c| c.2).sum();
    let cdf = |x: f64| -> f64 {
        cells
            .iter()
            .map(|&(l, r, m)| {
                let f = if x >= r {
                    1.0
                } else if x <= l {
                    0.0
                } else {
                    (x - l) / (r - l)
                };
                f * m
            })
            .sum::<f64>()
            / tot
    };
    let mut brk: Vec<f64> = cells.iter().flat_map(|c| [c.0, c.1]).chain([a, b]).collect();
    brk.sort_by(|x, y| x.partial_cmp(y).unwrap());
    brk.dedup();
    let len = b - a;
    let mut w = 0.0;
    let mut f0 = cdf(brk[0]) - (brk[0] - a) / len;
    for k in 1..brk.len() {
        let (x0, x1) = (brk[k - 1], brk[k]);
        let f1 = cdf(x1) - (x1 - a) / len;
        // |linear| on [x0, x1]
        w += if f0 * f1 >= 0.0 {
            0.5 * (f0.abs() + f1.abs()) * (x1 - x0)
        } else {
            0.5 * (f0 * f0 + f1 * f1) / (f0.abs() + f1.abs()) * (x1 - x0)
        };
        f0 = f1;
    }
    Ok(w)
}

/// Exact W₁ between two histograms (bin centres, Euclidean cost) by
/// successive shortest paths on the bipartite excess/deficit graph.
pub fn w1_histograms_exact(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.dim != b.dim || a.levels != b.levels || a.lo != b.lo || a.hi != b.hi {
        return Err(Error::IncompatibleGrids);
    }
    let n = a.dim;
    let nb = a.bins_per_axis();
    let bs = a.bin_size();
    let centre = |idx: usize| -> Vecd {
        let mut r = idx;
        let mut c = Vecd::zeros(n);
        for d in (0..n).rev() {
            c.c[d] = a.lo.c[d] + ((r % nb) as f64 + 0.5) * bs.c[d];
            r /= nb;
        }
        c
    };
    let mut sup = Vec::new();
    let mut dem = Vec::new();
    for (i, (x, y)) in a.mass.iter().zip(&b.mass).enumerate() {
        let d = x - y;
        if d > 0.0 {
            sup.push((centre(i), d));
        } else if d < 0.0 {
            dem.push((centre(i), -d));
        }
    }
    Ok(transport_cost(&sup, &dem))
}

/// Min-cost transport between point masses (totals need not match exactly;
/// the smaller total is shipped).
pub fn transport_cost(sup: &[(Vecd, f64)], dem: &[(Vecd, f64)]) -> f64 {
    let (ns, nd) = (sup.len(), dem.len());
    if ns == 0 || nd == 0 {
        return 0.0;
    }
    let cost: Vec<f64> = (0..ns * nd).map(|k| (sup[k / nd].0 - dem[k % nd].0).norm()).collect();
    let mut flow = alloc::vec![0.0; ns * nd];
    let mut rs: Vec<f64> = sup.iter().map(|s| s.1).collect();
    let mut rd: Vec<f64> = dem.iter().map(|d| d.1).collect();
    // node potentials: supplies 0..ns, demands ns..ns+nd
    let mut pot = alloc::vec![0.0; ns + nd];
    let tot = rs.iter().sum::<f64>().min(rd.iter().sum::<f64>());
    let eps = 1e-15 * tot.max(1e-300);
    let mut shipped = 0.0;
    while tot - shipped > eps {
        // Dijkstra from all supplies with remaining mass
        let nn = ns + nd;
        let mut dist = alloc::vec![f64::INFINITY; nn];
        let mut prev = alloc::vec![usize::MAX; nn];
        let mut done = alloc::vec![false; nn];
        for i in 0..ns {
            if rs[i] > eps {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..nn {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < ns {
                for j in 0..nd {
                    let v = ns + j;
                    let rc = cost[u * nd + j] + pot[u] - pot[v];
                    let nd_ = best + rc.max(0.0);
                    if nd_ < dist[v] {
                        dist[v] = nd_;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - ns;
                for i in 0..ns {
                    if flow[i * nd + j] > eps {
                        let rc = -cost[i * nd + j] + pot[u] - pot[i];
                        let nd_ = best + rc.max(0.0);
                        if nd_ < dist[i] {
                            dist[i] = nd_;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        // nearest demand with remaining capacity
        let mut t = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..nd {
            if rd[j] > eps && dist[ns + j] < best {
                best = dist[ns + j];
                t = ns + j;
            }
        }
        if t == usize::MAX {
            break;
        }
        for k in 0..nn {
            if dist[k].is_finite() {
                pot[k] += dist[k];
            }
        }
        // bottleneck
        let mut amt = rd[t - ns];
        let mut v = t;
        let src;
        loop {
            let u = prev[v];
            if u == usize::MAX {
                src = v;
                break;
            }
            if u >= ns {
                amt = amt.min(flow[v * nd + (u - ns)]);
            }
            v = u;
        }
        amt = amt.min(rs[src]);
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < ns {
                flow[u * nd + (v - ns)] += amt;
            } else {
                flow[v * nd + (u - ns)] -= amt;
            }
            v = u;
        }
        rs[src] -= amt;
        rd[t - ns] -= amt;
        shipped += amt;
    }
    flow.iter().zip(&cost).map(|(f, c)| f * c).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhCheck {
    /// exact transport distance between the two histograms (unit masses)
    pub w1: f64,
    pub bounds: W1Bounds,
    /// |mass of the s-grid pushforward − V| / V
    pub mass_defect: f64,
    /// |∫(x − x̄) dDH| on the x-path
    pub centering: f64,
}

/// Pushforward of the state's MA measure against c_n·Lebesgue on P.
pub fn dh_check(st: &KahlerState, levels: u32) -> Result<DhCheck> {
    let a = dh_pushforward(st, levels)?;
    let b = lebesgue_histogram(st.polytope(), levels);
    let bounds = w1_histograms(&a, &b)?;
    let w1 = w1_histograms_exact(&a, &b)?;
    let xb = st.barycenter();
    let mut c = Vecd::zeros(st.dim());
    for (x, w) in st.quad.nodes.iter().zip(&st.quad.weights) {
        c = c + (*x - xb).scale(st.cn * w);
    }
    let v = st.volume();
    Ok(DhCheck { w1, bounds, mass_defect: (a.total - v).abs() / v, centering: c.norm_inf() })
}

// -------------------------------------------------------- Euler–Lagrange

#[derive(Clone, Debug, PartialEq)]
pub struct ElRow {
    pub name: String,
    pub ts: [f64; 2],
    /// |central difference − ∫ f μ_φ| at each t
    pub errors: [f64; 2],
    pub expected: f64,
    pub order: f64,
    /// both errors at round-off level (functional is exactly quadratic in t)
    pub exact: bool,
    pub pass: bool,
}

pub const EL_MIN_ORDER: f64 = 1.8;

/// Central differences of E, E_v, E_v^{dd^c g} and ent_v + R_v along
/// F_φ + t f̃(∇F_φ), compared with the pairing of f = f̃∘m against
/// MA, MA_v, MA_v^Θ and −S_v MA_v.
pub fn euler_lagrange_suite(base: &KahlerState, st: &KahlerState, v: &Weight, twist: &Correction, f: &Correction, ts: [f64; 2]) -> Result<Vec<ElRow>> {
    compatible(base, st)?;
    let q = &base.quad;
    let cn = base.cn;
    let fx: Vec<f64> = q.nodes.iter().map(|x| f.jet(x, 0).v).collect();
    let pair = |d: &dyn Fn(usize) -> f64| -> f64 { (0..q.nodes.len()).map(|i| q.weights[i] * fx[i] * d(i)).sum() };
    let theta = EquivariantTwist::Exact(SFunction::Pullback { pot: base.potential.clone(), f: twist.clone() });
    let tw = crate::ma::ma_twisted(st, v, &theta)?.x.unwrap_or_default();
    let slah = lahdili_on_nodes(st, v)?;
    let vx: Vec<f64> = q.nodes.iter().map(|x| v.eval(x)).collect();
    let expected = [pair(&|_| cn), pair(&|i| cn * vx[i]), pair(&|i| tw[i]), pair(&|i| -cn * slah[i])];
    let names = ["E", "E_v", "E_v^Theta", "ent_v+R_v"];
    let eval = |k: usize, n: &NodalPotential| -> Result<f64> {
        match k {
            0 => energy(base, n),
            1 => weighted_energy(base, n, v),
            2 => twisted_energy(base, n, v, &theta),
            _ => entropy_plus_ricci(base, n, v),
        }
    };
    let mut errs = [[0.0; 4]; 2];
    for (j, t) in ts.iter().enumerate() {
        let a = NodalPotential::perturbed(&st.potential, q, f, *t)?;
        let b = NodalPotential::perturbed(&st.potential, q, f, -*t)?;
        for k in 0..4 {
            errs[j][k] = ((eval(k, &a)? - eval(k, &b)?) / (2.0 * t) - expected[k]).abs();
        }
    }
    let ratio = ts[0] / ts[1];
    Ok((0..4)
        .map(|k| {
            let e = [errs[0][k], errs[1][k]];
            let floor = 1e-10 * (1.0 + expected[k].abs());
            let exact = e[0] <= floor && e[1] <= floor;
            let order = libm::log(e[0] / e[1]) / libm::log(ratio);
            ElRow {
                name: String::from(names[k]),
                ts,
                errors: e,
                expected: expected[k],
                order,
                exact,
                pass: exact || order >= EL_MIN_ORDER,
            }
        })
        .collect())
}
