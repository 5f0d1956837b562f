//! Symplectic potentials G = G_can + h on a Delzant polytope and their
//! pointwise evaluation.
//!
//! Near ∂P the Hessian ∇²G = Σ u_i u_iᵀ/(2ℓ_i) + ∇²h blows up.  Everything is
//! therefore computed from the bounded saddle-point matrix
//!
//! ```text
//!     K = [ ∇²h   Uᵀ ]         K⁻¹ = [ H   Pᵀ ]
//!         [ U    −Λ  ],              [ P  −W  ],   Λ = diag(2ℓ_i),
//! ```
//!
//! which stays invertible up to the boundary.  H = (∇²G)⁻¹, the rows of P are
//! p_i = H u_i /(2ℓ_i), and W = Λ⁻¹ − Λ⁻¹ U H Uᵀ Λ⁻¹; all three are bounded,
//! and log det ∇²G = log|det K| − Σ log 2ℓ_i separates the singular part.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{Matd, Ten3, Vecd};
use crate::torus::{Polynomial, Polytope};

/// Smooth correction h on P̄ (closed-form expression tree with exact
/// derivatives to fourth order).
#[derive(Clone, Debug, PartialEq)]
pub enum Correction {
    Zero,
    Constant(f64),
    Affine { xi: Vecd, c: f64 },
    /// (x−center)ᵀ A (x−center)
    Quadratic { center: Vecd, a: Matd },
    /// amp · τ · log Σ_i exp((⟨ξ_i,x⟩ + b_i)/τ)
    LogSumExp { xis: Vec<Vecd>, bs: Vec<f64>, tau: f64, amp: f64 },
    /// coef · ℓ log ℓ for ℓ(x) = ⟨u,x⟩ + λ, which must stay positive on P̄.
    EllLogEll { u: Vecd, lambda: f64, coef: f64 },
    Polynomial(Polynomial),
    Sum(Vec<Correction>),
    Scaled(f64, Box<Correction>),
}

impl Correction {
    pub fn quadratic_iso(center: Vecd, a: f64) -> Correction {
        Correction::Quadratic { center, a: Matd::identity(center.n).scale(a) }
    }

    pub fn plus(self, o: Correction) -> Correction {
        match (self, o) {
            (Correction::Zero, b) => b,
            (a, Correction::Zero) => a,
            (Correction::Sum(mut v), b) => {
                v.push(b);
                Correction::Sum(v)
            }
            (a, b) => Correction::Sum(vec![a, b]),
        }
    }

    pub fn scaled(self, s: f64) -> Correction {
        if s == 1.0 {
            self
        } else if matches!(self, Correction::Zero) || s == 0.0 {
            Correction::Zero
        } else {
            Correction::Scaled(s, Box::new(self))
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Correction::Zero)
    }

    pub fn jet(&self, x: &Vecd, order: u8) -> Jet {
        let n = x.n;
        match self {
            Correction::Zero => Jet::constant(n, order, 0.0),
            Correction::Constant(c) => Jet::constant(n, order, *c),
            Correction::Affine { xi, c } => Jet::affine(x, xi, *c, order),
            Correction::Quadratic { center, a } => {
                let d = *x - *center;
                let ad = a.mul_vec(&d);
                let mut j = Jet::constant(n, order, d.dot(&ad));
                let at = a.transpose();
                let atd = at.mul_vec(&d);
                j.g = ad + atd;
                j.h = *a + at;
                j
            }
            Correction::LogSumExp { xis, bs, tau, amp } => {
                // cumulant form: derivatives of τ log Σ e^{z_i/τ}
                let zs: Vec<f64> = xis.iter().zip(bs).map(|(xi, b)| (xi.dot(x) + b) / tau).collect();
                let zmax = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let es: Vec<f64> = zs.iter().map(|z| libm::exp(z - zmax)).collect();
                let tot: f64 = es.iter().sum();
                let p: Vec<f64> = es.iter().map(|e| e / tot).collect();
                let mut mu = Vecd::zeros(n);
                for (pi, xi) in p.iter().zip(xis) {
                    mu = mu + xi.scale(*pi);
                }
                let mut j = Jet::constant(n, order, amp * tau * (zmax + libm::log(tot)));
                j.g = mu.scale(*amp);
                let cs: Vec<Vecd> = xis.iter().map(|xi| *xi - mu).collect();
                let mut cov = Matd::zeros(n);
                for (pi, c) in p.iter().zip(&cs) {
                    cov = cov + c.outer(c).scale(*pi);
                }
                j.h = cov.scale(amp / tau);
                if order >= 3 {
                    for (pi, c) in p.iter().zip(&cs) {
                        j.t.add_scaled_cube(c, pi * amp / (tau * tau));
                    }
                }
                if order >= 4 {
                    let s = amp / (tau * tau * tau);
                    for (pi, c) in p.iter().zip(&cs) {
                        j.q.add_scaled_quartic(c, pi * s);
                    }
                    for i in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                for m in 0..n {
                                    j.q.c[i][k][l][m] -= s
                                        * (cov.c[i][k] * cov.c[l][m] + cov.c[i][l] * cov.c[k][m] + cov.c[i][m] * cov.c[k][l]);
                                }
                            }
                        }
                    }
                }
                j
            }
            Correction::EllLogEll { u, lambda, coef } => {
                let l = Jet::affine(x, u, *lambda, order);
                let lv = l.v;
                let lv2 = lv * lv;
                // φ(ℓ) = coef·ℓ log ℓ
                l.compose([
                    coef * lv * libm::log(lv),
                    coef * (libm::log(lv) + 1.0),
                    coef / lv,
                    -coef / lv2,
                    2.0 * coef / (lv2 * lv),
                ])
            }
            Correction::Polynomial(p) => p.jet(x, order),
            Correction::Sum(v) => {
                let mut j = Jet::constant(n, order, 0.0);
                for c in v {
                    j = j.add(&c.jet(x, order));
                }
                j.order = order;
                j
            }
            Correction::Scaled(s, c) => c.jet(x, order).scale(*s),
        }
    }
}

/// Symplectic potential G = ½Σ ℓ_i log ℓ_i + h on P.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticPotential {
    pub polytope: Arc<Polytope>,
    pub h: Correction,
}

/// Everything known about G at one point x ∈ P̄.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub x: Vecd,
    pub ells: Vec<f64>,
    pub g: f64,
    pub grad: Vecd,
    /// H = (∇²G)⁻¹ (restricted inverse on ∂P).
    pub hinv: Matd,
    /// p_i = H u_i / (2ℓ_i).
    pub p: Vec<Vecd>,
    /// W (m×m, row-major).
    pub w: Vec<f64>,
    /// log|det K|; log det ∇²G = ld_reg − Σ log 2ℓ_i.
    pub ld_reg: f64,
    pub jet: Jet,
}

/// Third-order data: ∂_k H, ∂_l p_i, Σ_i ∂_i H^{ij} and Σ_ij ∂_ij H^{ij}.
#[derive(Clone, Debug)]
pub struct PointDerivs {
    /// dh[k] = ∂_k H
    pub dh: Ten3,
    /// dp[l][i] = ∂_l p_i
    pub dp: Vec<Vec<Vecd>>,
    pub div: Vecd,
    /// d2h[k][l] = ∂_k∂_l H (only when requested).
    pub d2h: Option<Vec<Vec<Matd>>>,
    pub ddh: f64,
}

impl SymplecticPotential {
    pub fn guillemin(p: Arc<Polytope>) -> Self {
        SymplecticPotential { polytope: p, h: Correction::Zero }
    }

    pub fn with_correction(p: Arc<Polytope>, h: Correction) -> Self {
        SymplecticPotential { polytope: p, h }
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim
    }

    /// G − G_can shifted by δ: G + δ.
    pub fn add_correction(&self, h: Correction) -> Self {
        SymplecticPotential { polytope: self.polytope.clone(), h: self.h.clone().plus(h) }
    }

    pub fn ells(&self, x: &Vecd) -> Vec<f64> {
        self.polytope.facets.iter().map(|f| f.ell(x)).collect()
    }

    pub fn value(&self, x: &Vecd) -> f64 {
        let ells = self.ells(x);
        self.value_with(x, &ells)
    }

    pub fn value_with(&self, x: &Vecd, ells: &[f64]) -> f64 {
        let mut g = self.h.jet(x, 0).v;
        for &l in ells {
            if l > 0.0 {
                g += 0.5 * l * libm::log(l);
            }
        }
        g
    }

    /// ∇G at x with given slacks (all positive).
    pub fn gradient_with(&self, x: &Vecd, ells: &[f64]) -> Vecd {
        let mut gr = self.h.jet(x, 1).g;
        for (f, &l) in self.polytope.facets.iter().zip(ells) {
            gr = gr + f.u.scale(0.5 * (libm::log(l) + 1.0));
        }
        gr
    }

    pub fn eval(&self, x: &Vecd, order: u8) -> Result<PointEval> {
        let ells = self.ells(x);
        self.eval_with(x, &ells, order)
    }

    /// Pointwise data; `order` is the jet order of h (2 suffices for H, 3 for
    /// ∂H, 4 for ∂²H).
    pub fn eval_with(&self, x: &Vecd, ells: &[f64], order: u8) -> Result<PointEval> {
        let p = &*self.polytope;
        let n = p.dim;
        let m = p.facets.len();
        let jet = self.h.jet(x, order.max(2));
        let sz = n + m;
        let mut k = vec![0.0; sz * sz];
        for i in 0..n {
            for j in 0..n {
                k[i * sz + j] = jet.h.c[i][j];
            }
        }
        for (r, f) in p.facets.iter().enumerate() {
            for c in 0..n {
                k[(n + r) * sz + c] = f.u.c[c];
                k[c * sz + n + r] = f.u.c[c];
            }
            k[(n + r) * sz + n + r] = -2.0 * ells[r].max(0.0);
        }
        let (kinv, logdet) = invert(sz, &k).ok_or(Error::ConvexityViolation { min_eigenvalue: 0.0 })?;
        let mut hinv = Matd::zeros(n);
        for i in 0..n {
            for j in 0..n {
                hinv.c[i][j] = kinv[i * sz + j];
            }
        }
        let mut pv = Vec::with_capacity(m);
        for r in 0..m {
            let mut v = Vecd::zeros(n);
            for c in 0..n {
                v.c[c] = kinv[(n + r) * sz + c];
            }
            pv.push(v);
        }
        let mut w = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                w[a * m + b] = -kinv[(n + a) * sz + n + b];
            }
        }
        let mut g = jet.v;
        let mut grad = jet.g;
        for (f, &l) in p.facets.iter().zip(ells) {
            if l > 0.0 {
                g += 0.5 * l * libm::log(l);
                grad = grad + f.u.scale(0.5 * (libm::log(l) + 1.0));
            } else {
                grad = grad + f.u.scale(f64::NEG_INFINITY);
            }
        }
        Ok(PointEval { x: *x, ells: ells.to_vec(), g, grad, hinv, p: pv, w, ld_reg: logdet, jet })
    }

    /// Strict convexity check at the supplied nodes: min eigenvalue of H⁻¹
    /// must exceed `margin` (returned: smallest eigenvalue of ∇²G seen,
    /// evaluated through H for stability).
    pub fn check_convex<'a>(&self, nodes: impl IntoIterator<Item = &'a Vecd>, margin: f64) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for x in nodes {
            let e = match self.eval(x, 2) {
                Ok(e) => e,
                Err(_) => return Err(Error::ConvexityViolation { min_eigenvalue: f64::NAN }),
            };
            // eigenvalues of ∇²G are reciprocals of those of H
            let ev = e.hinv.sym_eigenvalues();
            let lo_h = ev.c[0];
            let hi_h = ev.c[e.hinv.n - 1];
            if !(lo_h > 0.0) {
                return Err(Error::ConvexityViolation { min_eigenvalue: if lo_h == 0.0 { f64::NAN } else { 1.0 / lo_h } });
            }
            let min_eig = 1.0 / hi_h;
            if !(min_eig > margin) {
                return Err(Error::ConvexityViolation { min_eigenvalue: min_eig });
            }
            worst = worst.min(min_eig);
        }
        Ok(worst)
    }
}

impl PointEval {
    pub fn dim(&self) -> usize {
        self.x.n
    }

    /// log det ∇²G (−∞ never occurs in the interior).
    pub fn logdet(&self) -> f64 {
        self.ld_reg - self.ells.iter().map(|l| libm::log(2.0 * l)).sum::<f64>()
    }

    /// ∇²G itself (interior points only).
    pub fn hessian(&self, p: &Polytope) -> Matd {
        let mut m = self.jet.h;
        for (f, &l) in p.facets.iter().zip(&self.ells) {
            m = m + f.u.outer(&f.u).scale(0.5 / l);
        }
        m
    }

    /// H ∇_x log det ∇²G, computed from bounded pieces.
    pub fn h_grad_logdet(&self, p: &Polytope, d: &PointDerivs) -> Vecd {
        // Σ_i ∂_i H^{ia} = −(H ∇LD)_a
        let _ = p;
        d.div.scale(-1.0)
    }

    /// ∂H, ∂p and (optionally) ∂²H.  Requires the jet order to have been ≥ 3
    /// (≥ 4 when `second` is set).
    pub fn derivs(&self, p: &Polytope, second: bool) -> PointDerivs {
        let n = self.dim();
        let m = self.ells.len();
        let h = &self.hinv;
        let tk: Vec<Matd> = (0..n).map(|k| self.jet.t.slice(k)).collect();
        let mut dh = Ten3::zeros(n);
        let mut dhm: Vec<Matd> = Vec::with_capacity(n);
        for k in 0..n {
            let mut a = h.mul_mat(&tk[k]).mul_mat(h).scale(-1.0);
            for (i, f) in p.facets.iter().enumerate() {
                let c = 2.0 * f.u.c[k];
                if c != 0.0 {
                    a = a + self.p[i].outer(&self.p[i]).scale(c);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    dh.c[k][i][j] = a.c[i][j];
                }
            }
            dhm.push(a);
        }
        let mut dp = vec![vec![Vecd::zeros(n); m]; n];
        for l in 0..n {
            let ht = h.mul_mat(&tk[l]);
            for i in 0..m {
                let mut v = ht.mul_vec(&self.p[i]).scale(-1.0);
                for (j, f) in p.facets.iter().enumerate() {
                    let c = -2.0 * f.u.c[l] * self.w[j * m + i];
                    if c != 0.0 {
                        v = v + self.p[j].scale(c);
                    }
                }
                dp[l][i] = v;
            }
        }
        let mut div = Vecd::zeros(n);
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += dh.c[i][i][j];
            }
            div.c[j] = s;
        }
        let mut ddh = 0.0;
        let mut d2h_out = None;
        if second {
            let mut d2 = vec![vec![Matd::zeros(n); n]; n];
            for k in 0..n {
                for l in k..n {
                    let qkl = self.jet.q.slice2(k, l);
                    let mut a = dhm[l].mul_mat(&tk[k]).mul_mat(h)
                        + h.mul_mat(&qkl).mul_mat(h)
                        + h.mul_mat(&tk[k]).mul_mat(&dhm[l]);
                    a = a.scale(-1.0);
                    for (i, f) in p.facets.iter().enumerate() {
                        let c = 2.0 * f.u.c[k];
                        if c != 0.0 {
                            let t = dp[l][i].outer(&self.p[i]);
                            a = a + (t + t.transpose()).scale(c);
                        }
                    }
                    d2[k][l] = a;
                    if l != k {
                        d2[l][k] = a;
                    }
                }
            }
            for k in 0..n {
                for l in 0..n {
                    ddh += d2[k][l].c[k][l];
                }
            }
            d2h_out = Some(d2);
        }
        PointDerivs { dh, dp, div, d2h: d2h_out, ddh }
    }
}

/// Gauss–Jordan inverse with partial pivoting; returns (inverse, log|det|).
pub(crate) fn invert(n: usize, a: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut logdet = 0.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
                inv.swap(col * n + c, piv * n + c);
            }
        }
        let d = m[col * n + col];
        logdet += libm::log(d.abs());
        let rd = 1.0 / d;
        for c in 0..n {
            m[col * n + c] *= rd;
            inv[col * n + c] *= rd;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f != 0.0 {
                for c in 0..n {
                    m[r * n + c] -= f * m[col * n + c];
                    inv[r * n + c] -= f * inv[col * n + c];
                }
            }
        }
    }
    Some((inv, logdet))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Polytope;

    fn fd_hinv(pot: &SymplecticPotential, x: &Vecd) -> Matd {
        pot.eval(x, 2).unwrap().hinv
    }

    #[test]
    fn interval_closed_forms() {
        let p = Arc::new(Polytope::interval(-1.0, 1.0).unwrap());
        let g = SymplecticPotential::guillemin(p.clone());
        for &x in &[-0.999999, -0.3, 0.0, 0.7, 0.9999] {
            let e = g.eval(&Vecd::from_slice(&[x]), 4).unwrap();
            assert!((e.hinv.c[0][0] - (1.0 - x * x)).abs() < 1e-15);
            let d = e.derivs(&p, true);
            assert!((d.div.c[0] + 2.0 * x).abs() < 1e-14);
            assert!((d.ddh + 2.0).abs() < 1e-13);
            assert!((e.logdet() + libm::log((1.0 - x) * (1.0 + x))).abs() < 1e-12);
        }
        // on the facet itself H vanishes
        let e = g.eval(&Vecd::from_slice(&[1.0]), 2).unwrap();
        assert!(e.hinv.c[0][0].abs() < 1e-16);
    }

    #[test]
    fn derivatives_match_finite_differences_2d() {
        let p = Arc::new(Polytope::simplex(2, 3.0).unwrap());
        let h = Correction::LogSumExp {
            xis: vec![Vecd::from_slice(&[1.0, 0.2]), Vecd::from_slice(&[-0.4, 0.8]), Vecd::from_slice(&[0.1, -0.9])],
            bs: vec![0.0, 0.3, -0.2],
            tau: 0.7,
            amp: 0.3,
        }
        .plus(Correction::quadratic_iso(Vecd::from_slice(&[1.0, 1.0]), 0.05));
        let pot = SymplecticPotential::with_correction(p.clone(), h);
        let x = Vecd::from_slice(&[0.4, 1.7]);
        let e = pot.eval(&x, 4).unwrap();
        let d = e.derivs(&p, true);
        let step = 1e-5;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp.c[k] += step;
            xm.c[k] -= step;
            let fd = (fd_hinv(&pot, &xp) - fd_hinv(&pot, &xm)).scale(0.5 / step);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((fd.c[i][j] - d.dh.c[k][i][j]).abs() < 1e-8);
                }
            }
            let dp = pot.eval(&xp, 4).unwrap().derivs(&p, false).dh;
            let dm = pot.eval(&xm, 4).unwrap().derivs(&p, false).dh;
            let d2 = d.d2h.as_ref().unwrap();
            for l in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let f = (dp.c[l][i][j] - dm.c[l][i][j]) / (2.0 * step);
                        assert!((f - d2[k][l].c[i][j]).abs() < 1e-6);
                    }
                }
            }
        }
        // H is the inverse Hessian
        let hm = e.hessian(&p);
        let id = hm.mul_mat(&e.hinv);
        assert!((id.c[0][0] - 1.0).abs() < 1e-13 && id.c[0][1].abs() < 1e-13);
        assert!((e.logdet() - hm.det().ln()).abs() < 1e-12);
    }
}
