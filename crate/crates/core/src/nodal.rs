//! Values of a symplectic potential at the quadrature nodes of P and ∂P.
//!
//! Besides evaluating an analytic potential, this builds the exact nodal data
//! of the perturbed Kähler potential F + t·(f̃∘∇F): for s′ = ∇G(x′) one has
//! ∇F_t(s′) = x′ + tH(x′)∇f̃(x′), so each node x is pulled back by a small
//! Newton solve and G_t, ∇G_t, log det ∇²G_t follow in closed form.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Matd, Vecd};
use crate::par;
use crate::potential::{Correction, PointEval, SymplecticPotential};
use crate::quadrature::PolytopeQuadrature;

#[derive(Clone, Debug, PartialEq)]
pub struct NodalPotential {
    /// G at interior nodes
    pub g: Vec<f64>,
    /// ∇G at interior nodes (empty for value-only data such as envelopes)
    pub grad: Vec<Vecd>,
    /// log det ∇²G at interior nodes (empty for value-only data)
    pub ld: Vec<f64>,
    /// G at facet nodes
    pub gb: Vec<f64>,
}

fn node_ells(pot: &SymplecticPotential, x: &Vecd, facet: Option<usize>) -> Vec<f64> {
    let mut l = pot.ells(x);
    if let Some(f) = facet {
        l[f] = 0.0;
    }
    for v in l.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    l
}

/// ∇G without the (infinite) terms of facets through x.
pub fn regular_gradient(pot: &SymplecticPotential, e: &PointEval) -> Vecd {
    let mut g = e.jet.g;
    for (f, &l) in pot.polytope.facets.iter().zip(&e.ells) {
        if l > 0.0 {
            g = g + f.u.scale(0.5 * (libm::log(l) + 1.0));
        }
    }
    g
}

impl NodalPotential {
    pub fn from_potential(pot: &SymplecticPotential, q: &PolytopeQuadrature) -> Result<NodalPotential> {
        let inner = par::try_map(q.nodes.len(), |i| {
            let x = &q.nodes[i];
            let e = pot.eval_with(x, &node_ells(pot, x, None), 2)?;
            Ok::<_, Error>((e.g, e.grad, e.logdet()))
        })?;
        let gb = q
            .facet_nodes
            .iter()
            .map(|fnode| pot.value_with(&fnode.x, &node_ells(pot, &fnode.x, Some(fnode.facet))))
            .collect();
        let mut out = NodalPotential { g: Vec::new(), grad: Vec::new(), ld: Vec::new(), gb };
        for (g, gr, ld) in inner {
            out.g.push(g);
            out.grad.push(gr);
            out.ld.push(ld);
        }
        Ok(out)
    }

    pub fn values_only(g: Vec<f64>, gb: Vec<f64>) -> NodalPotential {
        NodalPotential { g, grad: Vec::new(), ld: Vec::new(), gb }
    }

    pub fn has_derivatives(&self) -> bool {
        !self.grad.is_empty() && !self.ld.is_empty()
    }

    /// Pointwise maximum (rooftop envelope on the symplectic side).
    pub fn max(&self, o: &NodalPotential) -> NodalPotential {
        NodalPotential::values_only(
            self.g.iter().zip(&o.g).map(|(a, b)| a.max(*b)).collect(),
            self.gb.iter().zip(&o.gb).map(|(a, b)| a.max(*b)).collect(),
        )
    }

    /// G − c, i.e. the Kähler potential shifted by +c.
    pub fn shifted(&self, c: f64) -> NodalPotential {
        let mut r = self.clone();
        r.g.iter_mut().for_each(|v| *v -= c);
        r.gb.iter_mut().for_each(|v| *v -= c);
        r
    }

    /// Nodal data of the potential whose Kähler potential is F + t·f̃(∇F).
    pub fn perturbed(pot: &SymplecticPotential, q: &PolytopeQuadrature, ft: &Correction, t: f64) -> Result<NodalPotential> {
        if t == 0.0 || ft.is_zero() {
            return NodalPotential::from_potential(pot, q);
        }
        let inner = par::try_map(q.nodes.len(), |i| {
            let r = pull_back(pot, &q.nodes[i], None, ft, t)?;
            Ok::<_, Error>((r.g, r.grad, r.ld))
        })?;
        let gb = par::try_map(q.facet_nodes.len(), |i| {
            let fnode = &q.facet_nodes[i];
            Ok::<_, Error>(pull_back(pot, &fnode.x, Some(fnode.facet), ft, t)?.g)
        })?;
        let mut out = NodalPotential { g: Vec::new(), grad: Vec::new(), ld: Vec::new(), gb };
        for (g, gr, ld) in inner {
            out.g.push(g);
            out.grad.push(gr);
            out.ld.push(ld);
        }
        Ok(out)
    }
}

struct Pulled {
    g: f64,
    grad: Vecd,
    ld: f64,
}

fn pull_back(pot: &SymplecticPotential, x: &Vecd, facet: Option<usize>, ft: &Correction, t: f64) -> Result<Pulled> {
    let p = &*pot.polytope;
    let n = p.dim;
    let l0 = node_ells(pot, x, facet);
    let ells_at = |d: &Vecd| -> Vec<f64> {
        p.facets
            .iter()
            .enumerate()
            .map(|(i, f)| if Some(i) == facet { 0.0 } else { l0[i] + f.u.dot(d) })
            .collect()
    };
    let project = |d: Vecd| -> Vecd {
        match facet {
            Some(f) => {
                let u = p.facets[f].u;
                d - u.scale(u.dot(&d) / u.dot(&u))
            }
            None => d,
        }
    };
    let mut d = Vecd::zeros(n);
    // G is stationary in d only to first order, with slope H·r; near ∂P H is
    // large, so one extra step is taken past the tolerance
    let mut polished = false;
    for it in 0..60 {
        let xp = *x + d;
        let ells = ells_at(&d);
        if ells.iter().any(|&v| v < 0.0) {
            return Err(Error::Invalid("perturbation step left P".into()));
        }
        let e = pot.eval_with(&xp, &ells, 3)?;
        let dv = e.derivs(p, false);
        let fj = ft.jet(&xp, 2);
        let w = e.hinv.mul_vec(&fj.g);
        let r = d + w.scale(t);
        // J = I + t ∂(H∇f̃)
        let mut jm = Matd::identity(n);
        let hf2 = e.hinv.mul_mat(&fj.h);
        for a in 0..n {
            for k in 0..n {
                let mut s = hf2.c[a][k];
                for c in 0..n {
                    s += dv.dh.c[k][a][c] * fj.g.c[c];
                }
                jm.c[a][k] += t * s;
            }
        }
        let scale = 1e-15 * (1.0 + x.norm_inf());
        if (r.norm_inf() <= scale && polished) || it == 59 {
            if r.norm_inf() > 1e3 * scale {
                return Err(Error::Invalid("perturbation pull-back did not converge".into()));
            }
            let det = jm.det();
            if !(det > 0.0) {
                return Err(Error::ConvexityViolation { min_eigenvalue: det });
            }
            let gr = regular_gradient(pot, &e);
            let g = e.g - d.dot(&gr) - t * fj.v;
            let ld = if facet.is_some() { f64::NAN } else { e.logdet() - libm::log(det) };
            return Ok(Pulled { g, grad: gr, ld });
        }
        polished = r.norm_inf() <= scale;
        let step = jm.solve(&r).ok_or(Error::Singular("pull-back Jacobian"))?;
        d = project(d - step);
    }
    unreachable!()
}
