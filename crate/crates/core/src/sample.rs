//! Random admissible potentials: a smoothed max of random affine functions
//! plus an indefinite quadratic, shrunk until ∇²G keeps a convexity margin.

use alloc::vec::Vec;

use crate::legendre::KahlerState;
use crate::linalg::{Matd, Vecd};
use crate::potential::Correction;
use crate::rng::{normal, uniform, LabRng};

pub const CONVEXITY_MARGIN: f64 = 1e-3;

/// amp · τ log Σ exp((⟨ξ_i,x⟩ + b_i)/τ) with `terms` random pieces.
pub fn random_bump(r: &mut LabRng, dim: usize, terms: usize, amp: f64) -> Correction {
    let mut xis = Vec::with_capacity(terms);
    let mut bs = Vec::with_capacity(terms);
    for _ in 0..terms {
        let mut xi = Vecd::zeros(dim);
        for k in 0..dim {
            xi.c[k] = normal(r);
        }
        xis.push(xi);
        bs.push(uniform(r, -0.5, 0.5));
    }
    let tau = uniform(r, 0.4, 1.0);
    Correction::LogSumExp { xis, bs, tau, amp }
}

fn random_sym(r: &mut LabRng, dim: usize, scale: f64) -> Matd {
    let mut a = Matd::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            let v = scale * normal(r);
            a.c[i][j] = v;
            a.c[j][i] = v;
        }
    }
    a
}

/// Correction h for G = G_base + h.  The indefinite part is halved until
/// G keeps the margin at every quadrature node (dropped after 30 tries).
pub fn random_correction(r: &mut LabRng, base: &KahlerState, amp: f64) -> Correction {
    let n = base.dim();
    let bump = random_bump(r, n, 3, amp);
    let c = base.barycenter();
    let mut quad = random_sym(r, n, 0.3 * amp);
    let lin = {
        let mut xi = Vecd::zeros(n);
        for k in 0..n {
            xi.c[k] = 0.2 * amp * normal(r);
        }
        xi
    };
    for _ in 0..30 {
        let h = bump.clone().plus(Correction::Quadratic { center: c, a: quad }).plus(Correction::Affine { xi: lin, c: 0.0 });
        let pot = base.potential.add_correction(h.clone());
        if pot.check_convex(base.quad.nodes.iter(), CONVEXITY_MARGIN).is_ok() {
            return h;
        }
        quad = quad.scale(0.5);
    }
    bump.plus(Correction::Affine { xi: lin, c: 0.0 })
}

/// Smooth test function of either sign for directional derivatives:
/// difference of two random bumps.
pub fn random_direction(r: &mut LabRng, dim: usize, amp: f64) -> Correction {
    let a = random_bump(r, dim, 2, amp);
    let b = random_bump(r, dim, 2, amp);
    a.plus(b.scaled(-1.0))
}
