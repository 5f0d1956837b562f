//! Gauss–Legendre rules and polytope quadrature: fan triangulation with
//! geometric grading toward vertices, collapsed (Duffy) tensor rules per
//! simplex, and matching facet rules for boundary integrals.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Vecd;
use crate::torus::{simplex_volume, Polytope};

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_m
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = 0.5 * (1.0 - x);
        ws[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    // nodes ascending
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    (idx.iter().map(|&i| xs[i]).collect(), idx.iter().map(|&i| ws[i]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadOptions {
    /// Gauss points per direction per simplex.
    pub order: usize,
    /// Levels of geometric refinement toward each polytope vertex.
    pub grading_levels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { order: 8, grading_levels: 0 }
    }
}

/// A node on ∂P: position, dσ weight (dS/|u|), facet index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacetNode {
    pub x: Vecd,
    pub w: f64,
    pub facet: usize,
}

/// Quadrature on P (Lebesgue dx) and on ∂P (dσ = dS/|u_F| on each facet).
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopeQuadrature {
    pub dim: usize,
    pub nodes: Vec<Vecd>,
    pub weights: Vec<f64>,
    pub facet_nodes: Vec<FacetNode>,
    pub options: QuadOptions,
}

impl PolytopeQuadrature {
    pub fn new(p: &Polytope, opts: &QuadOptions) -> Self {
        let levels = if opts.grading_levels == 0 { auto_levels(p) } else { opts.grading_levels };
        let verts: Vec<Vecd> = p.vertices.iter().map(|v| v.x).collect();
        let (gx, gw) = gauss_legendre01(opts.order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut simplices = Vec::new();
        for s in p.simplices() {
            refine(&s, &verts, levels, &mut simplices);
        }
        for s in &simplices {
            simplex_rule(s, &gx, &gw, &mut nodes, &mut weights);
        }
        let mut facet_nodes = Vec::new();
        for (i, f) in p.facets.iter().enumerate() {
            let un = f.u.norm();
            let fv = p.facet_vertices(i);
            match p.dim {
                1 => facet_nodes.push(FacetNode { x: fv[0], w: 1.0 / un, facet: i }),
                2 => {
                    for (a, b, wt) in graded_segment(&fv[0], &fv[1], levels) {
                        let _ = wt;
                        let len = (b - a).norm();
                        for q in 0..gx.len() {
                            let x = a + (b - a).scale(gx[q]);
                            facet_nodes.push(FacetNode { x, w: gw[q] * len / un, facet: i });
                        }
                    }
                }
                _ => {
                    let c = fv.iter().fold(Vecd::zeros(3), |a, b| a + *b).scale(1.0 / fv.len() as f64);
                    let m = fv.len();
                    for j in 0..m {
                        let tri = [c, fv[j], fv[(j + 1) % m]];
                        tri_rule_3d(&tri, &gx, &gw, un, i, &mut facet_nodes);
                    }
                }
            }
        }
        PolytopeQuadrature { dim: p.dim, nodes, weights, facet_nodes, options: QuadOptions { order: opts.order, grading_levels: levels } }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Vecd) -> f64) -> f64 {
        fsum(self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)))
    }

    pub fn integrate_boundary(&self, f: impl Fn(&Vecd, usize) -> f64) -> f64 {
        self.facet_nodes.iter().map(|n| n.w * f(&n.x, n.facet)).sum()
    }
}

/// Grading depth from the ratio of polytope diameter to its shortest edge.
/// Compensated (Neumaier) sum.  Fine rules have 10⁴–10⁵ nodes, and energy
/// differences are taken between nearby potentials, so plain summation
/// error shows up in difference quotients.
pub fn fsum(it: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

fn auto_levels(p: &Polytope) -> usize {
    let mut dmax: f64 = 0.0;
    let mut emin = f64::INFINITY;
    for (a, va) in p.vertices.iter().enumerate() {
        for vb in p.vertices.iter().skip(a + 1) {
            let d = (va.x - vb.x).norm();
            dmax = dmax.max(d);
            let shared = va.facets.iter().filter(|f| vb.facets.contains(f)).count();
            if shared + 1 >= p.dim {
                emin = emin.min(d);
            }
        }
    }
    let ratio = if emin.is_finite() && emin > 0.0 { dmax / emin } else { 1.0 };
    let l = libm::ceil(libm::log2(ratio.max(1.0))) as usize + 3;
    l.min(16)
}

fn refine(s: &[Vecd], verts: &[Vecd], level: usize, out: &mut Vec<Vec<Vecd>>) {
    let k = s.len() - 1;
    if level == 0 || k == 3 {
        out.push(s.to_vec());
        return;
    }
    let touches = s.iter().any(|c| verts.iter().any(|v| (*c - *v).norm_inf() < 1e-12));
    if !touches {
        out.push(s.to_vec());
        return;
    }
    if k == 1 {
        let m = (s[0] + s[1]).scale(0.5);
        refine(&[s[0], m], verts, level - 1, out);
        refine(&[m, s[1]], verts, level - 1, out);
        return;
    }
    let (a, b, c) = (s[0], s[1], s[2]);
    let ab = (a + b).scale(0.5);
    let bc = (b + c).scale(0.5);
    let ca = (c + a).scale(0.5);
    refine(&[a, ab, ca], verts, level - 1, out);
    refine(&[ab, b, bc], verts, level - 1, out);
    refine(&[ca, bc, c], verts, level - 1, out);
    out.push(vec![ab, bc, ca]);
}

fn graded_segment(a: &Vecd, b: &Vecd, levels: usize) -> Vec<(Vecd, Vecd, f64)> {
    // break points 0, 2^{-L}, .., 1/2, .., 1 − 2^{-L}, 1
    let mut ts = vec![0.0];
    for l in (1..=levels).rev() {
        ts.push(libm::pow(0.5, l as f64));
    }
    let base = ts.clone();
    for t in base.iter().rev() {
        if *t > 0.0 && *t < 0.5 {
            ts.push(1.0 - t);
        }
    }
    ts.push(1.0);
    if levels == 0 {
        ts = vec![0.0, 1.0];
    }
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    ts.windows(2).map(|w| (*a + (*b - *a).scale(w[0]), *a + (*b - *a).scale(w[1]), w[1] - w[0])).collect()
}

fn simplex_rule(s: &[Vecd], gx: &[f64], gw: &[f64], nodes: &mut Vec<Vecd>, weights: &mut Vec<f64>) {
    let k = s.len() - 1;
    let vol = simplex_volume(s);
    match k {
        1 => {
            for q in 0..gx.len() {
                nodes.push(s[0] + (s[1] - s[0]).scale(gx[q]));
                weights.push(vol * gw[q]);
            }
        }
        2 => {
            // x = A + u[(1−v)(B−A) + v(C−A)], dx = 2|T| u du dv
            for i in 0..gx.len() {
                for j in 0..gx.len() {
                    let (u, v) = (gx[i], gx[j]);
                    let x = s[0] + ((s[1] - s[0]).scale(1.0 - v) + (s[2] - s[0]).scale(v)).scale(u);
                    nodes.push(x);
                    weights.push(2.0 * vol * u * gw[i] * gw[j]);
                }
            }
        }
        _ => {
            // x = A + u(B−A) + uv(C−B) + uvw(D−C), dx = 6|T| u² v
            for i in 0..gx.len() {
                for j in 0..gx.len() {
                    for l in 0..gx.len() {
                        let (u, v, w) = (gx[i], gx[j], gx[l]);
                        let x = s[0] + (s[1] - s[0]).scale(u) + (s[2] - s[1]).scale(u * v) + (s[3] - s[2]).scale(u * v * w);
                        nodes.push(x);
                        weights.push(6.0 * vol * u * u * v * gw[i] * gw[j] * gw[l]);
                    }
                }
            }
        }
    }
}

fn tri_rule_3d(t: &[Vecd; 3], gx: &[f64], gw: &[f64], un: f64, facet: usize, out: &mut Vec<FacetNode>) {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let cr = Vecd::from_slice(&[
        e1.c[1] * e2.c[2] - e1.c[2] * e2.c[1],
        e1.c[2] * e2.c[0] - e1.c[0] * e2.c[2],
        e1.c[0] * e2.c[1] - e1.c[1] * e2.c[0],
    ]);
    let area = 0.5 * cr.norm();
    for i in 0..gx.len() {
        for j in 0..gx.len() {
            let (u, v) = (gx[i], gx[j]);
            let x = t[0] + (e1.scale(1.0 - v) + e2.scale(v)).scale(u);
            out.push(FacetNode { x, w: 2.0 * area * u * gw[i] * gw[j] / un, facet });
        }
    }
}
