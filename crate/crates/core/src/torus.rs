//! Torus Lie-algebra bookkeeping, affine functions, weights and moment
//! polytopes (H-representation, k ≤ 3).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{Matd, Vecd};

/// Rank-k torus with labelled basis ξ_1..ξ_k of t; the dual basis of t^∨ is
/// implicit, so pairings are plain dot products of coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusAlgebra {
    pub rank: usize,
    pub labels: Vec<String>,
}

impl TorusAlgebra {
    pub fn new(rank: usize) -> Self {
        TorusAlgebra { rank, labels: (1..=rank).map(|i| format!("xi{i}")).collect() }
    }
    pub fn pairing(&self, x: &Vecd, xi: &Vecd) -> f64 {
        x.dot(xi)
    }
    pub fn basis(&self, i: usize) -> Vecd {
        Vecd::unit(self.rank, i)
    }
    /// Gram matrix of basis against dual basis (the identity).
    pub fn pairing_matrix(&self) -> Matd {
        let mut m = Matd::zeros(self.rank);
        for i in 0..self.rank {
            for j in 0..self.rank {
                m.c[i][j] = self.pairing(&self.basis(i), &self.basis(j));
            }
        }
        m
    }
}

/// ℓ(x) = ⟨x, ξ⟩ + c.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineFunction {
    pub xi: Vecd,
    pub c: f64,
}

impl AffineFunction {
    pub fn new(xi: Vecd, c: f64) -> Self {
        AffineFunction { xi, c }
    }
    pub fn constant(n: usize, c: f64) -> Self {
        AffineFunction { xi: Vecd::zeros(n), c }
    }
    pub fn eval(&self, x: &Vecd) -> f64 {
        self.xi.dot(x) + self.c
    }
    pub fn is_zero(&self) -> bool {
        self.c == 0.0 && self.xi.as_slice().iter().all(|&a| a == 0.0)
    }
    /// Coordinates in the basis (1, x_1, .., x_k) of t ⊕ ℝ.
    pub fn coords(&self) -> Vec<f64> {
        let mut v = vec![self.c];
        v.extend_from_slice(self.xi.as_slice());
        v
    }
    pub fn from_coords(n: usize, c: &[f64]) -> Self {
        AffineFunction { xi: Vecd::from_slice(&c[1..=n]), c: c[0] }
    }
}

/// Multivariate polynomial Σ c_α x^α.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<(f64, [u32; 3])>,
}

impl Polynomial {
    pub fn new(n: usize, terms: Vec<(f64, [u32; 3])>) -> Self {
        Polynomial { n, terms }
    }

    pub fn jet(&self, x: &Vecd, order: u8) -> Jet {
        let n = self.n;
        let mut j = Jet::constant(n, order, 0.0);
        let mut idx = [0usize; 4];
        for &(c, ref e) in &self.terms {
            j.v += c * mono_d(x, e, &[]);
            for i in 0..n {
                idx[0] = i;
                j.g.c[i] += c * mono_d(x, e, &idx[..1]);
                if order >= 2 {
                    for a in 0..n {
                        idx[1] = a;
                        j.h.c[i][a] += c * mono_d(x, e, &idx[..2]);
                        if order >= 3 {
                            for b in 0..n {
                                idx[2] = b;
                                j.t.c[i][a][b] += c * mono_d(x, e, &idx[..3]);
                                if order >= 4 {
                                    for d in 0..n {
                                        idx[3] = d;
                                        j.q.c[i][a][b][d] += c * mono_d(x, e, &idx[..4]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        j
    }
}

fn mono_d(x: &Vecd, e: &[u32; 3], idx: &[usize]) -> f64 {
    let mut k = [0u32; 3];
    for &i in idx {
        k[i] += 1;
    }
    let mut r = 1.0;
    for a in 0..x.n {
        if k[a] > e[a] {
            return 0.0;
        }
        let mut ff = 1.0;
        for m in 0..k[a] {
            ff *= (e[a] - m) as f64;
        }
        r *= ff * libm::pow(x.c[a], (e[a] - k[a]) as f64);
    }
    r
}

/// Smooth weight on t^∨ with analytic derivatives.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Constant { n: usize, c: f64 },
    Affine(AffineFunction),
    /// a·e^{⟨ξ,x⟩}
    Exponential { xi: Vecd, scale: f64 },
    Polynomial(Polynomial),
    /// n + ⟨(log v)'(x), x⟩ for the inner weight v.
    SolitonW { v: alloc::boxed::Box<Weight>, n: f64 },
    Product(Vec<Weight>),
}

impl Weight {
    pub fn one(n: usize) -> Weight {
        Weight::Constant { n, c: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Weight::Constant { n, .. } => *n,
            Weight::Affine(a) => a.xi.n,
            Weight::Exponential { xi, .. } => xi.n,
            Weight::Polynomial(p) => p.n,
            Weight::SolitonW { v, .. } => v.dim(),
            Weight::Product(ws) => ws[0].dim(),
        }
    }

    /// Builtin constructor by name: constant, affine, exponential,
    /// soliton_w_of, polynomial.
    pub fn builtin(name: &str, n: usize, params: &[f64]) -> Result<Weight> {
        let need = |k: usize| -> Result<()> {
            if params.len() < k {
                Err(Error::Invalid(format!("weight '{name}' needs {k} parameters")))
            } else {
                Ok(())
            }
        };
        match name {
            "constant" => Ok(Weight::Constant { n, c: params.first().copied().unwrap_or(1.0) }),
            "affine" => {
                need(n + 1)?;
                Ok(Weight::Affine(AffineFunction::new(Vecd::from_slice(&params[1..=n]), params[0])))
            }
            "exponential" => {
                need(n)?;
                Ok(Weight::Exponential { xi: Vecd::from_slice(&params[..n]), scale: 1.0 })
            }
            "soliton_w_of" => {
                need(n)?;
                let v = Weight::Exponential { xi: Vecd::from_slice(&params[..n]), scale: 1.0 };
                let nn = params.get(n).copied().unwrap_or(n as f64);
                Ok(Weight::soliton_w_of(v, nn))
            }
            "polynomial" => {
                // params: repeated (coeff, e1, .., en)
                if params.len() % (n + 1) != 0 {
                    return Err(Error::Invalid(format!("polynomial weight expects groups of {}", n + 1)));
                }
                let terms = params
                    .chunks(n + 1)
                    .map(|ch| {
                        let mut e = [0u32; 3];
                        for a in 0..n {
                            e[a] = ch[1 + a] as u32;
                        }
                        (ch[0], e)
                    })
                    .collect();
                Ok(Weight::Polynomial(Polynomial::new(n, terms)))
            }
            other => Err(Error::UnknownWeight(String::from(other))),
        }
    }

    pub fn soliton_w_of(v: Weight, n: f64) -> Weight {
        Weight::SolitonW { v: alloc::boxed::Box::new(v), n }
    }

    pub fn times(self, other: Weight) -> Weight {
        match self {
            Weight::Product(mut ws) => {
                ws.push(other);
                Weight::Product(ws)
            }
            w => Weight::Product(vec![w, other]),
        }
    }

    /// Jet up to `order` (≤ 4; soliton weights consume one extra order of v).
    pub fn jet(&self, x: &Vecd, order: u8) -> Jet {
        match self {
            Weight::Constant { n, c } => Jet::constant(*n, order, *c),
            Weight::Affine(a) => Jet::affine(x, &a.xi, a.c, order),
            Weight::Exponential { xi, scale } => {
                let n = xi.n;
                let e = scale * libm::exp(xi.dot(x));
                let mut j = Jet::constant(n, order, e);
                for i in 0..n {
                    j.g.c[i] = e * xi.c[i];
                    for a in 0..n {
                        j.h.c[i][a] = e * xi.c[i] * xi.c[a];
                        for b in 0..n {
                            j.t.c[i][a][b] = e * xi.c[i] * xi.c[a] * xi.c[b];
                            if order >= 4 {
                                for d in 0..n {
                                    j.q.c[i][a][b][d] = e * xi.c[i] * xi.c[a] * xi.c[b] * xi.c[d];
                                }
                            }
                        }
                    }
                }
                j
            }
            Weight::Polynomial(p) => p.jet(x, order),
            Weight::SolitonW { v, n } => {
                let dim = x.n;
                // L = log v; w = n + Σ x_a L_a
                let lv = v.jet(x, (order + 1).min(4)).ln();
                let mut w = Jet::constant(dim, order, *n);
                for a in 0..dim {
                    w.v += x.c[a] * lv.g.c[a];
                }
                for b in 0..dim {
                    let mut s = lv.g.c[b];
                    for a in 0..dim {
                        s += x.c[a] * lv.h.c[a][b];
                    }
                    w.g.c[b] = s;
                    for c in 0..dim {
                        let mut s = 2.0 * lv.h.c[b][c];
                        for a in 0..dim {
                            s += x.c[a] * lv.t.c[a][b][c];
                        }
                        w.h.c[b][c] = s;
                        if order >= 3 {
                            for d in 0..dim {
                                let mut s = 3.0 * lv.t.c[b][c][d];
                                for a in 0..dim {
                                    s += x.c[a] * lv.q.c[a][b][c][d];
                                }
                                w.t.c[b][c][d] = s;
                            }
                        }
                    }
                }
                w
            }
            Weight::Product(ws) => {
                let mut j = ws[0].jet(x, order);
                for w in &ws[1..] {
                    j = j.mul(&w.jet(x, order));
                }
                j
            }
        }
    }

    pub fn eval(&self, x: &Vecd) -> f64 {
        self.jet(x, 0).v
    }

    pub fn grad(&self, x: &Vecd) -> Vecd {
        self.jet(x, 1).g
    }

    pub fn hessian(&self, x: &Vecd) -> Matd {
        self.jet(x, 2).h
    }

    /// Positivity at the supplied nodes.
    pub fn check_positive<'a>(&self, nodes: impl IntoIterator<Item = &'a Vecd>) -> Result<f64> {
        let mut m = f64::INFINITY;
        for x in nodes {
            let v = self.eval(x);
            if !(v > 0.0) {
                return Err(Error::NonPositiveWeight { value: v });
            }
            m = m.min(v);
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Facet {
    pub u: Vecd,
    pub lambda: f64,
}

impl Facet {
    pub fn new(u: &[f64], lambda: f64) -> Self {
        Facet { u: Vecd::from_slice(u), lambda }
    }
    /// ℓ(x) = ⟨x,u⟩ + λ.
    #[inline]
    pub fn ell(&self, x: &Vecd) -> f64 {
        self.u.dot(x) + self.lambda
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub x: Vecd,
    pub facets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub dim: usize,
    pub facets: Vec<Facet>,
    pub vertices: Vec<Vertex>,
}

const GEOM_TOL: f64 = 1e-10;

impl Polytope {
    pub fn new(dim: usize, facets: Vec<Facet>) -> Result<Polytope> {
        if dim == 0 || dim > 3 || facets.len() <= dim {
            return Err(Error::DegeneratePolytope);
        }
        let scale = facets.iter().map(|f| f.lambda.abs()).fold(1.0, f64::max);
        let mut vertices: Vec<Vertex> = Vec::new();
        let m = facets.len();
        let mut subset = vec![0usize; dim];
        for_each_subset(m, dim, &mut subset, 0, 0, &mut |s: &[usize]| {
            let mut a = Matd::zeros(dim);
            let mut b = Vecd::zeros(dim);
            for (r, &i) in s.iter().enumerate() {
                for c in 0..dim {
                    a.c[r][c] = facets[i].u.c[c];
                }
                b.c[r] = -facets[i].lambda;
            }
            if a.det().abs() < 1e-12 {
                return;
            }
            let x = match a.solve(&b) {
                Some(x) => x,
                None => return,
            };
            if facets.iter().any(|f| f.ell(&x) < -GEOM_TOL * scale) {
                return;
            }
            if let Some(v) = vertices.iter_mut().find(|v| (v.x - x).norm_inf() < 1e-9 * scale) {
                for &i in s {
                    if !v.facets.contains(&i) {
                        v.facets.push(i);
                    }
                }
            } else {
                vertices.push(Vertex { x, facets: s.to_vec() });
            }
        });
        for v in &mut vertices {
            v.facets.sort_unstable();
            // also pick up facets through the vertex missed by near-degenerate subsets
            for (i, f) in facets.iter().enumerate() {
                if f.ell(&v.x).abs() < 1e-9 * scale && !v.facets.contains(&i) {
                    v.facets.push(i);
                }
            }
            v.facets.sort_unstable();
        }
        vertices.sort_by(|a, b| {
            for i in 0..dim {
                match a.x.c[i].partial_cmp(&b.x.c[i]) {
                    Some(core::cmp::Ordering::Equal) | None => continue,
                    Some(o) => return o,
                }
            }
            core::cmp::Ordering::Equal
        });
        if vertices.len() < dim + 1 {
            return Err(Error::DegeneratePolytope);
        }
        for (i, _) in facets.iter().enumerate() {
            let cnt = vertices.iter().filter(|v| v.facets.contains(&i)).count();
            if cnt < dim {
                return Err(Error::Invalid(format!("facet {i} is redundant or empty")));
            }
        }
        let p = Polytope { dim, facets, vertices };
        let vol = p.volume_unchecked();
        if !(vol > 1e-12 * libm::pow(scale, dim as f64)) {
            return Err(Error::DegeneratePolytope);
        }
        if !p.boundary_closed() {
            return Err(Error::Invalid(String::from("polytope is unbounded")));
        }
        Ok(p)
    }

    /// Interval [a, b].
    pub fn interval(a: f64, b: f64) -> Result<Polytope> {
        Polytope::new(1, vec![Facet::new(&[1.0], -a), Facet::new(&[-1.0], b)])
    }

    /// Simplex {x ≥ 0, Σx ≤ λ}.
    pub fn simplex(dim: usize, lambda: f64) -> Result<Polytope> {
        let mut f = Vec::new();
        for i in 0..dim {
            let mut u = [0.0; 3];
            u[i] = 1.0;
            f.push(Facet::new(&u[..dim], 0.0));
        }
        f.push(Facet::new(&[-1.0; 3][..dim], lambda));
        Polytope::new(dim, f)
    }

    /// Box Π[a_i, b_i].
    pub fn cube(lo: &[f64], hi: &[f64]) -> Result<Polytope> {
        let dim = lo.len();
        let mut f = Vec::new();
        for i in 0..dim {
            let mut u = [0.0; 3];
            u[i] = 1.0;
            f.push(Facet::new(&u[..dim], -lo[i]));
            u[i] = -1.0;
            f.push(Facet::new(&u[..dim], hi[i]));
        }
        Polytope::new(dim, f)
    }

    pub fn ells(&self, x: &Vecd) -> impl Iterator<Item = f64> + '_ {
        let x = *x;
        self.facets.iter().map(move |f| f.ell(&x))
    }

    pub fn contains(&self, x: &Vecd, tol: f64) -> bool {
        self.facets.iter().all(|f| f.ell(x) >= -tol)
    }

    pub fn contains_interior(&self, x: &Vecd) -> bool {
        self.facets.iter().all(|f| f.ell(x) > 0.0)
    }

    pub fn vertex_index_near(&self, x: &[f64]) -> Option<usize> {
        let p = Vecd::from_slice(x);
        self.vertices.iter().position(|v| (v.x - p).norm_inf() < 1e-9)
    }

    pub fn vertex_centroid(&self) -> Vecd {
        let mut c = Vecd::zeros(self.dim);
        for v in &self.vertices {
            c = c + v.x;
        }
        c.scale(1.0 / self.vertices.len() as f64)
    }

    /// Vertices of facet i ordered cyclically (dim 3) or end points (dim 2).
    pub fn facet_vertices(&self, i: usize) -> Vec<Vecd> {
        let mut vs: Vec<Vecd> =
            self.vertices.iter().filter(|v| v.facets.contains(&i)).map(|v| v.x).collect();
        if self.dim == 3 {
            let c = vs.iter().fold(Vecd::zeros(3), |a, b| a + *b).scale(1.0 / vs.len() as f64);
            let (e1, e2) = plane_basis(&self.facets[i].u);
            vs.sort_by(|a, b| {
                let da = *a - c;
                let db = *b - c;
                let ta = libm::atan2(da.dot(&e2), da.dot(&e1));
                let tb = libm::atan2(db.dot(&e2), db.dot(&e1));
                ta.partial_cmp(&tb).unwrap_or(core::cmp::Ordering::Equal)
            });
        }
        vs
    }

    /// Simplicial decomposition: each simplex as k+1 corner points.  The
    /// first corner is an interior point; remaining corners lie on ∂P.
    pub fn simplices(&self) -> Vec<Vec<Vecd>> {
        let c = self.vertex_centroid();
        match self.dim {
            1 => {
                let a = self.vertices[0].x;
                let b = self.vertices[self.vertices.len() - 1].x;
                vec![vec![c, a], vec![c, b]]
            }
            2 => {
                let mut vs: Vec<Vecd> = self.vertices.iter().map(|v| v.x).collect();
                vs.sort_by(|a, b| {
                    let ta = libm::atan2(a.c[1] - c.c[1], a.c[0] - c.c[0]);
                    let tb = libm::atan2(b.c[1] - c.c[1], b.c[0] - c.c[0]);
                    ta.partial_cmp(&tb).unwrap_or(core::cmp::Ordering::Equal)
                });
                let m = vs.len();
                (0..m).map(|i| vec![c, vs[i], vs[(i + 1) % m]]).collect()
            }
            _ => {
                let mut out = Vec::new();
                for i in 0..self.facets.len() {
                    let fv = self.facet_vertices(i);
                    let fc = fv.iter().fold(Vecd::zeros(3), |a, b| a + *b).scale(1.0 / fv.len() as f64);
                    let m = fv.len();
                    for j in 0..m {
                        out.push(vec![c, fc, fv[j], fv[(j + 1) % m]]);
                    }
                }
                out
            }
        }
    }

    fn volume_unchecked(&self) -> f64 {
        self.simplices().iter().map(|s| simplex_volume(s)).sum()
    }

    pub fn volume(&self) -> f64 {
        self.volume_unchecked()
    }

    pub fn barycenter(&self) -> Vecd {
        let mut num = Vecd::zeros(self.dim);
        let mut den = 0.0;
        for s in self.simplices() {
            let v = simplex_volume(&s);
            let mut c = Vecd::zeros(self.dim);
            for p in &s {
                c = c + *p;
            }
            num = num + c.scale(v / s.len() as f64);
            den += v;
        }
        num.scale(1.0 / den)
    }

    /// Euclidean (k−1)-volume of facet i.
    pub fn facet_area(&self, i: usize) -> f64 {
        let fv = self.facet_vertices(i);
        match self.dim {
            1 => 1.0,
            2 => (fv[1] - fv[0]).norm(),
            _ => {
                let c = fv.iter().fold(Vecd::zeros(3), |a, b| a + *b).scale(1.0 / fv.len() as f64);
                let m = fv.len();
                (0..m).map(|j| tri_area3(&c, &fv[j], &fv[(j + 1) % m])).sum()
            }
        }
    }

    fn boundary_closed(&self) -> bool {
        if self.dim == 1 {
            let pos = self.facets.iter().any(|f| f.u.c[0] > 0.0);
            let neg = self.facets.iter().any(|f| f.u.c[0] < 0.0);
            return pos && neg;
        }
        let mut s = Vecd::zeros(self.dim);
        let mut tot = 0.0;
        for (i, f) in self.facets.iter().enumerate() {
            let a = self.facet_area(i);
            s = s + f.u.scale(a / f.u.norm());
            tot += a;
        }
        s.norm() <= 1e-9 * tot.max(1.0)
    }

    /// Facet normals through vertex `vid` as rows.
    pub fn vertex_cone(&self, vid: usize) -> Result<Matd> {
        let v = self.vertices.get(vid).ok_or(Error::UnknownVertex(vid))?;
        if v.facets.len() != self.dim {
            return Err(Error::NonDelzantVertex(vid));
        }
        let mut a = Matd::zeros(self.dim);
        for (r, &i) in v.facets.iter().enumerate() {
            for c in 0..self.dim {
                a.c[r][c] = self.facets[i].u.c[c];
            }
        }
        Ok(a)
    }

    pub fn is_delzant_vertex(&self, vid: usize) -> bool {
        let a = match self.vertex_cone(vid) {
            Ok(a) => a,
            Err(_) => return false,
        };
        let integral = (0..self.dim).all(|r| (0..self.dim).all(|c| (a.c[r][c] - libm::round(a.c[r][c])).abs() < 1e-9));
        integral && (a.det().abs() - 1.0).abs() < 1e-9
    }

    pub fn is_delzant(&self) -> bool {
        (0..self.vertices.len()).all(|v| self.is_delzant_vertex(v))
    }

    /// Edge directions e_j at a simple vertex, dual to the facet normals
    /// (⟨u_i, e_j⟩ = δ_ij), with the lattice length of each edge.
    pub fn vertex_edges(&self, vid: usize) -> Result<Vec<(Vecd, f64)>> {
        let a = self.vertex_cone(vid)?;
        let inv = a.inverse().ok_or(Error::Singular("vertex cone"))?;
        let x = self.vertices[vid].x;
        let own = &self.vertices[vid].facets;
        let mut out = Vec::new();
        for j in 0..self.dim {
            let mut e = Vecd::zeros(self.dim);
            for r in 0..self.dim {
                e.c[r] = inv.c[r][j];
            }
            let mut tmax = f64::INFINITY;
            for (i, f) in self.facets.iter().enumerate() {
                if own.contains(&i) {
                    continue;
                }
                let d = f.u.dot(&e);
                if d < -1e-14 {
                    tmax = tmax.min(f.ell(&x) / (-d));
                }
            }
            out.push((e, tmax));
        }
        Ok(out)
    }

    /// Largest admissible chop depth at a vertex (exclusive bound).
    pub fn chop_bound(&self, vid: usize) -> Result<f64> {
        Ok(self.vertex_edges(vid)?.iter().map(|e| e.1).fold(f64::INFINITY, f64::min))
    }

    /// Cut the corner at `vid` by the facet Σ_{i∋vid} ℓ_i ≥ ε (lattice
    /// distance ε from the vertex).
    pub fn chop_corner(&self, vid: usize, eps: f64) -> Result<Polytope> {
        if vid >= self.vertices.len() {
            return Err(Error::UnknownVertex(vid));
        }
        if !self.is_delzant_vertex(vid) {
            return Err(Error::NonDelzantVertex(vid));
        }
        let bound = self.chop_bound(vid)?;
        if !(eps >= 0.0) || eps >= bound * (1.0 - 1e-12) {
            return Err(Error::InfeasibleChop { eps, bound });
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let v = &self.vertices[vid];
        let mut u = Vecd::zeros(self.dim);
        let mut lam = -eps;
        for &i in &v.facets {
            u = u + self.facets[i].u;
            lam += self.facets[i].lambda;
        }
        let mut facets = self.facets.clone();
        facets.push(Facet { u, lambda: lam });
        Polytope::new(self.dim, facets)
    }

    /// Apply several chops, given as vertex positions (ids shift after each
    /// chop, so corners are addressed by coordinates).
    pub fn chop_corners(&self, corners: &[(Vecd, f64)]) -> Result<Polytope> {
        let mut p = self.clone();
        for (x, eps) in corners {
            let vid = p.vertex_index_near(x.as_slice()).ok_or(Error::UnknownVertex(usize::MAX))?;
            p = p.chop_corner(vid, *eps)?;
        }
        Ok(p)
    }

    /// Translate by a: P + a.
    pub fn translate(&self, a: &Vecd) -> Result<Polytope> {
        let facets = self.facets.iter().map(|f| Facet { u: f.u, lambda: f.lambda - f.u.dot(a) }).collect();
        Polytope::new(self.dim, facets)
    }

    /// True when every facet offset equals 1 (anticanonical normalisation
    /// of a smooth Fano polytope).
    pub fn is_fano_normalized(&self) -> bool {
        self.facets.iter().all(|f| (f.lambda - 1.0).abs() < 1e-12)
    }

    pub fn same_as(&self, o: &Polytope) -> bool {
        self.dim == o.dim
            && self.facets.len() == o.facets.len()
            && self
                .facets
                .iter()
                .zip(&o.facets)
                .all(|(a, b)| (a.u - b.u).norm_inf() < 1e-12 && (a.lambda - b.lambda).abs() < 1e-12)
    }
}

fn for_each_subset(m: usize, k: usize, buf: &mut [usize], start: usize, depth: usize, f: &mut dyn FnMut(&[usize])) {
    if depth == k {
        f(buf);
        return;
    }
    for i in start..m {
        buf[depth] = i;
        for_each_subset(m, k, buf, i + 1, depth + 1, f);
    }
}

pub fn simplex_volume(s: &[Vecd]) -> f64 {
    let k = s.len() - 1;
    let mut a = Matd::zeros(k);
    for r in 0..k {
        let d = s[r + 1] - s[0];
        for c in 0..k {
            a.c[c][r] = d.c[c];
        }
    }
    let fact = match k {
        1 => 1.0,
        2 => 2.0,
        _ => 6.0,
    };
    a.det().abs() / fact
}

fn tri_area3(a: &Vecd, b: &Vecd, c: &Vecd) -> f64 {
    let u = *b - *a;
    let v = *c - *a;
    let cr = [u.c[1] * v.c[2] - u.c[2] * v.c[1], u.c[2] * v.c[0] - u.c[0] * v.c[2], u.c[0] * v.c[1] - u.c[1] * v.c[0]];
    0.5 * libm::sqrt(cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2])
}

/// Orthonormal basis of the plane orthogonal to u (dim 3).
pub fn plane_basis(u: &Vecd) -> (Vecd, Vecd) {
    let n = u.scale(1.0 / u.norm());
    let t = if n.c[0].abs() < 0.9 { Vecd::from_slice(&[1.0, 0.0, 0.0]) } else { Vecd::from_slice(&[0.0, 1.0, 0.0]) };
    let e1 = t - n.scale(t.dot(&n));
    let e1 = e1.scale(1.0 / e1.norm());
    let e2 = Vecd::from_slice(&[
        n.c[1] * e1.c[2] - n.c[2] * e1.c[1],
        n.c[2] * e1.c[0] - n.c[0] * e1.c[2],
        n.c[0] * e1.c[1] - n.c[1] * e1.c[0],
    ]);
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_volume_and_barycenter() {
        let p = Polytope::simplex(2, 3.0).unwrap();
        assert_eq!(p.vertices.len(), 3);
        assert!((p.volume() - 4.5).abs() < 1e-14);
        let b = p.barycenter();
        assert!((b.c[0] - 1.0).abs() < 1e-14 && (b.c[1] - 1.0).abs() < 1e-14);
        assert!(p.is_delzant());
    }

    #[test]
    fn chop_origin() {
        let p = Polytope::simplex(2, 3.0).unwrap();
        let v = p.vertex_index_near(&[0.0, 0.0]).unwrap();
        let q = p.chop_corner(v, 1.0).unwrap();
        assert_eq!(q.facets.len(), 4);
        assert!((q.volume() - 4.0).abs() < 1e-13);
        assert!(p.chop_corner(v, 0.0).unwrap().same_as(&p));
        assert!(matches!(p.chop_corner(v, 3.0), Err(Error::InfeasibleChop { .. })));
    }

    #[test]
    fn degenerate_interval() {
        assert!(Polytope::interval(1.0, 1.0).is_err());
        assert!(Polytope::new(2, vec![Facet::new(&[1.0, 0.0], 0.0), Facet::new(&[0.0, 1.0], 0.0), Facet::new(&[1.0, 1.0], 0.0)]).is_err());
    }

    #[test]
    fn tetra_volume() {
        let p = Polytope::simplex(3, 2.0).unwrap();
        assert!((p.volume() - 8.0 / 6.0).abs() < 1e-13);
        let b = p.barycenter();
        assert!((b.c[2] - 0.5).abs() < 1e-13);
        let c = Polytope::cube(&[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((c.volume() - 8.0).abs() < 1e-12);
        let q = p.chop_corner(p.vertex_index_near(&[0.0, 0.0, 0.0]).unwrap(), 0.5).unwrap();
        assert!((p.volume() - q.volume() - 0.125 / 6.0).abs() < 1e-13);
    }

    #[test]
    fn weights_exact() {
        let w = Weight::builtin("soliton_w_of", 2, &[0.5, -0.2]).unwrap();
        let x = Vecd::from_slice(&[0.3, 0.7]);
        assert!((w.eval(&x) - (2.0 + 0.15 - 0.14)).abs() < 1e-14);
        assert!(w.hessian(&x).frob(&w.hessian(&x)) < 1e-24);
        assert!(matches!(Weight::builtin("nope", 1, &[]), Err(Error::UnknownWeight(_))));
    }
}
