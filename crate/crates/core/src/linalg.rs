//! Fixed-capacity vectors and tensors for dimensions 1..=3, plus a tiny dense
//! solver for the Futaki–Mabuchi Gram systems.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

pub const MAXD: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vecd {
    pub n: usize,
    pub c: [f64; MAXD],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matd {
    pub n: usize,
    pub c: [[f64; MAXD]; MAXD],
}

/// Symmetric 3-tensor, stored dense.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ten3 {
    pub n: usize,
    pub c: [[[f64; MAXD]; MAXD]; MAXD],
}

/// Symmetric 4-tensor, stored dense.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ten4 {
    pub n: usize,
    pub c: [[[[f64; MAXD]; MAXD]; MAXD]; MAXD],
}

impl Vecd {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n >= 1 && n <= MAXD);
        Vecd { n, c: [0.0; MAXD] }
    }
    pub fn from_slice(s: &[f64]) -> Self {
        let mut v = Vecd::zeros(s.len());
        v.c[..s.len()].copy_from_slice(s);
        v
    }
    pub fn splat(n: usize, x: f64) -> Self {
        let mut v = Vecd::zeros(n);
        for i in 0..n {
            v.c[i] = x;
        }
        v
    }
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Vecd::zeros(n);
        v.c[i] = 1.0;
        v
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.n]
    }
    pub fn dot(&self, o: &Vecd) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.c[i] * o.c[i];
        }
        s
    }
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }
    pub fn norm_inf(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| if x.abs() > m { x.abs() } else { m })
    }
    pub fn scale(&self, a: f64) -> Vecd {
        let mut v = *self;
        for i in 0..self.n {
            v.c[i] *= a;
        }
        v
    }
    pub fn outer(&self, o: &Vecd) -> Matd {
        let mut m = Matd::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] = self.c[i] * o.c[j];
            }
        }
        m
    }
}

impl Index<usize> for Vecd {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.c[i]
    }
}
impl IndexMut<usize> for Vecd {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.c[i]
    }
}
impl Add for Vecd {
    type Output = Vecd;
    fn add(self, o: Vecd) -> Vecd {
        let mut v = self;
        for i in 0..self.n {
            v.c[i] += o.c[i];
        }
        v
    }
}
impl Sub for Vecd {
    type Output = Vecd;
    fn sub(self, o: Vecd) -> Vecd {
        let mut v = self;
        for i in 0..self.n {
            v.c[i] -= o.c[i];
        }
        v
    }
}
impl Neg for Vecd {
    type Output = Vecd;
    fn neg(self) -> Vecd {
        self.scale(-1.0)
    }
}
impl Mul<f64> for Vecd {
    type Output = Vecd;
    fn mul(self, a: f64) -> Vecd {
        self.scale(a)
    }
}

impl Matd {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n >= 1 && n <= MAXD);
        Matd { n, c: [[0.0; MAXD]; MAXD] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = Matd::zeros(n);
        for i in 0..n {
            m.c[i][i] = 1.0;
        }
        m
    }
    pub fn diag(d: &Vecd) -> Self {
        let mut m = Matd::zeros(d.n);
        for i in 0..d.n {
            m.c[i][i] = d.c[i];
        }
        m
    }
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Matd::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            m.c[i][..r.len()].copy_from_slice(r);
        }
        m
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i][j]
    }
    pub fn transpose(&self) -> Matd {
        let mut m = Matd::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] = self.c[j][i];
            }
        }
        m
    }
    pub fn scale(&self, a: f64) -> Matd {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] *= a;
            }
        }
        m
    }
    pub fn mul_vec(&self, v: &Vecd) -> Vecd {
        let mut r = Vecd::zeros(self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for j in 0..self.n {
                s += self.c[i][j] * v.c[j];
            }
            r.c[i] = s;
        }
        r
    }
    pub fn mul_mat(&self, o: &Matd) -> Matd {
        let mut r = Matd::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut s = 0.0;
                for k in 0..self.n {
                    s += self.c[i][k] * o.c[k][j];
                }
                r.c[i][j] = s;
            }
        }
        r
    }
    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.c[i][i]).sum()
    }
    /// Frobenius pairing tr(AᵀB).
    pub fn frob(&self, o: &Matd) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.c[i][j] * o.c[i][j];
            }
        }
        s
    }
    pub fn quad(&self, a: &Vecd, b: &Vecd) -> f64 {
        a.dot(&self.mul_vec(b))
    }
    pub fn det(&self) -> f64 {
        let c = &self.c;
        match self.n {
            1 => c[0][0],
            2 => c[0][0] * c[1][1] - c[0][1] * c[1][0],
            _ => {
                c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
                    - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
                    + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0])
            }
        }
    }
    /// Cofactor matrix transposed (the adjugate): adj(A)·A = det(A)·I.
    pub fn adjugate(&self) -> Matd {
        let c = &self.c;
        let mut r = Matd::zeros(self.n);
        match self.n {
            1 => r.c[0][0] = 1.0,
            2 => {
                r.c[0][0] = c[1][1];
                r.c[0][1] = -c[0][1];
                r.c[1][0] = -c[1][0];
                r.c[1][1] = c[0][0];
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
                        let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
                        r.c[i][j] = c[i1][j1] * c[i2][j2] - c[i1][j2] * c[i2][j1];
                    }
                }
            }
        }
        r
    }
    pub fn inverse(&self) -> Option<Matd> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(1.0 / d))
    }
    pub fn solve(&self, b: &Vecd) -> Option<Vecd> {
        self.inverse().map(|m| m.mul_vec(b))
    }
    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.c[i][j].is_finite()))
    }
    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn sym_eigenvalues(&self) -> Vecd {
        let mut d = Vecd::zeros(self.n);
        let ev = jacobi_eigenvalues(
            self.n,
            &(0..self.n * self.n).map(|k| self.c[k / self.n][k % self.n]).collect::<Vec<_>>(),
        );
        d.c[..self.n].copy_from_slice(&ev);
        d
    }
    pub fn min_sym_eigenvalue(&self) -> f64 {
        self.sym_eigenvalues().c[0]
    }
    pub fn log_det_spd(&self) -> f64 {
        libm::log(self.det())
    }
}

impl Add for Matd {
    type Output = Matd;
    fn add(self, o: Matd) -> Matd {
        let mut m = self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] += o.c[i][j];
            }
        }
        m
    }
}
impl Sub for Matd {
    type Output = Matd;
    fn sub(self, o: Matd) -> Matd {
        let mut m = self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] -= o.c[i][j];
            }
        }
        m
    }
}

impl Ten3 {
    pub fn zeros(n: usize) -> Self {
        Ten3 { n, c: [[[0.0; MAXD]; MAXD]; MAXD] }
    }
    /// Contract the last index with v: (T·v)_{ij} = Σ_k T_{ijk} v_k.
    pub fn contract(&self, v: &Vecd) -> Matd {
        let mut m = Matd::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut s = 0.0;
                for k in 0..self.n {
                    s += self.c[i][j][k] * v.c[k];
                }
                m.c[i][j] = s;
            }
        }
        m
    }
    /// Slice with the first index fixed (a symmetric matrix).
    pub fn slice(&self, k: usize) -> Matd {
        let mut m = Matd::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] = self.c[k][i][j];
            }
        }
        m
    }
    pub fn add_scaled_cube(&mut self, u: &Vecd, a: f64) {
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    self.c[i][j][k] += a * u.c[i] * u.c[j] * u.c[k];
                }
            }
        }
    }
    pub fn add(&mut self, o: &Ten3, a: f64) {
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    self.c[i][j][k] += a * o.c[i][j][k];
                }
            }
        }
    }
}

impl Ten4 {
    pub fn zeros(n: usize) -> Self {
        Ten4 { n, c: [[[[0.0; MAXD]; MAXD]; MAXD]; MAXD] }
    }
    pub fn slice2(&self, k: usize, l: usize) -> Matd {
        let mut m = Matd::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.c[i][j] = self.c[k][l][i][j];
            }
        }
        m
    }
    pub fn add_scaled_quartic(&mut self, u: &Vecd, a: f64) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        self.c[i][j][k][l] += a * u.c[i] * u.c[j] * u.c[k] * u.c[l];
                    }
                }
            }
        }
    }
    pub fn add(&mut self, o: &Ten4, a: f64) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        self.c[i][j][k][l] += a * o.c[i][j][k][l];
                    }
                }
            }
        }
    }
}

/// Cyclic Jacobi eigenvalues of a symmetric row-major matrix, ascending.
pub fn jacobi_eigenvalues(n: usize, a: &[f64]) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        let scale: f64 = (0..n).map(|i| m[i * n + i].abs()).fold(0.0, f64::max);
        if off <= 1e-30 * (1.0 + scale * scale) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

/// Small dense symmetric system, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSym {
    pub n: usize,
    pub a: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(n: usize) -> Self {
        DenseSym { n, a: vec![0.0; n * n] }
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * self.n + j] = x;
    }
    pub fn eigenvalues(&self) -> Vec<f64> {
        jacobi_eigenvalues(self.n, &self.a)
    }
    /// Lower Cholesky factor, or None if the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * n + i] = libm::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(l)
    }
    pub fn solve_spd(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let l = self.cholesky()?;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= l[i * n + k] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= l[k * n + i] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        Some(y)
    }
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let lo = ev[0];
        let hi = ev[self.n - 1];
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_3x3() {
        let m = Matd::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let p = m.mul_mat(&m.inverse().unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p.c[i][j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobi_matches_trace_and_det() {
        let m = Matd::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let ev = m.sym_eigenvalues();
        assert!((ev.c.iter().sum::<f64>() - m.trace()).abs() < 1e-12);
        assert!((ev.c[0] * ev.c[1] * ev.c[2] - m.det()).abs() < 1e-12);
        assert!(ev.c[0] <= ev.c[1] && ev.c[1] <= ev.c[2]);
    }

    #[test]
    fn cholesky_solve() {
        let mut a = DenseSym::zeros(2);
        a.a = vec![2.0, 1.0, 1.0, 3.0];
        let x = a.solve_spd(&[1.0, 2.0]).unwrap();
        assert!((2.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        a.a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(a.cholesky().is_none());
    }
}
