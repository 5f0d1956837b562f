//! Truncated Taylor jets (value and symmetric derivatives up to fourth order)
//! with exact Leibniz and Faà di Bruno rules.  Weights and potential
//! corrections are evaluated through this algebra so every derivative is
//! analytic.

use crate::linalg::{Matd, Ten3, Ten4, Vecd};

#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub order: u8,
    pub v: f64,
    pub g: Vecd,
    pub h: Matd,
    pub t: Ten3,
    pub q: Ten4,
}

impl Jet {
    pub fn constant(n: usize, order: u8, c: f64) -> Jet {
        Jet { order, v: c, g: Vecd::zeros(n), h: Matd::zeros(n), t: Ten3::zeros(n), q: Ten4::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        self.g.n
    }

    /// Jet of the affine function ⟨xi, x⟩ + c at x.
    pub fn affine(x: &Vecd, xi: &Vecd, c: f64, order: u8) -> Jet {
        let mut j = Jet::constant(x.n, order, xi.dot(x) + c);
        j.g = *xi;
        j
    }

    /// Mixed partial with the given index multiset (length 0..=4).
    #[inline]
    pub fn d(&self, idx: &[usize]) -> f64 {
        match idx.len() {
            0 => self.v,
            1 => self.g.c[idx[0]],
            2 => self.h.c[idx[0]][idx[1]],
            3 => self.t.c[idx[0]][idx[1]][idx[2]],
            _ => self.q.c[idx[0]][idx[1]][idx[2]][idx[3]],
        }
    }

    pub fn scale(&self, a: f64) -> Jet {
        let mut r = *self;
        r.v *= a;
        r.g = r.g.scale(a);
        r.h = r.h.scale(a);
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    r.t.c[i][j][k] *= a;
                    if self.order >= 4 {
                        for l in 0..n {
                            r.q.c[i][j][k][l] *= a;
                        }
                    }
                }
            }
        }
        r
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = *self;
        r.order = self.order.min(o.order);
        r.v += o.v;
        r.g = r.g + o.g;
        r.h = r.h + o.h;
        if r.order >= 3 {
            r.t.add(&o.t, 1.0);
        }
        if r.order >= 4 {
            r.q.add(&o.q, 1.0);
        }
        r
    }

    pub fn add_const(&self, c: f64) -> Jet {
        let mut r = *self;
        r.v += c;
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let n = self.dim();
        let order = self.order.min(o.order);
        let mut r = Jet::constant(n, order, self.v * o.v);
        for i in 0..n {
            r.g.c[i] = self.g.c[i] * o.v + self.v * o.g.c[i];
        }
        if order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    r.h.c[i][j] = leibniz(self, o, &[i, j]);
                }
            }
        }
        if order >= 3 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        r.t.c[i][j][k] = leibniz(self, o, &[i, j, k]);
                    }
                }
            }
        }
        if order >= 4 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            r.q.c[i][j][k][l] = leibniz(self, o, &[i, j, k, l]);
                        }
                    }
                }
            }
        }
        r
    }

    /// Composition φ∘self, given φ and its first four derivatives at self.v.
    pub fn compose(&self, phi: [f64; 5]) -> Jet {
        let n = self.dim();
        let g = self;
        let mut r = Jet::constant(n, self.order, phi[0]);
        for i in 0..n {
            r.g.c[i] = phi[1] * g.g.c[i];
        }
        if self.order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    r.h.c[i][j] = phi[2] * g.g.c[i] * g.g.c[j] + phi[1] * g.h.c[i][j];
                }
            }
        }
        if self.order >= 3 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let (gi, gj, gk) = (g.g.c[i], g.g.c[j], g.g.c[k]);
                        r.t.c[i][j][k] = phi[3] * gi * gj * gk
                            + phi[2] * (g.h.c[i][j] * gk + g.h.c[i][k] * gj + g.h.c[j][k] * gi)
                            + phi[1] * g.t.c[i][j][k];
                    }
                }
            }
        }
        if self.order >= 4 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let (gi, gj, gk, gl) = (g.g.c[i], g.g.c[j], g.g.c[k], g.g.c[l]);
                            let h = &g.h.c;
                            let t = &g.t.c;
                            let two_one = h[i][j] * gk * gl
                                + h[i][k] * gj * gl
                                + h[i][l] * gj * gk
                                + h[j][k] * gi * gl
                                + h[j][l] * gi * gk
                                + h[k][l] * gi * gj;
                            let pairs = h[i][j] * h[k][l] + h[i][k] * h[j][l] + h[i][l] * h[j][k];
                            let three_one =
                                t[i][j][k] * gl + t[i][j][l] * gk + t[i][k][l] * gj + t[j][k][l] * gi;
                            r.q.c[i][j][k][l] = phi[4] * gi * gj * gk * gl
                                + phi[3] * two_one
                                + phi[2] * (pairs + three_one)
                                + phi[1] * g.q.c[i][j][k][l];
                        }
                    }
                }
            }
        }
        r
    }

    pub fn exp(&self) -> Jet {
        let e = libm::exp(self.v);
        self.compose([e; 5])
    }

    pub fn ln(&self) -> Jet {
        let x = self.v;
        self.compose([libm::log(x), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x), -6.0 / (x * x * x * x)])
    }

    pub fn recip(&self) -> Jet {
        let x = self.v;
        let x2 = x * x;
        self.compose([1.0 / x, -1.0 / x2, 2.0 / (x2 * x), -6.0 / (x2 * x2), 24.0 / (x2 * x2 * x)])
    }
}

fn leibniz(f: &Jet, g: &Jet, idx: &[usize]) -> f64 {
    let m = idx.len();
    let mut s = 0.0;
    let mut a = [0usize; 4];
    let mut b = [0usize; 4];
    for mask in 0u32..(1 << m) {
        let (mut na, mut nb) = (0, 0);
        for (p, &i) in idx.iter().enumerate() {
            if mask & (1 << p) != 0 {
                a[na] = i;
                na += 1;
            } else {
                b[nb] = i;
                nb += 1;
            }
        }
        s += f.d(&a[..na]) * g.d(&b[..nb]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&Vecd) -> Jet, x: Vecd) {
        let h = 1e-4;
        let j0 = f(&x);
        for i in 0..x.n {
            let mut xp = x;
            let mut xm = x;
            xp.c[i] += h;
            xm.c[i] -= h;
            let (jp, jm) = (f(&xp), f(&xm));
            assert!(((jp.v - jm.v) / (2.0 * h) - j0.g.c[i]).abs() < 1e-6);
            for a in 0..x.n {
                assert!(((jp.g.c[a] - jm.g.c[a]) / (2.0 * h) - j0.h.c[i][a]).abs() < 1e-6);
                for b in 0..x.n {
                    assert!(((jp.h.c[a][b] - jm.h.c[a][b]) / (2.0 * h) - j0.t.c[i][a][b]).abs() < 1e-5);
                    for c in 0..x.n {
                        let fd = (jp.t.c[a][b][c] - jm.t.c[a][b][c]) / (2.0 * h);
                        assert!((fd - j0.q.c[i][a][b][c]).abs() < 1e-4 * (1.0 + fd.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn composed_jets_match_finite_differences() {
        let f = |x: &Vecd| {
            let a = Jet::affine(x, &Vecd::from_slice(&[0.7, -0.3]), 0.2, 4);
            let b = Jet::affine(x, &Vecd::from_slice(&[0.1, 0.9]), 2.0, 4);
            a.exp().add(&b.ln().mul(&a)).mul(&b.recip())
        };
        fd_check(f, Vecd::from_slice(&[0.3, 0.4]));
    }
}
