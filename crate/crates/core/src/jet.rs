//! Second-order forward-mode automatic differentiation over a few local
//! variables. Used for exact constraint Jacobians and Hessians of the AC
//! network equations, where every term touches at most five unknowns.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; N],
            h: [[0.0; N]; N],
        }
    }

    pub fn var(v: f64, k: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[k] = 1.0;
        j
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, d1: f64, d2: f64) -> Self {
        let mut out = Self::constant(f);
        for a in 0..N {
            out.g[a] = d1 * self.g[a];
            for b in 0..N {
                out.h[a][b] = d1 * self.h[a][b] + d2 * self.g[a] * self.g[b];
            }
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sqr(self) -> Self {
        self.chain(self.v * self.v, 2.0 * self.v, 2.0)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn scale(mut self, k: f64) -> Self {
        self.v *= k;
        for a in 0..N {
            self.g[a] *= k;
            for b in 0..N {
                self.h[a][b] *= k;
            }
        }
        self
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for a in 0..N {
            self.g[a] += o.g[a];
            for b in 0..N {
                self.h[a][b] += o.h[a][b];
            }
        }
        self
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for a in 0..N {
            out.g[a] = self.v * o.g[a] + o.v * self.g[a];
            for b in 0..N {
                out.h[a][b] = self.v * o.h[a][b]
                    + o.v * self.h[a][b]
                    + self.g[a] * o.g[b]
                    + o.g[a] * self.g[b];
            }
        }
        out
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        self.scale(k)
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    fn div(self, k: f64) -> Self {
        self.scale(1.0 / k)
    }
}
