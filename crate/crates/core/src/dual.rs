//! Forward-mode automatic differentiation scalars.
//!
//! Two truncated Taylor types are provided: [`Dual`] carries a value and an
//! `N`-dimensional gradient, [`Dual2`] additionally carries the full symmetric
//! `N x N` Hessian. Evaluating a scalar expression with these types yields its
//! exact first (and second) partial derivatives with respect to the seeded
//! variables, up to floating-point rounding. This is what backs the Hamiltonian
//! gradients and the coefficient matrices of the variational equations; no
//! finite differencing happens in the shipped evaluation paths.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction over `f64` and the dual types so that model expressions
/// (vector fields, Hamiltonians, chart conversions) can be written once and
/// evaluated either plainly or with derivatives.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Lift a constant (zero derivatives).
    fn cst(c: f64) -> Self;
    /// Primal value.
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, den: Self) -> Self;
    fn recip(self) -> Self;
    /// Integer power by repeated multiplication (exact chain rule).
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::cst(1.0),
            _ => {
                let base = if n < 0 { self.recip() } else { self };
                let mut acc = base;
                for _ in 1..n.abs() {
                    acc = acc * base;
                }
                acc
            }
        }
    }
}

impl Real for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn atan2(self, den: Self) -> Self {
        f64::atan2(self, den)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// First-order dual number: value plus gradient of length `N`.
#[derive(Clone, Copy, Debug)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    /// Independent variable with unit seed at `index`.
    #[inline]
    pub fn var(value: f64, index: usize) -> Self {
        let mut eps = [0.0; N];
        eps[index] = 1.0;
        Self { re: value, eps }
    }

    #[inline]
    pub fn grad(&self) -> &[f64; N] {
        &self.eps
    }

    /// Chain rule for a univariate function with derivative `d`.
    #[inline]
    fn lift(self, value: f64, d: f64) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = d * self.eps[i];
        }
        Self { re: value, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for i in 0..N {
            self.eps[i] += rhs.eps[i];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for i in 0..N {
            self.eps[i] -= rhs.eps[i];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.re * rhs.eps[i] + rhs.re * self.eps[i];
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        self * Real::recip(rhs)
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for i in 0..N {
            self.eps[i] = -self.eps[i];
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.re *= rhs;
        for i in 0..N {
            self.eps[i] *= rhs;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(c: f64) -> Self {
        Self {
            re: c,
            eps: [0.0; N],
        }
    }
    #[inline]
    fn val(self) -> f64 {
        self.re
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.lift(s, 0.5 / s)
    }
    #[inline]
    fn sin(self) -> Self {
        self.lift(self.re.sin(), self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.lift(self.re.cos(), -self.re.sin())
    }
    #[inline]
    fn atan2(self, den: Self) -> Self {
        let (y, x) = (self, den);
        let q = x.re * x.re + y.re * y.re;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (x.re * y.eps[i] - y.re * x.eps[i]) / q;
        }
        Self {
            re: y.re.atan2(x.re),
            eps,
        }
    }
    #[inline]
    fn recip(self) -> Self {
        let r = 1.0 / self.re;
        self.lift(r, -r * r)
    }
}

/// Second-order dual number: value, gradient, and symmetric Hessian.
#[derive(Clone, Copy, Debug)]
pub struct Dual2<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> Dual2<N> {
    /// Independent variable with unit seed at `index`.
    pub fn var(value: f64, index: usize) -> Self {
        let mut eps = [0.0; N];
        eps[index] = 1.0;
        Self {
            re: value,
            eps,
            hess: [[0.0; N]; N],
        }
    }

    /// Chain rule for a univariate function with first and second derivative.
    fn lift(self, value: f64, d1: f64, d2: f64) -> Self {
        let mut eps = [0.0; N];
        let mut hess = [[0.0; N]; N];
        for i in 0..N {
            eps[i] = d1 * self.eps[i];
            for j in 0..N {
                hess[i][j] = d1 * self.hess[i][j] + d2 * self.eps[i] * self.eps[j];
            }
        }
        Self {
            re: value,
            eps,
            hess,
        }
    }
}

impl<const N: usize> Add for Dual2<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for i in 0..N {
            self.eps[i] += rhs.eps[i];
            for j in 0..N {
                self.hess[i][j] += rhs.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Dual2<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for i in 0..N {
            self.eps[i] -= rhs.eps[i];
            for j in 0..N {
                self.hess[i][j] -= rhs.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for Dual2<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        let mut hess = [[0.0; N]; N];
        for i in 0..N {
            eps[i] = self.re * rhs.eps[i] + rhs.re * self.eps[i];
            for j in 0..N {
                hess[i][j] = self.re * rhs.hess[i][j]
                    + rhs.re * self.hess[i][j]
                    + self.eps[i] * rhs.eps[j]
                    + self.eps[j] * rhs.eps[i];
            }
        }
        Self {
            re: self.re * rhs.re,
            eps,
            hess,
        }
    }
}

impl<const N: usize> Div for Dual2<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * Real::recip(rhs)
    }
}

impl<const N: usize> Neg for Dual2<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for i in 0..N {
            self.eps[i] = -self.eps[i];
            for j in 0..N {
                self.hess[i][j] = -self.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual2<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual2<N> {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual2<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        self.re *= rhs;
        for i in 0..N {
            self.eps[i] *= rhs;
            for j in 0..N {
                self.hess[i][j] *= rhs;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual2<N> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<const N: usize> Real for Dual2<N> {
    fn cst(c: f64) -> Self {
        Self {
            re: c,
            eps: [0.0; N],
            hess: [[0.0; N]; N],
        }
    }
    fn val(self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.lift(s, 0.5 / s, -0.25 / (s * s * s))
    }
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.lift(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.lift(c, -s, -c)
    }
    fn atan2(self, den: Self) -> Self {
        let (y, x) = (self, den);
        let q = x.re * x.re + y.re * y.re;
        let (ax, ay) = (-y.re / q, x.re / q);
        let q2 = q * q;
        let axx = 2.0 * x.re * y.re / q2;
        let ayy = -axx;
        let axy = (y.re * y.re - x.re * x.re) / q2;
        let mut eps = [0.0; N];
        let mut hess = [[0.0; N]; N];
        for i in 0..N {
            eps[i] = ax * x.eps[i] + ay * y.eps[i];
            for j in 0..N {
                hess[i][j] = ax * x.hess[i][j]
                    + ay * y.hess[i][j]
                    + axx * x.eps[i] * x.eps[j]
                    + ayy * y.eps[i] * y.eps[j]
                    + axy * (x.eps[i] * y.eps[j] + y.eps[i] * x.eps[j]);
            }
        }
        Self {
            re: y.re.atan2(x.re),
            eps,
            hess,
        }
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.re;
        self.lift(r, -r * r, 2.0 * r * r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference function with enough structure to exercise every primitive:
    // f(a, b) = sin(a*b) / sqrt(a) + atan2(b, a) - b^3
    fn f<S: Real>(a: S, b: S) -> S {
        (a * b).sin() / a.sqrt() + b.atan2(a) - b.powi(3)
    }

    fn fd_grad(a: f64, b: f64, h: f64) -> [f64; 2] {
        [
            (f(a + h, b) - f(a - h, b)) / (2.0 * h),
            (f(a, b + h) - f(a, b - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        let (a, b) = (1.3, 0.7);
        let g = f(Dual::<2>::var(a, 0), Dual::<2>::var(b, 1));
        let fd = fd_grad(a, b, 1e-6);
        assert!((g.re - f(a, b)).abs() < 1e-15);
        for i in 0..2 {
            assert!(
                (g.eps[i] - fd[i]).abs() < 1e-8,
                "component {i}: ad {} vs fd {}",
                g.eps[i],
                fd[i]
            );
        }
    }

    #[test]
    fn dual2_hessian_matches_finite_differences() {
        let (a, b) = (1.3, 0.7);
        let g = f(Dual2::<2>::var(a, 0), Dual2::<2>::var(b, 1));
        let h = 1e-4;
        let mut fd = [[0.0; 2]; 2];
        for (j, (da, db)) in [(h, 0.0), (0.0, h)].iter().enumerate() {
            let gp = fd_grad(a + da, b + db, 1e-6);
            let gm = fd_grad(a - da, b - db, 1e-6);
            for i in 0..2 {
                fd[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (g.hess[i][j] - fd[i][j]).abs() < 1e-5,
                    "entry ({i},{j}): ad {} vs fd {}",
                    g.hess[i][j],
                    fd[i][j]
                );
            }
        }
        // Symmetry is exact by construction.
        assert_eq!(g.hess[0][1], g.hess[1][0]);
    }
}
