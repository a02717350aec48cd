//! Tridiagonal and cyclic tridiagonal solvers with a reusable factorization.

use std::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Scalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    const ONE: Self;
    fn magnitude(self) -> f64;
}

impl Scalar for f64 {
    const ONE: Self = 1.0;
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    const ONE: Self = Complex64::new(1.0, 0.0);
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// LU factorization (Thomas algorithm) of the matrix with sub-diagonal
/// `a[1..]`, diagonal `b` and super-diagonal `c[..n-1]`.
#[derive(Debug, Clone)]
pub struct Tridiagonal<T> {
    sub: Vec<T>,
    /// Modified super-diagonal `c'`.
    upper: Vec<T>,
    /// Pivots `b_i - a_i c'_{i-1}`.
    pivot: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn new(a: &[T], b: &[T], c: &[T]) -> Result<Self> {
        let n = b.len();
        if a.len() != n || c.len() != n || n == 0 {
            return Err(Error::Internal("tridiagonal diagonals must have equal, non-zero length".into()));
        }
        let scale = b.iter().map(|v| v.magnitude()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut upper = vec![T::default(); n];
        let mut pivot = vec![T::default(); n];
        for i in 0..n {
            let p = if i == 0 { b[0] } else { b[i] - a[i] * upper[i - 1] };
            if !(p.magnitude() > 1e-14 * scale) {
                return Err(Error::Internal(format!("singular tridiagonal system at row {i}")));
            }
            pivot[i] = p;
            upper[i] = c[i] / p;
        }
        Ok(Self { sub: a.to_vec(), upper, pivot })
    }

    pub fn len(&self) -> usize {
        self.pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] = rhs[0] / self.pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) / self.pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] = rhs[i] - self.upper[i] * rhs[i + 1];
        }
    }
}

/// Periodic tridiagonal system: additionally `A[0][n-1] = a[0]` and
/// `A[n-1][0] = c[n-1]`. Solved with the Sherman–Morrison correction.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal<T> {
    inner: Tridiagonal<T>,
    z: Vec<T>,
    top_right: T,
    gamma: T,
    denom: T,
}

impl<T: Scalar> CyclicTridiagonal<T> {
    pub fn new(a: &[T], b: &[T], c: &[T]) -> Result<Self> {
        let n = b.len();
        if n < 3 || a.len() != n || c.len() != n {
            return Err(Error::Internal("cyclic system needs at least 3 rows".into()));
        }
        let top_right = a[0];
        let bottom_left = c[n - 1];
        let gamma = T::default() - b[0];
        let mut bb = b.to_vec();
        bb[0] = b[0] - gamma;
        bb[n - 1] = b[n - 1] - bottom_left * top_right / gamma;
        let inner = Tridiagonal::new(a, &bb, c)?;
        let mut z = vec![T::default(); n];
        z[0] = gamma;
        z[n - 1] = bottom_left;
        inner.solve_in_place(&mut z);
        let denom = T::ONE + z[0] + top_right * z[n - 1] / gamma;
        if !(denom.magnitude() > 1e-14) {
            return Err(Error::Internal("singular cyclic tridiagonal system".into()));
        }
        Ok(Self { inner, z, top_right, gamma, denom })
    }

    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let n = rhs.len();
        self.inner.solve_in_place(rhs);
        let fact = (rhs[0] + self.top_right * rhs[n - 1] / self.gamma) / self.denom;
        for (r, z) in rhs.iter_mut().zip(&self.z) {
            *r = *r - fact * *z;
        }
    }
}
