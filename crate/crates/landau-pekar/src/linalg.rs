//! Tridiagonal kernels shared by the kinetic operator, the eigensolvers and
//! the propagators.

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Field of scalars the tridiagonal solvers work over (`f64` or `Complex64`).
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn zero() -> Self {
        Self::from_real(0.0)
    }
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// LU factorization of a general tridiagonal matrix with partial pivoting.
#[derive(Debug, Clone)]
pub struct TriLu<T: Scalar> {
    d: Vec<T>,
    du: Vec<T>,
    du2: Vec<T>,
    dl: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Scalar> TriLu<T> {
    /// Factor the matrix with sub-diagonal `dl`, diagonal `d` and
    /// super-diagonal `du`. Returns `None` when an exact zero pivot appears.
    pub fn new(mut dl: Vec<T>, mut d: Vec<T>, mut du: Vec<T>) -> Option<Self> {
        let n = d.len();
        assert!(n >= 1 && dl.len() + 1 == n && du.len() + 1 == n);
        let mut du2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].modulus() >= dl[i].modulus() {
                if d[i].modulus() == 0.0 {
                    return None;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] = d[i + 1] - fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -(fact * du[i + 1]);
                }
                swapped[i] = true;
            }
        }
        if d[n - 1].modulus() == 0.0 {
            return None;
        }
        Some(Self { d, du, du2, dl, swapped })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Overwrite `b` with the solution of `A x = b`.
    pub fn solve_in_place<U>(&self, b: &mut [U])
    where
        U: Copy + Sub<Output = U> + Mul<T, Output = U> + Div<T, Output = U>,
    {
        let n = self.d.len();
        assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - b[i] * self.dl[i];
            } else {
                b[i + 1] = b[i + 1] - b[i] * self.dl[i];
            }
        }
        b[n - 1] = b[n - 1] / self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - b[n - 1] * self.du[n - 2]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - b[i + 1] * self.du[i] - b[i + 2] * self.du2[i]) / self.d[i];
        }
    }
}

/// Symmetric positive definite constant tridiagonal (Toeplitz) solver,
/// used for the Numerov mass matrix tridiag(1, 10, 1)/12.
#[derive(Debug, Clone)]
pub struct ToeplitzSpd {
    off: f64,
    inv_piv: Vec<f64>,
    mult: Vec<f64>,
}

impl ToeplitzSpd {
    pub fn new(n: usize, diag: f64, off: f64) -> Self {
        let mut inv_piv = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut p = diag;
        inv_piv[0] = 1.0 / p;
        for i in 1..n {
            mult[i] = off / p;
            p = diag - mult[i] * off;
            inv_piv[i] = 1.0 / p;
        }
        Self { off, inv_piv, mult }
    }

    pub fn solve_in_place<U>(&self, b: &mut [U])
    where
        U: Copy + Sub<Output = U> + Mul<f64, Output = U>,
    {
        let n = self.inv_piv.len();
        assert_eq!(b.len(), n);
        for i in 1..n {
            b[i] = b[i] - b[i - 1] * self.mult[i];
        }
        b[n - 1] = b[n - 1] * self.inv_piv[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - b[i + 1] * self.off) * self.inv_piv[i];
        }
    }
}

/// Multiply a tridiagonal matrix (sub `dl`, diag `d`, super `du`) by `x`.
pub fn tri_mul<T: Scalar, U>(dl: &[T], d: &[T], du: &[T], x: &[U]) -> Vec<U>
where
    U: Copy + Add<Output = U> + Mul<T, Output = U>,
{
    let n = d.len();
    let mut y: Vec<U> = (0..n).map(|i| x[i] * d[i]).collect();
    for i in 0..n - 1 {
        y[i] = y[i] + x[i + 1] * du[i];
        y[i + 1] = y[i + 1] + x[i] * dl[i];
    }
    y
}

/// Number of negative pivots in the unpivoted elimination of a tridiagonal
/// matrix. For a symmetrizable matrix this is its negative inertia.
pub fn negative_pivots(dl: &[f64], d: &[f64], du: &[f64]) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut p = d[0];
    for i in 0..d.len() {
        if i > 0 {
            p = d[i] - dl[i - 1] * du[i - 1] / p;
        }
        if p == 0.0 {
            p = -tiny;
        }
        if p < 0.0 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(dl: &[f64], d: &[f64], du: &[f64]) -> DMatrix<f64> {
        let n = d.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
            if i + 1 < n {
                m[(i, i + 1)] = du[i];
                m[(i + 1, i)] = dl[i];
            }
        }
        m
    }

    #[test]
    fn pivoted_solve_matches_dense() {
        // weak diagonal forces row interchanges
        let n = 9;
        let d: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64) - 0.3).collect();
        let dl: Vec<f64> = (0..n - 1).map(|i| 1.0 + 0.2 * i as f64).collect();
        let du: Vec<f64> = (0..n - 1).map(|i| -0.7 + 0.05 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.5).collect();
        let lu = TriLu::new(dl.clone(), d.clone(), du.clone()).unwrap();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let y = tri_mul(&dl, &d, &du, &x);
        for i in 0..n {
            assert!((y[i] - b[i]).abs() < 1e-12, "{i}: {} vs {}", y[i], b[i]);
        }
    }

    #[test]
    fn complex_rhs_against_real_factor() {
        let n = 6;
        let d = vec![4.0; n];
        let off = vec![1.0; n - 1];
        let lu = TriLu::new(off.clone(), d.clone(), off.clone()).unwrap();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let y = tri_mul(&off, &d, &off, &x);
        for i in 0..n {
            assert!((y[i] - b[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn toeplitz_spd_solve() {
        let n = 20;
        let t = ToeplitzSpd::new(n, 10.0 / 12.0, 1.0 / 12.0);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut x = b.clone();
        t.solve_in_place(&mut x);
        let y = tri_mul(&vec![1.0 / 12.0; n - 1], &vec![10.0 / 12.0; n], &vec![1.0 / 12.0; n - 1], &x);
        for i in 0..n {
            assert!((y[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn negative_pivots_is_inertia() {
        let n = 12;
        let d: Vec<f64> = (0..n).map(|i| i as f64 - 5.5).collect();
        let off = vec![0.8; n - 1];
        let m = dense(&off, &d, &off);
        let neg = m.symmetric_eigenvalues().iter().filter(|&&x| x < 0.0).count();
        assert_eq!(negative_pivots(&off, &d, &off), neg);
    }
}
