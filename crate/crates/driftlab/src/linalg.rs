//! Dense symmetric solves for the small systems met in conditioning,
//! regression and exact fBm sampling.

use crate::error::{degenerate, Result};
use crate::scalar::Scalar;

/// Relative pivot below which a block is treated as near-singular.
const PIVOT_REL_TOL: f64 = 1e-12;
/// Ridge added to a near-singular block, relative to trace/dim.
pub const RIDGE_REL: f64 = 1e-10;

/// Lower Cholesky factor of a row-major `n x n` matrix; `None` when a pivot
/// falls to `tol` or below.
pub fn cholesky<T: Scalar>(a: &[T], n: usize, tol: T) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if !(d > tol) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// `y = L x` for a lower-triangular row-major factor.
pub fn lower_mul<T: Scalar>(l: &[T], n: usize, x: &[T], out: &mut [T]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        let mut s = T::zero();
        for (a, b) in row.iter().zip(&x[..=i]) {
            s = s + *a * *b;
        }
        out[i] = s;
    }
}

/// Cholesky-backed solver for symmetric positive (semi)definite systems with
/// a reproducible ridge fallback.
#[derive(Clone, Debug)]
pub struct SymSolver<T> {
    n: usize,
    l: Vec<T>,
    ridge: Option<T>,
}

impl<T: Scalar> SymSolver<T> {
    pub fn new(a: &[T], n: usize) -> Result<Self> {
        if n == 0 {
            return Ok(Self { n, l: Vec::new(), ridge: None });
        }
        let trace: T = (0..n).map(|i| a[i * n + i]).sum();
        let scale = trace / T::from_usize_exact(n);
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(degenerate(format!("covariance block has trace {trace}")));
        }
        if let Some(l) = cholesky(a, n, scale * T::lit(PIVOT_REL_TOL)) {
            return Ok(Self { n, l, ridge: None });
        }
        let ridge = scale * T::lit(RIDGE_REL);
        let mut b = a.to_vec();
        for i in 0..n {
            b[i * n + i] = b[i * n + i] + ridge;
        }
        match cholesky(&b, n, T::zero()) {
            Some(l) => Ok(Self { n, l, ridge: Some(ridge) }),
            None => Err(degenerate(format!("covariance block of dimension {n} is singular beyond ridge {ridge:e}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ridge(&self) -> Option<T> {
        self.ridge
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

/// Checks symmetry (absolute `sym_tol` scaled by magnitude) and numerical
/// positive semidefiniteness (smallest eigenvalue above `-psd_tol`).
pub fn is_psd<T: Scalar>(a: &[T], n: usize, sym_tol: T, psd_tol: T) -> bool {
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[i * n + j], a[j * n + i]);
            if (x - y).abs() > sym_tol * T::one().max(x.abs()).max(y.abs()) {
                return false;
            }
        }
    }
    let mut b = a.to_vec();
    for i in 0..n {
        b[i * n + i] = b[i * n + i] + psd_tol;
    }
    cholesky(&b, n, T::zero()).is_some()
}
