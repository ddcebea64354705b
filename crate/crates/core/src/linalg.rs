//! Small dense complex linear-algebra helpers shared by the detector, the
//! reflection optimiser and the estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Kronecker product of two column vectors, `a ⊗ b`.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

pub fn frobenius_sqr(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Solves `A X = B` for Hermitian positive definite `A`.
///
/// Falls back to LU when the Cholesky factorisation breaks down numerically.
pub fn solve_hpd(a: CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular Hermitian system".into()))
}

/// `sigma_max / sigma_min` over the `min(rows, cols)` singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return f64::NAN;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Stacks column vectors into a matrix.
pub fn hstack(cols: &[CVector], rows: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}
