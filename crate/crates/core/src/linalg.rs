//! Small dense helpers shared by the fitting and inference code.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeeeError, Result};

/// Condition number above which an inversion is reported as ill-conditioned.
pub const CONDITION_WARNING: f64 = 1e12;

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| GeeeError::Numerical("matrix is not positive definite".into()))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

/// Inverse of a general square matrix through fully pivoted LU, with the
/// condition number returned for diagnostics.
pub fn checked_inverse(a: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let cond = condition_number(a);
    if !cond.is_finite() || cond > 1.0 / (f64::EPSILON * a.nrows().max(1) as f64) {
        return Err(GeeeError::Rank(format!("{what} is singular (condition number {cond:e})")));
    }
    let inv = a
        .clone()
        .full_piv_lu()
        .try_inverse()
        .ok_or_else(|| GeeeError::Rank(format!("{what} is singular")))?;
    Ok((inv, cond))
}

/// Solve `a x = b` for a general square `a`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let cond = condition_number(a);
    if !cond.is_finite() || cond > 1.0 / (f64::EPSILON * a.nrows().max(1) as f64) {
        return Err(GeeeError::Rank(format!("{what} is singular (condition number {cond:e})")));
    }
    a.clone()
        .full_piv_lu()
        .solve(b)
        .ok_or_else(|| GeeeError::Rank(format!("{what} is singular")))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
