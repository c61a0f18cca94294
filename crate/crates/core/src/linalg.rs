//! Dense direct solves with residual reporting.

use nalgebra::{DMatrix, DVector};

use crate::error::{AoiiError, Result};

/// Solves `a x = b` by LU with partial pivoting. Returns `x` and the
/// max-norm residual `|a x - b|_inf`.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(AoiiError::Singular(format!(
            "shape mismatch: {}x{} matrix, {} right-hand side",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| AoiiError::Singular(format!("{}x{} system", a.nrows(), a.ncols())))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AoiiError::Singular("non-finite solution".into()));
    }
    let residual = (a * &x - b).amax();
    Ok((x, residual))
}
