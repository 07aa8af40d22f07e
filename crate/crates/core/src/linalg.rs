//! Small dense helpers over `nalgebra` for the n ≤ 12 systems used here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Explicit inverse together with the condition estimate `‖A‖∞ ‖A⁻¹‖∞`.
pub fn inverse_with_condition(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let inv = a.clone().lu().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let condition = inf_norm(a) * inf_norm(&inv);
    if !condition.is_finite() {
        return Err(Error::Singular { condition });
    }
    Ok((inv, condition))
}

/// Partial-pivot LU solve; also returns the condition estimate.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let (_, condition) = inverse_with_condition(a)?;
    let x = a.clone().lu().solve(b).ok_or(Error::Singular { condition })?;
    Ok((x, condition))
}
