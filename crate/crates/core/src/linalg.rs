//! Small dense linear-algebra helpers shared by the filters and the smoother.
//!
//! All inversions go through a Cholesky factorization. Before factorizing an
//! innovation covariance we estimate its condition number on the
//! Jacobi-scaled matrix `D^-1/2 S D^-1/2`; channels are measured in very
//! different units (seconds for ToA, radians, m/s) so the raw condition number
//! says more about the units than about the information content.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition-number ceiling above which a covariance is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Diagonal jitter added once when a Cholesky factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Condition number of the Jacobi-scaled matrix. Returns `f64::INFINITY`
/// when any diagonal entry or eigenvalue is non-positive.
pub fn scaled_condition(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = m[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return f64::INFINITY;
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut scaled = m.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= scale[i] * scale[j];
        }
    }
    symmetrize(&mut scaled);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return f64::INFINITY;
    }
    max / min
}

/// Factorizes a symmetric positive-definite matrix, rejecting matrices whose
/// scaled condition number exceeds [`MAX_CONDITION`].
pub fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let cond = scaled_condition(m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::numerical(format!(
            "{what} is singular or ill-conditioned (condition number {cond:.3e})"
        )));
    }
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::numerical(format!("{what} is not positive definite")))
}

/// Lower-triangular square root of a PSD matrix. Retries once with
/// [`CHOLESKY_JITTER`] on the diagonal.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch.l());
    }
    let n = m.nrows();
    let jittered = m + DMatrix::identity(n, n) * CHOLESKY_JITTER;
    Cholesky::new(jittered)
        .map(|ch| ch.l())
        .ok_or_else(|| Error::numerical("matrix square root failed after jitter"))
}

/// Computes `a * m^-1` for SPD `m` without forming the inverse.
pub fn right_solve(a: &DMatrix<f64>, factor: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    // a m^-1 = (m^-1 a^T)^T since m is symmetric
    factor.solve(&a.transpose()).transpose()
}

/// `y^T m^-1 y` through the factorization.
pub fn quadratic_form(y: &DVector<f64>, factor: &Cholesky<f64, Dyn>) -> f64 {
    let x = factor.solve(y);
    y.dot(&x).max(0.0)
}

/// Eigenvalue floor of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrized(m.clone()))
        .eigenvalues
        .min()
}

/// Indices whose diagonal entry is exactly zero and whose row is zero. These
/// are states pinned by construction (flat-terrain mode) and are excluded
/// from inversions.
pub fn pinned_indices(m: &DMatrix<f64>) -> Vec<usize> {
    (0..m.nrows())
        .filter(|&i| m.row(i).iter().all(|v| *v == 0.0))
        .collect()
}

/// Computes `a * m^-1` where `m` may have structurally zero rows/columns.
/// Pinned coordinates get zero columns in the result; the rest is solved on
/// the free subspace.
pub fn right_solve_free(a: &DMatrix<f64>, m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let pinned = pinned_indices(m);
    if pinned.is_empty() {
        let f = spd_factor(m, what)?;
        return Ok(right_solve(a, &f));
    }
    let free: Vec<usize> = (0..m.nrows()).filter(|i| !pinned.contains(i)).collect();
    let k = free.len();
    let mut out = DMatrix::zeros(a.nrows(), m.ncols());
    if k == 0 {
        return Ok(out);
    }
    let sub = DMatrix::from_fn(k, k, |i, j| m[(free[i], free[j])]);
    let a_sub = DMatrix::from_fn(a.nrows(), k, |i, j| a[(i, free[j])]);
    let f = spd_factor(&sub, what)?;
    let solved = right_solve(&a_sub, &f);
    for (jj, &j) in free.iter().enumerate() {
        for i in 0..a.nrows() {
            out[(i, j)] = solved[(i, jj)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn scaled_condition_ignores_units() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-18, 1.0, 1e4]));
        assert!((scaled_condition(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            spd_factor(&m, "S"),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn jitter_rescues_zero_matrix() {
        let m = DMatrix::<f64>::zeros(3, 3);
        let l = psd_sqrt(&m).unwrap();
        assert!(l[(0, 0)] > 0.0 && l[(0, 0)] < 1e-5);
    }

    #[test]
    fn free_subspace_solve_skips_pinned_rows() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 4.0]));
        let a = DMatrix::from_element(1, 3, 1.0);
        let out = right_solve_free(&a, &m, "P").unwrap();
        assert!((out[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(out[(0, 1)], 0.0);
        assert!((out[(0, 2)] - 0.25).abs() < 1e-15);
    }
}
