//! Small dense symmetric-matrix helpers bridging ndarray state to nalgebra
//! factorizations. Internal plumbing only.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};

pub(crate) fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

pub(crate) fn from_dmatrix(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

fn check_symmetric(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSpd(format!("{what} is not square")));
    }
    for i in 0..a.nrows() {
        for j in 0..i {
            let scale = a[[i, j]].abs().max(a[[j, i]].abs()).max(1.0);
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-10 * scale {
                return Err(Error::NotSpd(format!("{what} is not symmetric")));
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(a: ArrayView2<f64>, what: &str) -> Result<Array1<f64>> {
    check_symmetric(a, what)?;
    let eig = to_dmatrix(a).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(Array1::from_vec(vals))
}

/// Lower Cholesky factor of an SPD matrix.
pub(crate) fn cholesky_lower(a: ArrayView2<f64>, what: &str) -> Result<Array2<f64>> {
    check_symmetric(a, what)?;
    let chol = to_dmatrix(a)
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("{what} is not positive definite")))?;
    Ok(from_dmatrix(&chol.l()))
}

/// Inverse of an SPD matrix via Cholesky.
pub(crate) fn invert_spd(a: ArrayView2<f64>, what: &str) -> Result<Array2<f64>> {
    check_symmetric(a, what)?;
    let chol = to_dmatrix(a)
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("{what} is not positive definite")))?;
    Ok(from_dmatrix(&chol.inverse()))
}

/// Symmetric positive semidefinite square root; tiny negative eigenvalues
/// from roundoff are clamped to zero.
pub(crate) fn sym_sqrt(a: ArrayView2<f64>, what: &str) -> Result<Array2<f64>> {
    check_symmetric(a, what)?;
    let eig = to_dmatrix(a).symmetric_eigen();
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()),
    );
    let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok(from_dmatrix(&sqrt))
}

/// Log-determinant of an SPD matrix via Cholesky.
pub(crate) fn log_det_spd(a: ArrayView2<f64>, what: &str) -> Result<f64> {
    let l = cholesky_lower(a, what)?;
    Ok(2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigenvalues_and_sqrt_of_diag() {
        let a = array![[4.0, 0.0], [0.0, 9.0]];
        let vals = sym_eigenvalues(a.view(), "a").unwrap();
        assert_abs_diff_eq!(vals[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 9.0, epsilon = 1e-12);
        let s = sym_sqrt(a.view(), "a").unwrap();
        assert_abs_diff_eq!(s[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[[1, 1]], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(sym_eigenvalues(a.view(), "a").is_err());
        let b = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_lower(b.view(), "b").is_err());
    }

    #[test]
    fn inverse_times_original_is_identity() {
        let a = array![[2.0, 0.5], [0.5, 1.0]];
        let inv = invert_spd(a.view(), "a").unwrap();
        let prod = a.dot(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[[i, j]], want, epsilon = 1e-12);
            }
        }
    }
}
