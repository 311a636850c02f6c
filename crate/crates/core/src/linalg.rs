use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest eigenvalue ratio accepted for a Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Inverse of a symmetric positive definite Gram matrix, refusing matrices
/// whose condition number exceeds [`MAX_GRAM_CONDITION`].
pub fn inverse_spd(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = gram.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) || !(max > 0.0) {
        return Err(Error::SingularGram { condition });
    }
    match gram.clone().cholesky() {
        Some(chol) => Ok(chol.inverse()),
        None => Err(Error::SingularGram { condition }),
    }
}

/// `(W'W)⁻¹` for the columns of `w`.
pub fn gram_inverse(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    inverse_spd(&w.tr_mul(w))
}

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
