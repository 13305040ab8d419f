//! Thin helpers over `nalgebra` for the small dense systems used by the
//! Newton fits and the Gibbs sampler.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Cholesky of a symmetric positive-definite matrix, `RankDeficient` otherwise.
pub fn cholesky(m: &Mat) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::RankDeficient)
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    Ok(cholesky(m)?.inverse())
}

/// XᵀX for a row-major design.
pub fn crossprod(x: &Mat) -> Mat {
    x.transpose() * x
}

/// Build an `n × p` matrix from row slices.
pub fn from_rows(rows: &[Vec<f64>], p: usize) -> Mat {
    Mat::from_fn(rows.len(), p, |i, j| rows[i][j])
}

/// Numerical rank check via the smallest singular value relative to the largest.
pub fn full_column_rank(x: &Mat) -> bool {
    if x.ncols() == 0 {
        return true;
    }
    if x.nrows() < x.ncols() {
        return false;
    }
    let sv = crossprod(x).symmetric_eigenvalues();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > max * 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_rank() {
        let m = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&m).unwrap();
        let id = &m * &inv;
        assert!((id - Mat::identity(2, 2)).abs().max() < 1e-14);
        let x = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(!full_column_rank(&x));
        let x = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(full_column_rank(&x));
        assert!(matches!(spd_inverse(&Mat::zeros(2, 2)), Err(Error::RankDeficient)));
    }
}
