//! Small dense symmetric matrix helpers.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative size of negative eigenvalues clipped to zero in [`sqrt_spd`].
pub const CLIP_TOLERANCE: f64 = 1e-8;
/// Relative asymmetry accepted by [`sqrt_spd`] before it is symmetrised.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Row-major square matrix stored as nested vectors, the on-the-wire shape.
pub type Matrix = Vec<Vec<f64>>;

pub fn to_dmatrix(m: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Frobenius norm.
pub fn frobenius(m: &[Vec<f64>]) -> f64 {
    libm::sqrt(m.iter().flatten().map(|x| x * x).sum())
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues below `-CLIP_TOLERANCE * |S|` are an error; smaller negative
/// ones are rounding and are set to zero.
pub fn sqrt_spd(s: &[Vec<f64>]) -> Result<Matrix> {
    let m = to_dmatrix(s)?;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let asym = (&m - m.transpose()).norm();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::InvalidArgument(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -CLIP_TOLERANCE * scale {
        return Err(Error::InvalidArgument(format!("matrix has negative eigenvalue {min:e}")));
    }
    let roots = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    let q = &eig.eigenvectors;
    let r = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok(from_dmatrix(&r))
}

/// `out = M z` for a row-major square matrix.
pub fn mat_vec(m: &[Vec<f64>], z: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn square_root_reproduces_matrix() {
        let s = vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]];
        let r = sqrt_spd(&s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| r[i][k] * r[k][j]).sum();
                assert!((v - s[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(sqrt_spd(&[vec![1.0, 0.0], vec![0.0, -1.0]]).is_err());
        assert!(sqrt_spd(&[vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
        let r = sqrt_spd(&[vec![1.0, 0.0], vec![0.0, -1e-12]]).unwrap();
        assert_eq!(r[1][1], 0.0);
    }
}
