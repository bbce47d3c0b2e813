//! Thin helpers over `faer` for the dense complex matrices used throughout.

use crate::{Error, Result};
use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, MatRef, Par, Side};

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Eigendecomposition H = V diag(λ) V† of a Hermitian matrix.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
}

pub fn eigh(h: MatRef<'_, c64>) -> Result<HermitianEigen> {
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
    let values = (0..h.nrows()).map(|i| evd.S()[i].re).collect();
    Ok(HermitianEigen {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// dst = lhs · rhs
pub fn mul_into(dst: &mut Mat<c64>, lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) {
    matmul(dst.as_mut(), Accum::Replace, lhs, rhs, ONE, Par::Seq);
}

pub fn mul(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    mul_into(&mut out, lhs, rhs);
    out
}

/// lhs† · rhs
pub fn adjoint_mul(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::zeros(lhs.ncols(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs.adjoint(), rhs, ONE, Par::Seq);
    out
}

/// Kronecker product a ⊗ b.
pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// ‖A − A†‖_F / max(‖A‖_F, tiny)
pub fn hermiticity_defect(a: MatRef<'_, c64>) -> f64 {
    let n = a.nrows();
    let mut diff = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            diff += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
            total += a[(i, j)].norm_sqr();
        }
    }
    diff.sqrt() / total.sqrt().max(f64::MIN_POSITIVE)
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn psd_sqrt(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let e = eigh(a)?;
    let n = a.nrows();
    let v = &e.vectors;
    Ok(Mat::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| v[(i, k)] * v[(j, k)].conj() * e.values[k].max(0.0).sqrt())
            .sum()
    }))
}
