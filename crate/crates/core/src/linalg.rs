//! Hermitian positive-(semi)definite solves.

use nalgebra::{DMatrix, DVector};

use crate::{Complex64, Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative eigenvalue floor for the pseudo-inverse fallback.
pub const PINV_TOL: f64 = 1e-10;

/// Factorisation of a Hermitian matrix. Uses Cholesky when the matrix is
/// positive definite and an SVD pseudo-inverse otherwise.
pub enum HermitianSolver {
    Cholesky(nalgebra::Cholesky<Complex64, nalgebra::Dyn>),
    Pinv(CMat),
}

impl HermitianSolver {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::numerical("matrix to invert is not square"));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numerical("matrix to invert has non-finite entries"));
        }
        let scale = (0..m.nrows())
            .map(|i| m[(i, i)].re.abs())
            .fold(0.0, f64::max);
        if let Some(c) = nalgebra::Cholesky::new(m.clone()) {
            let ok =
                (0..m.nrows()).all(|i| c.l_dirty()[(i, i)].re > (PINV_TOL * scale).sqrt() * 1e-3);
            if ok {
                return Ok(HermitianSolver::Cholesky(c));
            }
        }
        log::warn!("covariance not positive definite, falling back to pseudo-inverse");
        let svd = m.svd(true, true);
        let p = svd
            .pseudo_inverse(PINV_TOL * scale.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::numerical(format!("pseudo-inverse failed: {e}")))?;
        Ok(HermitianSolver::Pinv(p))
    }

    pub fn solve(&self, b: &CVec) -> CVec {
        match self {
            HermitianSolver::Cholesky(c) => c.solve(b),
            HermitianSolver::Pinv(p) => p * b,
        }
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        match self {
            HermitianSolver::Cholesky(c) => c.solve(b),
            HermitianSolver::Pinv(p) => p * b,
        }
    }

    /// x^H A^{-1} x, real by construction.
    pub fn quad_form(&self, x: &CVec) -> f64 {
        x.dotc(&self.solve(x)).re
    }
}

pub fn cvec(v: &[Complex64]) -> CVec {
    CVec::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_positive_definite_system() {
        let a = CMat::from_row_slice(2, 2, &[c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]);
        let x = cvec(&[c(1.0, 2.0), c(-1.0, 0.5)]);
        let b = &a * &x;
        let s = HermitianSolver::new(a).unwrap();
        assert!(matches!(s, HermitianSolver::Cholesky(_)));
        assert!((s.solve(&b) - x).norm() < 1e-12);
    }

    #[test]
    fn falls_back_on_singular_matrix() {
        let v = cvec(&[c(1.0, 0.0), c(0.0, 1.0)]);
        let a = &v * v.adjoint();
        let s = HermitianSolver::new(a.clone()).unwrap();
        assert!(matches!(s, HermitianSolver::Pinv(_)));
        // A A^+ v = v for v in the range
        let y = &a * s.solve(&v);
        assert!((y - &v).norm() < 1e-10);
    }

    #[test]
    fn rejects_non_finite() {
        let a = CMat::from_element(2, 2, c(f64::NAN, 0.0));
        assert!(HermitianSolver::new(a).is_err());
    }
}
