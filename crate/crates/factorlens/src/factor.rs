//! Low-rank-plus-diagonal covariance estimates.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CovMatrix;

/// A fitted factor model: `Sigma = F + R` with `F = loadings * loadings^T`
/// positive semidefinite of rank at most K and `R` a nonnegative diagonal.
///
/// `sigma` is assembled from the two parts at construction, so the identity
/// `Sigma = F + R` holds by construction. The inverse is computed lazily on
/// first use and cached.
#[derive(Debug, Clone)]
pub struct FactorModelEstimate {
    loadings: DMatrix<f64>,
    residual: DVector<f64>,
    sigma: CovMatrix,
    inverse: OnceLock<Option<DMatrix<f64>>>,
    warnings: Vec<String>,
}

impl FactorModelEstimate {
    /// Assemble an estimate from an M x K loadings matrix and a length-M
    /// residual diagonal. Residual entries must be nonnegative and finite.
    pub fn new(loadings: DMatrix<f64>, residual: DVector<f64>) -> Result<Self> {
        let m = loadings.nrows();
        if residual.len() != m {
            return Err(Error::parameter(format!(
                "residual length {} does not match dimension {m}",
                residual.len()
            )));
        }
        if loadings.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite factor loading"));
        }
        if residual.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(
                "residual variances must be finite and nonnegative",
            ));
        }
        let mut sigma = &loadings * loadings.transpose();
        for i in 0..m {
            sigma[(i, i)] += residual[i];
        }
        Ok(FactorModelEstimate {
            loadings,
            residual,
            sigma: CovMatrix::symmetrized(sigma),
            inverse: OnceLock::new(),
            warnings: Vec::new(),
        })
    }

    pub fn with_warnings(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }

    pub fn m(&self) -> usize {
        self.loadings.nrows()
    }

    /// Number of factors (columns of the loadings matrix).
    pub fn rank(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    pub fn sigma(&self) -> &CovMatrix {
        &self.sigma
    }

    /// The factor part `F = loadings * loadings^T`.
    pub fn factor_matrix(&self) -> DMatrix<f64> {
        &self.loadings * self.loadings.transpose()
    }

    /// Inverse of the assembled covariance, or `None` when it is singular.
    /// Computed via Cholesky on first call and cached.
    pub fn sigma_inverse(&self) -> Option<&DMatrix<f64>> {
        self.inverse
            .get_or_init(|| {
                self.sigma
                    .matrix()
                    .clone()
                    .cholesky()
                    .map(|ch| ch.inverse())
            })
            .as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    /// Serializable summary used by the CLI and report writers.
    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary {
            m: self.m(),
            rank: self.rank(),
            trace: self.sigma.trace(),
            residual: self.residual.iter().copied().collect(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Compact serializable view of a fitted estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateSummary {
    pub m: usize,
    pub rank: usize,
    pub trace: f64,
    pub residual: Vec<f64>,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_equals_factor_plus_residual() {
        let loadings = DMatrix::from_row_slice(3, 1, &[2.0, 1.0, 0.0]);
        let residual = DVector::from_row_slice(&[0.5, 0.5, 1.0]);
        let est = FactorModelEstimate::new(loadings, residual).unwrap();
        let mut rebuilt = est.factor_matrix();
        for i in 0..3 {
            rebuilt[(i, i)] += est.residual()[i];
        }
        assert_eq!(est.sigma().matrix(), &rebuilt);
        assert_eq!(est.rank(), 1);
    }

    #[test]
    fn inverse_matches_identity() {
        let loadings = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let residual = DVector::from_row_slice(&[1.0, 2.0]);
        let est = FactorModelEstimate::new(loadings, residual).unwrap();
        let inv = est.sigma_inverse().unwrap();
        let prod = est.sigma().matrix() * inv;
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn singular_sigma_has_no_inverse() {
        let loadings = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let residual = DVector::from_row_slice(&[0.0, 0.0]);
        let est = FactorModelEstimate::new(loadings, residual).unwrap();
        assert!(est.sigma_inverse().is_none());
    }

    #[test]
    fn rejects_negative_residual() {
        let loadings = DMatrix::zeros(2, 0);
        let residual = DVector::from_row_slice(&[1.0, -0.1]);
        assert!(FactorModelEstimate::new(loadings, residual).is_err());
    }

    #[test]
    fn zero_factor_model() {
        let est = FactorModelEstimate::new(
            DMatrix::zeros(2, 0),
            DVector::from_row_slice(&[1.0, 2.0]),
        )
        .unwrap();
        assert_eq!(est.rank(), 0);
        assert_eq!(est.sigma().matrix()[(0, 0)], 1.0);
        assert_eq!(est.sigma().matrix()[(1, 1)], 2.0);
        assert_eq!(est.sigma().matrix()[(0, 1)], 0.0);
    }
}
