//! Rank-constrained maximum likelihood with uniform residual variance.
//!
//! With the residual constrained to `sigma^2 I` and the factor rank capped at
//! K, the likelihood-maximizing estimate is available in closed form from the
//! eigendecomposition of the sample covariance: the residual variance is the
//! mean of the trailing M-K sample eigenvalues, and the factor part keeps the
//! top K eigenvectors with coefficients `s_k - sigma^2`. The spectrum of the
//! estimate is therefore `(s_1, ..., s_K, sigma^2, ..., sigma^2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModelEstimate;
use crate::linalg::SampleStats;

/// Parameters for the rank-constrained uniform-residual estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrmParams {
    /// Number of factors, `0 <= k <= M - 1`.
    pub k: usize,
}

/// Residual variance estimate at factor count `k`: the mean of the trailing
/// `M - k` sample eigenvalues. Useful on its own for centering a penalty
/// search range at `M * sigma_hat^2`.
pub fn residual_variance_hat(stats: &SampleStats, k: usize) -> Result<f64> {
    let m = stats.m();
    if k >= m {
        return Err(Error::parameter(format!(
            "factor count k={k} must be at most M-1={}",
            m - 1
        )));
    }
    let values = stats.eigen().values();
    let tail = values.rows(k, m - k);
    Ok(tail.sum() / (m - k) as f64)
}

/// Fit the rank-constrained uniform-residual estimator.
///
/// Factor coefficients `s_k - sigma_hat^2` are clamped at zero if negative
/// (possible only for pathological K close to M); a clamped column is dropped
/// from the loadings and a warning is recorded on the estimate.
pub fn urm_fit(stats: &SampleStats, params: &UrmParams) -> Result<FactorModelEstimate> {
    let m = stats.m();
    let k = params.k;
    let sigma2 = residual_variance_hat(stats, k)?;
    let eigen = stats.eigen();

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut clamped = 0usize;
    for j in 0..k {
        let coeff = eigen.values()[j] - sigma2;
        if coeff > 0.0 {
            cols.push(eigen.basis().column(j) * coeff.sqrt());
        } else {
            clamped += 1;
        }
    }
    let loadings = if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let residual = DVector::from_element(m, sigma2);
    let mut est = FactorModelEstimate::new(loadings, residual)?;
    if clamped > 0 {
        est.push_warning(format!(
            "{clamped} factor coefficient(s) fell below the residual level and were clamped to zero"
        ));
    }
    Ok(est)
}
