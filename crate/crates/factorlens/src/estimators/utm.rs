//! Trace-penalized maximum likelihood with uniform residual variance,
//! solved by eigenvalue soft-thresholding.
//!
//! The convex program being solved maximizes `log p(X | Sigma) - lambda tr(G)`
//! over `Sigma^{-1} = v I - G` with `G` positive semidefinite and `v >= 0`.
//! Its solution shares the eigenvectors and the trace of the sample
//! covariance, and its eigenvalues are
//!
//! `h_m = max{ s_m - 2 lambda / N, 1 / v_hat }`,
//!
//! where the flat level `1 / v_hat` is pinned by trace preservation. The
//! whole solve therefore costs one eigendecomposition plus an O(M) pass, and
//! the O(M) pass can be rerun for every penalty value on a grid while the
//! eigendecomposition is shared (see [`SampleStats`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModelEstimate;
use crate::linalg::{EigenSystem, SampleStats};

/// Parameters for the trace-penalized uniform-residual estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtmParams {
    /// Trace penalty coefficient, `lambda >= 0`. The effective eigenvalue
    /// threshold is `2 lambda / N`.
    pub lambda: f64,
}

/// Solution of the trace-penalized fit, retaining spectral diagnostics next
/// to the assembled estimate.
#[derive(Debug, Clone)]
pub struct UtmSolution {
    pub estimate: FactorModelEstimate,
    /// Reciprocal residual variance `v_hat`; the flat eigenvalue level is
    /// `1 / v_hat`.
    pub v_hat: f64,
    /// Number of eigenvalues strictly above the threshold.
    pub k_effective: usize,
    /// Eigenvalues `h_1 >= ... >= h_M` of the estimate.
    pub eigenvalues: DVector<f64>,
}

/// The O(M) spectral tail of the solver: given descending sample eigenvalues
/// and the threshold `tau = 2 lambda / N`, returns the retained count K, the
/// flat level `1/v_hat`, and the thresholded spectrum.
///
/// K is the largest k (with `s_0 = infinity`, so k = 0 always qualifies) for
/// which `s_k - tau` strictly exceeds the flat level
/// `v_k^{-1} = (k tau + sum_{m>k} s_m) / (M - k)`; ties go to the smaller k.
pub(crate) fn soft_threshold_spectrum(s: &[f64], tau: f64) -> (usize, f64, Vec<f64>) {
    let m = s.len();
    debug_assert!(m >= 1);
    // Suffix sums: tail[k] = sum_{i >= k} s_i.
    let mut tail = vec![0.0; m + 1];
    for i in (0..m).rev() {
        tail[i] = tail[i + 1] + s[i];
    }
    let mut k_best = 0usize;
    let mut v_inv_best = tail[0] / m as f64;
    for k in 1..m {
        let v_inv = (k as f64 * tau + tail[k]) / (m - k) as f64;
        if s[k - 1] - tau > v_inv {
            k_best = k;
            v_inv_best = v_inv;
        } else {
            break;
        }
    }
    let h: Vec<f64> = s
        .iter()
        .map(|&sm| (sm - tau).max(v_inv_best))
        .collect();
    (k_best, v_inv_best, h)
}

/// Fit the trace-penalized uniform-residual estimator.
pub fn utm_fit(stats: &SampleStats, params: &UtmParams) -> Result<UtmSolution> {
    if !(params.lambda >= 0.0) {
        return Err(Error::parameter(format!(
            "trace penalty must be nonnegative, got {}",
            params.lambda
        )));
    }
    let tau = 2.0 * params.lambda / stats.n() as f64;
    Ok(utm_from_eigen(stats.eigen(), tau))
}

/// Assemble the estimate from an eigendecomposition of the sample covariance
/// and the threshold `tau = 2 lambda / N`.
pub(crate) fn utm_from_eigen(eigen: &EigenSystem, tau: f64) -> UtmSolution {
    let m = eigen.dim();
    let s: Vec<f64> = eigen.values().iter().copied().collect();
    let (k, v_inv, h) = soft_threshold_spectrum(&s, tau);

    let mut cols = Vec::with_capacity(k);
    for j in 0..k {
        let coeff = h[j] - v_inv;
        debug_assert!(coeff > 0.0);
        cols.push(eigen.basis().column(j) * coeff.sqrt());
    }
    let loadings = if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let residual = DVector::from_element(m, v_inv);
    let estimate = FactorModelEstimate::new(loadings, residual)
        .expect("soft-thresholded spectrum always yields a valid estimate");
    UtmSolution {
        estimate,
        v_hat: 1.0 / v_inv,
        k_effective: k,
        eigenvalues: DVector::from_vec(h),
    }
}
