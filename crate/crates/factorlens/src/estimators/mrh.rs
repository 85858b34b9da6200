//! Marginal-variance-preserving rank-constrained heuristic.
//!
//! Takes the factor part from the rank-K PCA solution and then chooses the
//! residual diagonal so that the diagonal of the assembled estimate equals
//! the diagonal of the sample covariance. Non-iterative, and the residuals
//! are nonnegative by the identity
//! `R_mm = sigma_hat^2 sum_{k<=K} B_mk^2 + sum_{k>K} s_k B_mk^2`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::factor::FactorModelEstimate;
use crate::linalg::SampleStats;

use super::urm::residual_variance_hat;

/// Fit the marginal-variance-preserving heuristic with `k` factors.
pub fn mrh_fit(stats: &SampleStats, k: usize) -> Result<FactorModelEstimate> {
    let m = stats.m();
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

    // Residuals make the estimate's diagonal match the sample diagonal.
    // Analytically nonnegative; clamp only absorbs roundoff.
    let sample_diag = stats.cov().diagonal();
    let mut residual = DVector::zeros(m);
    for i in 0..m {
        let f_ii: f64 = (0..loadings.ncols()).map(|j| loadings[(i, j)].powi(2)).sum();
        residual[i] = (sample_diag[i] - f_ii).max(0.0);
    }

    let mut est = FactorModelEstimate::new(loadings, residual)?;
    if clamped > 0 {
        est.push_warning(format!(
            "{clamped} factor coefficient(s) fell below the residual level and were clamped to zero"
        ));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CovMatrix;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn diagonal_case_reproduces_sample_covariance() {
        // diag(5, 2, 1) with K=1: factor diag(3.5, 0, 0), residuals
        // (1.5, 2, 1), estimate equal to the sample covariance.
        let cov = CovMatrix::from_diagonal(&DVector::from_row_slice(&[5.0, 2.0, 1.0]));
        let stats = SampleStats::from_cov(cov, 10).unwrap();
        let est = mrh_fit(&stats, 1).unwrap();
        let f = est.factor_matrix();
        assert_relative_eq!(f[(0, 0)], 3.5, max_relative = 1e-12);
        assert!(f[(1, 1)].abs() < 1e-12 && f[(2, 2)].abs() < 1e-12);
        assert_relative_eq!(est.residual()[0], 1.5, max_relative = 1e-12);
        assert_relative_eq!(est.residual()[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(est.residual()[2], 1.0, max_relative = 1e-12);
        assert!((est.sigma().matrix() - stats.cov().matrix()).amax() < 1e-12);
    }

    #[test]
    fn k_zero_keeps_sample_diagonal_only() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let cov = CovMatrix::symmetrized(&a * a.transpose());
        let stats = SampleStats::from_cov(cov.clone(), 8).unwrap();
        let est = mrh_fit(&stats, 0).unwrap();
        assert_eq!(est.rank(), 0);
        for i in 0..4 {
            assert_relative_eq!(
                est.residual()[i],
                cov.matrix()[(i, i)],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn diagonal_matches_sample_on_random_input() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for trial in 0..10 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let cov = CovMatrix::symmetrized(&a * a.transpose());
            let stats = SampleStats::from_cov(cov.clone(), 12).unwrap();
            let est = mrh_fit(&stats, 2).unwrap();
            for i in 0..4 {
                let diff = (est.sigma().matrix()[(i, i)] - cov.matrix()[(i, i)]).abs();
                assert!(diff < 1e-12, "trial {trial}: diagonal off by {diff}");
                assert!(est.residual()[i] >= 0.0);
            }
        }
    }
}
