//! Zero-mean Gaussian log-likelihoods.
//!
//! Both entry points evaluate the same quadratic form
//! `-(1/2) (M log 2pi + log det Sigma + tr(Sigma^{-1} C))`,
//! differing only in what plays the role of `C`: the sample covariance of a
//! dataset (average in-sample log-likelihood) or a population covariance
//! (expected out-of-sample log-likelihood of a fresh draw).
//!
//! A singular `Sigma` yields `f64::NEG_INFINITY` rather than an error, so
//! that cross-validation can rank such an estimate strictly worst without
//! special-casing.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::linalg::{eigh_desc, sample_covariance, CovMatrix};

/// Relative eigenvalue floor below which `Sigma` is treated as singular when
/// the Cholesky factorization fails.
const SINGULAR_RTOL: f64 = 1e-12;

/// `log det Sigma` and `tr(Sigma^{-1} C)` for positive definite `Sigma`, or
/// `None` when `Sigma` is singular beyond recovery.
///
/// Cholesky is tried first for stability; if it fails (semi-definite or
/// barely indefinite input), an eigenvalue route is used as long as all
/// eigenvalues clear a relative floor.
fn logdet_and_trace(sigma: &CovMatrix, c: &DMatrix<f64>) -> Option<(f64, f64)> {
    if let Some(chol) = sigma.matrix().clone().cholesky() {
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let solved = chol.solve(c);
        return Some((logdet, solved.trace()));
    }
    let eig = eigh_desc(sigma);
    let max = eig.values()[0];
    let min = eig.values()[sigma.dim() - 1];
    if !(max > 0.0) || min <= SINGULAR_RTOL * max {
        return None;
    }
    let logdet = eig.values().iter().map(|s| s.ln()).sum::<f64>();
    let mut trace = 0.0;
    for k in 0..sigma.dim() {
        let b = eig.basis().column(k);
        trace += b.dot(&(c * b)) / eig.values()[k];
    }
    Some((logdet, trace))
}

fn gaussian_objective(sigma: &CovMatrix, c: &DMatrix<f64>) -> f64 {
    let m = sigma.dim() as f64;
    match logdet_and_trace(sigma, c) {
        Some((logdet, trace)) => -0.5 * (m * (2.0 * PI).ln() + logdet + trace),
        None => f64::NEG_INFINITY,
    }
}

/// Expected log-density of a draw from `N(0, sigma_star)` evaluated under
/// `N(0, sigma)`. Returns `f64::NEG_INFINITY` when `sigma` is singular.
pub fn expected_loglik(sigma: &CovMatrix, sigma_star: &CovMatrix) -> f64 {
    assert_eq!(
        sigma.dim(),
        sigma_star.dim(),
        "dimension mismatch between estimate and population covariance"
    );
    gaussian_objective(sigma, sigma_star.matrix())
}

/// Average per-observation log-likelihood of `data` under `N(0, sigma)`.
/// Returns `f64::NEG_INFINITY` when `sigma` is singular.
pub fn avg_loglik(sigma: &CovMatrix, data: &Dataset) -> f64 {
    assert_eq!(
        sigma.dim(),
        data.m(),
        "dimension mismatch between estimate and data"
    );
    let sam = sample_covariance(data);
    gaussian_objective(sigma, sam.matrix())
}

/// Total log-likelihood of `data`: `N` times [`avg_loglik`].
pub fn total_loglik(sigma: &CovMatrix, data: &Dataset) -> f64 {
    data.n() as f64 * avg_loglik(sigma, data)
}

/// `KL(N(0, sigma_star) || N(0, sigma))`, which is the gap
/// `expected_loglik(sigma_star, sigma_star) - expected_loglik(sigma, sigma_star)`.
pub fn kl_divergence(sigma: &CovMatrix, sigma_star: &CovMatrix) -> f64 {
    expected_loglik(sigma_star, sigma_star) - expected_loglik(sigma, sigma_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn scalar_standard_normal_at_zero() {
        let sigma = CovMatrix::identity(1);
        let data = Dataset::new(DMatrix::from_row_slice(1, 1, &[0.0])).unwrap();
        assert_relative_eq!(
            avg_loglik(&sigma, &data),
            -0.5 * (2.0 * PI).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn at_sample_covariance_trace_term_is_m() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::new(x).unwrap();
        let sam = sample_covariance(&data);
        let got = avg_loglik(&sam, &data);
        let logdet = sam.matrix().clone().cholesky().unwrap();
        let logdet = 2.0 * logdet.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let expect = -0.5 * (3.0 * (2.0 * PI).ln() + logdet + 3.0);
        assert_relative_eq!(got, expect, max_relative = 1e-10);
    }

    #[test]
    fn matches_per_sample_density_product() {
        // Independent oracle: average of per-sample log-densities computed
        // from an explicit inverse and determinant.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = CovMatrix::symmetrized(&a * a.transpose() + DMatrix::identity(3, 3));
        let x = DMatrix::from_fn(7, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::new(x.clone()).unwrap();

        let inv = sigma.matrix().clone().try_inverse().unwrap();
        let det = sigma.matrix().determinant();
        let mut total = 0.0;
        for i in 0..7 {
            let xi = x.row(i).transpose();
            let quad = xi.dot(&(&inv * &xi));
            total += -0.5 * (3.0 * (2.0 * PI).ln() + det.ln() + quad);
        }
        assert_relative_eq!(avg_loglik(&sigma, &data), total / 7.0, max_relative = 1e-8);
    }

    #[test]
    fn expected_loglik_identity_pair() {
        let i2 = CovMatrix::identity(2);
        assert_relative_eq!(
            expected_loglik(&i2, &i2),
            -((2.0 * PI).ln() + 1.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn truth_maximizes_expected_loglik() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let star = CovMatrix::symmetrized(&a * a.transpose() + DMatrix::identity(4, 4));
        let best = expected_loglik(&star, &star);
        for _ in 0..10 {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let other = CovMatrix::symmetrized(&b * b.transpose() + DMatrix::identity(4, 4));
            assert!(expected_loglik(&other, &star) <= best + 1e-12);
            assert!(kl_divergence(&other, &star) >= -1e-12);
        }
    }

    #[test]
    fn diagonal_rescaling_identity() {
        // Transforming both arguments by a diagonal T shifts the value by
        // -log det T; checked by direct evaluation of both sides.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = CovMatrix::symmetrized(&a * a.transpose() + DMatrix::identity(3, 3));
        let b = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let star = CovMatrix::symmetrized(&b * b.transpose() + DMatrix::identity(3, 3));
        let t = DVector::from_row_slice(&[0.5, 2.0, 1.25]);
        let tmat = DMatrix::from_diagonal(&t);
        let lhs = expected_loglik(
            &CovMatrix::symmetrized(&tmat * sigma.matrix() * &tmat),
            &CovMatrix::symmetrized(&tmat * star.matrix() * &tmat),
        );
        let logdet_t: f64 = t.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(
            lhs,
            expected_loglik(&sigma, &star) - logdet_t,
            max_relative = 1e-10
        );
    }

    #[test]
    fn singular_sigma_is_negative_infinity() {
        let sigma = CovMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 0.0]));
        let data = Dataset::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(avg_loglik(&sigma, &data), f64::NEG_INFINITY);
        assert_eq!(expected_loglik(&sigma, &CovMatrix::identity(2)), f64::NEG_INFINITY);
    }
}
