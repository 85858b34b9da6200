//! Factor-analysis EM for the zero-mean model with free diagonal residuals.
//!
//! The model is `x = L z + w` with `z ~ N(0, I_K)` and `w ~ N(0, diag(psi))`.
//! Each iteration computes the posterior moments of the latent factors given
//! the data (through the sample covariance, which is sufficient here) and
//! re-solves the loadings and residuals in closed form. The in-sample
//! log-likelihood is non-decreasing across iterations.
//!
//! Iteration stops when the largest relative change of any residual entry
//! drops below `rel_tol`, or at `max_iter`. Residuals are floored at
//! `1e-8` times the mean sample variance to keep the model invertible; hitting
//! the floor is recorded as a warning on the estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModelEstimate;
use crate::likelihood::expected_loglik;
use crate::linalg::{CovMatrix, SampleStats};

use super::mrh::mrh_fit;

/// Relative floor applied to residual variances (times the mean sample
/// variance).
pub const RESIDUAL_FLOOR_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmParams {
    /// Number of factors, `0 <= k <= M - 1`.
    pub k: usize,
    /// Iteration cap.
    pub max_iter: usize,
    /// Relative residual-change tolerance for termination.
    pub rel_tol: f64,
}

impl EmParams {
    pub fn new(k: usize) -> Self {
        EmParams {
            k,
            max_iter: 1000,
            rel_tol: 1e-3,
        }
    }
}

/// Result of an EM run with its convergence trace.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub estimate: FactorModelEstimate,
    /// In-sample average log-likelihood after each iteration (starting with
    /// the initializer's).
    pub loglik_trace: Vec<f64>,
    /// `max_i |delta psi_i / psi_i|` for each iteration.
    pub residual_rel_changes: Vec<f64>,
    pub iterations: usize,
    /// True when the tolerance criterion stopped the loop (rather than the
    /// iteration cap).
    pub converged: bool,
}

/// Run EM from `init` (defaulting to the marginal-variance-preserving
/// heuristic at the same K).
pub fn em_fit(
    stats: &SampleStats,
    params: &EmParams,
    init: Option<&FactorModelEstimate>,
) -> Result<EmFit> {
    let m = stats.m();
    if params.k >= m {
        return Err(Error::parameter(format!(
            "factor count k={} must be at most M-1={}",
            params.k,
            m - 1
        )));
    }
    if !(params.rel_tol > 0.0) {
        return Err(Error::parameter("rel_tol must be positive"));
    }
    if params.max_iter == 0 {
        return Err(Error::parameter("max_iter must be at least 1"));
    }
    let sam = stats.cov();
    let floor = RESIDUAL_FLOOR_REL * sam.trace() / m as f64;

    if params.k == 0 {
        // No latent variables: the residual-only MLE in one step.
        let estimate = mrh_fit(stats, 0)?;
        let ll = in_sample_avg_loglik(&estimate, sam);
        return Ok(EmFit {
            estimate,
            loglik_trace: vec![ll],
            residual_rel_changes: vec![],
            iterations: 1,
            converged: true,
        });
    }

    let default_init;
    let start = match init {
        Some(est) => est,
        None => {
            default_init = mrh_fit(stats, params.k)?;
            &default_init
        }
    };
    if start.m() != m {
        return Err(Error::parameter(
            "initializer dimension does not match the data",
        ));
    }

    let mut loadings = pad_loadings(start.loadings(), stats, params.k);
    let mut psi = start.residual().map(|v| v.max(floor));
    let mut floored = psi.iter().zip(start.residual().iter()).any(|(a, b)| a != b);

    let mut loglik_trace = Vec::new();
    let mut rel_changes = Vec::new();
    loglik_trace.push(avg_loglik_of(&loadings, &psi, sam));

    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        iterations += 1;
        // Posterior moments of z | x under the current parameters.
        // gamma = (I + L^T Psi^{-1} L)^{-1}, delta = gamma L^T Psi^{-1}.
        let psi_inv_l = DMatrix::from_fn(m, params.k, |i, j| loadings[(i, j)] / psi[i]);
        let mut gram = loadings.transpose() * &psi_inv_l;
        for d in 0..params.k {
            gram[(d, d)] += 1.0;
        }
        let gamma = gram
            .cholesky()
            .ok_or_else(|| Error::input("posterior covariance not positive definite"))?
            .inverse();
        let delta = &gamma * psi_inv_l.transpose();
        // Cross moments through the sample covariance.
        let b = &delta * sam.matrix(); // K x M
        let mut second = &b * delta.transpose(); // delta Sam delta^T
        second += &gamma;
        let second_chol = CovMatrix::symmetrized(second)
            .into_matrix()
            .cholesky()
            .ok_or_else(|| Error::input("latent second moment not positive definite"))?;
        // New loadings solve L (gamma + delta Sam delta^T) = Sam delta^T.
        let new_loadings = second_chol.solve(&b).transpose();
        // New residuals: diag(Sam - L_new * b).
        let mut new_psi = DVector::zeros(m);
        let mut hit_floor = false;
        for i in 0..m {
            let cross: f64 = (0..params.k).map(|j| new_loadings[(i, j)] * b[(j, i)]).sum();
            let v = sam.matrix()[(i, i)] - cross;
            if v < floor {
                hit_floor = true;
                new_psi[i] = floor;
            } else {
                new_psi[i] = v;
            }
        }
        floored |= hit_floor;

        let rel_change = psi
            .iter()
            .zip(new_psi.iter())
            .map(|(old, new)| ((new - old) / old).abs())
            .fold(0.0f64, f64::max);
        loadings = new_loadings;
        psi = new_psi;
        loglik_trace.push(avg_loglik_of(&loadings, &psi, sam));
        rel_changes.push(rel_change);
        if rel_change < params.rel_tol {
            converged = true;
            break;
        }
    }

    let mut estimate = FactorModelEstimate::new(loadings, psi)?;
    if floored {
        estimate.push_warning(format!(
            "residual variance clamped at floor {floor:.3e} during EM"
        ));
    }
    Ok(EmFit {
        estimate,
        loglik_trace,
        residual_rel_changes: rel_changes,
        iterations,
        converged,
    })
}

fn pad_loadings(loadings: &DMatrix<f64>, stats: &SampleStats, k: usize) -> DMatrix<f64> {
    // An initializer may carry fewer columns than K (clamped factors). A
    // zero column is a fixed point of the updates, so missing columns are
    // seeded with a small multiple of the matching sample eigenvector.
    let m = stats.m();
    let mut out = DMatrix::zeros(m, k);
    for j in 0..loadings.ncols().min(k) {
        out.set_column(j, &loadings.column(j));
    }
    let seed_scale = 1e-3 * (stats.cov().trace() / m as f64).sqrt();
    for j in 0..k {
        if out.column(j).norm() == 0.0 {
            let col = stats.eigen().basis().column(j) * seed_scale;
            out.set_column(j, &col);
        }
    }
    out
}

fn avg_loglik_of(loadings: &DMatrix<f64>, psi: &DVector<f64>, sam: &CovMatrix) -> f64 {
    let mut sigma = loadings * loadings.transpose();
    for i in 0..psi.len() {
        sigma[(i, i)] += psi[i];
    }
    expected_loglik(&CovMatrix::symmetrized(sigma), sam)
}

fn in_sample_avg_loglik(est: &FactorModelEstimate, sam: &CovMatrix) -> f64 {
    expected_loglik(est.sigma(), sam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SampleStats;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_stats(m: usize, n: usize, seed: u64) -> SampleStats {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = crate::dataset::Dataset::new(x).unwrap();
        SampleStats::from_dataset(&data)
    }

    #[test]
    fn k_zero_is_residual_only() {
        let stats = random_stats(3, 20, 1);
        let fit = em_fit(&stats, &EmParams::new(0), None).unwrap();
        assert_eq!(fit.estimate.rank(), 0);
        assert_eq!(fit.iterations, 1);
        for i in 0..3 {
            assert_relative_eq!(
                fit.estimate.residual()[i],
                stats.cov().matrix()[(i, i)],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn scalar_case_recovers_sample_variance() {
        let stats = random_stats(1, 15, 2);
        let fit = em_fit(&stats, &EmParams::new(0), None).unwrap();
        assert_relative_eq!(
            fit.estimate.sigma().matrix()[(0, 0)],
            stats.cov().matrix()[(0, 0)],
            max_relative = 1e-12
        );
    }

    #[test]
    fn loglik_monotone_and_beats_initializer() {
        let stats = random_stats(6, 60, 3);
        let fit = em_fit(&stats, &EmParams::new(2), None).unwrap();
        for w in fit.loglik_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9,
                "log-likelihood decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
        let mrh_ll = in_sample_avg_loglik(&mrh_fit(&stats, 2).unwrap(), stats.cov());
        assert!(*fit.loglik_trace.last().unwrap() >= mrh_ll - 1e-9);
    }

    #[test]
    fn termination_matches_tolerance_rule() {
        let stats = random_stats(5, 80, 4);
        let fit = em_fit(&stats, &EmParams::new(2), None).unwrap();
        assert!(fit.converged);
        let last = *fit.residual_rel_changes.last().unwrap();
        assert!(last < 1e-3);
        for &c in &fit.residual_rel_changes[..fit.residual_rel_changes.len() - 1] {
            assert!(c >= 1e-3, "stopped late: intermediate change {c}");
        }
    }

    #[test]
    fn respects_iteration_cap() {
        let stats = random_stats(5, 40, 5);
        let fit = em_fit(
            &stats,
            &EmParams {
                k: 2,
                max_iter: 1,
                rel_tol: 1e-12,
            },
            None,
        )
        .unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(!fit.converged);
    }

    #[test]
    fn accepts_explicit_initializer() {
        let stats = random_stats(4, 50, 6);
        let init = FactorModelEstimate::new(
            DMatrix::zeros(4, 0),
            DVector::from_element(4, 1.0),
        )
        .unwrap();
        let fit = em_fit(&stats, &EmParams::new(1), Some(&init)).unwrap();
        assert_eq!(fit.estimate.rank(), 1);
    }

    #[test]
    fn rejects_k_too_large() {
        let stats = random_stats(3, 10, 7);
        assert!(em_fit(&stats, &EmParams::new(3), None).is_err());
    }
}
