//! Slow reference solver for the trace-penalized programs, used as a test
//! oracle for the fast spectral solvers.
//!
//! Both penalized formulations are instances of
//!
//! `min -log det W + tr(W Sam) + tau tr(G)` over `W = V - G`, `G >= 0`,
//!
//! with `V` restricted to nonnegative multiples of the identity (uniform
//! residual) or to nonnegative diagonals (free diagonal), and
//! `tau = 2 lambda / N`. The solver is a three-block alternating-direction
//! scheme with a fixed penalty parameter on the consensus constraint
//! `W + G - V = 0`:
//!
//! * W-step: prox of `-log det W + tr(W Sam)`, closed form by
//!   eigendecomposition;
//! * G-step: projection onto the PSD cone after a `tau/rho` shift;
//! * V-step: projection onto the structure set (scaled identity or
//!   nonnegative diagonal).
//!
//! The result is checked against the first-order conditions before being
//! returned; non-convergence is an inconclusive-oracle error, not a wrong
//! answer.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh_desc, CovMatrix};

/// Which structural constraint the diagonal block obeys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PenalizedForm {
    /// `V = v I`, `v >= 0` (uniform residual variance).
    UniformResidual,
    /// `V` diagonal with nonnegative entries.
    DiagonalResidual,
}

/// Solver options. The penalty parameter is fixed for the whole run.
#[derive(Debug, Clone, Copy)]
pub struct AdmmOptions {
    pub rho: f64,
    pub max_iter: usize,
    /// Relative primal/dual residual tolerance.
    pub tol: f64,
    /// Refuse problems above this dimension; the solver is meant for
    /// reference-scale cross-checks. Raise explicitly for benchmarks.
    pub max_dim: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            max_iter: 100_000,
            tol: 1e-10,
            max_dim: 30,
        }
    }
}

/// First-order optimality diagnostics of a reference solution.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    /// Most negative eigenvalue of the stationarity multiplier
    /// `Omega = Sigma - Sam + tau I` (should be >= -tol).
    pub omega_min_eigenvalue: f64,
    /// `tr(Omega G) / scale` (complementary slackness, should be ~0).
    pub complementarity: f64,
    /// Structure residual: trace gap (uniform) or max diagonal gap
    /// (diagonal), relative.
    pub structure_residual: f64,
    /// Most negative eigenvalue of G (feasibility).
    pub g_min_eigenvalue: f64,
}

/// A converged reference solution.
#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub sigma: CovMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt: KktReport,
}

/// Solve the penalized program to first-order optimality. Errors with
/// [`Error::Oracle`] when the iteration cap is reached first.
pub fn sdp_reference_solve(
    form: PenalizedForm,
    sample_cov: &CovMatrix,
    n: usize,
    lambda: f64,
    opts: &AdmmOptions,
) -> Result<AdmmSolution> {
    let m = sample_cov.dim();
    if m > opts.max_dim {
        return Err(Error::parameter(format!(
            "reference solver capped at dimension {}, got {m}; raise max_dim for benchmarks",
            opts.max_dim
        )));
    }
    if n == 0 {
        return Err(Error::parameter("sample count must be positive"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::parameter("penalty must be nonnegative"));
    }
    let tau = 2.0 * lambda / n as f64;
    let rho = opts.rho;
    let sam = sample_cov.matrix();
    let scale = sam.amax().max(1.0);

    // Variables of the consensus problem W + G - V = 0 (scaled dual U).
    let mut w = DMatrix::<f64>::identity(m, m);
    let mut g = DMatrix::<f64>::zeros(m, m);
    let mut v = DMatrix::<f64>::identity(m, m);
    let mut u = DMatrix::<f64>::zeros(m, m);

    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;

        // W-step: argmin -log det W + tr(W Sam) + rho/2 ||W - (V - G - U)||^2.
        // Spectral solve of rho w_i - 1/w_i = d_i.
        let a = &v - &g - &u;
        let c = CovMatrix::symmetrized(a * rho - sam);
        let eig = eigh_desc(&c);
        let new_w_vals = eig.values().map(|d| (d + (d * d + 4.0 * rho).sqrt()) / (2.0 * rho));
        w = eig.reconstruct_with(&new_w_vals);

        // G-step: argmin tau tr(G) + rho/2 ||G - (V - W - U)||^2 over PSD:
        // shift by tau/rho and clip the spectrum at zero.
        let b = CovMatrix::symmetrized(&v - &w - &u);
        let eig = eigh_desc(&b);
        let g_vals = eig.values().map(|d| (d - tau / rho).max(0.0));
        g = eig.reconstruct_with(&g_vals);

        // V-step: project W + G + U onto the structure set.
        let e = &w + &g + &u;
        let v_old = v.clone();
        v = match form {
            PenalizedForm::UniformResidual => {
                let level = (e.trace() / m as f64).max(0.0);
                DMatrix::from_diagonal(&DVector::from_element(m, level))
            }
            PenalizedForm::DiagonalResidual => {
                DMatrix::from_diagonal(&DVector::from_fn(m, |i, _| e[(i, i)].max(0.0)))
            }
        };

        let r = &w + &g - &v;
        u += &r;

        primal = r.amax() / scale;
        dual = rho * (&v - &v_old).amax() / scale;
        if primal <= opts.tol && dual <= opts.tol {
            break;
        }
    }
    if primal > opts.tol || dual > opts.tol {
        return Err(Error::Oracle(format!(
            "reference solver stopped at primal {primal:.3e} / dual {dual:.3e} after {iterations} iterations"
        )));
    }

    // The estimate is W^{-1}; report first-order diagnostics alongside.
    let w_eig = eigh_desc(&CovMatrix::symmetrized(w.clone()));
    let min_w = w_eig.values()[m - 1];
    if min_w <= 0.0 {
        return Err(Error::Oracle(format!(
            "reference precision lost positive definiteness (min eigenvalue {min_w:.3e})"
        )));
    }
    let sigma_mat = w_eig.reconstruct_with(&w_eig.values().map(|x| 1.0 / x));
    let sigma = CovMatrix::symmetrized(sigma_mat);

    let mut omega = sigma.matrix() - sam;
    for i in 0..m {
        omega[(i, i)] += tau;
    }
    let omega_eig = eigh_desc(&CovMatrix::symmetrized(omega.clone()));
    let g_eig = eigh_desc(&CovMatrix::symmetrized(g.clone()));
    let structure_residual = match form {
        PenalizedForm::UniformResidual => (sigma.trace() - sam.trace()).abs() / sam.trace().abs().max(1e-300),
        PenalizedForm::DiagonalResidual => {
            let mut worst = 0.0f64;
            for i in 0..m {
                worst = worst.max((sigma.matrix()[(i, i)] - sam[(i, i)]).abs());
            }
            worst / scale
        }
    };
    let kkt = KktReport {
        omega_min_eigenvalue: omega_eig.values()[m - 1] / scale,
        complementarity: omega.dot(&g) / scale,
        structure_residual,
        g_min_eigenvalue: g_eig.values()[m - 1] / scale,
    };

    Ok(AdmmSolution {
        sigma,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{tm_fit, utm_fit, TmParams, UtmParams};
    use crate::linalg::SampleStats;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn random_sample_cov(m: usize, n: usize, seed: u64) -> CovMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        CovMatrix::symmetrized(x.transpose() * &x / n as f64)
    }

    #[test]
    fn zero_penalty_returns_sample_covariance() {
        let sam = random_sample_cov(5, 20, 1);
        let sol = sdp_reference_solve(
            PenalizedForm::UniformResidual,
            &sam,
            20,
            0.0,
            &AdmmOptions::default(),
        )
        .unwrap();
        let err = (sol.sigma.matrix() - sam.matrix()).amax() / sam.matrix().amax();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn uniform_form_agrees_with_soft_thresholding() {
        for seed in 0..3u64 {
            let n = 25;
            let sam = random_sample_cov(6, n, 100 + seed);
            let lambda = 3.0 + seed as f64;
            let stats = SampleStats::from_cov(sam.clone(), n).unwrap();
            let fast = utm_fit(&stats, &UtmParams { lambda }).unwrap();
            let slow = sdp_reference_solve(
                PenalizedForm::UniformResidual,
                &sam,
                n,
                lambda,
                &AdmmOptions::default(),
            )
            .unwrap();
            let rel = (slow.sigma.matrix() - fast.estimate.sigma().matrix()).norm()
                / slow.sigma.matrix().norm();
            assert!(rel <= 1e-4, "seed {seed}: disagreement {rel}");
            assert!(slow.kkt.omega_min_eigenvalue >= -1e-6);
            assert!(slow.kkt.g_min_eigenvalue >= -1e-8);
            assert!(slow.kkt.complementarity.abs() <= 1e-6);
            assert!(slow.kkt.structure_residual <= 1e-6);
        }
    }

    #[test]
    fn diagonal_form_agrees_with_block_ascent() {
        for seed in 0..2u64 {
            let n = 30;
            let sam = random_sample_cov(4, n, 200 + seed);
            let lambda = 2.0;
            let stats = SampleStats::from_cov(sam.clone(), n).unwrap();
            let fast = tm_fit(&stats, &TmParams::new(lambda)).unwrap();
            let slow = sdp_reference_solve(
                PenalizedForm::DiagonalResidual,
                &sam,
                n,
                lambda,
                &AdmmOptions::default(),
            )
            .unwrap();
            let rel = (slow.sigma.matrix() - fast.estimate.sigma().matrix()).norm()
                / slow.sigma.matrix().norm();
            assert!(rel <= 1e-4, "seed {seed}: disagreement {rel}");
            assert!(slow.kkt.structure_residual <= 1e-6);
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let sam = CovMatrix::identity(40);
        assert!(matches!(
            sdp_reference_solve(
                PenalizedForm::UniformResidual,
                &sam,
                10,
                1.0,
                &AdmmOptions::default()
            ),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn iteration_cap_is_inconclusive() {
        let sam = random_sample_cov(5, 20, 3);
        let result = sdp_reference_solve(
            PenalizedForm::UniformResidual,
            &sam,
            20,
            1.0,
            &AdmmOptions {
                max_iter: 3,
                ..AdmmOptions::default()
            },
        );
        assert!(matches!(result, Err(Error::Oracle(_))));
    }
}
