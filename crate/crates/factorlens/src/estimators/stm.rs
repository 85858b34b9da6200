//! Scaled trace-penalized maximum likelihood.
//!
//! The estimator couples the uniform-residual trace penalty with a
//! componentwise scaling `T` of the data: it maximizes
//! `log p(T X | Sigma) - lambda tr(G)` over `Sigma^{-1} = v I - G`, `G`
//! positive semidefinite, and diagonal `T > 0` with `log det T >= 0`. A good
//! `T` makes the scaled data explainable by a uniform-residual factor model;
//! the returned estimate is mapped back to the original scale,
//! `T^{-1} Sigma T^{-1}`.
//!
//! The objective is biconcave in `(G, v)` and `T`, so it is solved by
//! coordinate ascent: the `(G, v)` block is the soft-thresholding solver on
//! the scaled sample covariance, and the `T` block is a convex scaling
//! problem solved by Newton in the log domain (see [`tstep_solve`]). The
//! sweep loop terminates when `max_i |delta T_ii / T_ii|` falls below
//! `rel_tol`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModelEstimate;
use crate::linalg::{CovMatrix, SampleStats};

use super::utm::{utm_from_eigen, UtmSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StmParams {
    /// Trace penalty coefficient, `lambda >= 0`.
    pub lambda: f64,
    /// Relative change tolerance on the scaling diagonal for termination.
    pub rel_tol: f64,
    /// Cap on coordinate-ascent sweeps.
    pub max_sweeps: usize,
}

impl StmParams {
    pub fn new(lambda: f64) -> Self {
        StmParams {
            lambda,
            rel_tol: 1e-3,
            max_sweeps: 200,
        }
    }
}

/// Positive diagonal scaling with unit log-determinant at convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    diag: DVector<f64>,
}

impl ScalingMatrix {
    pub fn new(diag: DVector<f64>) -> Result<Self> {
        if diag.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::input("scaling entries must be positive and finite"));
        }
        Ok(ScalingMatrix { diag })
    }

    pub fn identity(m: usize) -> Self {
        ScalingMatrix {
            diag: DVector::from_element(m, 1.0),
        }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn log_det(&self) -> f64 {
        self.diag.iter().map(|t| t.ln()).sum()
    }
}

/// Result of an STM run with its ascent diagnostics.
#[derive(Debug, Clone)]
pub struct StmFit {
    /// Estimate mapped back to the original (unscaled) variables.
    pub estimate: FactorModelEstimate,
    /// Final scaling diagonal.
    pub scaling: ScalingMatrix,
    /// Penalized objective (scaled by 2/N, constants dropped) after each
    /// sweep's T-step.
    pub objective_trace: Vec<f64>,
    /// `max_i |delta T_ii / T_ii|` per sweep.
    pub t_rel_changes: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Fit the scaled trace-penalized estimator.
pub fn stm_fit(stats: &SampleStats, params: &StmParams) -> Result<StmFit> {
    if !(params.lambda >= 0.0) {
        return Err(Error::parameter(format!(
            "trace penalty must be nonnegative, got {}",
            params.lambda
        )));
    }
    if !(params.rel_tol > 0.0) {
        return Err(Error::parameter("rel_tol must be positive"));
    }
    let m = stats.m();
    let sam = stats.cov();
    if sam.diagonal().iter().any(|&d| d <= 0.0) {
        return Err(Error::input(
            "sample covariance has a nonpositive diagonal entry; every variable needs nonzero variance",
        ));
    }
    let tau = 2.0 * params.lambda / stats.n() as f64;

    let mut t = DVector::from_element(m, 1.0);
    let mut objective_trace = Vec::new();
    let mut t_rel_changes = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    let mut utm: Option<UtmSolution> = None;

    while sweeps < params.max_sweeps {
        sweeps += 1;
        // (G, v)-block: soft-thresholding on the scaled covariance T Sam T.
        let scaled = scale_cov(sam, &t);
        let eigen = crate::linalg::eigh_desc(&scaled);
        let sol = utm_from_eigen(&eigen, tau);

        // T-block: re-scale the original data to best fit this Sigma. The
        // coupling matrix is Sigma^{-1} o Sam, with the precision rebuilt
        // from the spectral form B diag(1/h) B^T.
        let inv_h = sol.eigenvalues.map(|h| 1.0 / h);
        if inv_h.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate(
                "scaled-model covariance is singular (zero eigenvalue)".into(),
            ));
        }
        let prec = eigen.reconstruct_with(&inv_h);
        let c = DMatrix::from_fn(m, m, |i, j| prec[(i, j)] * sam.matrix()[(i, j)]);
        let t_new = solve_scaling(&c, &t)?;

        let rel_change = t
            .iter()
            .zip(t_new.iter())
            .map(|(old, new)| ((new - old) / old).abs())
            .fold(0.0f64, f64::max);
        t = t_new;
        objective_trace.push(stm_objective(&sol, &c, &t, tau));
        t_rel_changes.push(rel_change);
        utm = Some(sol);
        if rel_change < params.rel_tol {
            converged = true;
            break;
        }
    }

    let sol = utm.expect("at least one sweep runs");
    // Map back: Sigma_original = T^{-1} Sigma_scaled T^{-1}.
    let mut loadings = sol.estimate.loadings().clone();
    for i in 0..m {
        for j in 0..loadings.ncols() {
            loadings[(i, j)] /= t[i];
        }
    }
    let residual = DVector::from_fn(m, |i, _| sol.estimate.residual()[i] / (t[i] * t[i]));
    let estimate = FactorModelEstimate::new(loadings, residual)?;
    let scaling = ScalingMatrix::new(t)?;

    if !converged {
        return Err(Error::convergence(
            format!(
                "scaled trace-penalized fit did not meet the scaling tolerance within {sweeps} sweeps"
            ),
            Some(estimate),
        ));
    }
    Ok(StmFit {
        estimate,
        scaling,
        objective_trace,
        t_rel_changes,
        sweeps,
        converged,
    })
}

/// `T Sam T` for diagonal `T`.
fn scale_cov(sam: &CovMatrix, t: &DVector<f64>) -> CovMatrix {
    let m = t.len();
    let mut out = sam.matrix().clone();
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] *= t[i] * t[j];
        }
    }
    CovMatrix::symmetrized(out)
}

/// Penalized objective after a sweep, scaled by 2/N with the `M log 2pi`
/// constant dropped: `-log det Sigma - tr(Sigma^{-1} T Sam T) - tau tr(G)`,
/// where the trace term is the quadratic form `t^T C t` in the coupling
/// matrix.
fn stm_objective(sol: &UtmSolution, c: &DMatrix<f64>, t: &DVector<f64>, tau: f64) -> f64 {
    let logdet_sigma: f64 = sol.eigenvalues.iter().map(|h| h.ln()).sum();
    let quad = quad_form(c, t);
    let trace_g: f64 = sol
        .eigenvalues
        .iter()
        .map(|&h| sol.v_hat - 1.0 / h)
        .sum();
    -logdet_sigma - quad - tau * trace_g
}

fn quad_form(c: &DMatrix<f64>, t: &DVector<f64>) -> f64 {
    t.dot(&(c * t))
}

/// Solve the scaling block: minimize `t^T (Sigma^{-1} o Sam) t` over positive
/// `t` subject to `sum_i log t_i = 0`.
///
/// In the log domain `u = log t` the constraint is linear and the problem is
/// solved by damped Newton with the constraint handled by projection onto
/// `sum u = 0`. At the optimum the componentwise products `t_i (C t)_i` are
/// equal across i. Errors on a zero row of the coupling matrix, for which no
/// optimum exists.
pub fn tstep_solve(sigma: &CovMatrix, sample_cov: &CovMatrix) -> Result<ScalingMatrix> {
    let m = sigma.dim();
    let chol = sigma
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::input("scaling step requires a positive definite covariance"))?;
    let prec = chol.inverse();
    let mut c = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            c[(i, j)] = prec[(i, j)] * sample_cov.matrix()[(i, j)];
        }
    }
    let t = solve_scaling(&c, &DVector::from_element(m, 1.0))?;
    ScalingMatrix::new(t)
}

/// Newton solver for `min t^T C t` s.t. `sum log t_i = 0`, warm-started at
/// `init`. `C` must be positive semidefinite with no zero row (it is an
/// entrywise product of a positive definite and a PSD matrix with positive
/// diagonal in intended use, hence positive definite).
fn solve_scaling(c: &DMatrix<f64>, init: &DVector<f64>) -> Result<DVector<f64>> {
    let m = c.nrows();
    for i in 0..m {
        if (0..m).all(|j| c[(i, j)] == 0.0) {
            return Err(Error::Degenerate(format!(
                "coupling matrix has a zero row at index {i}"
            )));
        }
    }
    if m == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }

    // Work in u = log t, kept centered so the constraint holds exactly.
    let mut u = init.map(|t| t.ln());
    let mean = u.mean();
    u.add_scalar_mut(-mean);

    let scale = c.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-8;
    let max_iter = 200;

    let mut t = u.map(f64::exp);
    let mut q = quad_form(c, &t);
    for _ in 0..max_iter {
        let ct = c * &t;
        // Projected gradient of q(u): 2 (t o Ct - mean(t o Ct)).
        let w = DVector::from_fn(m, |i, _| t[i] * ct[i]);
        let w_mean = w.mean();
        let grad = (&w - DVector::from_element(m, w_mean)) * 2.0;
        // Relative first-order criterion: equalized componentwise products.
        let resid = w.iter().map(|x| (x - w_mean).abs()).fold(0.0f64, f64::max);
        if resid <= tol * w_mean.abs().max(tol * scale) {
            break;
        }

        // Hessian in u: 2 (T C T + diag(t o Ct)); Levenberg damping keeps it
        // positive definite away from the optimum.
        let mut hess = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                hess[(i, j)] = 2.0 * t[i] * c[(i, j)] * t[j];
            }
            hess[(i, i)] += 2.0 * w[i];
        }
        let mut bump = 0.0;
        let hess_scale = (0..m).map(|i| hess[(i, i)].abs()).fold(0.0f64, f64::max);
        let delta = loop {
            let mut damped = hess.clone();
            for i in 0..m {
                damped[(i, i)] += bump;
            }
            // Constrained Newton step via the bordered system trick: solve
            // H d1 = grad, H d2 = 1, then delta = -(d1 - (1^T d1 / 1^T d2) d2)
            // satisfies sum(delta) = 0.
            if let Some(chol) = damped.cholesky() {
                let d1 = chol.solve(&grad);
                let d2 = chol.solve(&DVector::from_element(m, 1.0));
                let denom = d2.sum();
                if denom.abs() > f64::MIN_POSITIVE {
                    let shift = d1.sum() / denom;
                    break -(d1 - d2 * shift);
                }
            }
            bump = if bump == 0.0 { 1e-8 * hess_scale.max(1e-300) } else { bump * 10.0 };
            if bump > 1e8 * hess_scale.max(1e-300) {
                return Err(Error::convergence(
                    "scaling-step Hessian could not be stabilized",
                    None,
                ));
            }
        };

        // Backtracking line search on q along the projected direction.
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let u_cand = &u + &delta * step;
            let t_cand = u_cand.map(f64::exp);
            if t_cand.iter().all(|x| x.is_finite() && *x > 0.0) {
                let q_cand = quad_form(c, &t_cand);
                if q_cand <= q + 1e-12 * q.abs().max(1.0) {
                    u = u_cand;
                    t = t_cand;
                    q = q_cand;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            // No descent available: at numerical stationarity.
            break;
        }
        // Re-center to absorb drift in the constraint.
        let mean = u.mean();
        if mean != 0.0 {
            u.add_scalar_mut(-mean);
            t = u.map(f64::exp);
            q = quad_form(c, &t);
        }
    }

    // Final stationarity check.
    let ct = c * &t;
    let w = DVector::from_fn(m, |i, _| t[i] * ct[i]);
    let w_mean = w.mean();
    let resid = w.iter().map(|x| (x - w_mean).abs()).fold(0.0f64, f64::max);
    if resid > 1e-6 * w_mean.abs().max(1e-6 * scale) {
        return Err(Error::convergence(
            format!("scaling step stalled with stationarity residual {resid:.3e}"),
            None,
        ));
    }
    Ok(t)
}
