//! Closed-form analyses of the one-spike, one-outlier-residual model
//! `Sigma_* = 1 1^T + diag(r, 1, ..., 1)`, used to quantify how strongly a
//! large residual variance distorts factor estimates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::tm::lemma_gstep;
use crate::linalg::CovMatrix;

/// Top eigenvalue `q` of `1 1^T + diag(r, 1, ..., 1)` and the component
/// ratio `f_1 / f_i` (i > 1) of its leading eigenvector, in closed form:
///
/// `q = (M + r + 1 + sqrt((M + r + 1)^2 - 4 (M r + 1))) / 2`, ratio `q - M`.
///
/// The ratio grows without bound in `r`: the eigenvector tilts toward the
/// noisy coordinate even though the factor loads all coordinates equally.
pub fn prop2_eigvector_ratio(m: usize, r: f64) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::parameter("need dimension at least 2"));
    }
    if !(r > 1.0) {
        return Err(Error::parameter("outlier residual must exceed 1"));
    }
    let mf = m as f64;
    let s = mf + r + 1.0;
    let q = 0.5 * (s + (s * s - 4.0 * (mf * r + 1.0)).sqrt());
    Ok((q, q - mf))
}

/// The same model's covariance matrix, for numerical cross-checks.
pub fn prop2_matrix(m: usize, r: f64) -> CovMatrix {
    let mut mat = DMatrix::from_element(m, m, 1.0);
    for i in 0..m {
        mat[(i, i)] += if i == 0 { r } else { 1.0 };
    }
    CovMatrix::symmetrized(mat)
}

/// Result of the idealized trace-penalized analysis on the same model.
#[derive(Debug, Clone, Serialize)]
pub struct IdealizedTmResult {
    /// Rank of the estimated factor part.
    pub rank: usize,
    /// `f_1 / f_i` when the rank is one.
    pub ratio: Option<f64>,
    /// Larger root of the characteristic quadratic.
    pub q_plus: f64,
}

/// Closed-form idealized trace-penalized estimate: the sample covariance is
/// taken to be the truth and the precision diagonal is pinned at the true
/// residual inverse. The factor part has rank one exactly when
/// `lambda < M N / 2`, and then `f_1 / f_i = r (q_plus + 1 - M)` with
/// `q_plus` the larger root of
/// `r q^2 - ((M-1) r + (r-1) tau + 1) q + tau (M-1)(r-1) = 0`, `tau = 2 lambda / N`.
pub fn prop3_idealized_tm(m: usize, n: usize, lambda: f64, r: f64) -> Result<IdealizedTmResult> {
    if m < 2 || n == 0 {
        return Err(Error::parameter("need dimension >= 2 and positive N"));
    }
    if !(r > 1.0) || !(lambda > 0.0) {
        return Err(Error::parameter(
            "need outlier residual > 1 and positive penalty",
        ));
    }
    let mf = m as f64;
    let tau = 2.0 * lambda / n as f64;
    // Characteristic quadratic of the rank-two coupling block.
    let a = r;
    let b = -((mf - 1.0) * r + (r - 1.0) * tau + 1.0);
    let c = tau * (mf - 1.0) * (r - 1.0);
    let disc = b * b - 4.0 * a * c;
    debug_assert!(disc > 0.0);
    let q_plus = (-b + disc.sqrt()) / (2.0 * a);
    let q_minus = (-b - disc.sqrt()) / (2.0 * a);
    // The factor rank counts roots exceeding tau.
    let rank = [q_plus, q_minus].iter().filter(|&&q| q > tau).count();
    let ratio = if rank == 1 {
        Some(r * (q_plus + 1.0 - mf))
    } else {
        None
    };
    Ok(IdealizedTmResult {
        rank,
        ratio,
        q_plus,
    })
}

/// The same idealized estimate computed through the generic fixed-diagonal
/// solver: plug `Sam = Sigma_*` and `V = R_*^{-1}` into the closed-form
/// G-step and read the factor part off the result. Returns the rank and the
/// component ratio of the leading factor column.
pub fn prop3_via_matrix(m: usize, n: usize, lambda: f64, r: f64) -> Result<IdealizedTmResult> {
    if m < 2 || n == 0 {
        return Err(Error::parameter("need dimension >= 2 and positive N"));
    }
    if !(r > 1.0) || !(lambda > 0.0) {
        return Err(Error::parameter(
            "need outlier residual > 1 and positive penalty",
        ));
    }
    let tau = 2.0 * lambda / n as f64;
    let sigma_star = prop2_matrix(m, r);
    let v = DVector::from_fn(m, |i, _| if i == 0 { 1.0 / r } else { 1.0 });
    let gstep = lemma_gstep(&v, &sigma_star, tau);
    let rank = gstep.loadings.ncols();
    let ratio = if rank == 1 {
        let f = gstep.loadings.column(0);
        Some(f[0] / f[1])
    } else {
        None
    };
    // Expose q_plus implied by the factor magnitude for diagnostics: the
    // closed form gives f f^T with f = sqrt(q_plus - tau) R^{1/2} u, so the
    // exact value is not needed here; report the analytic one.
    let analytic = prop3_idealized_tm(m, n, lambda, r)?;
    Ok(IdealizedTmResult {
        rank,
        ratio,
        q_plus: analytic.q_plus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh_desc;
    use approx::assert_relative_eq;

    #[test]
    fn golden_two_dimensional_case() {
        // M = 2, r = 2: q = (5 + sqrt 5)/2, ratio = (1 + sqrt 5)/2.
        let (q, ratio) = prop2_eigvector_ratio(2, 2.0).unwrap();
        assert_relative_eq!(q, (5.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(ratio, (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        // Numeric cross-check on [[3, 1], [1, 2]].
        let eig = eigh_desc(&prop2_matrix(2, 2.0));
        assert_relative_eq!(eig.values()[0], q, epsilon = 1e-8);
        let f = eig.basis().column(0);
        assert_relative_eq!(f[0] / f[1], ratio, epsilon = 1e-8);
    }

    #[test]
    fn closed_form_matches_numeric_top_eigenpair() {
        for &m in &[2usize, 5, 20] {
            for &r in &[2.0, 4.0, 16.0] {
                let (q, ratio) = prop2_eigvector_ratio(m, r).unwrap();
                let eig = eigh_desc(&prop2_matrix(m, r));
                assert_relative_eq!(eig.values()[0], q, epsilon = 1e-8, max_relative = 1e-8);
                let f = eig.basis().column(0);
                for i in 1..m {
                    assert_relative_eq!(f[0] / f[i], ratio, epsilon = 1e-8, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn ratio_is_monotone_in_r() {
        let mut last = 1.0;
        for &r in &[2.0, 4.0, 8.0, 16.0] {
            let (_, ratio) = prop2_eigvector_ratio(6, r).unwrap();
            assert!(ratio > last, "ratio must increase with r");
            last = ratio;
        }
    }

    #[test]
    fn ratio_approaches_one_in_symmetric_limit() {
        let (_, ratio) = prop2_eigvector_ratio(5, 1.0 + 1e-9).unwrap();
        assert_relative_eq!(ratio, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn worked_idealized_penalty_example() {
        // M = 3, N = 2, r = 4, lambda = 2 (tau = 2 < M): rank one,
        // q_plus = (15 + sqrt 33)/8, ratio = 4 (q_plus - 2).
        let out = prop3_idealized_tm(3, 2, 2.0, 4.0).unwrap();
        assert_eq!(out.rank, 1);
        assert_relative_eq!(out.q_plus, (15.0 + 33f64.sqrt()) / 8.0, epsilon = 1e-12);
        let expect = 4.0 * (out.q_plus + 1.0 - 3.0);
        assert_relative_eq!(out.ratio.unwrap(), expect, epsilon = 1e-12);
        assert_relative_eq!(out.ratio.unwrap(), 2.3724, max_relative = 1e-4);
    }

    #[test]
    fn rank_transition_at_half_mn() {
        for &(m, n) in &[(3usize, 2usize), (5, 4)] {
            let threshold = (m * n) as f64 / 2.0;
            let below = prop3_idealized_tm(m, n, threshold * 0.98, 4.0).unwrap();
            let above = prop3_idealized_tm(m, n, threshold * 1.02, 4.0).unwrap();
            assert_eq!(below.rank, 1, "rank below threshold at M={m}, N={n}");
            assert_ne!(above.rank, 1, "rank above threshold at M={m}, N={n}");
        }
    }

    #[test]
    fn matrix_route_agrees_with_closed_form() {
        for &(m, n, lambda, r) in &[
            (3usize, 2usize, 2.0, 4.0),
            (4, 3, 2.5, 2.0),
            (6, 5, 6.0, 8.0),
        ] {
            let analytic = prop3_idealized_tm(m, n, lambda, r).unwrap();
            let numeric = prop3_via_matrix(m, n, lambda, r).unwrap();
            assert_eq!(analytic.rank, numeric.rank);
            if let (Some(a), Some(b)) = (analytic.ratio, numeric.ratio) {
                assert_relative_eq!(a, b, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn ratio_limits_in_penalty() {
        // tau -> 0+ drives the ratio to 1.
        let out = prop3_idealized_tm(4, 1000, 1e-6, 3.0).unwrap();
        assert_relative_eq!(out.ratio.unwrap(), 1.0, epsilon = 1e-5);
        // The idealized ratio is monotone in r on a grid.
        let mut last = 0.0;
        for &r in &[2.0, 4.0, 8.0, 16.0] {
            let out = prop3_idealized_tm(4, 2, 3.0, r).unwrap();
            let ratio = out.ratio.unwrap();
            assert!(ratio > last);
            last = ratio;
        }
    }
}
