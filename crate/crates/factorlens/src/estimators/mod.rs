//! The six covariance estimators and a unified dispatch layer for grid
//! searches and the CLI.

pub mod em;
pub mod mrh;
pub mod stm;
pub mod tm;
pub mod urm;
pub mod utm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModelEstimate;
use crate::linalg::SampleStats;

pub use em::{em_fit, EmFit, EmParams};
pub use mrh::mrh_fit;
pub use stm::{stm_fit, tstep_solve, ScalingMatrix, StmFit, StmParams};
pub use tm::{tm_fit, TmFit, TmParams};
pub use urm::{residual_variance_hat, urm_fit, UrmParams};
pub use utm::{utm_fit, UtmParams, UtmSolution};

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Urm,
    Utm,
    Em,
    Mrh,
    Tm,
    Stm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Urm,
        EstimatorKind::Utm,
        EstimatorKind::Em,
        EstimatorKind::Mrh,
        EstimatorKind::Tm,
        EstimatorKind::Stm,
    ];

    /// True for estimators whose hyperparameter is a factor count K rather
    /// than a trace penalty.
    pub fn uses_factor_count(&self) -> bool {
        matches!(
            self,
            EstimatorKind::Urm | EstimatorKind::Em | EstimatorKind::Mrh
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EstimatorKind::Urm => "urm",
            EstimatorKind::Utm => "utm",
            EstimatorKind::Em => "em",
            EstimatorKind::Mrh => "mrh",
            EstimatorKind::Tm => "tm",
            EstimatorKind::Stm => "stm",
        };
        f.write_str(s)
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "urm" => Ok(EstimatorKind::Urm),
            "utm" => Ok(EstimatorKind::Utm),
            "em" => Ok(EstimatorKind::Em),
            "mrh" => Ok(EstimatorKind::Mrh),
            "tm" => Ok(EstimatorKind::Tm),
            "stm" => Ok(EstimatorKind::Stm),
            other => Err(Error::parameter(format!(
                "unknown estimator {other:?}; expected one of urm, utm, em, mrh, tm, stm"
            ))),
        }
    }
}

/// A hyperparameter value: a factor count for the rank-constrained family or
/// a trace penalty for the penalized family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperParam {
    FactorCount(usize),
    TracePenalty(f64),
}

impl fmt::Display for HyperParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParam::FactorCount(k) => write!(f, "k={k}"),
            HyperParam::TracePenalty(l) => write!(f, "lambda={l}"),
        }
    }
}

/// Fit `kind` with hyperparameter `param`, using the crate-default solver
/// settings. The parameter variant must match the estimator family.
pub fn fit_estimator(
    kind: EstimatorKind,
    stats: &SampleStats,
    param: &HyperParam,
) -> Result<FactorModelEstimate> {
    match (kind, param) {
        (EstimatorKind::Urm, HyperParam::FactorCount(k)) => urm_fit(stats, &UrmParams { k: *k }),
        (EstimatorKind::Mrh, HyperParam::FactorCount(k)) => mrh_fit(stats, *k),
        (EstimatorKind::Em, HyperParam::FactorCount(k)) => {
            em_fit(stats, &EmParams::new(*k), None).map(|fit| fit.estimate)
        }
        (EstimatorKind::Utm, HyperParam::TracePenalty(l)) => {
            utm_fit(stats, &UtmParams { lambda: *l }).map(|sol| sol.estimate)
        }
        (EstimatorKind::Tm, HyperParam::TracePenalty(l)) => {
            tm_fit(stats, &TmParams::new(*l)).map(|fit| fit.estimate)
        }
        (EstimatorKind::Stm, HyperParam::TracePenalty(l)) => {
            stm_fit(stats, &StmParams::new(*l)).map(|fit| fit.estimate)
        }
        (kind, param) => Err(Error::parameter(format!(
            "estimator {kind} cannot take hyperparameter {param}"
        ))),
    }
}

/// Build the hyperparameter grid for `kind` from the candidate lists.
pub fn grid_for(kind: EstimatorKind, k_grid: &[usize], lambda_grid: &[f64]) -> Vec<HyperParam> {
    if kind.uses_factor_count() {
        k_grid.iter().map(|&k| HyperParam::FactorCount(k)).collect()
    } else {
        lambda_grid
            .iter()
            .map(|&l| HyperParam::TracePenalty(l))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CovMatrix;
    use nalgebra::DVector;

    #[test]
    fn dispatch_rejects_mismatched_param() {
        let cov = CovMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]));
        let stats = SampleStats::from_cov(cov, 5).unwrap();
        assert!(fit_estimator(EstimatorKind::Urm, &stats, &HyperParam::TracePenalty(1.0)).is_err());
        assert!(fit_estimator(EstimatorKind::Utm, &stats, &HyperParam::FactorCount(1)).is_err());
    }

    #[test]
    fn name_round_trip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.to_string().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert!("pca".parse::<EstimatorKind>().is_err());
    }
}
