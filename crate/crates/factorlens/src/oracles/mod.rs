//! Reference solvers and Monte Carlo verifiers backing the fast estimators.
//!
//! Everything here is deliberately slow and independent of the production
//! code paths it checks: an alternating-direction solver for the two
//! penalized programs, quadratic-form optimal eigenvalues, spiked-model
//! bias measurements, and closed-form analyses of the outlier-residual
//! model. The `verify` CLI command drives these and emits a JSON report.

pub mod admm;
pub mod props;
pub mod spiked;

pub use admm::{sdp_reference_solve, AdmmOptions, AdmmSolution, KktReport, PenalizedForm};
pub use props::{
    prop2_eigvector_ratio, prop2_matrix, prop3_idealized_tm, prop3_via_matrix, IdealizedTmResult,
};
pub use spiked::{
    optimal_eigenvalues, verify_prop1_trace, verify_theorem2, OptimalEigenvalues, SpikeBiasReport,
    SpikedModel, TraceRatioReport,
};
