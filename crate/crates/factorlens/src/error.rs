//! Error types shared across the crate.

use crate::factor::FactorModelEstimate;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: input/parameter problems exit
/// with 2, convergence failures with 3, failed verification assertions
/// with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or out-of-domain input data (non-finite entries,
    /// asymmetric matrices, unparsable files).
    #[error("input error: {0}")]
    Input(String),

    /// A parameter violates its documented range (e.g. K >= M, negative
    /// penalty, window outside the series).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Structurally degenerate input for which no answer exists
    /// (e.g. a zero row in the scaling problem's coupling matrix).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Hyperparameter selection could not rank any candidate (every
    /// candidate scored negative infinity).
    #[error("selection error: {0}")]
    Selection(String),

    /// An iterative solver hit its iteration cap before reaching its
    /// tolerance. Carries the best iterate found so callers can decide
    /// whether to use it anyway.
    #[error("convergence error: {message}")]
    Convergence {
        message: String,
        best: Option<Box<FactorModelEstimate>>,
    },

    /// A reference (oracle) solver failed to converge; tests treat this
    /// as inconclusive rather than failed.
    #[error("oracle inconclusive: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn convergence(msg: impl Into<String>, best: Option<FactorModelEstimate>) -> Self {
        Error::Convergence {
            message: msg.into(),
            best: best.map(Box::new),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
