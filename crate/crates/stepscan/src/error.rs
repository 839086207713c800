// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors raised by the scan, tail and segmentation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Indices violate the required ordering or exceed the sequence.
    #[error("invalid index: {0}")]
    Index(String),

    /// The input data cannot support the requested statistic.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Two independent evaluators of the same quantity disagree.
    #[error("numerical consistency failure: inversion {inversion:.6} vs grid {grid:.6} at b = {b}")]
    Consistency { b: f64, inversion: f64, grid: f64 },

    /// A root could not be bracketed in the scanned range.
    #[error("failed to bracket root on [{lo}, {hi}]: {what}")]
    Bracket { lo: f64, hi: f64, what: String },

    /// An iterative method ran out of budget.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// The threshold is too small for the requested dimension.
    #[error("threshold too small: {0}")]
    ThresholdTooSmall(String),

    /// The operation is not available for this family or configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures of a numerical method rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Consistency { .. } | Error::Bracket { .. } | Error::Convergence(_)
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
