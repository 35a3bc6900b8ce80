//! Error type shared across the crate.
//!
//! Errors are split by how a caller should react: `Validation`, `Domain` and
//! `GridMismatch` mean the input was malformed (fix the config), while
//! `Immersion`, `Hypothesis`, `GradientCheck` and `NonFinite` mean the
//! numerics broke down on valid-looking input.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point left the coordinate ball the metric model is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed inputs: bad tensor shapes, non-symmetric Ricci data, missing
    /// config keys, inconsistent grid sizes and the like.
    #[error("validation error: {0}")]
    Validation(String),

    /// The parameterized map stopped being an immersion (det of the induced
    /// metric dropped to zero or below at a quadrature node).
    #[error("immersion failure: {0}")]
    Immersion(String),

    /// A positivity hypothesis needed by the formulas (H > 0) failed.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// A node field was handed to a geometry built on a different grid.
    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// The analytic shape gradient disagreed with finite differences.
    #[error("gradient check failed: relative error {rel_err:.3e} (limit {limit:.1e})")]
    GradientCheck { rel_err: f64, limit: f64 },

    /// A NaN or infinity appeared mid-computation.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Structured-text (de)serialization failure.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
