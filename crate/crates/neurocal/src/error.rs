//! Crate-wide error type.

use crate::tensor::Shape;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are not conformable for the requested operation.
    #[error("shape mismatch in `{op}`: left is {lhs}, right is {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },

    /// An operation was asked to act on a shape it does not support.
    #[error("`{op}` does not accept shape {shape}")]
    BadShape { op: &'static str, shape: Shape },

    /// Backward pass requested from a non-scalar value.
    #[error("backward requires a scalar root, got {shape}")]
    NonScalarRoot { shape: Shape },

    /// Elementwise power over a non-positive base.
    #[error("`pow` requires strictly positive base entries, found {value} at index {index}")]
    NonPositiveBase { value: f64, index: usize },

    #[error("division by zero: {context}")]
    DivisionByZero { context: &'static str },

    /// Invalid network / training / run specification.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An optimizer step was requested with no gradients available.
    #[error("optimizer step before any backward pass: no gradients for {missing}")]
    MissingGradients { missing: String },

    /// Dataset validation failure (dimensions, signs, unlearnable regimes).
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// Iterative solver did not converge within its budget.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The forward model produced a non-finite state during training.
    #[error(
        "training diverged (seed {seed}, epoch {epoch}, step {step}); last estimate {last_lambda:?}"
    )]
    Diverged {
        seed: u64,
        epoch: u32,
        step: u32,
        last_lambda: Vec<f64>,
    },

    /// Density estimation failure (degenerate samples, underflow).
    #[error("density estimation failed: {0}")]
    Density(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
