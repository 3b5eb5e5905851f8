//! Calibration of ODE/SDE system models with neural differential equations.
//!
//! A small feed-forward network maps observed state frames to parameter
//! estimates; the estimates drive a differentiable forward solver whose
//! mismatch with the observations trains the network. The loss values
//! collected along the way form a loss potential over parameter space, which
//! is converted into posterior marginal densities with confidence statistics.
//!
//! Two forward models ship with the crate: an agent-based SIR epidemic on a
//! periodic square (with a reduced stochastic three-compartment solver for
//! the training pass) and the Harris-Wilson model of economic activity on a
//! complete bipartite origin-destination network.

pub mod config;
pub mod data;
pub mod density;
pub mod error;
pub mod grad;
pub mod hw;
pub mod nn;
pub mod plot;
pub mod sir;
pub mod tensor;
pub mod train;
pub mod workbench;

pub use error::{Error, Result};
