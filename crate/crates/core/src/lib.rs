//! Simulation and quasi-maximum likelihood estimation of cointegrated
//! continuous-time linear state space models observed at equidistant times.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`matfun`]: matrix exponential, sampled noise covariance, Riccati solver,
//!   lower-triangular orthogonal complement;
//! - [`model`]: parametric families, sampling into a steady-state filter,
//!   assumption checks;
//! - [`levy`]: Brownian and normal inverse Gaussian driving noise;
//! - [`simulate`]: Euler and exact Gaussian path simulation;
//! - [`filter`]: pseudo-innovations and the Gaussian quasi-likelihood;
//! - [`estimate`]: box-constrained minimization and sandwich standard errors;
//! - [`harness`]: Monte Carlo studies, configs, CSV output and reports.

pub mod error;
pub mod estimate;
pub mod filter;
pub mod harness;
pub mod levy;
pub mod matfun;
pub mod model;
pub mod simulate;

pub use error::{Error, Result};
