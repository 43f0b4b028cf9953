//! Online Ridge Regression, Bayesian Ridge Regression and their kernelized
//! forms, together with a verifier that evaluates both sides of their loss
//! identities and bounds on concrete data streams.
//!
//! Modules, bottom up:
//! - [`linalg`]: rank-one inverse updates, SPD solves, log-determinants.
//! - [`online`]: Ridge Regression, clipping, the VAW predictor.
//! - [`bayes`]: predictive Gaussians, the finite-expert Bayesian Algorithm.
//! - [`kernel`]: kernels and the dual (kernelized) learners.
//! - [`bounds`]: [`bounds::BoundReport`]s for each guarantee.
//! - [`data`], [`experiment`]: CSV and synthetic streams, the experiment driver.

pub mod bayes;
pub mod bounds;
pub mod data;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod online;
pub mod stream;

pub use error::{Error, Result};
pub use stream::{Sample, Stream};
