//! Robust Gaussian mixture estimation with sparse self-regression means.
//!
//! Every cluster mean is written as a sparse combination of the observations
//! themselves, `μₖ = Yβₖ`, and the coefficients are found by maximizing an
//! l1-penalized likelihood with a space-alternating EM algorithm
//! ([`sparse_em`]). A standard spherical EM ([`baseline`]) and a seeded
//! Monte Carlo harness ([`simulation`], [`evaluation`]) are included for
//! comparison.

pub mod baseline;
pub mod error;
pub mod evaluation;
pub mod lasso;
pub mod model;
pub mod sample_io;
pub mod simulation;
pub mod sparse_em;
pub mod start;

pub use error::{MixError, Result};
pub use model::{Hyperparams, Lambda, MixtureParams, Responsibilities, SampleSet};
