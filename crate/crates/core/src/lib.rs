//! Model-based clustering with hidden Markov and mixture models: exact
//! inference, brute-force Bayes clusterers at small `n`, risk bound
//! evaluators, a spectral estimator and Monte Carlo harnesses.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod bounds;
pub mod clusterers;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod model;
pub mod oracle;
pub mod partitions;
pub mod quadrature;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{
    EmissionModel, GaussianComponent, HmmParams, Likelihoods, Obs, Observations, Trajectory,
};
pub use partitions::Partition;
