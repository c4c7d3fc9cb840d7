//! Dirichlet-process mixtures of Bayesian local linear regressors trained by
//! truncated variational Bayes.

pub mod data;
pub mod distributions;
pub mod dpgmm;
mod error;
pub mod features;
pub mod hilr;
pub mod kmeans;
pub mod linalg;
pub mod ilr;
pub mod metrics;
pub mod predictive;
mod serial;
pub mod trace;

pub use error::{Error, Result};
pub use trace::FitTrace;
