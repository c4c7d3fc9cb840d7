use nalgebra::DVector;

use crate::error::{Error, Result};

/// Gaussian over a mean vector whose precision is `rho` times a shared
/// precision matrix held elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeanParams {
    pub theta: DVector<f64>,
    pub rho: f64,
}

impl GaussianMeanParams {
    pub fn new(theta: DVector<f64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::arg("gaussian mean: rho must be positive"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("gaussian mean: non-finite theta"));
        }
        Ok(Self { theta, rho })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}
