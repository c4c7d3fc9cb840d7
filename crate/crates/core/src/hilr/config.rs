use serde::{Deserialize, Serialize};

use crate::distributions::DofConvention;
use crate::error::{Error, Result};
use crate::ilr::PriorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HilrInit {
    /// Fine k-means on the inputs, local least-squares slopes per cluster,
    /// a small DP mixture over those slopes for the upper level, then k-means
    /// within each slope group for the lower level.
    #[default]
    SlopeGroups,
    /// k-means into `M` coarse input clusters, then `K` sub-clusters each.
    TwoStageKMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HilrConfig {
    /// Upper truncation `M`.
    pub upper_truncation: usize,
    /// Lower truncation `K`, per upper component.
    pub lower_truncation: usize,
    /// Lower-level concentration.
    pub alpha0: f64,
    /// Upper-level concentration.
    pub beta0: f64,
    pub degree: usize,
    /// Shared hyperparameters; `kappa0` scales the lower centres around
    /// `τ_m` and `rho0` the biases around `theta0`.
    pub priors: PriorConfig,
    /// Precision scale of the upper-level meta centre `τ_m`.
    pub lambda0: f64,
    /// Prior mean of every bias entry.
    pub theta0: f64,
    pub init: HilrInit,
    pub kmeans_iters: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub convention: DofConvention,
    /// Mass fraction above which an upper component counts as active in traces.
    pub active_threshold: f64,
}

impl Default for HilrConfig {
    fn default() -> Self {
        Self {
            upper_truncation: 10,
            lower_truncation: 10,
            alpha0: 1.0,
            beta0: 1.0,
            degree: 1,
            priors: PriorConfig::default(),
            lambda0: 0.01,
            theta0: 0.0,
            init: HilrInit::SlopeGroups,
            kmeans_iters: 50,
            max_iters: 200,
            tol: 1e-6,
            restarts: 1,
            convention: DofConvention::NuPlusOne,
            active_threshold: 0.01,
        }
    }
}

impl HilrConfig {
    pub fn validate(&self, dx: usize, dy: usize) -> Result<()> {
        if self.upper_truncation == 0 || self.lower_truncation == 0 {
            return Err(Error::arg("truncations must be at least 1"));
        }
        for (v, name) in [(self.alpha0, "alpha0"), (self.beta0, "beta0"), (self.lambda0, "lambda0")] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        if !self.theta0.is_finite() {
            return Err(Error::arg("theta0 must be finite"));
        }
        if self.degree == 0 {
            return Err(Error::arg("feature degree must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::arg("tol must be non-negative"));
        }
        if self.restarts == 0 {
            return Err(Error::arg("restarts must be at least 1"));
        }
        self.priors.validate(dx, dy)
    }
}
