use serde::{Deserialize, Serialize};

use crate::distributions::DofConvention;
use crate::error::{Error, Result};

/// Hyperparameters of the default conjugate priors, expressed in the
/// standardized working space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Mean-precision scale of the activation centres.
    pub kappa0: f64,
    /// Activation Wishart dof; `d_x + 1` when unset.
    pub nu0: Option<f64>,
    /// Multiplier on the diagonal inverse data covariance used as `Ψ₀`.
    pub psi0_scale: f64,
    /// Column precision of the regression slopes.
    pub k0: f64,
    /// Column precision of the bias; equals `k0` when unset.
    pub rho0: Option<f64>,
    /// Multiplier on the identity used as `Φ₀`.
    pub phi0_scale: f64,
    /// Noise Wishart dof; `d_y + 1` when unset.
    pub eta0: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kappa0: 0.01,
            nu0: None,
            psi0_scale: 1.0,
            k0: 1e-2,
            rho0: None,
            phi0_scale: 1.0,
            eta0: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, dx: usize, dy: usize) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!("prior {name} must be positive")))
            }
        };
        pos(self.kappa0, "kappa0")?;
        pos(self.psi0_scale, "psi0_scale")?;
        pos(self.k0, "k0")?;
        pos(self.rho0.unwrap_or(self.k0), "rho0")?;
        pos(self.phi0_scale, "phi0_scale")?;
        if !(self.nu0(dx) > dx as f64 - 1.0) {
            return Err(Error::arg("prior nu0 must exceed d_x - 1"));
        }
        if !(self.eta0(dy) > dy as f64 - 1.0) {
            return Err(Error::arg("prior eta0 must exceed d_y - 1"));
        }
        Ok(())
    }

    pub fn nu0(&self, dx: usize) -> f64 {
        self.nu0.unwrap_or(dx as f64 + 1.0)
    }

    pub fn eta0(&self, dy: usize) -> f64 {
        self.eta0.unwrap_or(dy as f64 + 1.0)
    }

    pub fn rho0(&self) -> f64 {
        self.rho0.unwrap_or(self.k0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// k-means++ labels softened as `0.99·onehot + 0.01/K`.
    #[default]
    KMeans,
    /// As `KMeans`, but clustering the concatenated gating inputs and outputs.
    KMeansJoint,
    /// Independent Dirichlet(1) rows.
    Random,
}

/// Step-size schedule and batch size for stochastic fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SviConfig {
    /// Minibatch size `L`; `min(100, N)` when unset.
    pub batch_size: Option<usize>,
    pub tau_delay: f64,
    /// Decay exponent, in `(0.5, 1]`.
    pub kappa_step: f64,
    pub steps: usize,
}

impl Default for SviConfig {
    fn default() -> Self {
        Self {
            batch_size: None,
            tau_delay: 1.0,
            kappa_step: 0.7,
            steps: 200,
        }
    }
}

impl SviConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_step > 0.5 && self.kappa_step <= 1.0) {
            return Err(Error::arg("svi kappa_step must lie in (0.5, 1]"));
        }
        if !(self.tau_delay >= 0.0) {
            return Err(Error::arg("svi tau_delay must be non-negative"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::arg("svi batch_size must be positive"));
        }
        Ok(())
    }

    pub fn step_size(&self, t: usize) -> f64 {
        (t as f64 + self.tau_delay).powf(-self.kappa_step).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlrConfig {
    pub truncation: usize,
    pub alpha0: f64,
    pub degree: usize,
    pub priors: PriorConfig,
    pub init: InitMethod,
    pub kmeans_iters: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Independent initializations in `fit`; the run with the highest final
    /// ELBO is kept.
    pub restarts: usize,
    pub convention: DofConvention,
    pub svi: SviConfig,
    /// Mass fraction above which a component counts as active in traces.
    pub active_threshold: f64,
}

impl Default for IlrConfig {
    fn default() -> Self {
        Self {
            truncation: 20,
            alpha0: 1.0,
            degree: 1,
            priors: PriorConfig::default(),
            init: InitMethod::KMeans,
            kmeans_iters: 50,
            max_iters: 200,
            tol: 1e-6,
            restarts: 1,
            convention: DofConvention::NuPlusOne,
            svi: SviConfig::default(),
            active_threshold: 0.01,
        }
    }
}

impl IlrConfig {
    pub fn validate(&self, dx: usize, dy: usize) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::arg("truncation must be at least 1"));
        }
        if !(self.alpha0 > 0.0) || !self.alpha0.is_finite() {
            return Err(Error::arg("alpha0 must be positive"));
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
        self.priors.validate(dx, dy)?;
        self.svi.validate()
    }
}
