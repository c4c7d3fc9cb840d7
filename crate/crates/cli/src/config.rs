use dplr_core::hilr::HilrConfig;
use dplr_core::ilr::IlrConfig;
use dplr_core::predictive::PredictionMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ilr,
    Hilr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ilr => "ilr",
            ModelKind::Hilr => "hilr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    Batch,
    /// Minibatch size, delay and decay come from `ilr.svi`.
    Stochastic,
}

/// Everything a `fit` or `sequential` run needs. Only the section matching
/// `model` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub fit_mode: FitMode,
    pub seed: u64,
    pub prediction_mode: PredictionMode,
    pub ilr: IlrConfig,
    pub hilr: HilrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Ilr,
            fit_mode: FitMode::Batch,
            seed: 0,
            prediction_mode: PredictionMode::Mean,
            ilr: IlrConfig::default(),
            hilr: HilrConfig::default(),
        }
    }
}

impl RunConfig {
    /// Shape-independent checks; dimension-dependent ones run at fit time.
    pub fn check(&self) -> Result<(), CliError> {
        if self.model == ModelKind::Hilr && self.fit_mode == FitMode::Stochastic {
            return Err(CliError::config("stochastic fitting is available for ilr models only"));
        }
        let r = match self.model {
            ModelKind::Ilr => self.ilr.validate(1, 1),
            ModelKind::Hilr => self.hilr.validate(1, 1),
        };
        r.map_err(|e| CliError::config(e.to_string()))
    }
}
