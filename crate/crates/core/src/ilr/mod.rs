//! Flat Dirichlet-process mixture of Bayesian local linear regressors.
//!
//! Each component pairs a normal-Wishart activation over gating inputs with a
//! matrix-normal-Wishart regression over bias-augmented features. Priors are
//! stored per component so that a fitted posterior can serve as the prior of
//! a later batch.

mod config;
mod io;
mod train;
mod vbem;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

pub use config::{IlrConfig, InitMethod, PriorConfig, SviConfig};
pub(crate) use train::{size_rank, soft_labels};
pub(crate) use vbem::normalize_rows;

use crate::data::Dataset;
use crate::distributions::{DofConvention, MatrixNormalWishartParams, NormalWishartParams, TruncatedStickBreaking};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Transformed};
use crate::linalg;
use crate::predictive::{ActivationCache, PredictCache, Prediction, PredictionMode, PredictiveMixture, RegressionCache};

/// Expected assignments `r_nk`, one row per datum.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub r: DMatrix<f64>,
}

impl Responsibilities {
    /// Column sums `Σ_n r_nk`.
    pub fn mass(&self) -> Vec<f64> {
        self.r.column_iter().map(|c| c.sum()).collect()
    }

    pub fn max_row_error(&self) -> f64 {
        self.r.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct IlrModel {
    feature_spec: FeatureSpec,
    alpha0: f64,
    convention: DofConvention,
    sticks_prior: TruncatedStickBreaking,
    sticks: TruncatedStickBreaking,
    activation_prior: Vec<NormalWishartParams>,
    activation: Vec<NormalWishartParams>,
    regression_prior: Vec<MatrixNormalWishartParams>,
    regression: Vec<MatrixNormalWishartParams>,
    cache: OnceLock<PredictCache>,
}

impl PartialEq for IlrModel {
    fn eq(&self, other: &Self) -> bool {
        self.feature_spec == other.feature_spec
            && self.alpha0 == other.alpha0
            && self.convention == other.convention
            && self.sticks_prior == other.sticks_prior
            && self.sticks == other.sticks
            && self.activation_prior == other.activation_prior
            && self.activation == other.activation
            && self.regression_prior == other.regression_prior
            && self.regression == other.regression
    }
}

impl IlrModel {
    /// Assemble a model from explicit priors and posteriors.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        feature_spec: FeatureSpec,
        alpha0: f64,
        convention: DofConvention,
        sticks_prior: TruncatedStickBreaking,
        sticks: TruncatedStickBreaking,
        activation_prior: Vec<NormalWishartParams>,
        activation: Vec<NormalWishartParams>,
        regression_prior: Vec<MatrixNormalWishartParams>,
        regression: Vec<MatrixNormalWishartParams>,
    ) -> Result<Self> {
        feature_spec.validate()?;
        if !feature_spec.bias_augmented {
            return Err(Error::arg("ilr feature spec must carry a bias slot"));
        }
        let k = sticks.truncation();
        sticks.validate()?;
        sticks_prior.validate()?;
        if sticks_prior.truncation() != k
            || activation_prior.len() != k
            || activation.len() != k
            || regression_prior.len() != k
            || regression.len() != k
        {
            return Err(Error::arg("ilr: every block needs exactly `truncation` entries"));
        }
        let (dx, dy, du) = (feature_spec.dim_x(), feature_spec.dim_y(), feature_spec.dim_u());
        for a in activation_prior.iter().chain(&activation) {
            a.validate()?;
            if a.dim() != dx {
                return Err(Error::arg("ilr: activation dimension differs from feature spec"));
            }
        }
        for r in regression_prior.iter().chain(&regression) {
            r.validate()?;
            if r.dim_in() != du || r.dim_out() != dy {
                return Err(Error::arg("ilr: regression dimensions differ from feature spec"));
            }
        }
        Ok(Self {
            feature_spec,
            alpha0,
            convention,
            sticks_prior,
            sticks,
            activation_prior,
            activation,
            regression_prior,
            regression,
            cache: OnceLock::new(),
        })
    }

    /// Model whose posteriors equal the default priors built from `data`.
    pub fn with_default_priors(spec: FeatureSpec, data: &Transformed, config: &IlrConfig) -> Result<Self> {
        let (dx, dy, du) = (spec.dim_x(), spec.dim_y(), spec.dim_u());
        config.validate(dx, dy)?;
        if data.is_empty() {
            return Err(Error::arg("cannot build data-scaled priors from an empty dataset"));
        }
        let p = &config.priors;
        let n = data.len() as f64;
        let mean = DVector::from_iterator(dx, data.xg.column_iter().map(|c| c.sum() / n));
        let inv_var = DVector::from_iterator(
            dx,
            data.xg.column_iter().enumerate().map(|(j, c)| {
                let v = c.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-12 {
                    p.psi0_scale / v
                } else {
                    p.psi0_scale
                }
            }),
        );
        let act = NormalWishartParams::new(mean, p.kappa0, DMatrix::from_diagonal(&inv_var), p.nu0(dx))?;
        let mut k0 = DMatrix::identity(du, du) * p.k0;
        if spec.bias_augmented {
            k0[(du - 1, du - 1)] = p.rho0();
        }
        let reg = MatrixNormalWishartParams::new(
            DMatrix::zeros(dy, du),
            k0,
            DMatrix::identity(dy, dy) * p.phi0_scale,
            p.eta0(dy),
        )?;
        let t = config.truncation;
        let sticks = TruncatedStickBreaking::prior(config.alpha0, t)?;
        Self::from_parts(
            spec,
            config.alpha0,
            config.convention,
            sticks.clone(),
            sticks,
            vec![act.clone(); t],
            vec![act; t],
            vec![reg.clone(); t],
            vec![reg; t],
        )
    }

    pub fn truncation(&self) -> usize {
        self.sticks.truncation()
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn convention(&self) -> DofConvention {
        self.convention
    }

    pub fn sticks_prior(&self) -> &TruncatedStickBreaking {
        &self.sticks_prior
    }

    pub fn sticks(&self) -> &TruncatedStickBreaking {
        &self.sticks
    }

    pub fn activation_prior(&self) -> &[NormalWishartParams] {
        &self.activation_prior
    }

    pub fn activation(&self) -> &[NormalWishartParams] {
        &self.activation
    }

    pub fn regression_prior(&self) -> &[MatrixNormalWishartParams] {
        &self.regression_prior
    }

    pub fn regression(&self) -> &[MatrixNormalWishartParams] {
        &self.regression
    }

    /// Same model with a different predictive dof convention.
    pub fn with_convention(mut self, convention: DofConvention) -> Self {
        self.convention = convention;
        self.cache = OnceLock::new();
        self
    }

    pub(crate) fn transform(&self, data: &Dataset) -> Result<Transformed> {
        Transformed::new(&self.feature_spec, data)
    }

    fn cache(&self) -> Result<&PredictCache> {
        if let Some(c) = self.cache.get() {
            return Ok(c);
        }
        let built = self.build_cache()?;
        Ok(self.cache.get_or_init(|| built))
    }

    fn build_cache(&self) -> Result<PredictCache> {
        let weights = self.sticks.expected_weights();
        let mut activation = Vec::with_capacity(self.truncation());
        let mut regression = Vec::with_capacity(self.truncation());
        for (a, r) in self.activation.iter().zip(&self.regression) {
            activation.push(ActivationCache::from_student(&a.predictive(self.convention))?);
            let k_inv = linalg::spd_inverse(&r.k, "regression column precision")?;
            regression.push(RegressionCache::new(r.m.clone(), &k_inv, &r.phi, r.eta, self.convention)?);
        }
        Ok(PredictCache {
            log_prior: weights.iter().map(|w| w.ln()).collect(),
            activation,
            regression,
        })
    }

    /// Normalized activation probabilities at raw input `x`.
    pub fn activation_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xg = self.feature_spec.gating(x)?;
        Ok(self.cache()?.weights(&xg).0)
    }

    /// Point prediction at raw input `x` in raw output units.
    pub fn predict(&self, x: &[f64], mode: PredictionMode) -> Result<Prediction> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("predict: non-finite input"));
        }
        let xg = self.feature_spec.gating(x)?;
        let u = self.feature_spec.apply(x)?;
        Ok(self.cache()?.predict(&xg, &u, mode, &self.feature_spec))
    }

    /// Predictions for every row of `x` (N×d_x).
    pub fn predict_many(&self, x: &DMatrix<f64>, mode: PredictionMode) -> Result<Vec<Prediction>> {
        use rayon::prelude::*;
        self.cache()?;
        (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.predict(&row, mode)
            })
            .collect()
    }

    /// Activation weights with every component's raw-space Student-t.
    pub fn predictive_mixture(&self, x: &[f64]) -> Result<PredictiveMixture> {
        let xg = self.feature_spec.gating(x)?;
        let u = self.feature_spec.apply(x)?;
        Ok(self.cache()?.mixture(&xg, &u, &self.feature_spec))
    }

    /// Number of components with `Σ_n r_nk > threshold · N` on `data`.
    pub fn active_components(&self, data: &Dataset, threshold: f64) -> Result<usize> {
        let resp = self.e_step(data)?;
        Ok(count_active(&resp.mass(), data.len(), threshold))
    }
}

pub(crate) fn count_active(mass: &[f64], n: usize, threshold: f64) -> usize {
    mass.iter().filter(|m| **m > threshold * n as f64).count()
}
