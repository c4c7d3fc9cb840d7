//! Hierarchical Dirichlet-process mixture of local linear regressors.
//!
//! An upper component `m` owns the activation precision `Λ_m`, the slopes
//! `A_m` and the noise precision `V_m`; each of its lower components `k` adds
//! an activation centre `μ_mk ~ N(τ_m, κ₀ Λ_m)` and a bias
//! `c_mk ~ N(θ₀, ρ₀ V_m)`.
//!
//! Per upper component the posterior is held as two exact conjugate blocks:
//!
//! * the activation block, a matrix-normal-Wishart over
//!   `Θ_m = [τ_m, μ_m1, …, μ_mK]` (d_x × (K+1)) and `Λ_m`, where a datum in
//!   lower cell `k` is a regression of `x` on the unit vector `e_{k+1}`;
//! * the regression block, a matrix-normal-Wishart over
//!   `B_m = [A_m, c_m1, …, c_mK]` (d_y × (d_u+K)) and `V_m`, with regressor
//!   `[u; e_k]`.
//!
//! The per-parameter views (`meta_activation`, `centers`, `slopes`, `biases`)
//! are marginals of these blocks.

mod config;
mod io;
mod train;
mod vbem;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

pub use config::{HilrConfig, HilrInit};

use crate::data::Dataset;
use crate::distributions::{
    DofConvention, GaussianMeanParams, MatrixNormalWishartParams, NormalWishartParams, StudentT,
    TruncatedStickBreaking,
};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Transformed};
use crate::linalg;
use crate::predictive::{ActivationCache, PredictCache, Prediction, PredictionMode, PredictiveMixture, RegressionCache};

/// Upper responsibilities `g` (N×M) and lower responsibilities given the
/// upper component, `r[m]` (N×K).
#[derive(Debug, Clone, PartialEq)]
pub struct HierResponsibilities {
    pub g: DMatrix<f64>,
    pub r: Vec<DMatrix<f64>>,
}

impl HierResponsibilities {
    /// Column sums of `g`.
    pub fn upper_mass(&self) -> Vec<f64> {
        self.g.column_iter().map(|c| c.sum()).collect()
    }

    /// `Σ_n g_nm r_nmk` for every `(m, k)`, one row per `m`.
    pub fn lower_mass(&self) -> DMatrix<f64> {
        let m = self.r.len();
        let k = self.r.first().map_or(0, |r| r.ncols());
        DMatrix::from_fn(m, k, |i, j| self.g.column(i).dot(&self.r[i].column(j)))
    }

    /// Marginal lower responsibilities `g_nm r_nmk` flattened to N×(M·K),
    /// column `m·K + k`.
    pub fn joint(&self) -> DMatrix<f64> {
        let m = self.r.len();
        let k = self.r.first().map_or(0, |r| r.ncols());
        DMatrix::from_fn(self.g.nrows(), m * k, |n, c| self.g[(n, c / k)] * self.r[c / k][(n, c % k)])
    }

    /// Largest deviation from 1 among the row sums of `g` and of every `r[m]`.
    pub fn max_row_error(&self) -> f64 {
        let rows = |mat: &DMatrix<f64>| mat.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
        self.r.iter().map(rows).fold(rows(&self.g), f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct HilrModel {
    feature_spec: FeatureSpec,
    alpha0: f64,
    beta0: f64,
    convention: DofConvention,
    upper_prior: TruncatedStickBreaking,
    upper: TruncatedStickBreaking,
    lower_prior: TruncatedStickBreaking,
    lower: Vec<TruncatedStickBreaking>,
    activation_prior: MatrixNormalWishartParams,
    activation: Vec<MatrixNormalWishartParams>,
    regression_prior: MatrixNormalWishartParams,
    regression: Vec<MatrixNormalWishartParams>,
    cache: OnceLock<PredictCache>,
}

impl PartialEq for HilrModel {
    fn eq(&self, other: &Self) -> bool {
        self.feature_spec == other.feature_spec
            && self.alpha0 == other.alpha0
            && self.beta0 == other.beta0
            && self.convention == other.convention
            && self.upper_prior == other.upper_prior
            && self.upper == other.upper
            && self.lower_prior == other.lower_prior
            && self.lower == other.lower
            && self.activation_prior == other.activation_prior
            && self.activation == other.activation
            && self.regression_prior == other.regression_prior
            && self.regression == other.regression
    }
}

/// Prior over `Θ = [τ, μ_1, …, μ_K]` with `τ ~ N(m₀, λ₀Λ)` and
/// `μ_k ~ N(τ, κ₀Λ)`, written as one matrix-normal-Wishart.
pub fn activation_block_prior(
    m0: &DVector<f64>,
    lambda0: f64,
    kappa0: f64,
    psi0: DMatrix<f64>,
    nu0: f64,
    k: usize,
) -> Result<MatrixNormalWishartParams> {
    let d = m0.len();
    let mean = DMatrix::from_fn(d, k + 1, |i, _| m0[i]);
    let mut p = DMatrix::zeros(k + 1, k + 1);
    p[(0, 0)] = lambda0 + k as f64 * kappa0;
    for j in 1..=k {
        p[(0, j)] = -kappa0;
        p[(j, 0)] = -kappa0;
        p[(j, j)] = kappa0;
    }
    MatrixNormalWishartParams::new(mean, p, psi0, nu0)
}

/// Prior over `B = [A, c_1, …, c_K]` with `A ~ MN(M₀, K₀, V)` and
/// `c_k ~ N(θ₀, ρ₀V)`.
pub fn regression_block_prior(
    m0: &DMatrix<f64>,
    k0: &DMatrix<f64>,
    theta0: &DVector<f64>,
    rho0: f64,
    phi0: DMatrix<f64>,
    eta0: f64,
    k: usize,
) -> Result<MatrixNormalWishartParams> {
    let (dy, du) = (m0.nrows(), m0.ncols());
    let mean = DMatrix::from_fn(dy, du + k, |i, j| if j < du { m0[(i, j)] } else { theta0[i] });
    let prec = linalg::block_diag(k0, &(DMatrix::identity(k, k) * rho0));
    MatrixNormalWishartParams::new(mean, prec, phi0, eta0)
}

impl HilrModel {
    /// Assemble a model from explicit priors and posteriors.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        feature_spec: FeatureSpec,
        alpha0: f64,
        beta0: f64,
        convention: DofConvention,
        upper_prior: TruncatedStickBreaking,
        upper: TruncatedStickBreaking,
        lower_prior: TruncatedStickBreaking,
        lower: Vec<TruncatedStickBreaking>,
        activation_prior: MatrixNormalWishartParams,
        activation: Vec<MatrixNormalWishartParams>,
        regression_prior: MatrixNormalWishartParams,
        regression: Vec<MatrixNormalWishartParams>,
    ) -> Result<Self> {
        feature_spec.validate()?;
        if feature_spec.bias_augmented {
            return Err(Error::arg("hilr feature spec must not carry a bias slot"));
        }
        for (v, name) in [(alpha0, "alpha0"), (beta0, "beta0")] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("hilr: {name} must be positive")));
            }
        }
        upper_prior.validate()?;
        upper.validate()?;
        lower_prior.validate()?;
        let m = upper.truncation();
        let k = lower_prior.truncation();
        if upper_prior.truncation() != m || lower.len() != m || activation.len() != m || regression.len() != m {
            return Err(Error::arg("hilr: every upper block needs exactly `upper_truncation` entries"));
        }
        for l in &lower {
            l.validate()?;
            if l.truncation() != k {
                return Err(Error::arg("hilr: lower stick count differs from lower truncation"));
            }
        }
        let (dx, dy, du) = (feature_spec.dim_x(), feature_spec.dim_y(), feature_spec.dim_u());
        for a in std::iter::once(&activation_prior).chain(&activation) {
            a.validate()?;
            if a.dim_out() != dx || a.dim_in() != k + 1 {
                return Err(Error::arg("hilr: activation block shape differs from (d_x, K+1)"));
            }
        }
        for r in std::iter::once(&regression_prior).chain(&regression) {
            r.validate()?;
            if r.dim_out() != dy || r.dim_in() != du + k {
                return Err(Error::arg("hilr: regression block shape differs from (d_y, d_u+K)"));
            }
        }
        Ok(Self {
            feature_spec,
            alpha0,
            beta0,
            convention,
            upper_prior,
            upper,
            lower_prior,
            lower,
            activation_prior,
            activation,
            regression_prior,
            regression,
            cache: OnceLock::new(),
        })
    }

    /// Model whose posteriors equal the default priors built from `data`.
    pub fn with_default_priors(spec: FeatureSpec, data: &Transformed, config: &HilrConfig) -> Result<Self> {
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
        let (m, k) = (config.upper_truncation, config.lower_truncation);
        let act = activation_block_prior(&mean, config.lambda0, p.kappa0, DMatrix::from_diagonal(&inv_var), p.nu0(dx), k)?;
        let reg = regression_block_prior(
            &DMatrix::zeros(dy, du),
            &(DMatrix::identity(du, du) * p.k0),
            &DVector::from_element(dy, config.theta0),
            p.rho0(),
            DMatrix::identity(dy, dy) * p.phi0_scale,
            p.eta0(dy),
            k,
        )?;
        let upper = TruncatedStickBreaking::prior(config.beta0, m)?;
        let lower = TruncatedStickBreaking::prior(config.alpha0, k)?;
        Self::from_parts(
            spec,
            config.alpha0,
            config.beta0,
            config.convention,
            upper.clone(),
            upper,
            lower.clone(),
            vec![lower; m],
            act.clone(),
            vec![act; m],
            reg.clone(),
            vec![reg; m],
        )
    }

    pub fn upper_truncation(&self) -> usize {
        self.upper.truncation()
    }

    pub fn lower_truncation(&self) -> usize {
        self.lower_prior.truncation()
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn convention(&self) -> DofConvention {
        self.convention
    }

    pub fn upper_sticks(&self) -> &TruncatedStickBreaking {
        &self.upper
    }

    pub fn upper_sticks_prior(&self) -> &TruncatedStickBreaking {
        &self.upper_prior
    }

    pub fn lower_sticks(&self) -> &[TruncatedStickBreaking] {
        &self.lower
    }

    pub fn lower_sticks_prior(&self) -> &TruncatedStickBreaking {
        &self.lower_prior
    }

    /// Joint posteriors over `([τ_m, μ_m1..μ_mK], Λ_m)`.
    pub fn activation_blocks(&self) -> &[MatrixNormalWishartParams] {
        &self.activation
    }

    pub fn activation_block_prior(&self) -> &MatrixNormalWishartParams {
        &self.activation_prior
    }

    /// Joint posteriors over `([A_m, c_m1..c_mK], V_m)`.
    pub fn regression_blocks(&self) -> &[MatrixNormalWishartParams] {
        &self.regression
    }

    pub fn regression_block_prior(&self) -> &MatrixNormalWishartParams {
        &self.regression_prior
    }

    /// Marginal `(τ_m, Λ_m)` of upper component `m` as a normal-Wishart.
    pub fn meta_activation(&self, m: usize) -> Result<NormalWishartParams> {
        let a = &self.activation[m];
        let cov = linalg::spd_inverse(&a.k, "activation block precision")?;
        NormalWishartParams::new(a.m.column(0).into_owned(), 1.0 / cov[(0, 0)], a.phi.clone(), a.eta)
    }

    /// Marginals of the lower centres `μ_mk`: mean and precision scale on `Λ_m`.
    pub fn centers(&self, m: usize) -> Result<Vec<GaussianMeanParams>> {
        let a = &self.activation[m];
        let cov = linalg::spd_inverse(&a.k, "activation block precision")?;
        (1..a.dim_in())
            .map(|j| GaussianMeanParams::new(a.m.column(j).into_owned(), 1.0 / cov[(j, j)]))
            .collect()
    }

    /// Marginal `(A_m, V_m)` of upper component `m`, without bias columns.
    pub fn slopes(&self, m: usize) -> Result<MatrixNormalWishartParams> {
        let r = &self.regression[m];
        let du = self.feature_spec.dim_u();
        let cov = linalg::spd_inverse(&r.k, "regression block precision")?;
        let k = linalg::spd_inverse(&cov.view((0, 0), (du, du)).into_owned(), "slope covariance")?;
        MatrixNormalWishartParams::new(r.m.columns(0, du).into_owned(), k, r.phi.clone(), r.eta)
    }

    /// Marginals of the biases `c_mk`: mean and precision scale on `V_m`.
    pub fn biases(&self, m: usize) -> Result<Vec<GaussianMeanParams>> {
        let r = &self.regression[m];
        let du = self.feature_spec.dim_u();
        let cov = linalg::spd_inverse(&r.k, "regression block precision")?;
        (du..r.dim_in())
            .map(|j| GaussianMeanParams::new(r.m.column(j).into_owned(), 1.0 / cov[(j, j)]))
            .collect()
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

    /// Flattened `(m, k)` grid, index `m·K + k`.
    fn build_cache(&self) -> Result<PredictCache> {
        let (mt, kt) = (self.upper_truncation(), self.lower_truncation());
        let du = self.feature_spec.dim_u();
        let upper_w = self.upper.expected_weights();
        let mut log_prior = Vec::with_capacity(mt * kt);
        let mut activation = Vec::with_capacity(mt * kt);
        let mut regression = Vec::with_capacity(mt * kt);
        for m in 0..mt {
            let lower_w = self.lower[m].expected_weights();
            let a = &self.activation[m];
            let a_cov = linalg::spd_inverse(&a.k, "activation block precision")?;
            let (dof_a, mult_a) = self.convention.dof_and_scale(a.eta, self.feature_spec.dim_x());
            let r = &self.regression[m];
            let r_cov = linalg::spd_inverse(&r.k, "regression block precision")?;
            for k in 0..kt {
                log_prior.push(upper_w[m].ln() + lower_w[k].ln());
                let scale = 1.0 / (1.0 + a_cov[(k + 1, k + 1)]);
                let t = StudentT {
                    loc: a.m.column(k + 1).into_owned(),
                    precision: &a.phi * (scale * mult_a),
                    dof: dof_a,
                };
                activation.push(ActivationCache::from_student(&t)?);
                let idx: Vec<usize> = (0..du).chain(std::iter::once(du + k)).collect();
                let m_eff = r.m.select_columns(&idx);
                let s_eff = r_cov.select_rows(&idx).select_columns(&idx);
                regression.push(RegressionCache::new(m_eff, &s_eff, &r.phi, r.eta, self.convention)?);
            }
        }
        Ok(PredictCache {
            log_prior,
            activation,
            regression,
        })
    }

    fn query(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("predict: non-finite input"));
        }
        let xg = self.feature_spec.gating(x)?;
        let u = self.feature_spec.apply(x)?;
        let du = u.len();
        Ok((xg, u.insert_row(du, 1.0)))
    }

    /// Normalized activation probabilities at raw input `x`, M×K.
    pub fn activation_weights(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let xg = self.feature_spec.gating(x)?;
        let w = self.cache()?.weights(&xg).0;
        Ok(DMatrix::from_row_slice(self.upper_truncation(), self.lower_truncation(), &w))
    }

    /// Point prediction at raw input `x` in raw output units; the top
    /// component is reported as the flattened index `m·K + k`.
    pub fn predict(&self, x: &[f64], mode: PredictionMode) -> Result<Prediction> {
        let (xg, u) = self.query(x)?;
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

    /// Flattened `(m, k)` activation weights with raw-space Student-t components.
    pub fn predictive_mixture(&self, x: &[f64]) -> Result<PredictiveMixture> {
        let (xg, u) = self.query(x)?;
        Ok(self.cache()?.mixture(&xg, &u, &self.feature_spec))
    }

    /// Number of upper components with `Σ_n g_nm > threshold · N` on `data`.
    pub fn active_upper(&self, data: &Dataset, threshold: f64) -> Result<usize> {
        let resp = self.e_step(data)?;
        Ok(crate::ilr::count_active(&resp.upper_mass(), data.len(), threshold))
    }
}
