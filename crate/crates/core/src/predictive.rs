//! Predictive mixtures and the per-component cache behind fast queries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::{DofConvention, StudentT};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::linalg;

/// How a point prediction is formed from the activation-weighted components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Most activated component only; ties go to the lowest index.
    Mode,
    /// Activation-weighted average over components.
    #[default]
    Mean,
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode" => Ok(PredictionMode::Mode),
            "mean" => Ok(PredictionMode::Mean),
            _ => Err(Error::arg(format!("unknown prediction mode {s:?}"))),
        }
    }
}

/// Point summary of a predictive mixture in raw output units.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    /// Marginal standard deviations; `None` when a contributing component has
    /// `dof <= 2`.
    pub std: Option<DVector<f64>>,
    pub top_component: usize,
    pub top_weight: f64,
    /// Every activation density underflowed and uniform weights were used.
    pub underflow: bool,
}

/// Activation weights and component Student-t predictives in raw output units.
#[derive(Debug, Clone)]
pub struct PredictiveMixture {
    pub weights: Vec<f64>,
    pub components: Vec<StudentT>,
    pub underflow: bool,
}

impl PredictiveMixture {
    /// Mixture mean and, if every weighted component has one, covariance by
    /// the law of total variance.
    pub fn moments(&self) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let dy = self.components[0].dim();
        let mut mean = DVector::zeros(dy);
        for (w, c) in self.weights.iter().zip(&self.components) {
            mean.axpy(*w, &c.loc, 1.0);
        }
        let mut cov = DMatrix::zeros(dy, dy);
        for (w, c) in self.weights.iter().zip(&self.components) {
            if *w == 0.0 {
                continue;
            }
            match c.covariance() {
                Some(ci) => {
                    let d = &c.loc - &mean;
                    cov += (ci + &d * d.transpose()) * *w;
                }
                None => return (mean, None),
            }
        }
        (mean, Some(cov))
    }

    /// Highest-weight component, lowest index on ties.
    pub fn top(&self) -> (usize, f64) {
        argmax(&self.weights)
    }
}

pub(crate) fn argmax(w: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, v) in w.iter().enumerate() {
        if *v > w[best] {
            best = i;
        }
    }
    (best, w[best])
}

/// Activation part of one component: a Student-t over gating inputs.
#[derive(Debug, Clone)]
pub(crate) struct ActivationCache {
    pub mean: DVector<f64>,
    /// Upper factor `U` with `precision = Uᵀ U`, packed by columns.
    pub upper: Vec<f64>,
    /// Smallest eigenvalue of the precision.
    pub min_eig: f64,
    pub log_norm: f64,
    pub dof: f64,
}

impl ActivationCache {
    pub fn from_student(t: &StudentT) -> Result<Self> {
        let chol = linalg::cholesky(&t.precision, "activation predictive precision")?;
        let d = t.dim() as f64;
        let log_norm = ln_gamma(0.5 * (t.dof + d)) - ln_gamma(0.5 * t.dof) - 0.5 * d * (t.dof * std::f64::consts::PI).ln()
            + 0.5 * linalg::log_det_chol(&chol);
        let min_eig = t.precision.clone().symmetric_eigenvalues().min().max(0.0);
        Ok(Self {
            mean: t.loc.clone(),
            upper: pack_upper(&chol.l().transpose()),
            min_eig,
            log_norm,
            dof: t.dof,
        })
    }

    #[cfg(test)]
    pub fn logpdf(&self, x: &DVector<f64>) -> f64 {
        let mut scratch = vec![0.0; 2 * self.mean.len()];
        self.logpdf_with(x, &mut scratch)
    }

    /// Log density using `scratch` (length ≥ 2·d) instead of allocating.
    pub fn logpdf_with(&self, x: &DVector<f64>, scratch: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let (diff, z) = scratch.split_at_mut(d);
        self.diff(x, diff);
        let q = packed_upper_norm_sq(&self.upper, diff, &mut z[..d]);
        self.from_quad(q)
    }

    /// Upper bound on the log density from `q ≥ λ_min ‖x − μ‖²`.
    pub fn logpdf_bound(&self, x: &DVector<f64>, scratch: &mut [f64]) -> f64 {
        let diff = &mut scratch[..self.mean.len()];
        self.diff(x, diff);
        self.from_quad(self.min_eig * diff.iter().map(|v| v * v).sum::<f64>())
    }

    fn diff(&self, x: &DVector<f64>, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x.iter()).zip(self.mean.iter()) {
            *o = a - b;
        }
    }

    fn from_quad(&self, q: f64) -> f64 {
        let d = self.mean.len() as f64;
        self.log_norm - 0.5 * (self.dof + d) * (q / self.dof).ln_1p()
    }
}

/// Rows `0..=j` of each column `j` of an upper-triangular matrix.
fn pack_upper(u: &DMatrix<f64>) -> Vec<f64> {
    (0..u.ncols()).flat_map(|j| (0..=j).map(move |i| u[(i, j)])).collect()
}

/// `‖U v‖²` for a packed upper-triangular `U`, accumulating `U v` in `z`.
fn packed_upper_norm_sq(packed: &[f64], v: &[f64], z: &mut [f64]) -> f64 {
    z.fill(0.0);
    let mut off = 0;
    for (j, vj) in v.iter().enumerate() {
        let col = &packed[off..off + j + 1];
        for (zi, c) in z[..=j].iter_mut().zip(col) {
            *zi += c * vj;
        }
        off += j + 1;
    }
    z.iter().map(|x| x * x).sum()
}

/// Regression part of one component: `loc = M u`,
/// `precision = mult / (1 + uᵀ S u) · Φ` with `S = Uᵀ U`.
#[derive(Debug, Clone)]
pub(crate) struct RegressionCache {
    pub m: DMatrix<f64>,
    /// Packed upper factor of `S`.
    pub s_upper: Vec<f64>,
    pub phi: DMatrix<f64>,
    pub phi_inv: DMatrix<f64>,
    pub dof: f64,
    pub mult: f64,
}

impl RegressionCache {
    pub fn new(m: DMatrix<f64>, s: &DMatrix<f64>, phi: &DMatrix<f64>, eta: f64, convention: DofConvention) -> Result<Self> {
        let s_chol = linalg::cholesky(s, "predictive input covariance")?;
        let (dof, mult) = convention.dof_and_scale(eta, phi.nrows());
        Ok(Self {
            m,
            s_upper: pack_upper(&s_chol.l().transpose()),
            phi: phi.clone(),
            phi_inv: linalg::spd_inverse(phi, "regression scale")?,
            dof,
            mult,
        })
    }

    /// `(loc, 1 / a)` at regressor `u`.
    pub fn loc_and_inflation(&self, u: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut z = vec![0.0; u.len()];
        let q = packed_upper_norm_sq(&self.s_upper, u.as_slice(), &mut z);
        (&self.m * u, 1.0 + q)
    }

    /// Diagonal of the Student-t covariance, if defined.
    pub fn variance_diag(&self, inflation: f64) -> Option<DVector<f64>> {
        if self.dof <= 2.0 {
            return None;
        }
        let f = inflation / self.mult * self.dof / (self.dof - 2.0);
        Some(self.phi_inv.diagonal() * f)
    }

    pub fn student(&self, u: &DVector<f64>) -> StudentT {
        let (loc, inflation) = self.loc_and_inflation(u);
        StudentT {
            loc,
            precision: &self.phi * (self.mult / inflation),
            dof: self.dof,
        }
    }
}

/// Everything needed to answer a query without touching the posteriors again.
#[derive(Debug, Clone)]
pub(crate) struct PredictCache {
    pub log_prior: Vec<f64>,
    pub activation: Vec<ActivationCache>,
    pub regression: Vec<RegressionCache>,
}

/// Weights below this are ignored when forming mean predictions.
const NEGLIGIBLE: f64 = 1e-15;

/// Components whose log-weight bound is this far below the best exact value
/// get weight zero (relative weight < e⁻⁵⁰).
const PRUNE_NATS: f64 = 50.0;

impl PredictCache {
    /// Normalized activation weights at gating input `xg`.
    pub fn weights(&self, xg: &DVector<f64>) -> (Vec<f64>, bool) {
        let mut scratch = vec![0.0; 2 * xg.len()];
        let bounds: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.activation)
            .map(|(lp, a)| if lp.is_finite() { lp + a.logpdf_bound(xg, &mut scratch) } else { f64::NEG_INFINITY })
            .collect();
        let mut best = match argmax(&bounds) {
            (k, b) if b.is_finite() => self.log_prior[k] + self.activation[k].logpdf_with(xg, &mut scratch),
            _ => f64::NEG_INFINITY,
        };
        let logs: Vec<f64> = bounds
            .iter()
            .enumerate()
            .map(|(k, b)| {
                if !b.is_finite() || *b < best - PRUNE_NATS {
                    return f64::NEG_INFINITY;
                }
                let v = self.log_prior[k] + self.activation[k].logpdf_with(xg, &mut scratch);
                best = best.max(v);
                v
            })
            .collect();
        normalize_log_weights(&logs)
    }

    /// Point prediction at gating input `xg` and regressor `u`, converted to
    /// raw units via `spec`.
    pub fn predict(&self, xg: &DVector<f64>, u: &DVector<f64>, mode: PredictionMode, spec: &FeatureSpec) -> Prediction {
        let (weights, underflow) = self.weights(xg);
        let (top, top_weight) = argmax(&weights);
        let (mean, var) = match mode {
            PredictionMode::Mode => {
                let r = &self.regression[top];
                let (loc, infl) = r.loc_and_inflation(u);
                (loc, r.variance_diag(infl))
            }
            PredictionMode::Mean => {
                let dy = self.regression[0].m.nrows();
                let mut mean = DVector::zeros(dy);
                let mut second = DVector::zeros(dy);
                let mut defined = true;
                let mut total = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    if *w < NEGLIGIBLE {
                        continue;
                    }
                    total += w;
                    let r = &self.regression[k];
                    let (loc, infl) = r.loc_and_inflation(u);
                    match r.variance_diag(infl) {
                        Some(v) => second += (v + loc.component_mul(&loc)) * *w,
                        None => defined = false,
                    }
                    mean.axpy(*w, &loc, 1.0);
                }
                mean /= total;
                let var = defined.then(|| (second / total - mean.component_mul(&mean)).map(|v| v.max(0.0)));
                (mean, var)
            }
        };
        Prediction {
            mean: spec.invert_output(&mean),
            std: var.map(|v| spec.invert_output_std(&v.map(f64::sqrt))),
            top_component: top,
            top_weight,
            underflow,
        }
    }

    /// Full mixture with raw-space Student-t components.
    pub fn mixture(&self, xg: &DVector<f64>, u: &DVector<f64>, spec: &FeatureSpec) -> PredictiveMixture {
        let (weights, underflow) = self.weights(xg);
        let scale_inv = DVector::from_iterator(spec.dim_y(), spec.y_scale.iter().map(|s| 1.0 / s));
        let components = (0..weights.len())
            .map(|k| {
                let t = self.regression[k].student(u);
                let d = DMatrix::from_diagonal(&scale_inv);
                StudentT {
                    loc: spec.invert_output(&t.loc),
                    precision: &d * t.precision * &d,
                    dof: t.dof,
                }
            })
            .collect();
        PredictiveMixture {
            weights,
            components,
            underflow,
        }
    }
}

/// Softmax of log weights; all `-inf` falls back to uniform with a flag.
pub(crate) fn normalize_log_weights(logs: &[f64]) -> (Vec<f64>, bool) {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let k = logs.len() as f64;
        return (vec![1.0 / k; logs.len()], true);
    }
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    (w, false)
}

/// `ln Σ exp(v)` with max subtraction.
pub(crate) fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
