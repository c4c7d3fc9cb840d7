use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::student_t::{DofConvention, StudentT};
use super::wishart;
use crate::error::{Error, Result};
use crate::linalg;

/// Normal-Wishart posterior `N(μ | m, κΛ) W(Λ | Ψ, ν)` over a Gaussian's mean
/// and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalWishartParams {
    pub m: DVector<f64>,
    pub kappa: f64,
    pub psi: DMatrix<f64>,
    pub nu: f64,
}

/// Natural parameters `(κm, κ, Ψ⁻¹ + κmmᵀ, ν)`; posteriors are formed by
/// adding weighted sufficient statistics to these.
#[derive(Debug, Clone, PartialEq)]
pub struct NwNatural {
    pub kappa_m: DVector<f64>,
    pub kappa: f64,
    pub second: DMatrix<f64>,
    pub nu: f64,
}

/// Weighted sufficient statistics `(Σw, Σw x, Σw x xᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NwStats {
    pub sum_w: f64,
    pub sum_wx: DVector<f64>,
    pub sum_wxx: DMatrix<f64>,
}

impl NwStats {
    pub fn zeros(d: usize) -> Self {
        Self {
            sum_w: 0.0,
            sum_wx: DVector::zeros(d),
            sum_wxx: DMatrix::zeros(d, d),
        }
    }

    pub fn add(&mut self, x: &DVector<f64>, w: f64) {
        if w == 0.0 {
            return;
        }
        self.sum_w += w;
        self.sum_wx.axpy(w, x, 1.0);
        self.sum_wxx.ger(w, x, x, 1.0);
    }

    /// Statistics of the rows of `points` (N×d) with per-row weights.
    pub fn from_weighted(points: &DMatrix<f64>, weights: &[f64]) -> Self {
        let w = DVector::from_column_slice(weights);
        let weighted = DMatrix::from_fn(points.nrows(), points.ncols(), |i, j| points[(i, j)] * weights[i]);
        let mut sum_wxx = points.transpose() * &weighted;
        linalg::symmetrize(&mut sum_wxx);
        Self {
            sum_w: weights.iter().sum(),
            sum_wx: points.transpose() * w,
            sum_wxx,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sum_w: self.sum_w * factor,
            sum_wx: &self.sum_wx * factor,
            sum_wxx: &self.sum_wxx * factor,
        }
    }
}

impl NwNatural {
    pub fn add_stats(&self, s: &NwStats) -> Self {
        Self {
            kappa_m: &self.kappa_m + &s.sum_wx,
            kappa: self.kappa + s.sum_w,
            second: &self.second + &s.sum_wxx,
            nu: self.nu + s.sum_w,
        }
    }

    /// Convex combination `(1 − ρ)·self + ρ·other`.
    pub fn blend(&self, other: &Self, rho: f64) -> Self {
        Self {
            kappa_m: &self.kappa_m * (1.0 - rho) + &other.kappa_m * rho,
            kappa: self.kappa * (1.0 - rho) + other.kappa * rho,
            second: &self.second * (1.0 - rho) + &other.second * rho,
            nu: self.nu * (1.0 - rho) + other.nu * rho,
        }
    }

    pub fn to_params(&self) -> Result<NormalWishartParams> {
        if !(self.kappa > 0.0) {
            return Err(Error::num("normal-Wishart: non-positive kappa"));
        }
        let m = &self.kappa_m / self.kappa;
        let mut psi_inv = &self.second - (&m * m.transpose()) * self.kappa;
        linalg::symmetrize(&mut psi_inv);
        let psi = linalg::spd_inverse(&psi_inv, "normal-Wishart scale inverse")?;
        Ok(NormalWishartParams {
            m,
            kappa: self.kappa,
            psi,
            nu: self.nu,
        })
    }
}

impl NormalWishartParams {
    pub fn new(m: DVector<f64>, kappa: f64, psi: DMatrix<f64>, nu: f64) -> Result<Self> {
        let p = Self { m, kappa, psi, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.psi.nrows() != d || self.psi.ncols() != d {
            return Err(Error::arg("normal-Wishart: Psi shape does not match m"));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::arg("normal-Wishart: kappa must be positive"));
        }
        if !(self.nu > d as f64 - 1.0) || !self.nu.is_finite() {
            return Err(Error::arg("normal-Wishart: nu must exceed d - 1"));
        }
        if self.m.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("normal-Wishart: non-finite mean"));
        }
        linalg::check_spd(&self.psi, "normal-Wishart Psi")
    }

    pub fn natural(&self) -> Result<NwNatural> {
        let psi_inv = linalg::spd_inverse(&self.psi, "normal-Wishart Psi")?;
        Ok(NwNatural {
            kappa_m: &self.m * self.kappa,
            kappa: self.kappa,
            second: psi_inv + (&self.m * self.m.transpose()) * self.kappa,
            nu: self.nu,
        })
    }

    /// Conjugate posterior after absorbing weighted statistics.
    pub fn posterior(&self, stats: &NwStats) -> Result<Self> {
        if stats.sum_w == 0.0 {
            return Ok(self.clone());
        }
        self.natural()?.add_stats(stats).to_params()
    }

    /// `E[ln |Λ|]`.
    pub fn expected_log_det(&self) -> Result<f64> {
        let ld = linalg::spd_log_det(&self.psi, "normal-Wishart Psi")?;
        Ok(wishart::expected_log_det(ld, self.nu, self.dim()))
    }

    pub fn expectations(&self) -> Result<NwExpectations> {
        Ok(NwExpectations {
            m: self.m.clone(),
            nu_psi: &self.psi * self.nu,
            e_log_det: self.expected_log_det()?,
            d_over_kappa: self.dim() as f64 / self.kappa,
        })
    }

    /// `E[ln N(x | μ, Λ)]` under this posterior.
    pub fn expected_loglik(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.expectations()?.loglik(x))
    }

    /// `E_q[ln p(μ, Λ)]` where `self` is the density `p` and `q` the
    /// distribution the expectation is taken under.
    pub fn cross_entropy_from(&self, q: &NormalWishartParams) -> Result<f64> {
        let d = self.dim() as f64;
        let e_log_det = q.expected_log_det()?;
        let diff = &q.m - &self.m;
        let maha = q.nu * linalg::quad_form(&q.psi, &diff);
        let prior_chol = linalg::cholesky(&self.psi, "normal-Wishart Psi")?;
        let prior_log_det = linalg::log_det_chol(&prior_chol);
        let prior_inv = linalg::symmetrized(prior_chol.inverse());
        let normal = 0.5 * d * (self.kappa / (2.0 * PI)).ln() + 0.5 * e_log_det
            - 0.5 * self.kappa * (d / q.kappa + maha);
        let wish =
            wishart::cross_entropy_term(&prior_inv, prior_log_det, self.nu, e_log_det, &(&q.psi * q.nu));
        Ok(normal + wish)
    }

    /// `KL(self ‖ prior)`.
    pub fn kl_from(&self, prior: &NormalWishartParams) -> Result<f64> {
        Ok(self.cross_entropy_from(self)? - prior.cross_entropy_from(self)?)
    }

    /// Marginal Student-t of a new observation.
    pub fn predictive(&self, convention: DofConvention) -> StudentT {
        let c = self.kappa / (1.0 + self.kappa);
        let (dof, mult) = convention.dof_and_scale(self.nu, self.dim());
        StudentT {
            loc: self.m.clone(),
            precision: &self.psi * (c * mult),
            dof,
        }
    }

    /// One joint draw `(μ, Λ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
        let chol = linalg::cholesky(&self.psi, "normal-Wishart Psi").expect("valid Psi");
        let lambda = wishart::sample(rng, &chol, self.nu);
        let lc = linalg::cholesky(&(&lambda * self.kappa), "precision draw").expect("Wishart draw is SPD");
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let offset = lc.l().transpose().solve_upper_triangular(&z).expect("triangular");
        (&self.m + offset, lambda)
    }
}

/// Precomputed quantities for repeated `E[ln N(x | μ, Λ)]` evaluations.
#[derive(Debug, Clone)]
pub struct NwExpectations {
    pub m: DVector<f64>,
    pub nu_psi: DMatrix<f64>,
    pub e_log_det: f64,
    pub d_over_kappa: f64,
}

impl NwExpectations {
    pub fn loglik(&self, x: &DVector<f64>) -> f64 {
        let d = self.m.len() as f64;
        let diff = x - &self.m;
        0.5 * self.e_log_det
            - 0.5 * d * (2.0 * PI).ln()
            - 0.5 * (self.d_over_kappa + linalg::quad_form(&self.nu_psi, &diff))
    }
}

/// Weighted normal-Wishart posterior for the rows of `points` (N×d).
pub fn nw_update(
    prior: &NormalWishartParams,
    points: &DMatrix<f64>,
    weights: &[f64],
) -> Result<NormalWishartParams> {
    if points.nrows() != weights.len() {
        return Err(Error::arg("nw_update: point and weight counts differ"));
    }
    if points.ncols() != prior.dim() {
        return Err(Error::arg("nw_update: point dimension does not match prior"));
    }
    check_weights(weights)?;
    let mut stats = NwStats::zeros(prior.dim());
    for (i, &w) in weights.iter().enumerate() {
        stats.add(&points.row(i).transpose(), w);
    }
    prior.posterior(&stats)
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::arg("weights must be finite and non-negative"));
    }
    Ok(())
}
