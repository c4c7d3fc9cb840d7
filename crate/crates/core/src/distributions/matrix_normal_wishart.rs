use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::normal_wishart::check_weights;
use super::student_t::{DofConvention, StudentT};
use super::wishart;
use crate::error::{Error, Result};
use crate::linalg;

/// Matrix-normal-Wishart posterior `MN(A | M, K, V) W(V | Φ, η)` over the
/// coefficients of a linear-Gaussian map `y = A u + e`, `e ~ N(0, V⁻¹)`.
///
/// `K` is the column precision (`d_u × d_u`), `V` the row precision.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNormalWishartParams {
    pub m: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub eta: f64,
}

/// Natural parameters `(MK, K, Φ⁻¹ + MKMᵀ, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnwNatural {
    pub mk: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub second: DMatrix<f64>,
    pub eta: f64,
}

/// Weighted statistics `(Σw, Σw y uᵀ, Σw u uᵀ, Σw y yᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnwStats {
    pub sum_w: f64,
    pub syu: DMatrix<f64>,
    pub suu: DMatrix<f64>,
    pub syy: DMatrix<f64>,
}

impl MnwStats {
    pub fn zeros(dy: usize, du: usize) -> Self {
        Self {
            sum_w: 0.0,
            syu: DMatrix::zeros(dy, du),
            suu: DMatrix::zeros(du, du),
            syy: DMatrix::zeros(dy, dy),
        }
    }

    pub fn add(&mut self, u: &DVector<f64>, y: &DVector<f64>, w: f64) {
        if w == 0.0 {
            return;
        }
        self.sum_w += w;
        self.syu.ger(w, y, u, 1.0);
        self.suu.ger(w, u, u, 1.0);
        self.syy.ger(w, y, y, 1.0);
    }

    /// Statistics of paired rows of `inputs` (N×d_u) and `outputs` (N×d_y).
    pub fn from_weighted(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>, weights: &[f64]) -> Self {
        let wu = DMatrix::from_fn(inputs.nrows(), inputs.ncols(), |i, j| inputs[(i, j)] * weights[i]);
        let wy = DMatrix::from_fn(outputs.nrows(), outputs.ncols(), |i, j| outputs[(i, j)] * weights[i]);
        let mut suu = inputs.transpose() * &wu;
        let mut syy = outputs.transpose() * &wy;
        linalg::symmetrize(&mut suu);
        linalg::symmetrize(&mut syy);
        Self {
            sum_w: weights.iter().sum(),
            syu: outputs.transpose() * wu,
            suu,
            syy,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sum_w: self.sum_w * factor,
            syu: &self.syu * factor,
            suu: &self.suu * factor,
            syy: &self.syy * factor,
        }
    }
}

impl MnwNatural {
    pub fn add_stats(&self, s: &MnwStats) -> Self {
        Self {
            mk: &self.mk + &s.syu,
            k: &self.k + &s.suu,
            second: &self.second + &s.syy,
            eta: self.eta + s.sum_w,
        }
    }

    pub fn blend(&self, other: &Self, rho: f64) -> Self {
        Self {
            mk: &self.mk * (1.0 - rho) + &other.mk * rho,
            k: &self.k * (1.0 - rho) + &other.k * rho,
            second: &self.second * (1.0 - rho) + &other.second * rho,
            eta: self.eta * (1.0 - rho) + other.eta * rho,
        }
    }

    pub fn to_params(&self) -> Result<MatrixNormalWishartParams> {
        let k = linalg::symmetrized(self.k.clone());
        let chol = linalg::cholesky(&k, "matrix-normal column precision")?;
        // M = (MK) K⁻¹, solved as K Mᵀ = (MK)ᵀ.
        let m = chol.solve(&self.mk.transpose()).transpose();
        let mut phi_inv = &self.second - &self.mk * m.transpose();
        linalg::symmetrize(&mut phi_inv);
        let phi = linalg::spd_inverse(&phi_inv, "matrix-normal-Wishart scale inverse")?;
        Ok(MatrixNormalWishartParams {
            m,
            k,
            phi,
            eta: self.eta,
        })
    }
}

impl MatrixNormalWishartParams {
    pub fn new(m: DMatrix<f64>, k: DMatrix<f64>, phi: DMatrix<f64>, eta: f64) -> Result<Self> {
        let p = Self { m, k, phi, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn dim_out(&self) -> usize {
        self.m.nrows()
    }

    pub fn dim_in(&self) -> usize {
        self.m.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (dy, du) = (self.dim_out(), self.dim_in());
        if self.k.shape() != (du, du) || self.phi.shape() != (dy, dy) {
            return Err(Error::arg("matrix-normal-Wishart: inconsistent shapes"));
        }
        if !(self.eta > dy as f64 - 1.0) || !self.eta.is_finite() {
            return Err(Error::arg("matrix-normal-Wishart: eta must exceed d_y - 1"));
        }
        if self.m.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("matrix-normal-Wishart: non-finite mean"));
        }
        linalg::check_spd(&self.k, "matrix-normal-Wishart K")?;
        linalg::check_spd(&self.phi, "matrix-normal-Wishart Phi")
    }

    pub fn natural(&self) -> Result<MnwNatural> {
        let phi_inv = linalg::spd_inverse(&self.phi, "matrix-normal-Wishart Phi")?;
        let mk = &self.m * &self.k;
        let second = phi_inv + &mk * self.m.transpose();
        Ok(MnwNatural {
            mk,
            k: self.k.clone(),
            second,
            eta: self.eta,
        })
    }

    pub fn posterior(&self, stats: &MnwStats) -> Result<Self> {
        if stats.sum_w == 0.0 {
            return Ok(self.clone());
        }
        self.natural()?.add_stats(stats).to_params()
    }

    pub fn expected_log_det(&self) -> Result<f64> {
        let ld = linalg::spd_log_det(&self.phi, "matrix-normal-Wishart Phi")?;
        Ok(wishart::expected_log_det(ld, self.eta, self.dim_out()))
    }

    pub fn expectations(&self) -> Result<MnwExpectations> {
        Ok(MnwExpectations {
            m: self.m.clone(),
            eta_phi: &self.phi * self.eta,
            e_log_det: self.expected_log_det()?,
            k_inv: linalg::spd_inverse(&self.k, "matrix-normal-Wishart K")?,
        })
    }

    /// `E[ln N(y | A u, V)]` under this posterior.
    pub fn expected_loglik(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(self.expectations()?.loglik(u, y))
    }

    /// `E_q[ln p(A, V)]` with `self` as the density `p`.
    pub fn cross_entropy_from(&self, q: &MatrixNormalWishartParams) -> Result<f64> {
        let (dy, du) = (self.dim_out() as f64, self.dim_in() as f64);
        let e_log_det = q.expected_log_det()?;
        let log_det_k = linalg::spd_log_det(&self.k, "matrix-normal-Wishart K")?;
        let q_k_inv = linalg::spd_inverse(&q.k, "matrix-normal-Wishart K")?;
        let diff = &q.m - &self.m;
        let mean_term = q.eta * (&q.phi * &diff * &self.k).component_mul(&diff).sum();
        let trace_term = dy * self.k.component_mul(&q_k_inv).sum();
        let normal = -0.5 * dy * du * (2.0 * PI).ln() + 0.5 * du * e_log_det + 0.5 * dy * log_det_k
            - 0.5 * (mean_term + trace_term);
        let prior_chol = linalg::cholesky(&self.phi, "matrix-normal-Wishart Phi")?;
        let prior_log_det = linalg::log_det_chol(&prior_chol);
        let prior_inv = linalg::symmetrized(prior_chol.inverse());
        let wish =
            wishart::cross_entropy_term(&prior_inv, prior_log_det, self.eta, e_log_det, &(&q.phi * q.eta));
        Ok(normal + wish)
    }

    /// `KL(self ‖ prior)`.
    pub fn kl_from(&self, prior: &MatrixNormalWishartParams) -> Result<f64> {
        Ok(self.cross_entropy_from(self)? - prior.cross_entropy_from(self)?)
    }

    /// Student-t predictive of `y` at regressor `u` (bias slot already included).
    pub fn predictive(&self, u: &DVector<f64>, convention: DofConvention) -> Result<StudentT> {
        let k_inv = linalg::spd_inverse(&self.k, "matrix-normal-Wishart K")?;
        let a = predictive_scale_factor(&k_inv, u);
        let (dof, mult) = convention.dof_and_scale(self.eta, self.dim_out());
        Ok(StudentT {
            loc: &self.m * u,
            precision: &self.phi * (a * mult),
            dof,
        })
    }

    /// One joint draw `(A, V)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
        let chol = linalg::cholesky(&self.phi, "matrix-normal-Wishart Phi").expect("valid Phi");
        let v = wishart::sample(rng, &chol, self.eta);
        let lv = linalg::cholesky(&v, "precision draw").expect("Wishart draw is SPD").l();
        let lk = linalg::cholesky(&self.k, "matrix-normal-Wishart K").expect("valid K").l();
        let z = DMatrix::from_fn(self.dim_out(), self.dim_in(), |_, _| StandardNormal.sample(rng));
        // A − M = L_V⁻ᵀ Z L_K⁻¹
        let left = lv.transpose().solve_upper_triangular(&z).expect("triangular");
        let offset = lk
            .transpose()
            .solve_upper_triangular(&left.transpose())
            .expect("triangular")
            .transpose();
        (&self.m + offset, v)
    }
}

/// `a = 1 / (1 + uᵀ K⁻¹ u)`, equal to `1 − uᵀ (K + u uᵀ)⁻¹ u`.
pub fn predictive_scale_factor(k_inv: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    1.0 / (1.0 + linalg::quad_form(k_inv, u))
}

#[derive(Debug, Clone)]
pub struct MnwExpectations {
    pub m: DMatrix<f64>,
    pub eta_phi: DMatrix<f64>,
    pub e_log_det: f64,
    pub k_inv: DMatrix<f64>,
}

impl MnwExpectations {
    pub fn loglik(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let dy = self.m.nrows() as f64;
        let resid = y - &self.m * u;
        0.5 * self.e_log_det
            - 0.5 * dy * (2.0 * PI).ln()
            - 0.5 * (linalg::quad_form(&self.eta_phi, &resid) + dy * linalg::quad_form(&self.k_inv, u))
    }
}

/// Weighted matrix-normal-Wishart posterior for rows of `inputs` (N×d_u) and
/// `outputs` (N×d_y).
pub fn mnw_update(
    prior: &MatrixNormalWishartParams,
    inputs: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    weights: &[f64],
) -> Result<MatrixNormalWishartParams> {
    let n = weights.len();
    if inputs.nrows() != n || outputs.nrows() != n {
        return Err(Error::arg("mnw_update: row counts differ"));
    }
    if inputs.ncols() != prior.dim_in() || outputs.ncols() != prior.dim_out() {
        return Err(Error::arg("mnw_update: data dimensions do not match prior"));
    }
    check_weights(weights)?;
    let mut stats = MnwStats::zeros(prior.dim_out(), prior.dim_in());
    for (i, &w) in weights.iter().enumerate() {
        stats.add(&inputs.row(i).transpose(), &outputs.row(i).transpose(), w);
    }
    prior.posterior(&stats)
}
