use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::Result;
use crate::linalg;

/// Degrees-of-freedom convention for the predictive Student-t marginals.
///
/// `NuPlusOne` uses `ν + 1` (resp. `η + 1`) with precision `ν·c·Ψ`;
/// `Textbook` uses the exact normal-Wishart marginal `ν − d + 1` with
/// precision `(ν − d + 1)·c·Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DofConvention {
    #[default]
    NuPlusOne,
    Textbook,
}

impl DofConvention {
    /// Returns `(dof, precision multiplier)` for a Wishart with `nu` degrees
    /// of freedom over `d` dimensions.
    pub fn dof_and_scale(self, nu: f64, d: usize) -> (f64, f64) {
        match self {
            DofConvention::NuPlusOne => (nu + 1.0, nu),
            DofConvention::Textbook => {
                let dof = nu - d as f64 + 1.0;
                (dof, dof)
            }
        }
    }
}

/// Multivariate Student-t with location `loc`, precision (inverse scale)
/// matrix `precision` and `dof` degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentT {
    pub loc: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub dof: f64,
}

impl StudentT {
    pub fn new(loc: DVector<f64>, precision: DMatrix<f64>, dof: f64) -> Result<Self> {
        if loc.len() != precision.nrows() {
            return Err(crate::Error::arg("student-t: loc and precision dimensions differ"));
        }
        if !(dof > 0.0) {
            return Err(crate::Error::arg("student-t: dof must be positive"));
        }
        linalg::check_spd(&precision, "student-t precision")?;
        Ok(Self { loc, precision, dof })
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let log_det = linalg::spd_log_det(&self.precision, "student-t precision")
            .expect("student-t precision is SPD by construction");
        let diff = x - &self.loc;
        let maha = linalg::quad_form(&self.precision, &diff);
        ln_gamma((self.dof + d) / 2.0) - ln_gamma(self.dof / 2.0) - 0.5 * d * (self.dof * PI).ln()
            + 0.5 * log_det
            - 0.5 * (self.dof + d) * (maha / self.dof).ln_1p()
    }

    /// Covariance `P⁻¹ ν/(ν−2)`; `None` when `dof ≤ 2`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if self.dof <= 2.0 {
            return None;
        }
        let inv = linalg::spd_inverse(&self.precision, "student-t precision").ok()?;
        Some(inv * (self.dof / (self.dof - 2.0)))
    }
}
