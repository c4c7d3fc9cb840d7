//! JSON records shared by the model file formats. Matrices are row-major
//! nested arrays; floats use shortest round-trip formatting.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::distributions::{MatrixNormalWishartParams, NormalWishartParams, TruncatedStickBreaking};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SticksJson {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha0: f64,
}

impl SticksJson {
    pub fn new(sb: &TruncatedStickBreaking, alpha0: f64) -> Self {
        Self {
            gamma: sb.gamma.clone(),
            alpha: sb.alpha.clone(),
            alpha0,
        }
    }

    pub fn parse(&self, truncation: usize) -> Result<TruncatedStickBreaking> {
        let sb = TruncatedStickBreaking::new(self.gamma.clone(), self.alpha.clone())?;
        if sb.truncation() != truncation {
            return Err(Error::arg("model file: stick count differs from truncation"));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::arg("model file: alpha0 must be positive"));
        }
        Ok(sb)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NwJson {
    pub m: Vec<f64>,
    pub kappa: f64,
    #[serde(rename = "Psi")]
    pub psi: Vec<Vec<f64>>,
    pub nu: f64,
}

impl From<&NormalWishartParams> for NwJson {
    fn from(p: &NormalWishartParams) -> Self {
        Self {
            m: p.m.as_slice().to_vec(),
            kappa: p.kappa,
            psi: to_rows(&p.psi),
            nu: p.nu,
        }
    }
}

impl NwJson {
    pub fn parse(&self) -> Result<NormalWishartParams> {
        NormalWishartParams::new(
            DVector::from_column_slice(&self.m),
            self.kappa,
            from_rows(&self.psi, "Psi")?,
            self.nu,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnwJson {
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "Phi")]
    pub phi: Vec<Vec<f64>>,
    pub eta: f64,
}

impl From<&MatrixNormalWishartParams> for MnwJson {
    fn from(p: &MatrixNormalWishartParams) -> Self {
        Self {
            m: to_rows(&p.m),
            k: to_rows(&p.k),
            phi: to_rows(&p.phi),
            eta: p.eta,
        }
    }
}

impl MnwJson {
    pub fn parse(&self) -> Result<MatrixNormalWishartParams> {
        MatrixNormalWishartParams::new(
            from_rows(&self.m, "M")?,
            from_rows(&self.k, "K")?,
            from_rows(&self.phi, "Phi")?,
            self.eta,
        )
    }
}

pub fn parse_all<J, T>(items: &[J], expected: usize, what: &str, f: impl Fn(&J) -> Result<T>) -> Result<Vec<T>> {
    if items.len() != expected {
        return Err(Error::arg(format!(
            "model file: {what} has {} entries, expected {expected}",
            items.len()
        )));
    }
    items.iter().map(f).collect()
}
