//! Input and output transforms between raw data and the model's working space.
//!
//! Gating (activation) features are the standardized raw inputs. Regression
//! features are per-dimension monomials `[x_1, x_1², …, x_2, …]`, each column
//! standardized, followed by an optional constant bias slot.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub degree: usize,
    pub bias_augmented: bool,
    pub x_shift: Vec<f64>,
    pub x_scale: Vec<f64>,
    /// Standardization of the monomial columns, `d_x · degree` entries.
    pub poly_shift: Vec<f64>,
    pub poly_scale: Vec<f64>,
    pub y_shift: Vec<f64>,
    pub y_scale: Vec<f64>,
}

fn column_moments(cols: impl Iterator<Item = Vec<f64>>) -> (Vec<f64>, Vec<f64>) {
    let mut shift = Vec::new();
    let mut scale = Vec::new();
    for col in cols {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        shift.push(mean);
        // Constant columns are centred but left unscaled.
        scale.push(if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 });
    }
    (shift, scale)
}

impl FeatureSpec {
    /// Spec with zero shifts and unit scales.
    pub fn identity(dx: usize, dy: usize, degree: usize, bias_augmented: bool) -> Result<Self> {
        if degree < 1 {
            return Err(Error::arg("feature degree must be at least 1"));
        }
        Ok(Self {
            degree,
            bias_augmented,
            x_shift: vec![0.0; dx],
            x_scale: vec![1.0; dx],
            poly_shift: vec![0.0; dx * degree],
            poly_scale: vec![1.0; dx * degree],
            y_shift: vec![0.0; dy],
            y_scale: vec![1.0; dy],
        })
    }

    /// Fit standardization constants on `data`.
    pub fn fit(data: &Dataset, degree: usize, bias_augmented: bool) -> Result<Self> {
        if degree < 1 {
            return Err(Error::arg("feature degree must be at least 1"));
        }
        if data.len() == 0 {
            return Err(Error::arg("cannot fit a feature spec on an empty dataset"));
        }
        let x = &data.x;
        let (x_shift, x_scale) = column_moments((0..x.ncols()).map(|j| x.column(j).iter().copied().collect()));
        let (y_shift, y_scale) =
            column_moments((0..data.y.ncols()).map(|j| data.y.column(j).iter().copied().collect()));
        let raw_poly = |j: usize, p: usize| -> Vec<f64> {
            x.column(j)
                .iter()
                .map(|v| ((v - x_shift[j]) / x_scale[j]).powi(p as i32))
                .collect()
        };
        let (poly_shift, poly_scale) =
            column_moments((0..x.ncols()).flat_map(|j| (1..=degree).map(move |p| (j, p))).map(|(j, p)| raw_poly(j, p)));
        Ok(Self {
            degree,
            bias_augmented,
            x_shift,
            x_scale,
            poly_shift,
            poly_scale,
            y_shift,
            y_scale,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.x_shift.len()
    }

    pub fn dim_y(&self) -> usize {
        self.y_shift.len()
    }

    /// Length of the regression feature vector, bias slot included.
    pub fn dim_u(&self) -> usize {
        self.dim_x() * self.degree + usize::from(self.bias_augmented)
    }

    pub fn validate(&self) -> Result<()> {
        let dx = self.dim_x();
        if self.degree < 1 {
            return Err(Error::arg("feature degree must be at least 1"));
        }
        if self.x_scale.len() != dx
            || self.poly_shift.len() != dx * self.degree
            || self.poly_scale.len() != dx * self.degree
            || self.y_scale.len() != self.dim_y()
        {
            return Err(Error::arg("feature spec: inconsistent lengths"));
        }
        let scales = self.x_scale.iter().chain(&self.poly_scale).chain(&self.y_scale);
        if scales.clone().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::arg("feature spec: scales must be positive"));
        }
        Ok(())
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_x() {
            return Err(Error::arg(format!(
                "input has {} columns, feature spec expects {}",
                x.len(),
                self.dim_x()
            )));
        }
        Ok(())
    }

    /// Standardized raw input used by the activations.
    pub fn gating(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().enumerate().map(|(j, v)| (v - self.x_shift[j]) / self.x_scale[j]),
        ))
    }

    /// Regression features of a raw input.
    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        let z = self.gating(x)?;
        let mut u = DVector::zeros(self.dim_u());
        let mut idx = 0;
        for j in 0..z.len() {
            let mut power = 1.0;
            for _ in 0..self.degree {
                power *= z[j];
                u[idx] = (power - self.poly_shift[idx]) / self.poly_scale[idx];
                idx += 1;
            }
        }
        if self.bias_augmented {
            u[idx] = 1.0;
        }
        Ok(u)
    }

    pub fn transform_output(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.dim_y() {
            return Err(Error::arg("output dimension does not match feature spec"));
        }
        Ok(DVector::from_iterator(
            y.len(),
            y.iter().enumerate().map(|(j, v)| (v - self.y_shift[j]) / self.y_scale[j]),
        ))
    }

    pub fn invert_output(&self, y_std: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            y_std.len(),
            y_std.iter().enumerate().map(|(j, v)| v * self.y_scale[j] + self.y_shift[j]),
        )
    }

    /// Map a standardized-space standard deviation back to raw units.
    pub fn invert_output_std(&self, sd_std: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(sd_std.len(), sd_std.iter().enumerate().map(|(j, v)| v * self.y_scale[j]))
    }

    /// Raw-space covariance from a standardized-space covariance.
    pub fn invert_output_cov(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let s = DVector::from_column_slice(&self.y_scale);
        DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] * s[i] * s[j])
    }

    fn rows<F>(&self, m: &DMatrix<f64>, width: usize, f: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&[f64]) -> Result<DVector<f64>>,
    {
        let mut out = DMatrix::zeros(m.nrows(), width);
        let mut buf = vec![0.0; m.ncols()];
        for i in 0..m.nrows() {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = m[(i, j)];
            }
            out.set_row(i, &f(&buf)?.transpose());
        }
        Ok(out)
    }

    pub fn gating_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.rows(x, self.dim_x(), |r| self.gating(r))
    }

    pub fn regression_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.rows(x, self.dim_u(), |r| self.apply(r))
    }

    pub fn output_matrix(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.rows(y, self.dim_y(), |r| self.transform_output(r))
    }
}

/// A dataset mapped into working space.
#[derive(Debug, Clone)]
pub struct Transformed {
    /// Gating inputs, N×d_x.
    pub xg: DMatrix<f64>,
    /// Regression inputs, N×d_u.
    pub u: DMatrix<f64>,
    /// Standardized outputs, N×d_y.
    pub y: DMatrix<f64>,
}

impl Transformed {
    pub fn new(spec: &FeatureSpec, data: &Dataset) -> Result<Self> {
        if data.x.ncols() != spec.dim_x() || data.y.ncols() != spec.dim_y() {
            return Err(Error::arg("dataset dimensions do not match the feature spec"));
        }
        Ok(Self {
            xg: spec.gating_matrix(&data.x)?,
            u: spec.regression_matrix(&data.x)?,
            y: spec.output_matrix(&data.y)?,
        })
    }

    pub fn len(&self) -> usize {
        self.xg.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            xg: self.xg.select_rows(idx),
            u: self.u.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }
}
