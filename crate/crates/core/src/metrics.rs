//! Error metrics on raw-space predictions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Mean squared error averaged over all entries.
pub fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    check(pred, target)?;
    Ok((pred - target).map(|v| v * v).mean())
}

/// Per-output MSE divided by the target variance, averaged over outputs.
pub fn nmse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    check(pred, target)?;
    let n = target.nrows() as f64;
    let mut total = 0.0;
    for j in 0..target.ncols() {
        let t = target.column(j);
        let mean = t.mean();
        let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::arg("nmse: target column has zero variance"));
        }
        let err = (pred.column(j) - t).map(|v| v * v).sum() / n;
        total += err / var;
    }
    Ok(total / target.ncols() as f64)
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::arg("pearson: need two equal-length samples of size >= 2"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn check(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<()> {
    if pred.shape() != target.shape() || target.nrows() == 0 {
        return Err(Error::arg("metrics: prediction and target shapes differ or are empty"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_predictor_has_unit_nmse() {
        let t = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let p = DMatrix::from_element(4, 1, 2.5);
        assert!((nmse(&p, &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn pearson_of_affine_copy() {
        let a = [1.0, 3.0, 2.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v - 1.0).collect();
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }
}
