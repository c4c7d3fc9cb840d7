//! Small dense linear-algebra helpers shared by the conjugate updates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter levels tried, in order, before declaring a matrix degenerate.
const JITTER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Cholesky factorization with diagonal jitter escalation.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::num(format!("{what}: non-finite entries")));
    }
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).sum::<f64>() / n.max(1) as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for &j in JITTER.iter() {
        let mut a = m.clone();
        if j > 0.0 {
            for i in 0..n {
                a[(i, i)] += j * scale;
            }
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok(c);
        }
    }
    Err(Error::num(format!("{what}: matrix is not positive definite")))
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrized(cholesky(m, what)?.inverse()))
}

pub fn log_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn spd_log_det(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    Ok(log_det_chol(&cholesky(m, what)?))
}

/// `vᵀ A v` for a square matrix.
pub fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += a[(i, j)] * v[i];
        }
        acc += col * v[j];
    }
    acc
}

/// Symmetric positive-definite check used by the parameter validators.
pub fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::arg(format!("{what}: matrix is not square")));
    }
    let n = m.nrows();
    let norm = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * norm {
                return Err(Error::arg(format!("{what}: matrix is not symmetric")));
            }
        }
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::arg(format!("{what}: matrix is not positive definite")));
    }
    Ok(())
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::arg(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_near_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky(&m, "m").is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(&bad, "m"), Err(Error::Numerical(_))));
    }

    #[test]
    fn quad_form_matches_nalgebra() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = DVector::from_vec(vec![1.0, -3.0]);
        let expected = (v.transpose() * &a * &v)[(0, 0)];
        assert!((quad_form(&a, &v) - expected).abs() < 1e-14);
    }
}
