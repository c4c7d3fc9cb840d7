//! Small truncated Dirichlet-process Gaussian mixture used to group points
//! without fixing the number of groups in advance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{NormalWishartParams, NwStats, TruncatedStickBreaking};
use crate::error::Result;
use crate::kmeans;
use crate::predictive::logsumexp;

/// Hard group labels (compacted to `0..G`) from variational Bayes on a
/// truncated DP mixture of full-covariance Gaussians over standardized rows.
pub fn dp_gmm_labels<R: Rng + ?Sized>(
    points: &DMatrix<f64>,
    truncation: usize,
    alpha0: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = points.nrows();
    let d = points.ncols();
    if n == 0 {
        return Ok(Vec::new());
    }
    let t = truncation.min(n).max(1);
    let z = standardize(points);
    let prior = NormalWishartParams::new(DVector::zeros(d), 0.01, DMatrix::identity(d, d), d as f64 + 1.0)?;
    let sticks_prior = TruncatedStickBreaking::prior(alpha0, t)?;
    let km = kmeans::kmeans(&z, t, 50, rng);
    let mut r = DMatrix::from_fn(n, t, |i, j| {
        if km.labels[i] == j {
            0.99 + 0.01 / t as f64
        } else {
            0.01 / t as f64
        }
    });
    for _ in 0..max_iters {
        let mass: Vec<f64> = r.column_iter().map(|c| c.sum()).collect();
        let sticks = sticks_prior.posterior(&mass)?;
        let comps = (0..t)
            .map(|k| {
                let w: Vec<f64> = r.column(k).iter().copied().collect();
                prior.posterior(&NwStats::from_weighted(&z, &w))?.expectations()
            })
            .collect::<Result<Vec<_>>>()?;
        let elogpi = sticks.expected_log_weights();
        let mut next = DMatrix::zeros(n, t);
        for i in 0..n {
            let x = z.row(i).transpose();
            let logs: Vec<f64> = (0..t).map(|k| elogpi[k] + comps[k].loglik(&x)).collect();
            let lse = logsumexp(&logs);
            for k in 0..t {
                next[(i, k)] = (logs[k] - lse).exp();
            }
        }
        let change = (&next - &r).abs().max();
        r = next;
        if change < 1e-8 {
            break;
        }
    }
    let raw: Vec<usize> = r
        .row_iter()
        .map(|row| crate::predictive::argmax(&row.iter().copied().collect::<Vec<_>>()).0)
        .collect();
    let mut map = vec![usize::MAX; t];
    let mut next_id = 0;
    Ok(raw
        .into_iter()
        .map(|l| {
            if map[l] == usize::MAX {
                map[l] = next_id;
                next_id += 1;
            }
            map[l]
        })
        .collect())
}

fn standardize(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows() as f64;
    let mut z = points.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finds_two_groups() {
        let pts = DMatrix::from_fn(40, 1, |i, _| if i < 20 { 1.0 } else { -1.0 } + 0.01 * (i % 7) as f64);
        let labels = dp_gmm_labels(&pts, 10, 1.0, 200, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut distinct = labels.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 2);
        assert!(labels[..20].iter().all(|l| *l == labels[0]));
        assert!(labels[20..].iter().all(|l| *l == labels[20]));
    }
}
