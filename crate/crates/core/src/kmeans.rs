//! Seeded k-means++ used to initialize responsibilities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Result of a k-means run on the rows of a matrix.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Vec<DVector<f64>>,
    pub labels: Vec<usize>,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, c: &DVector<f64>) -> f64 {
    points.row(i).iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// k-means++ seeding: `k` distinct-as-possible rows chosen with D² sampling.
pub fn plus_plus<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let n = points.nrows();
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    if n == 0 || k == 0 {
        return centers;
    }
    centers.push(points.row(rng.random_range(0..n)).transpose());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).transpose();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &[DVector<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(points, i, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Lloyd iterations from k-means++ seeds. Empty clusters keep their center.
pub fn kmeans<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, max_iters: usize, rng: &mut R) -> KMeans {
    let n = points.nrows();
    let k = k.min(n).max(1);
    let mut centers = plus_plus(points, k, rng);
    let mut labels = vec![0; n];
    if n == 0 {
        return KMeans { centers, labels };
    }
    for it in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, l) in labels.iter_mut().enumerate() {
            let j = nearest(points, i, &centers);
            if j != *l || it == 0 {
                changed |= j != *l;
                *l = j;
            }
        }
        let mut sums = vec![DVector::zeros(points.ncols()); k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += points.row(i).transpose();
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = &sums[j] / counts[j] as f64;
            }
        }
        if !changed && it > 0 {
            break;
        }
    }
    KMeans { centers, labels }
}
