#![allow(dead_code)]

use dplr_core::data::Dataset;
use dplr_core::distributions::TruncatedStickBreaking;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Sticks whose expected weights equal `w` (positive, summing to 1).
pub fn sticks_for_weights(w: &[f64], concentration: f64) -> TruncatedStickBreaking {
    let mut rest = 1.0;
    let mut gamma = Vec::new();
    let mut alpha = Vec::new();
    for (k, wk) in w.iter().enumerate() {
        let b = if k + 1 == w.len() { 0.5 } else { (wk / rest).clamp(1e-9, 1.0 - 1e-9) };
        gamma.push(concentration * b);
        alpha.push(concentration * (1.0 - b));
        rest -= wk;
    }
    TruncatedStickBreaking::new(gamma, alpha).unwrap()
}

/// Noisy line segments `y = a x + b` with inputs clustered around each centre.
pub fn clustered_segments<R: Rng + ?Sized>(
    n: usize,
    segments: &[(f64, f64, f64)],
    spread: f64,
    noise: f64,
    rng: &mut R,
) -> Dataset {
    let xs = Normal::new(0.0, spread).unwrap();
    let eps = Normal::new(0.0, noise).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (c, a, b) = segments[i % segments.len()];
        let xi = c + xs.sample(rng);
        x.push(xi);
        y.push(a * xi + b + eps.sample(rng));
    }
    Dataset::new(DMatrix::from_column_slice(n, 1, &x), DMatrix::from_column_slice(n, 1, &y), "segments").unwrap()
}

/// Linear data `y = 0.8 x − 0.3 + noise` on `[-2, 2]`.
pub fn linear<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    let eps = Normal::new(0.0, 0.1).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.8 * v - 0.3 + eps.sample(rng)).collect();
    Dataset::new(DMatrix::from_column_slice(n, 1, &x), DMatrix::from_column_slice(n, 1, &y), "linear").unwrap()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
