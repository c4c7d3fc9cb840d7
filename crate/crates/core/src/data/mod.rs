//! Datasets, synthetic generators, CSV interchange and splitting.

mod csv_io;
pub mod generators;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub use csv_io::{load_csv, load_csv_auto, save_csv};
pub use generators::Generator;

/// Raw inputs `x` (N×d_x) and outputs `y` (N×d_y).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, name: impl Into<String>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::arg("dataset: input and output row counts differ"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("dataset: non-finite entry"));
        }
        Ok(Self {
            x,
            y,
            name: name.into(),
        })
    }

    pub fn empty(dx: usize, dy: usize) -> Self {
        Self {
            x: DMatrix::zeros(0, dx),
            y: DMatrix::zeros(0, dy),
            name: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.y.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            name: self.name.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.dim_x() != other.dim_x() || self.dim_y() != other.dim_y() {
            return Err(Error::arg("dataset: cannot concatenate different shapes"));
        }
        let n = self.len() + other.len();
        let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            DMatrix::from_fn(n, a.ncols(), |i, j| if i < a.nrows() { a[(i, j)] } else { b[(i - a.nrows(), j)] })
        };
        Ok(Self {
            x: stack(&self.x, &other.x),
            y: stack(&self.y, &other.y),
            name: self.name.clone(),
        })
    }

    /// Random partition with the given fractions; rounding remainder goes to the last part.
    pub fn split<R: Rng + ?Sized>(&self, fractions: &[f64], rng: &mut R) -> Result<Vec<Dataset>> {
        if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::arg("split fractions must be non-negative"));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg("split fractions must sum to 1"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let mut parts = Vec::with_capacity(fractions.len());
        let mut start = 0;
        for (i, f) in fractions.iter().enumerate() {
            let end = if i + 1 == fractions.len() {
                self.len()
            } else {
                (start + (f * self.len() as f64).round() as usize).min(self.len())
            };
            parts.push(self.select(&idx[start..end]));
            start = end;
        }
        Ok(parts)
    }

    /// Contiguous batches in row order; sizes differ by at most one.
    pub fn batches(&self, count: usize) -> Result<Vec<Dataset>> {
        if count == 0 {
            return Err(Error::arg("batch count must be positive"));
        }
        let n = self.len();
        Ok((0..count)
            .map(|b| {
                let idx: Vec<usize> = (b * n / count..(b + 1) * n / count).collect();
                self.select(&idx)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize) -> Dataset {
        Dataset::new(
            DMatrix::from_fn(n, 1, |i, _| i as f64),
            DMatrix::from_fn(n, 1, |i, _| 2.0 * i as f64),
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = toy(100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parts = d.split(&[0.8, 0.2], &mut rng).unwrap();
        assert_eq!(parts[0].len(), 80);
        assert_eq!(parts[1].len(), 20);
        let mut seen: Vec<f64> = parts.iter().flat_map(|p| p.x.iter().copied().collect::<Vec<_>>()).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..100).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn batches_are_contiguous() {
        let b = toy(10).batches(3).unwrap();
        assert_eq!(b.iter().map(Dataset::len).collect::<Vec<_>>(), vec![3, 3, 4]);
        assert_eq!(b[1].x[(0, 0)], 3.0);
    }

    #[test]
    fn rejects_mismatched_rows() {
        assert!(Dataset::new(DMatrix::zeros(2, 1), DMatrix::zeros(3, 1), "bad").is_err());
    }
}
