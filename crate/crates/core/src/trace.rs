use serde::{Deserialize, Serialize};

/// Per-iteration record of a training run.
///
/// Entry 0 is the state right after initialization; entry `i` follows the
/// `i`-th update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub elbo_per_iteration: Vec<f64>,
    pub active_components_per_iteration: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitTrace {
    pub(crate) fn push(&mut self, elbo: f64, active: usize) {
        self.elbo_per_iteration.push(elbo);
        self.active_components_per_iteration.push(active);
    }

    pub fn final_elbo(&self) -> f64 {
        self.elbo_per_iteration.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Largest relative ELBO decrease between consecutive entries (0 if none).
    pub fn worst_relative_drop(&self) -> f64 {
        self.elbo_per_iteration
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// True if every step satisfies `elbo[i+1] >= elbo[i] - tol * |elbo[i]|`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.elbo_per_iteration.windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs())
    }

    /// CSV rows `iteration,elbo,active_components`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,elbo,active_components\n");
        for (i, (e, a)) in self
            .elbo_per_iteration
            .iter()
            .zip(&self.active_components_per_iteration)
            .enumerate()
        {
            s.push_str(&format!("{i},{e:?},{a}\n"));
        }
        s
    }
}
