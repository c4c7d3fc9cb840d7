use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

/// Beta posteriors `Beta(s_k | γ_k, α_k)` over truncated stick lengths.
///
/// The final stick is deterministic (`s_T = 1`), so its `(γ, α)` entry is
/// carried for bookkeeping but never enters expectations or the KL.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedStickBreaking {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl TruncatedStickBreaking {
    pub fn new(gamma: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        let sb = Self { gamma, alpha };
        sb.validate()?;
        Ok(sb)
    }

    /// Prior `Beta(1, α₀)` on every stick.
    pub fn prior(alpha0: f64, truncation: usize) -> Result<Self> {
        if !(alpha0 > 0.0) || !alpha0.is_finite() {
            return Err(Error::arg("stick-breaking concentration must be positive"));
        }
        if truncation == 0 {
            return Err(Error::arg("truncation must be at least 1"));
        }
        Ok(Self {
            gamma: vec![1.0; truncation],
            alpha: vec![alpha0; truncation],
        })
    }

    pub fn truncation(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() || self.gamma.len() != self.alpha.len() {
            return Err(Error::arg("stick-breaking: gamma and alpha lengths differ or are empty"));
        }
        if self
            .gamma
            .iter()
            .chain(&self.alpha)
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::arg("stick-breaking: parameters must be positive"));
        }
        Ok(())
    }

    /// Conjugate update of an arbitrary (possibly carried-over) prior.
    pub fn posterior(&self, weight_sums: &[f64]) -> Result<Self> {
        if weight_sums.len() != self.truncation() {
            return Err(Error::arg("stick update: weight sums length differs from truncation"));
        }
        if weight_sums.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg("stick update: weight sums must be finite and non-negative"));
        }
        let t = weight_sums.len();
        let mut gamma = self.gamma.clone();
        let mut alpha = self.alpha.clone();
        let mut tail = 0.0;
        for k in (0..t).rev() {
            gamma[k] += weight_sums[k];
            alpha[k] += tail;
            tail += weight_sums[k];
        }
        Ok(Self { gamma, alpha })
    }

    /// `(E[ln s_k], E[ln(1 − s_k)])` per stick, treating each as a free Beta.
    pub fn expected_log_sticks(&self) -> (Vec<f64>, Vec<f64>) {
        let mut e_log_s = Vec::with_capacity(self.truncation());
        let mut e_log_1ms = Vec::with_capacity(self.truncation());
        for (&g, &a) in self.gamma.iter().zip(&self.alpha) {
            let total = digamma(g + a);
            e_log_s.push(digamma(g) - total);
            e_log_1ms.push(digamma(a) - total);
        }
        (e_log_s, e_log_1ms)
    }

    /// `E[ln π_k] = E[ln s_k] + Σ_{l<k} E[ln(1 − s_l)]`, with `E[ln s_T] = 0`.
    pub fn expected_log_weights(&self) -> Vec<f64> {
        let (e_log_s, e_log_1ms) = self.expected_log_sticks();
        let t = self.truncation();
        let mut out = Vec::with_capacity(t);
        let mut acc = 0.0;
        for k in 0..t {
            let own = if k + 1 == t { 0.0 } else { e_log_s[k] };
            out.push(own + acc);
            acc += e_log_1ms[k];
        }
        out
    }

    /// `E[π_k] = E[s_k] Π_{l<k} (1 − E[s_l])`; sums to one exactly.
    pub fn expected_weights(&self) -> Vec<f64> {
        let t = self.truncation();
        let mut out = Vec::with_capacity(t);
        let mut remaining = 1.0;
        for k in 0..t {
            let mean = if k + 1 == t {
                1.0
            } else {
                self.gamma[k] / (self.gamma[k] + self.alpha[k])
            };
            out.push(remaining * mean);
            remaining *= 1.0 - mean;
        }
        out
    }

    /// `E_q[ln self(s)]` summed over the free sticks.
    pub fn cross_entropy_from(&self, q: &TruncatedStickBreaking) -> f64 {
        let (e_log_s, e_log_1ms) = q.expected_log_sticks();
        (0..self.truncation().saturating_sub(1))
            .map(|k| {
                -ln_beta(self.gamma[k], self.alpha[k])
                    + (self.gamma[k] - 1.0) * e_log_s[k]
                    + (self.alpha[k] - 1.0) * e_log_1ms[k]
            })
            .sum()
    }

    /// `KL(self ‖ prior)` over the free sticks.
    pub fn kl_from(&self, prior: &TruncatedStickBreaking) -> f64 {
        self.cross_entropy_from(self) - prior.cross_entropy_from(self)
    }

    /// Convex combination of natural parameters.
    pub fn blend(&self, other: &Self, rho: f64) -> Self {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (1.0 - rho) * x + rho * y).collect()
        };
        Self {
            gamma: mix(&self.gamma, &other.gamma),
            alpha: mix(&self.alpha, &other.alpha),
        }
    }

    /// Draw truncated weights from the stick posteriors.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let sticks: Vec<f64> = (0..self.truncation())
            .map(|k| {
                if k + 1 == self.truncation() {
                    1.0
                } else {
                    Beta::new(self.gamma[k], self.alpha[k]).expect("valid beta").sample(rng)
                }
            })
            .collect();
        weights_from_sticks(&sticks)
    }
}

/// `γ_k = 1 + N_k`, `α_k = α₀ + Σ_{l>k} N_l`.
pub fn stick_update(alpha0: f64, weight_sums: &[f64]) -> Result<TruncatedStickBreaking> {
    TruncatedStickBreaking::prior(alpha0, weight_sums.len().max(1))?.posterior(weight_sums)
}

/// Truncated GEM(α₀) draw of `truncation` weights.
pub fn gem_sample<R: Rng + ?Sized>(rng: &mut R, alpha0: f64, truncation: usize) -> Result<Vec<f64>> {
    Ok(TruncatedStickBreaking::prior(alpha0, truncation)?.sample(rng))
}

fn weights_from_sticks(sticks: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    sticks
        .iter()
        .map(|s| {
            let w = remaining * s;
            remaining *= 1.0 - s;
            w
        })
        .collect()
}
