use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{IlrModel, Responsibilities};
use crate::data::Dataset;
use crate::distributions::{MnwStats, NwStats};
use crate::error::{Error, Result};
use crate::features::Transformed;
use crate::predictive::logsumexp;

impl IlrModel {
    /// Unnormalized log responsibilities
    /// `E[ln π_k] + E[ln N(x_n | μ_k, Λ_k)] + E[ln N(y_n | A_k u_n, V_k)]`.
    pub(crate) fn log_rho(&self, t: &Transformed) -> Result<DMatrix<f64>> {
        let k = self.truncation();
        let elogpi = self.sticks.expected_log_weights();
        let act = self.activation.iter().map(|a| a.expectations()).collect::<Result<Vec<_>>>()?;
        let reg = self.regression.iter().map(|r| r.expectations()).collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = (0..t.len())
            .into_par_iter()
            .map(|n| {
                let x = t.xg.row(n).transpose();
                let u = t.u.row(n).transpose();
                let y = t.y.row(n).transpose();
                (0..k)
                    .map(|j| {
                        let v = elogpi[j] + act[j].loglik(&x) + reg[j].loglik(&u, &y);
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::num(format!("non-finite log responsibility for datum {n}, component {j}")))
                        }
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(t.len(), k, |i, j| rows[i][j]))
    }

    /// Posterior update from the stored priors given responsibilities.
    pub(crate) fn m_step_t(&self, t: &Transformed, r: &DMatrix<f64>) -> Result<IlrModel> {
        if r.nrows() != t.len() || r.ncols() != self.truncation() {
            return Err(Error::arg("m_step: responsibilities do not match data and truncation"));
        }
        if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("m_step: responsibilities must be finite and non-negative"));
        }
        let mass: Vec<f64> = r.column_iter().map(|c| c.sum()).collect();
        let sticks = self.sticks_prior.posterior(&mass)?;
        let blocks = (0..self.truncation())
            .into_par_iter()
            .map(|k| {
                let w: Vec<f64> = r.column(k).iter().copied().collect();
                let a = self.activation_prior[k].posterior(&NwStats::from_weighted(&t.xg, &w))?;
                let g = self.regression_prior[k].posterior(&MnwStats::from_weighted(&t.u, &t.y, &w))?;
                Ok((a, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut next = self.clone();
        next.sticks = sticks;
        (next.activation, next.regression) = blocks.into_iter().unzip();
        next.cache = Default::default();
        Ok(next)
    }

    /// Sum of the KL divergences of every posterior block from its prior.
    pub(crate) fn total_kl(&self) -> Result<f64> {
        let mut kl = self.sticks.kl_from(&self.sticks_prior);
        for k in 0..self.truncation() {
            kl += self.activation[k].kl_from(&self.activation_prior[k])?;
            kl += self.regression[k].kl_from(&self.regression_prior[k])?;
        }
        Ok(kl)
    }

    /// ELBO of `(q(Z) = r, q(θ) = self)` given `log_rho` computed under `self`.
    pub(crate) fn elbo_from_log_rho(&self, log_rho: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
        let local = local_bound(log_rho, r);
        let value = local - self.total_kl()?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::num("non-finite ELBO"))
        }
    }

    /// Responsibilities of `data` under the current posteriors.
    pub fn e_step(&self, data: &Dataset) -> Result<Responsibilities> {
        let t = self.transform(data)?;
        Ok(Responsibilities {
            r: normalize_rows(&self.log_rho(&t)?),
        })
    }

    /// Posteriors obtained by combining the stored priors with `resp`-weighted data.
    pub fn m_step(&self, data: &Dataset, resp: &Responsibilities) -> Result<IlrModel> {
        self.m_step_t(&self.transform(data)?, &resp.r)
    }

    /// Evidence lower bound for `q(Z) = resp` and the current posteriors.
    pub fn elbo(&self, data: &Dataset, resp: &Responsibilities) -> Result<f64> {
        let t = self.transform(data)?;
        if resp.r.nrows() != t.len() || resp.r.ncols() != self.truncation() {
            return Err(Error::arg("elbo: responsibilities do not match data and truncation"));
        }
        self.elbo_from_log_rho(&self.log_rho(&t)?, &resp.r)
    }
}

/// `Σ_n Σ_k r_nk (log ρ_nk − ln r_nk)` with `0 ln 0 = 0`.
pub(crate) fn local_bound(log_rho: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    log_rho
        .iter()
        .zip(r.iter())
        .map(|(l, p)| if *p > 0.0 { p * (l - p.ln()) } else { 0.0 })
        .sum()
}

/// Row-wise softmax in the log domain.
pub(crate) fn normalize_rows(log_rho: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = log_rho.clone();
    for mut row in r.row_iter_mut() {
        let v: Vec<f64> = row.iter().copied().collect();
        let lse = logsumexp(&v);
        for x in row.iter_mut() {
            *x = (*x - lse).exp();
        }
        let s = row.sum();
        row /= s;
    }
    r
}
