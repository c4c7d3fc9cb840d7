use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{HierResponsibilities, HilrModel};
use crate::data::Dataset;
use crate::distributions::{MatrixNormalWishartParams, MnwStats};
use crate::error::{Error, Result};
use crate::features::Transformed;
use crate::ilr::normalize_rows;
use crate::predictive::logsumexp;

/// Per-upper-component quantities reused across data in the E-step.
struct UpperExpect {
    elog_pi: Vec<f64>,
    // activation block
    x_const: f64,
    x_prec: DMatrix<f64>,
    x_prec_centres: Vec<DVector<f64>>,
    x_centre_quad: Vec<f64>,
    // regression block
    y_const: f64,
    y_prec: DMatrix<f64>,
    slopes: DMatrix<f64>,
    y_prec_bias: Vec<DVector<f64>>,
    y_bias_quad: Vec<f64>,
    s_uu: DMatrix<f64>,
    s_uk: DMatrix<f64>,
    s_kk: Vec<f64>,
}

impl UpperExpect {
    fn new(act: &MatrixNormalWishartParams, reg: &MatrixNormalWishartParams, elog_pi: Vec<f64>, du: usize) -> Result<Self> {
        let k = elog_pi.len();
        let ax = act.expectations()?;
        let dx = act.dim_out() as f64;
        let x_prec = ax.eta_phi;
        let x_centres: Vec<DVector<f64>> = (1..=k).map(|j| act.m.column(j).into_owned()).collect();
        let x_prec_centres: Vec<DVector<f64>> = x_centres.iter().map(|c| &x_prec * c).collect();
        let x_centre_quad = x_centres
            .iter()
            .zip(&x_prec_centres)
            .enumerate()
            .map(|(j, (c, pc))| c.dot(pc) + dx * ax.k_inv[(j + 1, j + 1)])
            .collect();
        let ay = reg.expectations()?;
        let dy = reg.dim_out() as f64;
        let y_prec = ay.eta_phi;
        let biases: Vec<DVector<f64>> = (0..k).map(|j| reg.m.column(du + j).into_owned()).collect();
        let y_prec_bias: Vec<DVector<f64>> = biases.iter().map(|b| &y_prec * b).collect();
        let y_bias_quad = biases.iter().zip(&y_prec_bias).map(|(b, pb)| b.dot(pb)).collect();
        Ok(Self {
            elog_pi,
            x_const: 0.5 * ax.e_log_det - 0.5 * dx * (2.0 * PI).ln(),
            x_prec,
            x_prec_centres,
            x_centre_quad,
            y_const: 0.5 * ay.e_log_det - 0.5 * dy * (2.0 * PI).ln(),
            y_prec,
            slopes: reg.m.columns(0, du).into_owned(),
            y_prec_bias,
            y_bias_quad,
            s_uu: ay.k_inv.view((0, 0), (du, du)).into_owned(),
            s_uk: ay.k_inv.view((0, du), (du, k)).into_owned(),
            s_kk: (0..k).map(|j| ay.k_inv[(du + j, du + j)]).collect(),
        })
    }

    /// `log ρ_nmk` for every lower component `k` at one datum.
    fn log_rho(&self, x: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>, out: &mut [f64]) {
        let dy = y.len() as f64;
        let px = &self.x_prec * x;
        let xx = x.dot(&px);
        let e = y - &self.slopes * u;
        let pe = &self.y_prec * &e;
        let ee = e.dot(&pe);
        let quu = u.dot(&(&self.s_uu * u));
        let suk = self.s_uk.tr_mul(u);
        for (j, o) in out.iter_mut().enumerate() {
            let x_quad = xx - 2.0 * x.dot(&self.x_prec_centres[j]) + self.x_centre_quad[j];
            let y_quad = ee - 2.0 * e.dot(&self.y_prec_bias[j]) + self.y_bias_quad[j]
                + dy * (quu + 2.0 * suk[j] + self.s_kk[j]);
            *o = self.elog_pi[j] + self.x_const - 0.5 * x_quad + self.y_const - 0.5 * y_quad;
        }
    }
}

impl HilrModel {
    /// Unnormalized lower log responsibilities, one N×K matrix per upper component.
    pub(crate) fn log_rho(&self, t: &Transformed) -> Result<Vec<DMatrix<f64>>> {
        let du = self.feature_spec.dim_u();
        let kt = self.lower_truncation();
        (0..self.upper_truncation())
            .into_par_iter()
            .map(|m| {
                let ex = UpperExpect::new(&self.activation[m], &self.regression[m], self.lower[m].expected_log_weights(), du)?;
                let mut out = DMatrix::zeros(t.len(), kt);
                let mut row = vec![0.0; kt];
                for n in 0..t.len() {
                    let x = t.xg.row(n).transpose();
                    let u = t.u.row(n).transpose();
                    let y = t.y.row(n).transpose();
                    ex.log_rho(&x, &u, &y, &mut row);
                    for (k, v) in row.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(Error::num(format!(
                                "non-finite log responsibility for datum {n}, upper {m}, lower {k}"
                            )));
                        }
                        out[(n, k)] = *v;
                    }
                }
                Ok(out)
            })
            .collect()
    }

    /// `E[ln ω_m] + logsumexp_k log ρ_nmk`, N×M.
    pub(crate) fn log_upper(&self, log_rho: &[DMatrix<f64>]) -> DMatrix<f64> {
        let elog_omega = self.upper.expected_log_weights();
        let n = log_rho.first().map_or(0, |l| l.nrows());
        DMatrix::from_fn(n, log_rho.len(), |i, m| {
            let row: Vec<f64> = log_rho[m].row(i).iter().copied().collect();
            elog_omega[m] + logsumexp(&row)
        })
    }

    pub(crate) fn responsibilities(&self, log_rho: &[DMatrix<f64>]) -> HierResponsibilities {
        HierResponsibilities {
            g: normalize_rows(&self.log_upper(log_rho)),
            r: log_rho.iter().map(normalize_rows).collect(),
        }
    }

    /// Posterior update from the stored priors given responsibilities.
    pub(crate) fn m_step_t(&self, t: &Transformed, resp: &HierResponsibilities) -> Result<HilrModel> {
        let (mt, kt) = (self.upper_truncation(), self.lower_truncation());
        let n = t.len();
        if resp.g.nrows() != n || resp.g.ncols() != mt || resp.r.len() != mt {
            return Err(Error::arg("m_step: upper responsibilities do not match data and truncation"));
        }
        if resp.r.iter().any(|r| r.nrows() != n || r.ncols() != kt) {
            return Err(Error::arg("m_step: lower responsibilities do not match data and truncation"));
        }
        if resp.g.iter().chain(resp.r.iter().flat_map(|r| r.iter())).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("m_step: responsibilities must be finite and non-negative"));
        }
        let du = self.feature_spec.dim_u();
        let upper = self.upper_prior.posterior(&resp.upper_mass())?;
        let blocks = (0..mt)
            .into_par_iter()
            .map(|m| {
                let g: Vec<f64> = resp.g.column(m).iter().copied().collect();
                // w_nk = g_nm r_nmk
                let w = DMatrix::from_fn(n, kt, |i, k| g[i] * resp.r[m][(i, k)]);
                let nk: Vec<f64> = w.column_iter().map(|c| c.sum()).collect();
                let lower = self.lower_prior.posterior(&nk)?;
                let gx = MnwStats::from_weighted(&t.xg, &t.xg, &g);
                let gy = MnwStats::from_weighted(&t.u, &t.y, &g);
                // Activation block: regressor e_{k+1}.
                let mut xs = MnwStats::zeros(t.xg.ncols(), kt + 1);
                xs.sum_w = gx.sum_w;
                xs.syy = gx.syy;
                let wx = t.xg.tr_mul(&w);
                xs.syu.columns_mut(1, kt).copy_from(&wx);
                for k in 0..kt {
                    xs.suu[(k + 1, k + 1)] = nk[k];
                }
                // Regression block: regressor [u; e_k].
                let mut ys = MnwStats::zeros(t.y.ncols(), du + kt);
                ys.sum_w = gy.sum_w;
                ys.syy = gy.syy;
                ys.syu.columns_mut(0, du).copy_from(&gy.syu);
                ys.syu.columns_mut(du, kt).copy_from(&t.y.tr_mul(&w));
                ys.suu.view_mut((0, 0), (du, du)).copy_from(&gy.suu);
                let uw = t.u.tr_mul(&w);
                ys.suu.view_mut((0, du), (du, kt)).copy_from(&uw);
                ys.suu.view_mut((du, 0), (kt, du)).copy_from(&uw.transpose());
                for k in 0..kt {
                    ys.suu[(du + k, du + k)] = nk[k];
                }
                let a = self.activation_prior.posterior(&xs)?;
                let r = self.regression_prior.posterior(&ys)?;
                Ok((lower, a, r))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut next = self.clone();
        next.upper = upper;
        next.lower = Vec::with_capacity(mt);
        next.activation = Vec::with_capacity(mt);
        next.regression = Vec::with_capacity(mt);
        for (l, a, r) in blocks {
            next.lower.push(l);
            next.activation.push(a);
            next.regression.push(r);
        }
        next.cache = Default::default();
        Ok(next)
    }

    /// Sum of the KL divergences of every posterior block from its prior.
    pub(crate) fn total_kl(&self) -> Result<f64> {
        let mut kl = self.upper.kl_from(&self.upper_prior);
        for m in 0..self.upper_truncation() {
            kl += self.lower[m].kl_from(&self.lower_prior);
            kl += self.activation[m].kl_from(&self.activation_prior)?;
            kl += self.regression[m].kl_from(&self.regression_prior)?;
        }
        Ok(kl)
    }

    /// ELBO of `(q(H, Z) = resp, q(θ) = self)` given `log_rho` computed under `self`.
    pub(crate) fn elbo_from_log_rho(&self, log_rho: &[DMatrix<f64>], resp: &HierResponsibilities) -> Result<f64> {
        let elog_omega = self.upper.expected_log_weights();
        let mut local = 0.0;
        for (m, lr) in log_rho.iter().enumerate() {
            for n in 0..lr.nrows() {
                let g = resp.g[(n, m)];
                if g <= 0.0 {
                    continue;
                }
                let inner: f64 = lr
                    .row(n)
                    .iter()
                    .zip(resp.r[m].row(n).iter())
                    .map(|(l, p)| if *p > 0.0 { p * (l - p.ln()) } else { 0.0 })
                    .sum();
                local += g * (elog_omega[m] - g.ln() + inner);
            }
        }
        let value = local - self.total_kl()?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::num("non-finite ELBO"))
        }
    }

    /// Responsibilities of `data` under the current posteriors.
    pub fn e_step(&self, data: &Dataset) -> Result<HierResponsibilities> {
        let t = self.transform(data)?;
        Ok(self.responsibilities(&self.log_rho(&t)?))
    }

    /// Posteriors obtained by combining the stored priors with `resp`-weighted data.
    pub fn m_step(&self, data: &Dataset, resp: &HierResponsibilities) -> Result<HilrModel> {
        self.m_step_t(&self.transform(data)?, resp)
    }

    /// Evidence lower bound for `q(H, Z) = resp` and the current posteriors.
    pub fn elbo(&self, data: &Dataset, resp: &HierResponsibilities) -> Result<f64> {
        let t = self.transform(data)?;
        if resp.g.nrows() != t.len()
            || resp.g.ncols() != self.upper_truncation()
            || resp.r.len() != self.upper_truncation()
            || resp.r.iter().any(|r| r.nrows() != t.len() || r.ncols() != self.lower_truncation())
        {
            return Err(Error::arg("elbo: responsibilities do not match data and truncations"));
        }
        self.elbo_from_log_rho(&self.log_rho(&t)?, resp)
    }
}
