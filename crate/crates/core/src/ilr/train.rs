use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::vbem::{local_bound, normalize_rows};
use super::{count_active, IlrConfig, IlrModel, InitMethod, Responsibilities};
use crate::data::Dataset;
use crate::distributions::{MnwNatural, MnwStats, NwNatural, NwStats};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Transformed};
use crate::kmeans;
use crate::trace::FitTrace;

/// Hard labels softened as `0.99·onehot + 0.01/K`, columns ordered by decreasing cluster size.
pub(crate) fn soft_labels(labels: &[usize], clusters: usize, k: usize) -> DMatrix<f64> {
    if k == 1 {
        return DMatrix::from_element(labels.len(), 1, 1.0);
    }
    let rank = size_rank(labels, clusters);
    let floor = 0.01 / k as f64;
    DMatrix::from_fn(labels.len(), k, |i, j| if rank[labels[i]] == j { 0.99 + floor } else { floor })
}

/// Position of each cluster when ordered by decreasing size (ties by index).
pub(crate) fn size_rank(labels: &[usize], clusters: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut order: Vec<usize> = (0..clusters).collect();
    order.sort_by(|a, b| sizes[*b].cmp(&sizes[*a]).then(a.cmp(b)));
    let mut rank = vec![0usize; clusters];
    for (pos, c) in order.iter().enumerate() {
        rank[*c] = pos;
    }
    rank
}

pub(crate) fn dirichlet_rows<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut r = DMatrix::from_fn(n, k, |_, _| Exp1.sample(rng));
    for mut row in r.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    r
}

impl IlrModel {
    /// Initial responsibilities and the posteriors of one M-step on them.
    pub fn init<R: Rng + ?Sized>(data: &Dataset, config: &IlrConfig, rng: &mut R) -> Result<(IlrModel, Responsibilities)> {
        if data.is_empty() {
            return Err(Error::arg("cannot initialize on an empty dataset"));
        }
        config.validate(data.dim_x(), data.dim_y())?;
        let spec = FeatureSpec::fit(data, config.degree, true)?;
        let t = Transformed::new(&spec, data)?;
        let (model, r) = Self::init_t(spec, &t, config, rng)?;
        Ok((model, Responsibilities { r }))
    }

    fn init_t<R: Rng + ?Sized>(
        spec: FeatureSpec,
        t: &Transformed,
        config: &IlrConfig,
        rng: &mut R,
    ) -> Result<(IlrModel, DMatrix<f64>)> {
        let base = IlrModel::with_default_priors(spec, t, config)?;
        let k = config.truncation;
        let r = match config.init {
            InitMethod::KMeans => {
                let km = kmeans::kmeans(&t.xg, k, config.kmeans_iters, rng);
                soft_labels(&km.labels, km.centers.len(), k)
            }
            InitMethod::KMeansJoint => {
                let joint = DMatrix::from_fn(t.len(), t.xg.ncols() + t.y.ncols(), |i, j| {
                    if j < t.xg.ncols() {
                        t.xg[(i, j)]
                    } else {
                        t.y[(i, j - t.xg.ncols())]
                    }
                });
                let km = kmeans::kmeans(&joint, k, config.kmeans_iters, rng);
                soft_labels(&km.labels, km.centers.len(), k)
            }
            InitMethod::Random => {
                if k == 1 {
                    DMatrix::from_element(t.len(), 1, 1.0)
                } else {
                    dirichlet_rows(t.len(), k, rng)
                }
            }
        };
        Ok((base.m_step_t(t, &r)?, r))
    }

    /// Batch variational Bayes EM until the relative ELBO change drops below
    /// `config.tol` or `config.max_iters` updates have run.
    pub fn fit<R: Rng + ?Sized>(data: &Dataset, config: &IlrConfig, rng: &mut R) -> Result<(IlrModel, FitTrace)> {
        let mut best: Option<(IlrModel, FitTrace)> = None;
        for _ in 0..config.restarts.max(1) {
            let (model, resp) = Self::init(data, config, rng)?;
            let t = model.transform(data)?;
            let (model, _, trace) = model.run_vbem(&t, resp.r, config)?;
            let better = match &best {
                None => true,
                Some((_, b)) => trace.final_elbo() > b.final_elbo(),
            };
            if better {
                best = Some((model, trace));
            }
        }
        Ok(best.expect("at least one restart"))
    }

    /// Alternate E and M steps starting from a model already updated with `r`.
    pub(crate) fn run_vbem(
        self,
        t: &Transformed,
        mut r: DMatrix<f64>,
        config: &IlrConfig,
    ) -> Result<(IlrModel, DMatrix<f64>, FitTrace)> {
        let mut model = self;
        let mut trace = FitTrace::default();
        let mut log_rho = model.log_rho(t)?;
        let mut elbo = model.elbo_from_log_rho(&log_rho, &r)?;
        trace.push(elbo, count_active(&column_sums(&r), t.len(), config.active_threshold));
        for it in 1..=config.max_iters {
            r = normalize_rows(&log_rho);
            model = model
                .m_step_t(t, &r)
                .map_err(|e| Error::num(format!("iteration {it}: {e}")))?;
            log_rho = model.log_rho(t).map_err(|e| Error::num(format!("iteration {it}: {e}")))?;
            let next = model.elbo_from_log_rho(&log_rho, &r)?;
            trace.push(next, count_active(&column_sums(&r), t.len(), config.active_threshold));
            trace.iterations = it;
            let change = (next - elbo).abs();
            elbo = next;
            if change <= config.tol * elbo.abs() {
                trace.converged = true;
                break;
            }
        }
        Ok((model, r, trace))
    }

    /// Stochastic variational inference: each step blends minibatch statistics,
    /// scaled by `N / L`, into the natural parameters with step size
    /// `(t + τ)^(−κ)`. With `L = N` the minibatch is the data in order.
    pub fn fit_stochastic<R: Rng + ?Sized>(
        data: &Dataset,
        config: &IlrConfig,
        rng: &mut R,
    ) -> Result<(IlrModel, FitTrace)> {
        let (model, _) = Self::init(data, config, rng)?;
        let t = model.transform(data)?;
        model.svi_steps(&t, config, rng)
    }

    pub(crate) fn svi_steps<R: Rng + ?Sized>(
        self,
        t: &Transformed,
        config: &IlrConfig,
        rng: &mut R,
    ) -> Result<(IlrModel, FitTrace)> {
        let n = t.len();
        let l = config.svi.batch_size.unwrap_or(n.min(100));
        if l > n {
            return Err(Error::arg(format!("batch size {l} exceeds dataset size {n}")));
        }
        let scale = n as f64 / l as f64;
        let mut model = self;
        let mut trace = FitTrace::default();
        let prior_act: Vec<NwNatural> = model.activation_prior.iter().map(|p| p.natural()).collect::<Result<_>>()?;
        let prior_reg: Vec<MnwNatural> = model.regression_prior.iter().map(|p| p.natural()).collect::<Result<_>>()?;
        for step in 0..config.svi.steps {
            let idx: Vec<usize> = if l == n { (0..n).collect() } else { index::sample(rng, n, l).into_vec() };
            let batch = t.select(&idx);
            let log_rho = model.log_rho(&batch)?;
            let r = normalize_rows(&log_rho);
            let estimate = scale * local_bound(&log_rho, &r) - model.total_kl()?;
            let rho = config.svi.step_size(step);
            let mass: Vec<f64> = column_sums(&r).iter().map(|m| m * scale).collect();
            let target_sticks = model.sticks_prior.posterior(&mass)?;
            let mut next = model.clone();
            next.sticks = model.sticks.blend(&target_sticks, rho);
            for k in 0..model.truncation() {
                let w: Vec<f64> = r.column(k).iter().copied().collect();
                let a_target = prior_act[k].add_stats(&NwStats::from_weighted(&batch.xg, &w).scaled(scale));
                let g_target = prior_reg[k].add_stats(&MnwStats::from_weighted(&batch.u, &batch.y, &w).scaled(scale));
                next.activation[k] = model.activation[k]
                    .natural()?
                    .blend(&a_target, rho)
                    .to_params()
                    .map_err(|e| Error::num(format!("svi step {step}: {e}")))?;
                next.regression[k] = model.regression[k]
                    .natural()?
                    .blend(&g_target, rho)
                    .to_params()
                    .map_err(|e| Error::num(format!("svi step {step}: {e}")))?;
            }
            next.cache = Default::default();
            model = next;
            trace.push(estimate, count_active(&mass, n, config.active_threshold));
            trace.iterations = step + 1;
        }
        Ok((model, trace))
    }

    /// Continue learning on `new_data` with the current posteriors as priors.
    ///
    /// Components that have absorbed less than half a datum so far are
    /// re-seeded from a k-means partition of the new batch before the first
    /// E-step; all others start from their carried posteriors.
    pub fn sequential_update<R: Rng + ?Sized>(
        &self,
        new_data: &Dataset,
        config: &IlrConfig,
        rng: &mut R,
    ) -> Result<(IlrModel, FitTrace)> {
        if new_data.dim_x() != self.feature_spec.dim_x() || new_data.dim_y() != self.feature_spec.dim_y() {
            return Err(Error::arg("sequential update: data dimensions differ from the model's feature spec"));
        }
        if new_data.is_empty() {
            return Ok((
                self.clone(),
                FitTrace {
                    converged: true,
                    ..FitTrace::default()
                },
            ));
        }
        let t = self.transform(new_data)?;
        let mut model = self.clone();
        model.sticks_prior = self.sticks.clone();
        model.activation_prior = self.activation.clone();
        model.regression_prior = self.regression.clone();
        model.cache = Default::default();
        let fresh: Vec<usize> = (0..self.truncation()).filter(|&k| self.sticks.gamma[k] < 1.5).collect();
        if !fresh.is_empty() && self.truncation() > 1 {
            let km = kmeans::kmeans(&t.xg, fresh.len(), config.kmeans_iters, rng);
            for (c, &k) in fresh.iter().enumerate().take(km.centers.len()) {
                let w: Vec<f64> = km.labels.iter().map(|l| if *l == c { 1.0 } else { 0.0 }).collect();
                model.activation[k] = model.activation_prior[k].posterior(&NwStats::from_weighted(&t.xg, &w))?;
                model.regression[k] =
                    model.regression_prior[k].posterior(&MnwStats::from_weighted(&t.u, &t.y, &w))?;
            }
        }
        let r = normalize_rows(&model.log_rho(&t)?);
        let model = model.m_step_t(&t, &r)?;
        let (model, _, trace) = model.run_vbem(&t, r, config)?;
        Ok((model, trace))
    }
}

fn column_sums(r: &DMatrix<f64>) -> Vec<f64> {
    r.column_iter().map(|c| c.sum()).collect()
}
