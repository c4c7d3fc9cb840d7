use nalgebra::DMatrix;
use rand::Rng;

use super::{HierResponsibilities, HilrConfig, HilrInit, HilrModel};
use crate::data::Dataset;
use crate::dpgmm::dp_gmm_labels;
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Transformed};
use crate::ilr::{count_active, size_rank, soft_labels};
use crate::kmeans;
use crate::trace::FitTrace;

/// Points per fine cluster aimed for when estimating local slopes.
const POINTS_PER_FINE_CLUSTER: usize = 20;

/// Ridge added to the local least-squares normal equations.
const LOCAL_RIDGE: f64 = 1e-3;

/// Upper and lower hard labels, both compact from 0.
struct HardLabels {
    upper: Vec<usize>,
    upper_count: usize,
    lower: Vec<usize>,
    lower_count: Vec<usize>,
}

fn soften(labels: &HardLabels, n: usize, mt: usize, kt: usize) -> HierResponsibilities {
    let g = soft_labels(&labels.upper, labels.upper_count, mt);
    let column = size_rank(&labels.upper, labels.upper_count);
    let mut r = vec![DMatrix::from_element(n, kt, 1.0 / kt as f64); mt];
    for group in 0..labels.upper_count {
        let members: Vec<usize> = (0..n).filter(|&i| labels.upper[i] == group).collect();
        let sub: Vec<usize> = members.iter().map(|&i| labels.lower[i]).collect();
        let soft = soft_labels(&sub, labels.lower_count[group], kt);
        let target = &mut r[column[group]];
        for (row, &i) in members.iter().enumerate() {
            target.row_mut(i).copy_from(&soft.row(row));
        }
    }
    HierResponsibilities { g, r }
}

/// Least-squares slope of `y` on `[u, 1]` for each fine cluster, flattened.
fn local_slopes(t: &Transformed, labels: &[usize], clusters: usize) -> DMatrix<f64> {
    let (du, dy) = (t.u.ncols(), t.y.ncols());
    let mut out = DMatrix::zeros(clusters, du * dy);
    for c in 0..clusters {
        let idx: Vec<usize> = (0..t.len()).filter(|&i| labels[i] == c).collect();
        let mut a = DMatrix::identity(du + 1, du + 1) * LOCAL_RIDGE;
        let mut b = DMatrix::zeros(du + 1, dy);
        for &i in &idx {
            let u = t.u.row(i).transpose().insert_row(du, 1.0);
            a.ger(1.0, &u, &u, 1.0);
            b.ger(1.0, &u, &t.y.row(i).transpose(), 1.0);
        }
        if let Some(chol) = a.cholesky() {
            let beta = chol.solve(&b);
            for j in 0..dy {
                for k in 0..du {
                    out[(c, j * du + k)] = beta[(k, j)];
                }
            }
        }
    }
    out
}

/// k-means of the rows `members` of `points` into at most `k` clusters.
fn sub_cluster<R: Rng + ?Sized>(points: &DMatrix<f64>, members: &[usize], k: usize, iters: usize, rng: &mut R) -> (Vec<usize>, usize) {
    let sub = points.select_rows(members);
    let km = kmeans::kmeans(&sub, k.min(members.len()).max(1), iters, rng);
    let count = km.centers.len().max(1);
    (km.labels, count)
}

fn hard_labels<R: Rng + ?Sized>(t: &Transformed, config: &HilrConfig, rng: &mut R) -> HardLabels {
    let n = t.len();
    let (mt, kt) = (config.upper_truncation, config.lower_truncation);
    let upper: Vec<usize> = match config.init {
        HilrInit::TwoStageKMeans => kmeans::kmeans(&t.xg, mt, config.kmeans_iters, rng).labels,
        HilrInit::SlopeGroups => {
            let fine_k = (mt * kt).min(n / POINTS_PER_FINE_CLUSTER).max(1);
            let fine = kmeans::kmeans(&t.xg, fine_k, config.kmeans_iters, rng);
            let slopes = local_slopes(t, &fine.labels, fine.centers.len());
            let groups = if mt == 1 {
                vec![0; fine.centers.len()]
            } else {
                dp_gmm_labels(&slopes, mt, config.beta0, config.max_iters, rng).unwrap_or_else(|_| vec![0; fine.centers.len()])
            };
            fine.labels.iter().map(|&c| groups[c]).collect()
        }
    };
    let mut seen: Vec<usize> = upper.clone();
    seen.sort_unstable();
    seen.dedup();
    let upper: Vec<usize> = upper.iter().map(|l| seen.binary_search(l).expect("present")).collect();
    let upper_count = seen.len();
    let mut lower = vec![0usize; n];
    let mut lower_count = vec![1usize; upper_count];
    for group in 0..upper_count {
        let members: Vec<usize> = (0..n).filter(|&i| upper[i] == group).collect();
        let (labels, count) = sub_cluster(&t.xg, &members, kt, config.kmeans_iters, rng);
        for (j, &i) in members.iter().enumerate() {
            lower[i] = labels[j];
        }
        lower_count[group] = count;
    }
    HardLabels {
        upper,
        upper_count,
        lower,
        lower_count,
    }
}

impl HilrModel {
    /// Initial responsibilities and the posteriors of one M-step on them.
    pub fn init<R: Rng + ?Sized>(data: &Dataset, config: &HilrConfig, rng: &mut R) -> Result<(HilrModel, HierResponsibilities)> {
        if data.is_empty() {
            return Err(Error::arg("cannot initialize on an empty dataset"));
        }
        config.validate(data.dim_x(), data.dim_y())?;
        let spec = FeatureSpec::fit(data, config.degree, false)?;
        let t = Transformed::new(&spec, data)?;
        let base = HilrModel::with_default_priors(spec, &t, config)?;
        let labels = hard_labels(&t, config, rng);
        let resp = soften(&labels, t.len(), config.upper_truncation, config.lower_truncation);
        Ok((base.m_step_t(&t, &resp)?, resp))
    }

    /// Batch variational Bayes EM until the relative ELBO change drops below
    /// `config.tol` or `config.max_iters` updates have run.
    pub fn fit<R: Rng + ?Sized>(data: &Dataset, config: &HilrConfig, rng: &mut R) -> Result<(HilrModel, FitTrace)> {
        let mut best: Option<(HilrModel, FitTrace)> = None;
        for _ in 0..config.restarts.max(1) {
            let (model, resp) = Self::init(data, config, rng)?;
            let t = model.transform(data)?;
            let (model, _, trace) = model.run_vbem(&t, resp, config)?;
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

    /// Alternate E and M steps starting from a model already updated with `resp`.
    pub(crate) fn run_vbem(
        self,
        t: &Transformed,
        mut resp: HierResponsibilities,
        config: &HilrConfig,
    ) -> Result<(HilrModel, HierResponsibilities, FitTrace)> {
        let mut model = self;
        let mut trace = FitTrace::default();
        let mut log_rho = model.log_rho(t)?;
        let mut elbo = model.elbo_from_log_rho(&log_rho, &resp)?;
        trace.push(elbo, count_active(&resp.upper_mass(), t.len(), config.active_threshold));
        for it in 1..=config.max_iters {
            resp = model.responsibilities(&log_rho);
            model = model
                .m_step_t(t, &resp)
                .map_err(|e| Error::num(format!("iteration {it}: {e}")))?;
            log_rho = model.log_rho(t).map_err(|e| Error::num(format!("iteration {it}: {e}")))?;
            let next = model.elbo_from_log_rho(&log_rho, &resp)?;
            trace.push(next, count_active(&resp.upper_mass(), t.len(), config.active_threshold));
            trace.iterations = it;
            let change = (next - elbo).abs();
            elbo = next;
            if change <= config.tol * elbo.abs() {
                trace.converged = true;
                break;
            }
        }
        Ok((model, resp, trace))
    }
}
