//! Wishart bookkeeping shared by the normal-Wishart and matrix-normal-Wishart
//! families. Convention: `W(Λ | Ψ, ν)` has mean `νΨ`.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::{digamma, ln_gamma};

/// Multivariate log-gamma `ln Γ_d(a)`.
pub fn ln_mvgamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * PI.ln()
        + (1..=d).map(|i| ln_gamma(a + (1.0 - i as f64) / 2.0)).sum::<f64>()
}

/// `E[ln |Λ|]` under `W(Ψ, ν)` given `ln |Ψ|`.
pub fn expected_log_det(log_det_scale: f64, nu: f64, d: usize) -> f64 {
    (1..=d).map(|i| digamma((nu + 1.0 - i as f64) / 2.0)).sum::<f64>()
        + d as f64 * LN_2
        + log_det_scale
}

/// Log normalizer `ln B(Ψ, ν)` of the Wishart density.
pub fn log_normalizer(log_det_scale: f64, nu: f64, d: usize) -> f64 {
    -0.5 * nu * log_det_scale - 0.5 * nu * d as f64 * LN_2 - ln_mvgamma(d, nu / 2.0)
}

/// `E_q[ln W(Λ | Ψ₀, ν₀)]` where `q` has `E[ln|Λ|] = e_log_det` and `E[Λ] = mean`.
pub fn cross_entropy_term(
    prior_scale_inv: &DMatrix<f64>,
    prior_log_det_scale: f64,
    prior_nu: f64,
    e_log_det: f64,
    mean: &DMatrix<f64>,
) -> f64 {
    let d = mean.nrows();
    let trace = prior_scale_inv.component_mul(mean).sum();
    log_normalizer(prior_log_det_scale, prior_nu, d) + 0.5 * (prior_nu - d as f64 - 1.0) * e_log_det
        - 0.5 * trace
}

/// Bartlett-decomposition draw from `W(Ψ, ν)` given the Cholesky factor of `Ψ`.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, scale_chol: &Cholesky<f64, Dyn>, nu: f64) -> DMatrix<f64> {
    let l = scale_chol.l();
    let d = l.nrows();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(nu - i as f64).expect("wishart degrees of freedom");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = l * a;
    crate::linalg::symmetrized(&la * la.transpose())
}
