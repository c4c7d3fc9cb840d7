mod common;

use common::{linear, max_abs_diff};
use dplr_core::data::{generators, Dataset};
use dplr_core::distributions::{mnw_update, DofConvention, TruncatedStickBreaking};
use dplr_core::features::{FeatureSpec, Transformed};
use dplr_core::hilr::{activation_block_prior, regression_block_prior, HierResponsibilities, HilrConfig, HilrInit, HilrModel};
use dplr_core::predictive::PredictionMode;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config(m: usize, k: usize) -> HilrConfig {
    HilrConfig {
        upper_truncation: m,
        lower_truncation: k,
        ..HilrConfig::default()
    }
}

fn base_model(data: &Dataset, cfg: &HilrConfig) -> (HilrModel, Transformed) {
    let spec = FeatureSpec::fit(data, cfg.degree, false).unwrap();
    let t = Transformed::new(&spec, data).unwrap();
    (HilrModel::with_default_priors(spec, &t, cfg).unwrap(), t)
}

fn uniform_resp(n: usize, m: usize, k: usize) -> HierResponsibilities {
    HierResponsibilities {
        g: DMatrix::from_element(n, m, 1.0 / m as f64),
        r: vec![DMatrix::from_element(n, k, 1.0 / k as f64); m],
    }
}

/// Two outputs sharing inputs: `y = (x, −2x) + noise`.
fn two_outputs(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let y = DMatrix::from_fn(n, 2, |i, j| {
        let slope = if j == 0 { 1.0 } else { -2.0 };
        slope * x[i] + 0.1 * r.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(DMatrix::from_vec(n, 1, x), y, "two-outputs").unwrap()
}

// --- priors and views ---------------------------------------------------

#[test]
fn prior_views_recover_hyperparameters() {
    let (lambda0, kappa0, k0, rho0, theta0) = (0.5, 0.2, 0.3, 0.7, 0.4);
    let act = activation_block_prior(&DVector::from_vec(vec![1.0, -1.0]), lambda0, kappa0, DMatrix::identity(2, 2), 3.0, 3).unwrap();
    let reg = regression_block_prior(
        &DMatrix::zeros(1, 2),
        &(DMatrix::identity(2, 2) * k0),
        &DVector::from_element(1, theta0),
        rho0,
        DMatrix::identity(1, 1),
        2.0,
        3,
    )
    .unwrap();
    let upper = TruncatedStickBreaking::prior(1.0, 1).unwrap();
    let lower = TruncatedStickBreaking::prior(1.0, 3).unwrap();
    let model = HilrModel::from_parts(
        FeatureSpec::identity(2, 1, 1, false).unwrap(),
        1.0,
        1.0,
        DofConvention::NuPlusOne,
        upper.clone(),
        upper,
        lower.clone(),
        vec![lower],
        act.clone(),
        vec![act],
        reg.clone(),
        vec![reg],
    )
    .unwrap();
    let meta = model.meta_activation(0).unwrap();
    assert!((meta.kappa - lambda0).abs() < 1e-12);
    assert_eq!(meta.m.as_slice(), &[1.0, -1.0]);
    // μ_k = τ + ε with independent precisions λ₀Λ and κ₀Λ.
    let centre_prec = 1.0 / (1.0 / lambda0 + 1.0 / kappa0);
    for c in model.centers(0).unwrap() {
        assert!((c.rho - centre_prec).abs() < 1e-12);
        assert_eq!(c.theta.as_slice(), &[1.0, -1.0]);
    }
    let slopes = model.slopes(0).unwrap();
    assert!(max_abs_diff(&slopes.k, &(DMatrix::identity(2, 2) * k0)) < 1e-12);
    for b in model.biases(0).unwrap() {
        assert!((b.rho - rho0).abs() < 1e-12);
        assert!((b.theta[0] - theta0).abs() < 1e-15);
    }
}

#[test]
fn bias_augmented_spec_is_rejected() {
    let data = linear(40, &mut rng(1));
    let spec = FeatureSpec::fit(&data, 1, true).unwrap();
    let t = Transformed::new(&spec, &data).unwrap();
    assert!(HilrModel::with_default_priors(spec, &t, &config(2, 2)).is_err());
}

// --- single cell ---------------------------------------------------------

#[test]
fn single_cell_has_unit_weights() {
    let data = linear(100, &mut rng(2));
    let (model, resp) = HilrModel::init(&data, &config(1, 1), &mut rng(3)).unwrap();
    assert!(resp.g.iter().chain(resp.r[0].iter()).all(|v| *v == 1.0));
    let post = model.e_step(&data).unwrap();
    assert!(post.g.iter().chain(post.r[0].iter()).all(|v| (*v - 1.0).abs() < 1e-15));
    let w = model.activation_weights(&[0.3]).unwrap();
    assert_eq!(w.shape(), (1, 1));
    assert_eq!(w[(0, 0)], 1.0);
}

#[test]
fn single_cell_equals_linear_regression_with_bias_column() {
    let data = linear(150, &mut rng(4));
    let cfg = config(1, 1);
    let (base, t) = base_model(&data, &cfg);
    let post = base.m_step(&data, &uniform_resp(150, 1, 1)).unwrap();
    let ones = vec![1.0; 150];
    let u1 = t.u.clone().insert_column(t.u.ncols(), 1.0);
    let reg = mnw_update(base.regression_block_prior(), &u1, &t.y, &ones).unwrap();
    let got = &post.regression_blocks()[0];
    assert!(max_abs_diff(&got.m, &reg.m) < 1e-10);
    assert!(max_abs_diff(&got.k, &reg.k) < 1e-9);
    assert!(max_abs_diff(&got.phi, &reg.phi) < 1e-10);
    assert_eq!(got.eta, reg.eta);
    let e1 = DMatrix::from_fn(150, 2, |_, j| j as f64);
    let act = mnw_update(base.activation_block_prior(), &e1, &t.xg, &ones).unwrap();
    let got = &post.activation_blocks()[0];
    assert!(max_abs_diff(&got.m, &act.m) < 1e-10);
    assert!(max_abs_diff(&got.k, &act.k) < 1e-9);
    assert!(max_abs_diff(&got.phi, &act.phi) < 1e-10);
}

#[test]
fn single_cell_fit_recovers_line() {
    let data = linear(300, &mut rng(5));
    let (model, _) = HilrModel::fit(&data, &config(1, 1), &mut rng(6)).unwrap();
    for x in [-1.5, 0.0, 1.2] {
        let p = model.predict(&[x], PredictionMode::Mean).unwrap();
        assert!((p.mean[0] - (0.8 * x - 0.3)).abs() < 0.05, "{x}: {}", p.mean[0]);
    }
}

// --- responsibilities and sticks ----------------------------------------

#[test]
fn identical_upper_components_split_evenly() {
    let data = generators::cubics(60, &mut rng(7)).unwrap();
    let (base, _) = base_model(&data, &config(2, 3));
    let resp = base.e_step(&data).unwrap();
    assert!(resp.g.iter().all(|v| (v - 0.5).abs() < 1e-12));
    assert!(resp.max_row_error() < 1e-12);
}

#[test]
fn upper_sticks_follow_upper_mass() {
    let data = linear(4, &mut rng(8));
    let (base, _) = base_model(&data, &config(2, 2));
    let resp = HierResponsibilities {
        g: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
        r: vec![
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.3, 0.7]),
            DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 0.0]),
        ],
    };
    let post = base.m_step(&data, &resp).unwrap();
    assert_eq!(post.upper_sticks().gamma, vec![4.0, 2.0]);
    assert_eq!(post.upper_sticks().alpha, vec![2.0, 1.0]);
    // N_0k = (1.5, 1.5), N_1k = (1, 0); the 0.3/0.7 row has g = 0.
    assert_eq!(post.lower_sticks()[0].gamma, vec![2.5, 2.5]);
    assert_eq!(post.lower_sticks()[0].alpha, vec![2.5, 1.0]);
    assert_eq!(post.lower_sticks()[1].gamma, vec![2.0, 1.0]);
    assert_eq!(post.lower_sticks()[1].alpha, vec![1.0, 1.0]);
}

#[test]
fn unused_upper_component_keeps_its_prior() {
    let data = generators::steps(80, &mut rng(9)).unwrap();
    let (base, _) = base_model(&data, &config(3, 2));
    let mut g = DMatrix::zeros(80, 3);
    for i in 0..80 {
        g[(i, i % 2)] = 1.0;
    }
    let resp = HierResponsibilities {
        g,
        r: vec![DMatrix::from_element(80, 2, 0.5); 3],
    };
    let post = base.m_step(&data, &resp).unwrap();
    assert_eq!(&post.activation_blocks()[2], base.activation_block_prior());
    assert_eq!(&post.regression_blocks()[2], base.regression_block_prior());
    assert_eq!(&post.lower_sticks()[2], base.lower_sticks_prior());
}

#[test]
fn init_is_deterministic_per_seed() {
    let data = generators::triangle(300, &mut rng(10)).unwrap();
    for init in [HilrInit::SlopeGroups, HilrInit::TwoStageKMeans] {
        let cfg = HilrConfig { init, ..config(4, 4) };
        let a = HilrModel::init(&data, &cfg, &mut rng(11)).unwrap();
        let b = HilrModel::init(&data, &cfg, &mut rng(11)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}

// --- shared parameters -----------------------------------------------------

#[test]
fn lower_components_share_slopes() {
    let data = generators::triangle(400, &mut rng(12)).unwrap();
    let (model, _) = HilrModel::fit(&data, &config(3, 4), &mut rng(13)).unwrap();
    let kt = model.lower_truncation();
    let y_scale = model.feature_spec().y_scale[0];
    for x in [0.5, 2.2, 4.9] {
        let mix = model.predictive_mixture(&[x]).unwrap();
        for m in 0..model.upper_truncation() {
            let c = &model.regression_blocks()[m].m;
            let du = model.feature_spec().dim_u();
            for k in 1..kt {
                let dloc = mix.components[m * kt + k].loc[0] - mix.components[m * kt].loc[0];
                let dbias = (c[(0, du + k)] - c[(0, du)]) * y_scale;
                assert!((dloc - dbias).abs() < 1e-10, "m {m} k {k}: {dloc} vs {dbias}");
            }
        }
    }
}

#[test]
fn lower_components_share_noise_precision() {
    let data = two_outputs(300, 14);
    let (model, _) = HilrModel::fit(&data, &config(2, 3), &mut rng(15)).unwrap();
    let kt = model.lower_truncation();
    let mix = model.predictive_mixture(&[0.4]).unwrap();
    for m in 0..2 {
        let p0 = &mix.components[m * kt].precision;
        for k in 1..kt {
            let pk = &mix.components[m * kt + k].precision;
            let ratio = pk[(0, 0)] / p0[(0, 0)];
            assert!(max_abs_diff(pk, &(p0 * ratio)) < 1e-10 * pk.abs().max());
        }
    }
}

// --- behaviour ---------------------------------------------------------------

#[test]
fn single_linear_function_uses_one_upper_component() {
    let data = linear(500, &mut rng(16));
    let (model, _) = HilrModel::fit(&data, &config(5, 5), &mut rng(17)).unwrap();
    let mass = model.e_step(&data).unwrap().upper_mass();
    let top = mass.iter().copied().fold(0.0, f64::max);
    assert!(top > 0.95 * 500.0, "{mass:?}");
    assert_eq!(model.active_upper(&data, 0.05).unwrap(), 1);
}

#[test]
fn elbo_never_decreases() {
    let data = generators::piecewise_linear(300, &mut rng(18)).unwrap();
    let (_, trace) = HilrModel::fit(&data, &config(4, 4), &mut rng(19)).unwrap();
    assert!(trace.elbo_per_iteration.len() >= 2);
    assert!(trace.is_monotone(1e-9), "worst drop {}", trace.worst_relative_drop());
}

#[test]
fn mode_prediction_reports_flattened_index() {
    let data = generators::triangle(300, &mut rng(20)).unwrap();
    let (model, _) = HilrModel::fit(&data, &config(3, 4), &mut rng(21)).unwrap();
    for x in [0.4, 1.5, 3.3] {
        let w = model.activation_weights(&[x]).unwrap();
        let (idx, best) = w.transpose().iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        let p = model.predict(&[x], PredictionMode::Mode).unwrap();
        assert_eq!(p.top_component, idx);
        assert!((p.top_weight - best).abs() < 1e-12);
    }
}

#[test]
fn json_round_trip_preserves_predictions() {
    let data = generators::triangle(200, &mut rng(22)).unwrap();
    let (model, _) = HilrModel::fit(&data, &config(3, 3), &mut rng(23)).unwrap();
    let back = HilrModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    for x in [0.1, 2.7, 5.5] {
        let a = model.predict(&[x], PredictionMode::Mean).unwrap();
        let b = back.predict(&[x], PredictionMode::Mean).unwrap();
        assert!((a.mean[0] - b.mean[0]).abs() < 1e-12);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hilr.json");
    model.save(&path).unwrap();
    assert_eq!(HilrModel::load(&path).unwrap(), model);
    let json = model.to_json().unwrap().replacen("\"hilr\"", "\"ilr\"", 1);
    assert!(HilrModel::from_json(&json).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn responsibilities_are_normalized(seed in 0u64..10_000, n in 10usize..60, m in 1usize..4, k in 1usize..4) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.abs() + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::new(DMatrix::from_vec(n, 1, x), DMatrix::from_vec(n, 1, y), "p").unwrap();
        let (model, _) = HilrModel::init(&data, &config(m, k), &mut r).unwrap();
        let resp = model.e_step(&data).unwrap();
        prop_assert!(resp.max_row_error() < 1e-12);
        let joint = resp.joint();
        for row in joint.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let w = model.activation_weights(&[0.5]).unwrap();
        prop_assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_rows_do_not_change_the_update(seed in 0u64..10_000, extra in 1usize..10) {
        let mut r = rng(seed);
        let data = linear(30, &mut r);
        let cfg = config(2, 2);
        let (base, _) = base_model(&data, &cfg);
        let resp = uniform_resp(30, 2, 2);
        let a = base.m_step(&data, &resp).unwrap();
        let more = data.concat(&linear(extra, &mut r)).unwrap();
        let mut padded = uniform_resp(30 + extra, 2, 2);
        for i in 30..30 + extra {
            padded.g.row_mut(i).fill(0.0);
        }
        let b = base.m_step(&more, &padded).unwrap();
        for m in 0..2 {
            prop_assert!(max_abs_diff(&a.regression_blocks()[m].m, &b.regression_blocks()[m].m) < 1e-12);
            prop_assert!(max_abs_diff(&a.activation_blocks()[m].k, &b.activation_blocks()[m].k) < 1e-12);
            prop_assert!(max_abs_diff(&a.activation_blocks()[m].phi, &b.activation_blocks()[m].phi) < 1e-12);
        }
    }
}
