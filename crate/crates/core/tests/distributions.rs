use approx::assert_relative_eq;
use dplr_core::distributions::{
    gem_sample, mnw_update, nw_update, predictive_scale_factor, stick_update, DofConvention, MatrixNormalWishartParams,
    NormalWishartParams, StudentT, TruncatedStickBreaking,
};
use dplr_core::linalg;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::digamma;

fn spd(d: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |i, j| entries[(i * d + j) % entries.len()]);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn log_normal(x: &DVector<f64>, mean: &DVector<f64>, prec: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    0.5 * linalg::spd_log_det(prec, "precision").unwrap()
        - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * linalg::quad_form(prec, &diff)
}

fn nw_prior_2d() -> NormalWishartParams {
    NormalWishartParams::new(
        DVector::from_vec(vec![0.3, -0.2]),
        0.7,
        DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]),
        3.5,
    )
    .unwrap()
}

fn mnw_prior() -> MatrixNormalWishartParams {
    MatrixNormalWishartParams::new(
        DMatrix::from_row_slice(2, 2, &[0.5, -0.4, 0.1, 0.9]),
        DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.9]),
        DMatrix::from_row_slice(2, 2, &[0.7, -0.1, -0.1, 1.1]),
        4.0,
    )
    .unwrap()
}

#[test]
fn nw_update_hand_example() {
    let prior = NormalWishartParams::new(DVector::zeros(1), 1.0, DMatrix::identity(1, 1), 1.0).unwrap();
    let post = nw_update(&prior, &DMatrix::from_element(1, 1, 2.0), &[1.0]).unwrap();
    assert_relative_eq!(post.kappa, 2.0, epsilon = 1e-14);
    assert_relative_eq!(post.m[0], 1.0, epsilon = 1e-14);
    assert_relative_eq!(post.nu, 2.0, epsilon = 1e-14);
    assert_relative_eq!(post.psi[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
}

#[test]
fn mnw_update_hand_example() {
    let prior =
        MatrixNormalWishartParams::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1.0)
            .unwrap();
    let post = mnw_update(&prior, &DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 2.0), &[1.0]).unwrap();
    assert_relative_eq!(post.k[(0, 0)], 2.0, epsilon = 1e-14);
    assert_relative_eq!(post.m[(0, 0)], 1.0, epsilon = 1e-14);
    assert_relative_eq!(post.eta, 2.0, epsilon = 1e-14);
    assert_relative_eq!(post.phi[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
}

#[test]
fn stick_update_hand_examples() {
    let s = stick_update(1.0, &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!((s.gamma, s.alpha), (vec![1.0; 3], vec![1.0; 3]));
    let s = stick_update(1.0, &[2.0, 1.0, 1.0]).unwrap();
    assert_eq!((s.gamma, s.alpha), (vec![3.0, 2.0, 2.0], vec![3.0, 2.0, 1.0]));
    let s = stick_update(5.0, &[10.0, 0.0]).unwrap();
    assert_eq!((s.gamma, s.alpha), (vec![11.0, 1.0], vec![5.0, 5.0]));
    assert!(stick_update(1.0, &[f64::NAN]).is_err());
}

#[test]
fn expected_log_sticks_examples() {
    let (s, _) = TruncatedStickBreaking::new(vec![1.0, 3.0], vec![1.0, 1.0]).unwrap().expected_log_sticks();
    assert_relative_eq!(s[0], -1.0, epsilon = 1e-12);
    assert_relative_eq!(s[1], -1.0 / 3.0, epsilon = 1e-12);
    let (s, t) = TruncatedStickBreaking::new(vec![2.7], vec![2.7]).unwrap().expected_log_sticks();
    assert_relative_eq!(s[0], t[0], epsilon = 1e-14);
}

#[test]
fn predictive_examples() {
    let nw = NormalWishartParams::new(DVector::zeros(1), 1.0, DMatrix::identity(1, 1), 1.0).unwrap();
    let t = nw.predictive(DofConvention::NuPlusOne);
    assert_relative_eq!(t.loc[0], 0.0);
    assert_relative_eq!(t.precision[(0, 0)], 0.5, epsilon = 1e-14);
    assert_relative_eq!(t.dof, 2.0);

    let mnw = MatrixNormalWishartParams::new(
        DMatrix::from_row_slice(1, 2, &[2.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        1.0,
    )
    .unwrap();
    let t = mnw.predictive(&DVector::from_vec(vec![3.0, 1.0]), DofConvention::NuPlusOne).unwrap();
    assert_relative_eq!(t.loc[0], 7.0, epsilon = 1e-14);
    let a = predictive_scale_factor(&DMatrix::identity(2, 2), &DVector::from_vec(vec![0.0, 1.0]));
    assert_relative_eq!(a, 0.5, epsilon = 1e-15);
}

#[test]
fn student_t_integrates_to_one() {
    // Tails beyond ±L are added analytically through the regularized incomplete beta.
    for (loc, prec, dof) in [(0.0, 0.5, 2.0), (1.3, 2.0, 5.0), (-0.4, 0.1, 30.0), (0.0, 1.0, 1.0)] {
        let t = StudentT::new(DVector::from_element(1, loc), DMatrix::from_element(1, 1, prec), dof).unwrap();
        let scale = 1.0 / f64::sqrt(prec);
        let half = 60.0 * scale;
        let n = 200_000;
        let h = 2.0 * half / n as f64;
        let f = |x: f64| t.logpdf(&DVector::from_element(1, x)).exp();
        // composite Simpson
        let mut s = f(loc - half) + f(loc + half);
        for i in 1..n {
            let x = loc - half + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        let inner = s * h / 3.0;
        let z = half / scale;
        let tail = statrs::function::beta::beta_reg(dof / 2.0, 0.5, dof / (dof + z * z));
        assert!((inner + tail - 1.0).abs() < 1e-6, "dof {dof}: {}", inner + tail);
    }
}

#[test]
fn nw_expected_loglik_matches_monte_carlo() {
    let nw = nw_prior_2d();
    let x = DVector::from_vec(vec![0.9, -0.6]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..200_000)
        .map(|_| {
            let (mu, lambda) = nw.sample(&mut rng);
            log_normal(&x, &mu, &lambda)
        })
        .collect();
    let (mean, se) = mean_and_se(&draws);
    let exact = nw.expected_loglik(&x).unwrap();
    assert!((mean - exact).abs() < 3.0 * se, "mc {mean} ± {se}, exact {exact}");
}

#[test]
fn mnw_expected_loglik_matches_monte_carlo() {
    let mnw = mnw_prior();
    let u = DVector::from_vec(vec![0.4, 1.0]);
    let y = DVector::from_vec(vec![-0.3, 1.2]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws: Vec<f64> = (0..200_000)
        .map(|_| {
            let (a, v) = mnw.sample(&mut rng);
            log_normal(&y, &(&a * &u), &v)
        })
        .collect();
    let (mean, se) = mean_and_se(&draws);
    let exact = mnw.expected_loglik(&u, &y).unwrap();
    assert!((mean - exact).abs() < 3.0 * se, "mc {mean} ± {se}, exact {exact}");
}

#[test]
fn nw_sample_mean_matches_m() {
    let nw = nw_prior_2d();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mus: Vec<DVector<f64>> = (0..100_000).map(|_| nw.sample(&mut rng).0).collect();
    for j in 0..2 {
        let comp: Vec<f64> = mus.iter().map(|m| m[j]).collect();
        let (mean, se) = mean_and_se(&comp);
        assert!((mean - nw.m[j]).abs() < 3.0 * se, "dim {j}: {mean} ± {se}");
    }
}

#[test]
fn wishart_expected_log_det_matches_digamma_form() {
    let nw = nw_prior_2d();
    let d = 2;
    let expected: f64 = (1..=d).map(|i| digamma((nw.nu + 1.0 - i as f64) / 2.0)).sum::<f64>()
        + d as f64 * 2f64.ln()
        + linalg::spd_log_det(&nw.psi, "psi").unwrap();
    assert_relative_eq!(nw.expected_log_det().unwrap(), expected, epsilon = 1e-12);
}

#[test]
fn nw_expected_loglik_concentration_limit() {
    let nw = NormalWishartParams::new(
        DVector::from_vec(vec![0.2, 0.1]),
        1e9,
        DMatrix::from_row_slice(2, 2, &[2e-8, 0.0, 0.0, 1e-8]),
        1e8,
    )
    .unwrap();
    let x = DVector::from_vec(vec![0.5, -0.3]);
    let limit = log_normal(&x, &nw.m, &(&nw.psi * nw.nu));
    assert!((nw.expected_loglik(&x).unwrap() - limit).abs() < 1e-3);
}

#[test]
fn mnw_expected_loglik_rotation_invariant() {
    let mnw = mnw_prior();
    let u = DVector::from_vec(vec![0.4, 1.0]);
    let y = DVector::from_vec(vec![-0.3, 1.2]);
    let th: f64 = 0.7;
    let q = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let rotated = MatrixNormalWishartParams::new(&q * &mnw.m, mnw.k.clone(), &q * &mnw.phi * q.transpose(), mnw.eta).unwrap();
    assert_relative_eq!(
        mnw.expected_loglik(&u, &y).unwrap(),
        rotated.expected_loglik(&u, &(&q * &y)).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn gem_small_concentration_favours_first_stick() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = gem_sample(&mut rng, 1e-3, 5).unwrap();
    assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    assert!(w[0] > 0.99);
}

#[test]
fn student_t_gaussian_limit() {
    let t = StudentT::new(DVector::zeros(1), DMatrix::identity(1, 1), 1e6).unwrap();
    assert!((t.logpdf(&DVector::zeros(1)) + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-4);
}

fn weights_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..3.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_weights_are_neutral(points in proptest::collection::vec(-5.0..5.0f64, 8)) {
        let x = DMatrix::from_row_slice(4, 2, &points);
        let nw = nw_prior_2d();
        prop_assert_eq!(nw_update(&nw, &x, &[0.0; 4]).unwrap(), nw);
        let mnw = mnw_prior();
        prop_assert_eq!(mnw_update(&mnw, &x, &x, &[0.0; 4]).unwrap(), mnw);
        let sb = TruncatedStickBreaking::prior(2.0, 4).unwrap();
        prop_assert_eq!(sb.posterior(&[0.0; 4]).unwrap(), sb);
    }

    #[test]
    fn integer_weights_equal_replication(points in proptest::collection::vec(-3.0..3.0f64, 6), reps in proptest::collection::vec(0usize..4, 3)) {
        let x = DMatrix::from_row_slice(3, 2, &points);
        let y = DMatrix::from_fn(3, 2, |i, j| points[(i * 2 + j + 1) % 6] * 0.7 - 0.2);
        let w: Vec<f64> = reps.iter().map(|r| *r as f64).collect();
        let idx: Vec<usize> = reps.iter().enumerate().flat_map(|(i, r)| std::iter::repeat_n(i, *r)).collect();
        let xr = x.select_rows(&idx);
        let yr = y.select_rows(&idx);
        let ones = vec![1.0; idx.len()];
        let nw = nw_prior_2d();
        let a = nw_update(&nw, &x, &w).unwrap();
        let b = nw_update(&nw, &xr, &ones).unwrap();
        prop_assert!((a.m - b.m).abs().max() < 1e-12);
        prop_assert!((a.psi - b.psi).abs().max() < 1e-12);
        prop_assert!((a.kappa - b.kappa).abs() < 1e-12 && (a.nu - b.nu).abs() < 1e-12);
        let mnw = mnw_prior();
        let a = mnw_update(&mnw, &x, &y, &w).unwrap();
        let b = mnw_update(&mnw, &xr, &yr, &ones).unwrap();
        prop_assert!((a.m - b.m).abs().max() < 1e-12);
        prop_assert!((a.k - b.k).abs().max() < 1e-12);
        prop_assert!((a.phi - b.phi).abs().max() < 1e-12);
        let mut counts = vec![0.0; 3];
        for i in &idx { counts[*i] += 1.0; }
        prop_assert_eq!(stick_update(1.5, &w).unwrap(), stick_update(1.5, &counts).unwrap());
    }

    #[test]
    fn sherman_morrison_identity(entries in proptest::collection::vec(-2.0..2.0f64, 9), u in proptest::collection::vec(-3.0..3.0f64, 3)) {
        let l = spd(3, &entries);
        let u = DVector::from_vec(u);
        let direct = 1.0 - linalg::quad_form(&linalg::spd_inverse(&(&l + &u * u.transpose()), "l").unwrap(), &u);
        let stable = predictive_scale_factor(&linalg::spd_inverse(&l, "l").unwrap(), &u);
        prop_assert!(((direct - stable) / stable).abs() < 1e-10);
        prop_assert!(stable > 0.0 && stable <= 1.0);
    }

    #[test]
    fn expected_log_weights_are_a_sub_distribution(g in proptest::collection::vec(0.05..20.0f64, 5), a in proptest::collection::vec(0.05..20.0f64, 5)) {
        let sb = TruncatedStickBreaking::new(g, a).unwrap();
        let total: f64 = sb.expected_log_weights().iter().map(|v| v.exp()).sum();
        prop_assert!(total <= 1.0 + 1e-12);
        let (s, t) = sb.expected_log_sticks();
        prop_assert!(s.iter().chain(&t).all(|v| *v <= 0.0));
        prop_assert!((sb.expected_weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn updates_stay_valid(points in proptest::collection::vec(-50.0..50.0f64, 10), w in weights_strategy(5)) {
        let x = DMatrix::from_row_slice(5, 2, &points);
        prop_assert!(nw_update(&nw_prior_2d(), &x, &w).unwrap().validate().is_ok());
        prop_assert!(mnw_update(&mnw_prior(), &x, &x.map(|v| v.sin()), &w).unwrap().validate().is_ok());
    }
}
