//! Tiny one-dimensional instances checked against values from
//! `tests/oracles/tiny_estep.py` (40-digit arithmetic, scalar closed forms).

use dplr_core::data::Dataset;
use dplr_core::distributions::{DofConvention, MatrixNormalWishartParams, NormalWishartParams, TruncatedStickBreaking};
use dplr_core::features::FeatureSpec;
use dplr_core::hilr::{activation_block_prior, regression_block_prior, HierResponsibilities, HilrModel};
use dplr_core::ilr::{IlrModel, Responsibilities};
use nalgebra::{DMatrix, DVector};

const TOL: f64 = 1e-10;

const ILR_R: [f64; 4] = [0.96483031711462534496, 0.035169682885374655039, 0.9999736776910835324, 0.00002632230891646759793];
const ILR_ELBO_ESTEP: f64 = -12.713553746819259577;
const ILR_ELBO_FIXED: f64 = -16.065367328962639729;

const HILR_G: [f64; 4] = [0.80533868547013015602, 0.19466131452986984398, 0.96776687923444100808, 0.032233120765558991915];
const HILR_R: [f64; 8] = [
    0.89453049707342459943,
    0.10546950292657540057,
    0.28510295212741591581,
    0.71489704787258408419,
    0.14170725766504774069,
    0.85829274233495225931,
    0.63475290241735485464,
    0.36524709758264514536,
];
const HILR_ELBO_ESTEP: f64 = -14.55043892862814938;
const HILR_ELBO_FIXED: f64 = -17.44764743128976477;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * b.abs().max(1.0)
}

fn sq(d: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, v)
}

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

fn s(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn tiny_ilr() -> (IlrModel, Dataset) {
    let nw = |m: f64, k: f64, p: f64, n: f64| NormalWishartParams::new(DVector::from_element(1, m), k, s(p), n).unwrap();
    let mnw = |m: &[f64], k: &[f64], p: f64, e: f64| MatrixNormalWishartParams::new(row(m), sq(2, k), s(p), e).unwrap();
    let model = IlrModel::from_parts(
        FeatureSpec::identity(1, 1, 1, true).unwrap(),
        1.0,
        DofConvention::NuPlusOne,
        TruncatedStickBreaking::prior(1.0, 2).unwrap(),
        TruncatedStickBreaking::new(vec![3.0, 1.5], vec![2.0, 1.0]).unwrap(),
        vec![nw(0.0, 0.5, 1.0, 2.0); 2],
        vec![nw(0.2, 2.5, 0.8, 4.0), nw(-0.7, 1.2, 1.5, 3.0)],
        vec![mnw(&[0.0, 0.0], &[0.5, 0.0, 0.0, 0.5], 1.0, 2.0); 2],
        vec![
            mnw(&[0.5, -0.1], &[3.0, 0.4, 0.4, 2.0], 0.6, 5.0),
            mnw(&[-1.2, 0.3], &[1.5, -0.2, -0.2, 1.0], 1.1, 3.5),
        ],
    )
    .unwrap();
    let data = Dataset::new(
        DMatrix::from_column_slice(2, 1, &[0.3, -1.1]),
        DMatrix::from_column_slice(2, 1, &[0.4, -0.9]),
        "tiny",
    )
    .unwrap();
    (model, data)
}

fn tiny_hilr() -> (HilrModel, Dataset) {
    let sticks = |g: [f64; 2], a: [f64; 2]| TruncatedStickBreaking::new(g.to_vec(), a.to_vec()).unwrap();
    let mnw = |m: &[f64], k: &[f64], p: f64, e: f64| MatrixNormalWishartParams::new(row(m), sq(3, k), s(p), e).unwrap();
    let model = HilrModel::from_parts(
        FeatureSpec::identity(1, 1, 1, false).unwrap(),
        1.0,
        1.0,
        DofConvention::NuPlusOne,
        TruncatedStickBreaking::prior(1.0, 2).unwrap(),
        sticks([2.5, 1.2], [1.5, 1.0]),
        TruncatedStickBreaking::prior(1.0, 2).unwrap(),
        vec![sticks([2.0, 1.3], [1.2, 0.9]), sticks([1.4, 2.2], [2.1, 1.1])],
        activation_block_prior(&DVector::zeros(1), 0.5, 0.3, s(1.0), 2.0, 2).unwrap(),
        vec![
            mnw(&[0.1, 0.4, -0.5], &[2.0, -0.3, -0.2, -0.3, 1.5, 0.1, -0.2, 0.1, 1.8], 0.9, 4.0),
            mnw(&[-0.2, -0.8, 0.6], &[1.7, -0.4, -0.1, -0.4, 2.2, 0.0, -0.1, 0.0, 1.3], 1.3, 3.2),
        ],
        regression_block_prior(&DMatrix::zeros(1, 1), &s(0.4), &DVector::zeros(1), 0.6, s(1.0), 2.0, 2).unwrap(),
        vec![
            mnw(&[0.7, 0.2, -0.3], &[2.5, 0.3, -0.2, 0.3, 1.2, 0.05, -0.2, 0.05, 1.6], 0.7, 4.5),
            mnw(&[-0.9, 0.5, 0.1], &[1.9, -0.1, 0.2, -0.1, 1.4, 0.0, 0.2, 0.0, 2.1], 1.2, 3.8),
        ],
    )
    .unwrap();
    let data = Dataset::new(
        DMatrix::from_column_slice(2, 1, &[0.25, -0.6]),
        DMatrix::from_column_slice(2, 1, &[0.5, -0.2]),
        "tiny",
    )
    .unwrap();
    (model, data)
}

#[test]
fn ilr_e_step_matches_oracle() {
    let (model, data) = tiny_ilr();
    let resp = model.e_step(&data).unwrap();
    for (got, want) in resp.r.transpose().iter().zip(ILR_R) {
        assert!(close(*got, want), "{got} vs {want}");
    }
}

#[test]
fn ilr_elbo_matches_oracle() {
    let (model, data) = tiny_ilr();
    let resp = model.e_step(&data).unwrap();
    let e = model.elbo(&data, &resp).unwrap();
    assert!(close(e, ILR_ELBO_ESTEP), "{e}");
    let fixed = Responsibilities {
        r: DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.8, 0.2]),
    };
    let e = model.elbo(&data, &fixed).unwrap();
    assert!(close(e, ILR_ELBO_FIXED), "{e}");
}

#[test]
fn hilr_e_step_matches_oracle() {
    let (model, data) = tiny_hilr();
    let resp = model.e_step(&data).unwrap();
    for (got, want) in resp.g.transpose().iter().zip(HILR_G) {
        assert!(close(*got, want), "g {got} vs {want}");
    }
    let r: Vec<f64> = resp.r.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect();
    for (got, want) in r.iter().zip(HILR_R) {
        assert!(close(*got, want), "r {got} vs {want}");
    }
}

#[test]
fn hilr_elbo_matches_oracle() {
    let (model, data) = tiny_hilr();
    let resp = model.e_step(&data).unwrap();
    let e = model.elbo(&data, &resp).unwrap();
    assert!(close(e, HILR_ELBO_ESTEP), "{e}");
    let fixed = HierResponsibilities {
        g: DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.25, 0.75]),
        r: vec![
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.1, 0.9]),
            DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.35, 0.65]),
        ],
    };
    let e = model.elbo(&data, &fixed).unwrap();
    assert!(close(e, HILR_ELBO_FIXED), "{e}");
}
