//! Conjugate building blocks: normal-Wishart, matrix-normal-Wishart and
//! truncated stick-breaking posteriors, plus Student-t predictives.

mod gaussian_mean;
mod matrix_normal_wishart;
mod normal_wishart;
mod sticks;
mod student_t;
pub mod wishart;

pub use gaussian_mean::GaussianMeanParams;
pub use matrix_normal_wishart::{
    mnw_update, predictive_scale_factor, MatrixNormalWishartParams, MnwExpectations, MnwNatural, MnwStats,
};
pub use normal_wishart::{nw_update, NormalWishartParams, NwExpectations, NwNatural, NwStats};
pub use sticks::{gem_sample, stick_update, TruncatedStickBreaking};
pub use student_t::{DofConvention, StudentT};
