//! Synthetic regression problems. Every generator is deterministic given the
//! random source.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Dataset;
use crate::error::{Error, Result};

/// `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Noise standard deviation of the heteroscedastic sinc problem.
pub fn sinc_sigma(x: f64) -> f64 {
    0.05 + 0.2 * (1.0 + (2.0 * x).sin()) / (1.0 + (-0.2 * x).exp())
}

/// Three-level step function on `[-3, 3]`.
pub fn step_fn(x: f64) -> f64 {
    if x < -1.0 {
        -1.0
    } else if x < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Two cubic pieces joined at zero.
pub fn cubics_fn(x: f64) -> f64 {
    if x < 0.0 {
        let s = x + 1.0;
        s * s * s - s
    } else {
        let s = x - 1.0;
        1.0 - s * s * s + 0.5 * s
    }
}

/// Linear chirp on `t ∈ [0, 3]`.
pub fn chirp_fn(t: f64) -> f64 {
    (2.0 * PI * (0.25 + 0.75 * t) * t).sin()
}

/// Unit triangle wave with period 2, zero at even abscissae and 1 at odd ones.
pub fn triangle_fn(x: f64) -> f64 {
    1.0 - ((x.rem_euclid(2.0)) - 1.0).abs()
}

/// Segment slopes and intercepts of the piecewise-linear problem on `[-3, 3]`.
const PIECEWISE: [(f64, f64); 3] = [(1.5, 3.0), (-1.0, 0.5), (2.0, -2.5)];

/// Continuous three-segment piecewise-linear function on `[-3, 3]`.
pub fn piecewise_linear_fn(x: f64) -> f64 {
    let seg = if x < -1.0 {
        0
    } else if x < 1.0 {
        1
    } else {
        2
    };
    let (a, b) = PIECEWISE[seg];
    a * x + b
}

/// Forward map of the inverse problem: `x = y + 0.3 sin(2πy)`.
pub fn inverse_forward(y: f64) -> f64 {
    y + 0.3 * (2.0 * PI * y).sin()
}

/// All `y ∈ [0, 1]` with `inverse_forward(y) = x`.
pub fn inverse_branches(x: f64) -> Vec<f64> {
    let f = |y: f64| inverse_forward(y) - x;
    let grid = 2000;
    let mut roots = Vec::new();
    let mut prev_y = 0.0;
    let mut prev_f = f(0.0);
    if prev_f == 0.0 {
        roots.push(0.0);
    }
    for i in 1..=grid {
        let y = i as f64 / grid as f64;
        let fy = f(y);
        if fy == 0.0 {
            roots.push(y);
        } else if prev_f * fy < 0.0 {
            let (mut lo, mut hi) = (prev_y, y);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_y = y;
        prev_f = fy;
    }
    roots
}

/// Named synthetic problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    SincHetero,
    GapSine,
    Steps,
    Cubics,
    Chirp,
    Triangle,
    InverseMapping,
    PiecewiseLinear,
}

impl Generator {
    pub const ALL: [Generator; 8] = [
        Generator::SincHetero,
        Generator::GapSine,
        Generator::Steps,
        Generator::Cubics,
        Generator::Chirp,
        Generator::Triangle,
        Generator::InverseMapping,
        Generator::PiecewiseLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::SincHetero => "sinc-hetero",
            Generator::GapSine => "gap-sine",
            Generator::Steps => "steps",
            Generator::Cubics => "cubics",
            Generator::Chirp => "chirp",
            Generator::Triangle => "triangle",
            Generator::InverseMapping => "inverse-mapping",
            Generator::PiecewiseLinear => "piecewise-linear",
        }
    }

    pub fn generate<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Result<Dataset> {
        match self {
            Generator::SincHetero => sinc_hetero(n, rng),
            Generator::GapSine => gap_sine(n, rng),
            Generator::Steps => steps(n, rng),
            Generator::Cubics => cubics(n, rng),
            Generator::Chirp => chirp(n, rng),
            Generator::Triangle => triangle(n, rng),
            Generator::InverseMapping => inverse_mapping(n, rng),
            Generator::PiecewiseLinear => piecewise_linear(n, rng),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('_', "-");
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == key)
            .ok_or_else(|| Error::arg(format!("unknown generator {s:?}")))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("generator needs n >= 1"));
    }
    Ok(())
}

fn build<R, X, F>(n: usize, rng: &mut R, sample_x: X, f: F, noise: f64, name: &str) -> Result<Dataset>
where
    R: Rng + ?Sized,
    X: Fn(&mut R) -> f64,
    F: Fn(f64) -> f64,
{
    check_n(n)?;
    let normal = Normal::new(0.0, noise).expect("valid noise");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = sample_x(rng);
        x.push(xi);
        y.push(f(xi) + normal.sample(rng));
    }
    Dataset::new(DMatrix::from_vec(n, 1, x), DMatrix::from_vec(n, 1, y), name)
}

fn uniform<R: Rng + ?Sized>(lo: f64, hi: f64) -> impl Fn(&mut R) -> f64 {
    let u = Uniform::new(lo, hi).expect("valid range");
    move |rng: &mut R| u.sample(rng)
}

/// `y = sinc(x) + N(0, σ(x)²)`, `x ~ U[-10, 10]`.
pub fn sinc_hetero<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    check_n(n)?;
    let ux = Uniform::new(-10.0, 10.0).expect("valid range");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = ux.sample(rng);
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        x.push(xi);
        y.push(sinc(xi) + sinc_sigma(xi) * e);
    }
    Dataset::new(DMatrix::from_vec(n, 1, x), DMatrix::from_vec(n, 1, y), "sinc-hetero")
}

/// `y = sin(x) + N(0, 0.1²)` with `x` drawn from `[0,2] ∪ [4,6] ∪ [8,10]`.
pub fn gap_sine<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    let sample = |rng: &mut R| {
        let piece = rng.random_range(0..3) as f64;
        4.0 * piece + rng.random_range(0.0..2.0)
    };
    build(n, rng, sample, f64::sin, 0.1, "gap-sine")
}

pub fn steps<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    build(n, rng, uniform(-3.0, 3.0), step_fn, 0.05, "steps")
}

pub fn cubics<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    build(n, rng, uniform(-2.0, 2.0), cubics_fn, 0.1, "cubics")
}

/// Chirp samples sorted by `t`, so contiguous batches cover successive time windows.
pub fn chirp<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    let d = build(n, rng, uniform(0.0, 3.0), chirp_fn, 0.1, "chirp")?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d.x[(a, 0)].total_cmp(&d.x[(b, 0)]));
    Ok(d.select(&idx))
}

pub fn triangle<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    build(n, rng, uniform(0.0, 6.0), triangle_fn, 0.05, "triangle")
}

/// Inputs cluster around the segment midpoints `-2, 0, 2` (normal with
/// standard deviation 0.3, truncated to the segment), so each segment carries
/// a single Gaussian-shaped input density.
pub fn piecewise_linear<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    let spread = Normal::new(0.0, 0.3).expect("valid spread");
    let sample = move |rng: &mut R| {
        let centre = -2.0 + 2.0 * rng.random_range(0..3) as f64;
        loop {
            let x = centre + spread.sample(rng);
            if (x - centre).abs() < 1.0 {
                return x;
            }
        }
    };
    build(n, rng, sample, piecewise_linear_fn, 0.1, "piecewise-linear")
}

/// `y ~ U[0,1]`, `x = y + 0.3 sin(2πy) + N(0, 0.05²)`; the dataset maps `x → y`.
pub fn inverse_mapping<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    check_n(n)?;
    let normal = Normal::new(0.0, 0.05).expect("valid noise");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let yi: f64 = rng.random_range(0.0..1.0);
        x.push(inverse_forward(yi) + normal.sample(rng));
        y.push(yi);
    }
    Dataset::new(DMatrix::from_vec(n, 1, x), DMatrix::from_vec(n, 1, y), "inverse-mapping")
}
