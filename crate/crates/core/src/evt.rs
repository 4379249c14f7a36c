//! Extreme-value calibration for maxima of block-extrema differences.
//!
//! Under the null of no jumps, a normalized difference of adjacent block
//! minima behaves like `|V| - |V'|` for independent standard normals, whose
//! density on the real line is
//!
//! ```text
//! g(x) = exp(-x^2 / 4) * erfc(|x| / 2) / sqrt(pi)
//! ```
//!
//! The maximum of `N` absolute values is standardized with
//! `a_N = 1 / sqrt(2 log 2N)` and
//! `b_N = sqrt(2 log 2N) - log(pi log 2N) / sqrt(2 log 2N)` and compared with
//! the standard Gumbel law `exp(-exp(-x))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper integration limit offset for survival integrals; the remaining tail
/// is below `1e-30`.
const TAIL_CUTOFF: f64 = 12.0;
const SURVIVAL_TOL: f64 = 1e-10;

pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// The `(1 - alpha)` quantile of the standard Gumbel law.
pub fn gumbel_quantile(alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    Ok(-(-(1.0 - alpha).ln()).ln())
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "level {alpha} outside (0, 1)"
        )))
    }
}

/// Normalizing sequences for the maximum of `n` i.i.d. draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelCalibration {
    pub n: usize,
    /// Scale `a_N`.
    pub scale: f64,
    /// Location `b_N`.
    pub location: f64,
    /// `B = b_N / a_N`, the centering on the rate-scaled statistic.
    pub centering: f64,
}

impl GumbelCalibration {
    /// Sequences for `max_i ||V_i| - |V'_i||` over `n` pairs (two-sided tail,
    /// hence `log 2n`).
    pub fn absolute(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("need at least one difference".into()));
        }
        Ok(Self::from_log(n, (2.0 * n as f64).ln()))
    }

    /// Sequences for `max_i (|V_i| - |V'_i|)` over `n` pairs (one tail).
    pub fn one_sided(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two draws".into()));
        }
        Ok(Self::from_log(n, (n as f64).ln()))
    }

    fn from_log(n: usize, log_n: f64) -> Self {
        let root = (2.0 * log_n).sqrt();
        let location = root - (PI * log_n).ln() / root;
        Self {
            n,
            scale: 1.0 / root,
            location,
            centering: 2.0 * log_n - (PI * log_n).ln(),
        }
    }

    /// `(x - b_N) / a_N`.
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.location) / self.scale
    }

    /// The value of the maximum at which the standardized maximum equals `z`.
    pub fn unstandardize(&self, z: f64) -> f64 {
        self.location + self.scale * z
    }
}

/// `B_n` of the global test for a grid with `block_count` blocks.
pub fn global_centering(block_count: usize) -> Result<f64> {
    if block_count < 3 {
        return Err(Error::InvalidParameter(format!(
            "global centering needs at least 3 blocks, got {block_count}"
        )));
    }
    Ok(GumbelCalibration::absolute(block_count - 1)?.centering)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Density of `|V| - |V'|` for independent standard normals.
pub fn halfnorm_diff_density(x: f64) -> f64 {
    let x = x.abs();
    (-x * x / 4.0).exp() * erfc(x / 2.0) / PI.sqrt()
}

/// `P(|V| - |V'| > x)` for `x >= 0`, by adaptive quadrature.
pub fn halfnorm_diff_survival(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "survival argument {x} must be nonnegative"
        )));
    }
    Ok(integrate(
        halfnorm_diff_density,
        x,
        x + TAIL_CUTOFF,
        SURVIVAL_TOL,
    ))
}

/// The `(1 - alpha)` quantile of `||V| - |V'||`, solving `2 G(q) = alpha` by
/// bisection.
pub fn local_quantile(alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Ok(0.0);
    }
    check_level(alpha)?;
    let target = alpha / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while halfnorm_diff_survival(hi)? > target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if halfnorm_diff_survival(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, tol, depth)) = stack.pop() {
        let (value, err) = kronrod15(&f, lo, hi);
        if err <= tol || depth >= 40 {
            total += value;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tol, depth + 1));
            stack.push((mid, hi, 0.5 * tol, depth + 1));
        }
    }
    total
}
