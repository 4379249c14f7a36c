//! Spot volatility from squared differences of adjacent block extrema.
//!
//! For independent standard half-normals the difference `|V| - |V'|` has
//! variance `2 (pi - 2) / pi`, so a window average of `h^{-1} (m_r - m_{r-1})^2`
//! is rescaled by `pi / (2 (pi - 2))`. Windows can sit before the block
//! (usable online), around it, or after it. Differences touching an empty
//! block are skipped; with truncation, differences larger than
//! `u = beta * h^kappa` contribute zero but still count in the average.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::series::ExtremaSeries;

/// `pi / (2 (pi - 2))`.
pub const STANDARDIZATION: f64 = PI / (2.0 * (PI - 2.0));

/// Finite-sample correction factor at the reference tuning (37 observations
/// per test block, 30 per volatility block, 200-block windows).
pub const REFERENCE_CORRECTION: f64 = 0.954;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolMode {
    Pre,
    Center,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationScale {
    Fixed(f64),
    /// `beta` = multiple of the square root of an untruncated whole-sample
    /// estimate.
    Auto { multiple: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub beta: TruncationScale,
    pub kappa: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            beta: TruncationScale::Auto { multiple: 5.0 },
            kappa: 0.4,
        }
    }
}

/// One-sided i.i.d. noise used inside the `Psi_n` Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiNoise {
    None,
    /// Half-normal scaled to standard deviation `q`.
    HalfNormal { q: f64 },
    /// `q * Exp(1)`.
    Exponential { q: f64 },
}

impl PsiNoise {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            PsiNoise::None => 0.0,
            PsiNoise::HalfNormal { q } => {
                let z: f64 = rng.sample(StandardNormal);
                q * z.abs() / (1.0 - 2.0 / PI).sqrt()
            }
            PsiNoise::Exponential { q } => {
                let e: f64 = rng.sample(Exp1);
                q * e
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiConfig {
    /// Nominal observations per unit session time.
    pub n: usize,
    pub noise: PsiNoise,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    None,
    Factor(f64),
    PsiInverse(PsiConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotVolConfig {
    /// Window length `K_n` in blocks.
    pub window: usize,
    pub mode: VolMode,
    pub truncation: Option<Truncation>,
    pub correction: Correction,
}

impl Default for SpotVolConfig {
    fn default() -> Self {
        Self {
            window: 200,
            mode: VolMode::Pre,
            truncation: Some(Truncation::default()),
            correction: Correction::Factor(REFERENCE_CORRECTION),
        }
    }
}

impl SpotVolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParameter("volatility window must be positive".into()));
        }
        if self.mode == VolMode::Center && self.window % 2 == 0 {
            return Err(Error::InvalidParameter(
                "centered volatility window must be odd".into(),
            ));
        }
        if let Some(tr) = self.truncation {
            if !(tr.kappa > 0.0 && tr.kappa < 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "truncation exponent {} outside (0, 1/2)",
                    tr.kappa
                )));
            }
            let beta = match tr.beta {
                TruncationScale::Fixed(b) => b,
                TruncationScale::Auto { multiple } => multiple,
            };
            if !(beta > 0.0) {
                return Err(Error::InvalidParameter("truncation scale must be positive".into()));
            }
        }
        match self.correction {
            Correction::Factor(c) if !(c > 0.0) => Err(Error::InvalidParameter(
                "correction factor must be positive".into(),
            )),
            Correction::PsiInverse(p) if p.reps == 0 || p.n == 0 => Err(
                Error::InvalidParameter("psi correction needs n and reps".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_mode(mut self, mode: VolMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_truncation(mut self, truncation: Option<Truncation>) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_correction(mut self, correction: Correction) -> Self {
        self.correction = correction;
        self
    }
}

/// Untruncated average over every valid difference of the session.
pub fn global_variance(extrema: &ExtremaSeries) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 1..extrema.block_count() {
        if let Some(d) = extrema.difference(r) {
            sum += d * d;
            count += 1;
        }
    }
    (count > 0).then(|| STANDARDIZATION * sum / (count as f64 * extrema.block_length()))
}

fn truncation_threshold(extrema: &ExtremaSeries, config: &SpotVolConfig) -> Result<Option<f64>> {
    let Some(tr) = config.truncation else {
        return Ok(None);
    };
    let beta = match tr.beta {
        TruncationScale::Fixed(b) => b,
        TruncationScale::Auto { multiple } => {
            let global = global_variance(extrema)
                .ok_or_else(|| Error::EmptyWindow("no valid differences in session".into()))?;
            multiple * global.sqrt()
        }
    };
    Ok(Some(beta * extrema.block_length().powf(tr.kappa)))
}

#[derive(Debug, Clone, Copy)]
struct WindowEstimate {
    variance: f64,
    truncated: usize,
}

fn window_bounds(k: usize, count: usize, window: usize, mode: VolMode) -> (usize, usize) {
    let last = count - 1;
    match mode {
        VolMode::Pre => (k.saturating_sub(window).max(1), k.saturating_sub(1)),
        VolMode::Center => {
            let half = (window - 1) / 2;
            (k.saturating_sub(half).max(1), (k + half).min(last))
        }
        VolMode::Post => (k + 1, (k + window).min(last)),
    }
}

fn window_estimate(
    extrema: &ExtremaSeries,
    k: usize,
    window: usize,
    mode: VolMode,
    threshold: Option<f64>,
) -> Result<WindowEstimate> {
    let (lo, hi) = window_bounds(k, extrema.block_count(), window, mode);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut truncated = 0usize;
    for r in lo..=hi {
        let Some(d) = extrema.difference(r) else {
            continue;
        };
        count += 1;
        match threshold {
            Some(u) if d.abs() > u => truncated += 1,
            _ => sum += d * d,
        }
    }
    if count == 0 {
        return Err(Error::EmptyWindow(format!(
            "no differences in {mode:?} window at block {k}"
        )));
    }
    if truncated == count {
        return Err(Error::AllTruncated { block: k });
    }
    if sum == 0.0 {
        return Err(Error::DegenerateVolatility { block: k });
    }
    Ok(WindowEstimate {
        variance: STANDARDIZATION * sum / (count as f64 * extrema.block_length()),
        truncated,
    })
}

fn check_block(extrema: &ExtremaSeries, k: usize) -> Result<()> {
    if k >= extrema.block_count() {
        return Err(Error::InvalidParameter(format!(
            "block {k} out of range (0..{})",
            extrema.block_count()
        )));
    }
    Ok(())
}

/// Spot variance at block `k` using `config.mode`.
pub fn spot_vol_at(extrema: &ExtremaSeries, k: usize, config: &SpotVolConfig) -> Result<f64> {
    config.validate()?;
    check_block(extrema, k)?;
    let threshold = truncation_threshold(extrema, config)?;
    let est = window_estimate(extrema, k, config.window, config.mode, threshold)?;
    apply_correction(est.variance, extrema.block_length(), &config.correction)
}

fn apply_correction(variance: f64, block_length: f64, correction: &Correction) -> Result<f64> {
    match *correction {
        Correction::None => Ok(variance),
        Correction::Factor(c) => Ok(c * variance),
        Correction::PsiInverse(cfg) => psi_inverse(variance, block_length, &cfg),
    }
}

/// `floor(t / h)`, the block whose estimate serves time `t`.
pub(crate) fn block_index(t: f64, block_count: usize) -> usize {
    let k = (t.clamp(0.0, 1.0) * block_count as f64 + 1e-9).floor() as usize;
    k.min(block_count - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum PathGrid {
    /// One value per block of an equal partition of `[0, 1]`.
    Blocks,
    /// One value per point `i / (len - 1)`.
    Points,
}

/// Spot variances along the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotVolPath {
    values: Vec<Option<f64>>,
    pub truncation_hits: Vec<usize>,
    grid: PathGrid,
    pub config: Option<SpotVolConfig>,
}

impl SpotVolPath {
    /// A known variance path sampled at equispaced points `i / (len - 1)`.
    pub fn from_points(variances: Vec<f64>) -> Result<Self> {
        if variances.len() < 2 || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "supplied variance path needs >= 2 positive values".into(),
            ));
        }
        Ok(Self {
            truncation_hits: vec![0; variances.len()],
            values: variances.into_iter().map(Some).collect(),
            grid: PathGrid::Points,
            config: None,
        })
    }

    /// A known variance per block of an equal partition.
    pub fn from_blocks(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "supplied variance path needs positive values".into(),
            ));
        }
        Ok(Self {
            truncation_hits: vec![0; variances.len()],
            values: variances.into_iter().map(Some).collect(),
            grid: PathGrid::Blocks,
            config: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-block variances; `None` where estimation failed.
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn failed_blocks(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.is_none().then_some(k))
            .collect()
    }

    pub fn variance_at(&self, t: f64) -> Option<f64> {
        let idx = match self.grid {
            PathGrid::Blocks => block_index(t, self.values.len()),
            PathGrid::Points => {
                let last = (self.values.len() - 1) as f64;
                (t.clamp(0.0, 1.0) * last).round() as usize
            }
        };
        self.values[idx]
    }

    pub fn sigma_at(&self, t: f64) -> Option<f64> {
        self.variance_at(t).map(f64::sqrt)
    }

    pub fn scaled(&self, lambda: f64) -> SpotVolPath {
        SpotVolPath {
            values: self
                .values
                .iter()
                .map(|v| v.map(|v| v * lambda * lambda))
                .collect(),
            ..self.clone()
        }
    }
}

/// Variance at every block: the pre-window from block `K_n` on, the
/// post-window before that. Truncation and correction follow `config`;
/// `config.mode` is ignored. Failures are recorded per block.
pub fn spot_vol_path(extrema: &ExtremaSeries, config: &SpotVolConfig) -> Result<SpotVolPath> {
    path_with(extrema, config, |k| {
        if k >= config.window {
            VolMode::Pre
        } else {
            VolMode::Post
        }
    })
}

/// Variance at every block with the single window mode `config.mode`.
pub fn spot_vol_path_fixed(extrema: &ExtremaSeries, config: &SpotVolConfig) -> Result<SpotVolPath> {
    path_with(extrema, config, |_| config.mode)
}

fn path_with(
    extrema: &ExtremaSeries,
    config: &SpotVolConfig,
    mode_of: impl Fn(usize) -> VolMode,
) -> Result<SpotVolPath> {
    let mut check = *config;
    if check.mode == VolMode::Center && config.window % 2 == 0 {
        // window parity only matters when the centered mode is used
        check.mode = mode_of(0);
    }
    check.validate()?;
    let threshold = truncation_threshold(extrema, config)?;
    let count = extrema.block_count();
    let mut raw = Vec::with_capacity(count);
    let mut hits = Vec::with_capacity(count);
    for k in 0..count {
        match window_estimate(extrema, k, config.window, mode_of(k), threshold) {
            Ok(est) => {
                raw.push(Some(est.variance));
                hits.push(est.truncated);
            }
            Err(_) => {
                raw.push(None);
                hits.push(0);
            }
        }
    }
    let values = match config.correction {
        Correction::None => raw,
        Correction::Factor(c) => raw.into_iter().map(|v| v.map(|v| c * v)).collect(),
        Correction::PsiInverse(cfg) => {
            let inverter = PsiInverter::new(extrema.block_length(), &cfg, &raw)?;
            raw.into_iter().map(|v| v.map(|v| inverter.invert(v))).collect()
        }
    };
    Ok(SpotVolPath {
        values,
        truncation_hits: hits,
        grid: PathGrid::Blocks,
        config: Some(*config),
    })
}

fn block_points(n: usize, block_length: f64) -> Result<usize> {
    let m = (n as f64 * block_length).round() as usize;
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "n * h = {} gives fewer than two observations per block",
            n as f64 * block_length
        )));
    }
    Ok(m)
}

/// Minimum of `sigma * B_{i/n} + eps_i` over `i` in `first..=last`, with
/// `B_0 = 0`. Draws one normal per step and one noise draw per point.
fn noisy_bm_min<R: Rng>(
    rng: &mut R,
    sigma: f64,
    n: usize,
    first: usize,
    last: usize,
    noise: &PsiNoise,
) -> f64 {
    let step = (1.0 / n as f64).sqrt();
    let mut b = 0.0;
    let mut min = f64::INFINITY;
    for i in 0..=last {
        if i > 0 {
            let z: f64 = rng.sample(StandardNormal);
            b += step * z;
        }
        let eps = noise.draw(rng);
        if i >= first {
            min = min.min(sigma * b + eps);
        }
    }
    min
}

/// Monte Carlo estimate of `Psi_n(sigma^2)`, the mean of the volatility
/// estimator when the true spot variance is `sigma_sq`: the scaled mean
/// square of the difference between minima over `{0, .., m-1}` and
/// `{1, .., m}` of two independent noisy Brownian grids, `m = round(n h)`.
pub fn psi_mc(
    sigma_sq: f64,
    n: usize,
    block_length: f64,
    noise: PsiNoise,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if reps == 0 || !(sigma_sq >= 0.0) {
        return Err(Error::InvalidParameter("psi needs reps >= 1 and sigma^2 >= 0".into()));
    }
    let m = block_points(n, block_length)?;
    let sigma = sigma_sq.sqrt();
    let mut acc = 0.0;
    for rep in 0..reps {
        let mut rng = rng_for(seed, rep as u64);
        let first = noisy_bm_min(&mut rng, sigma, n, 0, m - 1, &noise);
        let second = noisy_bm_min(&mut rng, sigma, n, 1, m, &noise);
        let d = first - second;
        acc += d * d;
    }
    Ok(STANDARDIZATION * acc / (reps as f64 * block_length))
}

/// The variance form: `pi / (pi - 2) * h^{-1} * Var(min over {0..m})`.
pub fn psi_mc_variance_form(
    sigma_sq: f64,
    n: usize,
    block_length: f64,
    noise: PsiNoise,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if reps < 2 || !(sigma_sq >= 0.0) {
        return Err(Error::InvalidParameter("variance form needs reps >= 2".into()));
    }
    let m = block_points(n, block_length)?;
    let sigma = sigma_sq.sqrt();
    let mins: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut rng = rng_for(seed, rep as u64);
            noisy_bm_min(&mut rng, sigma, n, 0, m, &noise)
        })
        .collect();
    let mean = mins.iter().sum::<f64>() / reps as f64;
    let var = mins.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(PI / (PI - 2.0) * var / block_length)
}

/// Solves `Psi_n(s) = target` for `s` by bisection with common random
/// numbers (relative tolerance `1e-6`).
pub fn psi_inverse(target: f64, block_length: f64, cfg: &PsiConfig) -> Result<f64> {
    let psi = |s: f64| psi_mc(s, cfg.n, block_length, cfg.noise, cfg.reps, cfg.seed);
    let floor = psi(0.0)?;
    if target <= floor {
        return Ok(0.0);
    }
    let mut hi = target.max(f64::MIN_POSITIVE);
    while psi(hi)? < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidParameter("psi inversion diverged".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if psi(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tabulated `Psi_n` over the range of a path, inverted by bisection on the
/// monotone piecewise-linear interpolant.
struct PsiInverter {
    sigma_sq: Vec<f64>,
    psi: Vec<f64>,
}

impl PsiInverter {
    const POINTS: usize = 33;

    fn new(block_length: f64, cfg: &PsiConfig, raw: &[Option<f64>]) -> Result<Self> {
        let (lo, hi) = raw.iter().flatten().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if !lo.is_finite() {
            return Ok(Self {
                sigma_sq: vec![0.0, 1.0],
                psi: vec![0.0, 1.0],
            });
        }
        let (lo, hi) = (lo * 0.25, hi * 4.0);
        let ratio = (hi / lo).powf(1.0 / (Self::POINTS - 1) as f64);
        let mut sigma_sq = vec![0.0];
        let mut s = lo;
        for _ in 0..Self::POINTS {
            sigma_sq.push(s);
            s *= ratio;
        }
        let mut psi = Vec::with_capacity(sigma_sq.len());
        for &s in &sigma_sq {
            let v = psi_mc(s, cfg.n, block_length, cfg.noise, cfg.reps, cfg.seed)?;
            let prev = psi.last().copied().unwrap_or(f64::NEG_INFINITY);
            psi.push(v.max(prev));
        }
        Ok(Self { sigma_sq, psi })
    }

    fn invert(&self, target: f64) -> f64 {
        let last = self.psi.len() - 1;
        if target <= self.psi[0] {
            return 0.0;
        }
        if target >= self.psi[last] {
            return self.sigma_sq[last] * target / self.psi[last];
        }
        let j = self.psi.partition_point(|&p| p < target).max(1);
        let (p0, p1) = (self.psi[j - 1], self.psi[j]);
        let (s0, s1) = (self.sigma_sq[j - 1], self.sigma_sq[j]);
        if p1 <= p0 {
            return s1;
        }
        s0 + (s1 - s0) * (target - p0) / (p1 - p0)
    }
}
