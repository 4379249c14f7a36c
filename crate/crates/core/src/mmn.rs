//! Local-average baseline for mid quotes under centered noise, the noise
//! level estimator, and the parametric bootstrap that calibrates both the
//! local-average and the block-extrema statistics.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{global_statistic_from_extrema, local_statistic_value};
use crate::par::map_indexed;
use crate::rng::{rng_for, SimRng};
use crate::series::{build_block_grid, local_extrema, GridTarget, QuoteSeries, Side};
use crate::sim::{simulate_path_with, SimConfig};
use crate::spot_vol::SpotVolPath;

/// `sqrt((2n)^{-1} sum (Z_i - Z_{i-1})^2)` with `n = len - 1`.
pub fn estimate_noise_level(series: &QuoteSeries) -> f64 {
    let v = series.values();
    let n = v.len() - 1;
    let ss: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    (ss / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMConfig {
    /// Observations per block.
    pub nh: usize,
    /// Noise level `q`.
    pub noise_level: f64,
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nh < 2 {
            return Err(Error::InvalidParameter("nh must be at least 2".into()));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub statistic: f64,
    pub argmax_block: usize,
    pub block_count: usize,
    /// Standardized differences of adjacent block averages, from block 2 on.
    pub standardized: Vec<f64>,
}

/// Averages over consecutive blocks of `nh` observations; a trailing partial
/// block is dropped.
pub fn block_averages(values: &[f64], nh: usize) -> Vec<f64> {
    values
        .chunks_exact(nh)
        .map(|c| c.iter().sum::<f64>() / nh as f64)
        .collect()
}

fn lm_scale(sigma_sq: f64, nh: usize, n: usize, q: f64) -> f64 {
    let c = nh as f64 / (n as f64).sqrt();
    (2.0 / 3.0 * sigma_sq * c * c + 2.0 * q * q).sqrt()
}

/// Maximum over `k = 2..` of `|A_k - A_{k-1}| / sqrt(2/3 sigma^2_{kh} C^2 + 2 q^2)`
/// for block averages `A_k` and `C = nh / sqrt(n)`.
pub fn lm_statistic(mid: &QuoteSeries, cfg: &LMConfig, sigma: &SpotVolPath) -> Result<LmReport> {
    cfg.validate()?;
    let n = mid.len() - 1;
    let avg = block_averages(mid.values(), cfg.nh);
    if avg.len() < 3 {
        return Err(Error::InsufficientObservations(format!(
            "{} observations give fewer than three blocks of {}",
            mid.len(),
            cfg.nh
        )));
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut standardized = Vec::with_capacity(avg.len() - 2);
    for k in 2..avg.len() {
        let t = mid.times()[k * cfg.nh];
        let s2 = sigma
            .variance_at(t)
            .ok_or(Error::DegenerateVolatility { block: k })?;
        let scale = lm_scale(s2, cfg.nh, n, cfg.noise_level);
        if !(scale > 0.0) {
            return Err(Error::DegenerateVolatility { block: k });
        }
        let z = (avg[k] - avg[k - 1]).abs() / scale;
        if z > best.0 {
            best = (z, k);
        }
        standardized.push(z);
    }
    Ok(LmReport {
        statistic: best.0,
        argmax_block: best.1,
        block_count: avg.len(),
        standardized,
    })
}

/// `|mean after - mean before| / sqrt(2/3 sigma^2 C^2 + 2 q^2)` over the
/// `nh` observations on each side of `tau`.
pub fn local_lm_statistic(
    mid: &QuoteSeries,
    tau: f64,
    nh: usize,
    noise_level: f64,
    sigma_sq: f64,
) -> Result<f64> {
    let n = mid.len() - 1;
    let split = mid.count_until(tau);
    if split < nh || split + nh > mid.len() {
        return Err(Error::EmptyWindow(format!(
            "local averages of {nh} observations do not fit around tau = {tau}"
        )));
    }
    let v = mid.values();
    let before = v[split - nh..split].iter().sum::<f64>() / nh as f64;
    let after = v[split..split + nh].iter().sum::<f64>() / nh as f64;
    let scale = lm_scale(sigma_sq, nh, n, noise_level);
    if !(scale > 0.0) {
        return Err(Error::DegenerateVolatility { block: 0 });
    }
    Ok((after - before).abs() / scale)
}

/// Asymptotic critical value for the maximum of `blocks` standardized
/// block-average differences, from the Gumbel limit of the maximum of
/// absolute standard normals.
pub fn lm_critical_value(blocks: usize, alpha: f64) -> Result<f64> {
    if blocks < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 blocks, got {blocks}")));
    }
    let beta = crate::evt::gumbel_quantile(alpha)?;
    let l = (blocks as f64).ln();
    let root = (2.0 * l).sqrt();
    let c = root - (PI.ln() + l.ln()) / (2.0 * root);
    Ok(c + beta / root)
}

/// How bootstrap observations are generated from the null price path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootScheme {
    /// Mid quotes `X + N(0, q^2)`.
    Additive,
    /// Asks `X + (1 - 2/pi)^{-1/2} q |eps|` on every point.
    HalfNormal,
    /// Asks thinned from `X + N(0, q^2)` where the noise is positive.
    Thinned,
}

/// Volatility driving the bootstrap price paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootVol {
    /// A fresh stochastic-volatility path per sample (drift forced to zero).
    Fresh(SimConfig),
    /// A fixed diffusion-variance path.
    Path(SpotVolPath),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "kebab-case")]
pub enum BootStatistic {
    /// Block-extrema maximum statistic on asks, standardized by the true
    /// bootstrap volatility.
    Ext { grid: GridTarget },
    Lm { nh: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap samples `m`.
    pub samples: usize,
    pub noise_level: f64,
    pub scheme: BootScheme,
    pub vol: BootVol,
    /// Grid steps per session.
    pub n: usize,
    pub seed: u64,
}

/// Sorted bootstrap draws of a statistic under the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapHandle {
    pub statistic: BootStatistic,
    pub noise_level: f64,
    pub scheme: BootScheme,
    pub samples: Vec<f64>,
    pub failures: usize,
}

impl BootstrapHandle {
    pub fn from_samples(statistic: BootStatistic, noise_level: f64, scheme: BootScheme, mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self {
            statistic,
            noise_level,
            scheme,
            samples,
            failures: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Empirical `(1 - alpha)` quantile (inverse ECDF).
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        empirical_quantile(&self.samples, alpha)
    }
}

/// Inverse ECDF at `1 - alpha` of sorted `samples`.
pub fn empirical_quantile(samples: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("level {alpha} outside (0, 1)")));
    }
    let m = samples.len();
    if m < 100 || (m as f64) * alpha < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{m} bootstrap samples are too few for level {alpha}"
        )));
    }
    let p = 1.0 - alpha;
    let idx = ((p * m as f64).ceil() as usize).clamp(1, m) - 1;
    Ok(samples[idx])
}

fn null_path<R: Rng>(vol: &BootVol, n: usize, rng: &mut R) -> Result<(Vec<f64>, SpotVolPath)> {
    match vol {
        BootVol::Fresh(cfg) => {
            let cfg = SimConfig {
                n,
                drift: 0.0,
                ..*cfg
            };
            let path = simulate_path_with(&cfg, rng)?;
            let var = path.variance_path();
            Ok((path.x, var))
        }
        BootVol::Path(var) => {
            let dt = 1.0 / n as f64;
            let mut x = Vec::with_capacity(n + 1);
            let mut xi = 0.0;
            for i in 0..=n {
                x.push(xi);
                let s2 = var.variance_at(i as f64 * dt).unwrap_or(0.0);
                let z: f64 = rng.sample(StandardNormal);
                xi += (s2 * dt).sqrt() * z;
            }
            Ok((x, var.clone()))
        }
    }
}

fn noisy_series<R: Rng>(x: &[f64], q: f64, scheme: BootScheme, rng: &mut R) -> Result<QuoteSeries> {
    let n = x.len() - 1;
    let time = |i: usize| i as f64 / n as f64;
    match scheme {
        BootScheme::Additive => {
            let v = x.iter().map(|x| x + q * rng.sample::<f64, _>(StandardNormal)).collect();
            QuoteSeries::new((0..=n).map(time).collect(), v, Side::TwoSided)
        }
        BootScheme::HalfNormal => {
            let c = q / (1.0 - 2.0 / PI).sqrt();
            let v = x
                .iter()
                .map(|x| x + c * rng.sample::<f64, _>(StandardNormal).abs())
                .collect();
            QuoteSeries::new((0..=n).map(time).collect(), v, Side::LowerBounded)
        }
        BootScheme::Thinned => {
            let (mut t, mut v) = (Vec::new(), Vec::new());
            for (i, x) in x.iter().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                if e > 0.0 {
                    t.push(time(i));
                    v.push(x + q * e);
                }
            }
            QuoteSeries::new(t, v, Side::LowerBounded)
        }
    }
}

/// One null draw of `statistic`.
pub fn bootstrap_draw(cfg: &BootstrapConfig, statistic: BootStatistic, rng: &mut SimRng) -> Result<f64> {
    let (x, var) = null_path(&cfg.vol, cfg.n, rng)?;
    match statistic {
        BootStatistic::Lm { nh } => {
            let mid = noisy_series(&x, cfg.noise_level, BootScheme::Additive, rng)?;
            let lm = LMConfig {
                nh,
                noise_level: cfg.noise_level,
            };
            Ok(lm_statistic(&mid, &lm, &var)?.statistic)
        }
        BootStatistic::Ext { grid } => {
            let scheme = match cfg.scheme {
                BootScheme::Additive => BootScheme::Thinned,
                s => s,
            };
            let ask = noisy_series(&x, cfg.noise_level, scheme, rng)?;
            let g = build_block_grid(&ask, grid)?;
            let m = local_extrema(&ask, &g)?;
            Ok(global_statistic_from_extrema(&m, &var)?.t_raw)
        }
    }
}

/// Draws `cfg.samples` null statistics with per-sample seeds.
pub fn bootstrap_handle(cfg: &BootstrapConfig, statistic: BootStatistic) -> Result<BootstrapHandle> {
    if cfg.samples == 0 {
        return Err(Error::InvalidParameter("bootstrap needs at least one sample".into()));
    }
    if !(cfg.noise_level >= 0.0) {
        return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
    }
    let draws = map_indexed(cfg.samples, |j| {
        let mut rng = rng_for(cfg.seed, j as u64);
        bootstrap_draw(cfg, statistic, &mut rng)
    });
    let mut samples = Vec::with_capacity(draws.len());
    let mut failures = 0;
    for d in draws {
        match d {
            Ok(v) if v.is_finite() => samples.push(v),
            _ => failures += 1,
        }
    }
    let mut handle = BootstrapHandle::from_samples(statistic, cfg.noise_level, cfg.scheme, samples);
    handle.failures = failures;
    Ok(handle)
}

/// Empirical `(1 - alpha)` quantile of `cfg.samples` null draws, seeded by `seed`.
pub fn bootstrap_critical_values(
    cfg: &BootstrapConfig,
    statistic: BootStatistic,
    alpha: f64,
    seed: u64,
) -> Result<f64> {
    let cfg = BootstrapConfig {
        seed,
        ..cfg.clone()
    };
    if cfg.samples < 100 || (cfg.samples as f64) * alpha < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{} bootstrap samples are too few for level {alpha}",
            cfg.samples
        )));
    }
    bootstrap_handle(&cfg, statistic)?.quantile(alpha)
}

/// Which local statistic a local bootstrap targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalKind {
    Ext,
    Lm,
}

/// One null draw of a local statistic at a time with diffusion variance
/// `sigma_sq`: `nh` observations on each side of the test time, locally
/// constant volatility.
pub fn local_bootstrap_draw<R: Rng>(
    kind: LocalKind,
    nh: usize,
    n: usize,
    sigma_sq: f64,
    noise_level: f64,
    scheme: BootScheme,
    rng: &mut R,
) -> f64 {
    let step = (sigma_sq / n as f64).sqrt();
    let h = nh as f64 / n as f64;
    let c = noise_level / (1.0 - 2.0 / PI).sqrt();
    let mut side = |forward: bool| -> Vec<f64> {
        let mut x = 0.0;
        let mut vals = Vec::with_capacity(nh);
        let mut first = true;
        while vals.len() < nh {
            if forward || !first {
                x += step * rng.sample::<f64, _>(StandardNormal);
            }
            first = false;
            let e: f64 = rng.sample(StandardNormal);
            let y = match (kind, scheme) {
                (LocalKind::Lm, _) | (_, BootScheme::Additive) => Some(x + noise_level * e),
                (LocalKind::Ext, BootScheme::HalfNormal) => Some(x + c * e.abs()),
                (LocalKind::Ext, BootScheme::Thinned) => (e > 0.0).then(|| x + noise_level * e),
            };
            if let Some(y) = y {
                vals.push(y);
            }
        }
        vals
    };
    let after = side(true);
    let before = side(false);
    match kind {
        LocalKind::Ext => {
            let a = after.iter().copied().fold(f64::INFINITY, f64::min);
            let b = before.iter().copied().fold(f64::INFINITY, f64::min);
            local_statistic_value(a, b, sigma_sq.sqrt(), sigma_sq.sqrt(), h)
        }
        LocalKind::Lm => {
            let a = after.iter().sum::<f64>() / nh as f64;
            let b = before.iter().sum::<f64>() / nh as f64;
            (a - b).abs() / lm_scale(sigma_sq, nh, n, noise_level)
        }
    }
}

/// Sorted null draws from [`local_bootstrap_draw`], one seeded stream per
/// sample.
pub fn local_bootstrap(
    kind: LocalKind,
    nh: usize,
    n: usize,
    sigma_sq: f64,
    noise_level: f64,
    scheme: BootScheme,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if nh == 0 || samples == 0 || !(sigma_sq > 0.0) {
        return Err(Error::InvalidParameter(
            "local bootstrap needs nh, samples and a positive variance".into(),
        ));
    }
    let mut out: Vec<f64> = map_indexed(samples, |j| {
        let mut rng = rng_for(seed, j as u64);
        local_bootstrap_draw(kind, nh, n, sigma_sq, noise_level, scheme, &mut rng)
    });
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_level_examples() {
        let c = QuoteSeries::equispaced(vec![1.0; 11], Side::TwoSided).unwrap();
        assert_eq!(estimate_noise_level(&c), 0.0);
        let alt: Vec<f64> = (0..=20).map(|i| (i % 2) as f64).collect();
        let s = QuoteSeries::equispaced(alt, Side::TwoSided).unwrap();
        assert!((estimate_noise_level(&s) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn block_average_chunks() {
        assert_eq!(block_averages(&[1.0, 3.0, 2.0, 4.0, 9.0], 2), vec![2.0, 3.0]);
    }

    #[test]
    fn constant_series_lm_is_zero() {
        let c = QuoteSeries::equispaced(vec![0.5; 101], Side::TwoSided).unwrap();
        let var = SpotVolPath::from_points(vec![1e-4; 101]).unwrap();
        let cfg = LMConfig { nh: 5, noise_level: 1e-3 };
        assert_eq!(lm_statistic(&c, &cfg, &var).unwrap().statistic, 0.0);
    }

    #[test]
    fn lm_hand_computed() {
        // averages 0, 0, 1, 1 over blocks of two
        let v = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 5.0];
        let s = QuoteSeries::equispaced(v, Side::TwoSided).unwrap();
        let var = SpotVolPath::from_points(vec![0.75; 9]).unwrap();
        let cfg = LMConfig { nh: 2, noise_level: 0.5 };
        let r = lm_statistic(&s, &cfg, &var).unwrap();
        let c2 = 4.0 / 8.0;
        let scale = (2.0 / 3.0 * 0.75 * c2 + 0.5f64).sqrt();
        assert!((r.statistic - 1.0 / scale).abs() < 1e-12);
        assert_eq!(r.argmax_block, 2);
    }

    #[test]
    fn quantile_rules() {
        let samples: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        let h = BootstrapHandle::from_samples(BootStatistic::Lm { nh: 2 }, 0.0, BootScheme::Additive, samples);
        assert_eq!(h.quantile(0.5).unwrap(), 100.0);
        assert_eq!(h.quantile(0.05).unwrap(), 190.0);
        assert!(h.quantile(0.001).is_err());
        let few = BootstrapHandle::from_samples(BootStatistic::Lm { nh: 2 }, 0.0, BootScheme::Additive, vec![1.0; 50]);
        assert!(few.quantile(0.05).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let cfg = BootstrapConfig {
            samples: 100,
            noise_level: 5e-4,
            scheme: BootScheme::HalfNormal,
            vol: BootVol::Fresh(SimConfig::default()),
            n: 2_000,
            seed: 3,
        };
        let stat = BootStatistic::Ext { grid: GridTarget::ObsPerBlock(10) };
        let a = bootstrap_critical_values(&cfg, stat, 0.05, 9).unwrap();
        let b = bootstrap_critical_values(&cfg, stat, 0.05, 9).unwrap();
        assert_eq!(a, b);
        let lm = BootStatistic::Lm { nh: 10 };
        let c = bootstrap_critical_values(&cfg, lm, 0.5, 9).unwrap();
        assert!(c > 0.0);
    }

    #[test]
    fn local_bootstrap_sorted_and_positive() {
        for kind in [LocalKind::Ext, LocalKind::Lm] {
            let s = local_bootstrap(kind, 12, 23_400, 1e-4, 5e-4, BootScheme::HalfNormal, 200, 1).unwrap();
            assert_eq!(s.len(), 200);
            assert!(s.windows(2).all(|w| w[0] <= w[1]));
            assert!(s[0] >= 0.0);
        }
    }
}
