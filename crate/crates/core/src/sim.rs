//! Simulated sessions: stochastic volatility with leverage and an intraday
//! seasonal factor, finite-activity jumps, and the noise schemes used in the
//! size/power studies.
//!
//! The efficient log-price follows
//!
//! ```text
//! dX_t       = v_t sigma_t dW_t
//! d sigma_t^2 = kappa (theta - sigma_t^2) dt + xi sigma_t dB_t,   d[W, B]_t = rho dt
//! v_t        = (1.2 - 0.2 sin(3 pi t / 4)) * 0.01
//! ```
//!
//! discretized by Euler-Maruyama on the grid `i / n`, `i = 0..=n`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, SimRng};
use crate::series::{QuoteSeries, Side};
use crate::spot_vol::SpotVolPath;

const VARIANCE_FLOOR: f64 = 1e-10;
const STREAM_PATH: u64 = 0x5041_5448;
const STREAM_NOISE: u64 = 0x4E4F_4953;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mean_reversion: f64,
    pub level: f64,
    pub vol_of_vol: f64,
    /// Correlation between the price and variance drivers.
    pub leverage: f64,
    pub initial_variance: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        Self {
            mean_reversion: 0.0162,
            level: 0.8465,
            vol_of_vol: 0.117,
            leverage: -0.5,
            initial_variance: 0.8465,
        }
    }
}

impl SvParams {
    /// Constant variance `sigma_sq`.
    pub fn constant(sigma_sq: f64) -> Self {
        Self {
            mean_reversion: 0.0,
            level: sigma_sq,
            vol_of_vol: 0.0,
            leverage: 0.0,
            initial_variance: sigma_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Seasonality {
    /// The U-shaped factor `(1.2 - 0.2 sin(3 pi t / 4)) * 0.01`.
    Intraday,
    Constant(f64),
}

impl Seasonality {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            Seasonality::Intraday => seasonal_factor(t),
            Seasonality::Constant(c) => c,
        }
    }
}

pub fn seasonal_factor(t: f64) -> f64 {
    (1.2 - 0.2 * (0.75 * PI * t).sin()) * 0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of grid steps; the grid has `n + 1` points.
    pub n: usize,
    pub sv: SvParams,
    pub seasonality: Seasonality,
    pub drift: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 23_400,
            sv: SvParams::default(),
            seasonality: Seasonality::Intraday,
            drift: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter("n must be at least 2".into()));
        }
        if !(self.sv.initial_variance > 0.0) {
            return Err(Error::InvalidParameter("initial variance must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.sv.leverage) {
            return Err(Error::InvalidParameter("leverage must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Efficient log-price on the grid `i / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub x: Vec<f64>,
    /// Variance state `sigma_t^2`.
    pub sigma_sq: Vec<f64>,
    /// Diffusion variance `v_t^2 sigma_t^2` of `X`.
    pub spot_variance: Vec<f64>,
    pub jumps: Vec<Jump>,
}

impl PricePath {
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    /// The true diffusion variance as a path usable by the tests.
    pub fn variance_path(&self) -> SpotVolPath {
        SpotVolPath::from_points(self.spot_variance.clone())
            .expect("simulated variances are floored above zero")
    }
}

pub fn simulate_path(config: &SimConfig) -> Result<PricePath> {
    let mut rng = rng_for(config.seed, STREAM_PATH);
    simulate_path_with(config, &mut rng)
}

pub fn simulate_path_with<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<PricePath> {
    config.validate()?;
    let n = config.n;
    let dt = 1.0 / n as f64;
    let sqrt_dt = dt.sqrt();
    let sv = config.sv;
    let ortho = (1.0 - sv.leverage * sv.leverage).sqrt();
    let mut x = Vec::with_capacity(n + 1);
    let mut sigma_sq = Vec::with_capacity(n + 1);
    let mut spot = Vec::with_capacity(n + 1);
    let (mut xi, mut s2) = (0.0, sv.initial_variance);
    for i in 0..=n {
        let t = i as f64 * dt;
        let v = config.seasonality.factor(t);
        x.push(xi);
        sigma_sq.push(s2);
        spot.push(v * v * s2);
        if i == n {
            break;
        }
        let z1: f64 = rng.sample(StandardNormal);
        let sigma = s2.sqrt();
        xi += config.drift * dt + v * sigma * sqrt_dt * z1;
        if sv.vol_of_vol != 0.0 || sv.mean_reversion != 0.0 {
            let z2: f64 = if sv.vol_of_vol != 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            let db = sqrt_dt * (sv.leverage * z1 + ortho * z2);
            s2 = (s2 + sv.mean_reversion * (sv.level - s2) * dt + sv.vol_of_vol * sigma * db)
                .max(VARIANCE_FLOOR);
        }
    }
    Ok(PricePath {
        x,
        sigma_sq,
        spot_variance: spot,
        jumps: Vec::new(),
    })
}

/// Interior band for jump times.
pub const DEFAULT_JUMP_BAND: (f64, f64) = (0.1, 0.9);

/// Adds `jump.size` to `X_t` for every grid time `t >= jump.time`.
pub fn inject_jump(path: &mut PricePath, jump: Jump, band: (f64, f64)) -> Result<()> {
    if !(jump.time >= band.0 && jump.time <= band.1) {
        return Err(Error::InvalidParameter(format!(
            "jump time {} outside [{}, {}]",
            jump.time, band.0, band.1
        )));
    }
    if !jump.size.is_finite() {
        return Err(Error::InvalidParameter("jump size must be finite".into()));
    }
    let n = path.n() as f64;
    let first = (jump.time * n).ceil() as usize;
    for xi in path.x.iter_mut().skip(first) {
        *xi += jump.size;
    }
    path.jumps.push(jump);
    Ok(())
}

/// A jump of absolute size `abs_size` with a fair random sign at a time
/// uniform on `band`.
pub fn sample_jump<R: Rng>(rng: &mut R, abs_size: f64, band: (f64, f64)) -> Jump {
    let time = band.0 + (band.1 - band.0) * rng.random::<f64>();
    let size = if rng.random::<bool>() { abs_size } else { -abs_size };
    Jump { time, size }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    /// `Z_i = X + eps_i`, `eps_{i+1} = phi eps_i + eta`, `eta ~ N(0, q^2)`,
    /// started from the stationary law; asks and bids are thinned from `Z`.
    Ar1Gaussian { q: f64, phi: f64 },
    /// Asks `X + (1 - 2/pi)^{-1/2} q |eps|` on every grid point, mid
    /// `X + q eps` with the same `eps`, bids from independent draws.
    HalfNormal { q: f64 },
    /// `Z_i = X + q eps_i`; asks and bids thinned from `Z`.
    Gaussian { q: f64 },
    /// Asks `X + q E`, bids `X - q E'`, mid `X + q (E - 1)`.
    Exponential { q: f64 },
    /// Prices `exp(x0 + X + eps)` rounded to the nearest tick (at least one
    /// tick), logged, then thinned; zero-noise points count as asks.
    Rounding { q: f64, tick: f64, x0: f64 },
}

impl NoiseSpec {
    pub fn ar1(q: f64) -> Self {
        NoiseSpec::Ar1Gaussian { q, phi: -0.5 }
    }

    pub fn level(&self) -> f64 {
        match *self {
            NoiseSpec::Ar1Gaussian { q, .. }
            | NoiseSpec::HalfNormal { q }
            | NoiseSpec::Gaussian { q }
            | NoiseSpec::Exponential { q }
            | NoiseSpec::Rounding { q, .. } => q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level() >= 0.0) {
            return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
        }
        match *self {
            NoiseSpec::Ar1Gaussian { phi, .. } if !(phi.abs() < 1.0) => Err(
                Error::InvalidParameter("AR(1) coefficient must satisfy |phi| < 1".into()),
            ),
            NoiseSpec::Rounding { tick, .. } if !(tick > 0.0) => {
                Err(Error::InvalidParameter("tick must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Mid, ask and bid observations of one simulated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub mid: QuoteSeries,
    pub ask: QuoteSeries,
    pub bid: QuoteSeries,
    /// Grid indices of the ask and bid observations.
    pub ask_index: Vec<usize>,
    pub bid_index: Vec<usize>,
    /// Efficient log-price, shifted to the price level for rounding noise.
    pub x: Vec<f64>,
    pub spot_variance: Vec<f64>,
    pub jumps: Vec<Jump>,
}

impl ObservationSet {
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn variance_path(&self) -> SpotVolPath {
        SpotVolPath::from_points(self.spot_variance.clone())
            .expect("simulated variances are floored above zero")
    }
}

pub fn apply_noise(path: &PricePath, spec: &NoiseSpec, seed: u64) -> Result<ObservationSet> {
    let mut rng = rng_for(seed, STREAM_NOISE);
    apply_noise_with(path, spec, &mut rng)
}

pub fn apply_noise_with<R: Rng>(
    path: &PricePath,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<ObservationSet> {
    spec.validate()?;
    let n = path.n();
    let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let shift = match *spec {
        NoiseSpec::Rounding { x0, .. } => x0,
        _ => 0.0,
    };
    let x: Vec<f64> = path.x.iter().map(|v| v + shift).collect();

    let (mid, ask_index, ask_values, bid_index, bid_values) = match *spec {
        NoiseSpec::Ar1Gaussian { q, phi } => {
            let mut eps = Vec::with_capacity(n + 1);
            let z: f64 = rng.sample(StandardNormal);
            let mut e = z * q / (1.0 - phi * phi).sqrt();
            eps.push(e);
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                e = phi * e + q * z;
                eps.push(e);
            }
            let mid: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| x + e).collect();
            let (ai, av, bi, bv) = thin(&x, &mid, false);
            (mid, ai, av, bi, bv)
        }
        NoiseSpec::Gaussian { q } => {
            let mid: Vec<f64> = x
                .iter()
                .map(|x| x + q * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let (ai, av, bi, bv) = thin(&x, &mid, false);
            (mid, ai, av, bi, bv)
        }
        NoiseSpec::HalfNormal { q } => {
            let scale = q / (1.0 - 2.0 / PI).sqrt();
            let mut mid = Vec::with_capacity(n + 1);
            let mut ask = Vec::with_capacity(n + 1);
            for xi in &x {
                let e: f64 = rng.sample(StandardNormal);
                mid.push(xi + q * e);
                ask.push(xi + scale * e.abs());
            }
            let bid: Vec<f64> = x
                .iter()
                .map(|xi| xi - scale * rng.sample::<f64, _>(StandardNormal).abs())
                .collect();
            let all: Vec<usize> = (0..=n).collect();
            (mid, all.clone(), ask, all, bid)
        }
        NoiseSpec::Exponential { q } => {
            let mut mid = Vec::with_capacity(n + 1);
            let mut ask = Vec::with_capacity(n + 1);
            for xi in &x {
                let e: f64 = rng.sample(Exp1);
                mid.push(xi + q * (e - 1.0));
                ask.push(xi + q * e);
            }
            let bid: Vec<f64> = x
                .iter()
                .map(|xi| xi - q * rng.sample::<f64, _>(Exp1))
                .collect();
            let all: Vec<usize> = (0..=n).collect();
            (mid, all.clone(), ask, all, bid)
        }
        NoiseSpec::Rounding { q, tick, .. } => {
            let mid: Vec<f64> = x
                .iter()
                .map(|xi| {
                    let e: f64 = rng.sample(StandardNormal);
                    round_log_price(xi + q * e, tick)
                })
                .collect();
            let (ai, av, bi, bv) = thin(&x, &mid, true);
            (mid, ai, av, bi, bv)
        }
    };

    let pick = |index: &[usize]| -> Vec<f64> { index.iter().map(|&i| times[i]).collect() };
    let ask = QuoteSeries::new(pick(&ask_index), ask_values, Side::LowerBounded)?;
    let bid = QuoteSeries::new(pick(&bid_index), bid_values, Side::UpperBounded)?;
    let mid = QuoteSeries::new(times.clone(), mid, Side::TwoSided)?;
    Ok(ObservationSet {
        mid,
        ask,
        bid,
        ask_index,
        bid_index,
        x,
        spot_variance: path.spot_variance.clone(),
        jumps: path.jumps.clone(),
    })
}

type Thinned = (Vec<usize>, Vec<f64>, Vec<usize>, Vec<f64>);

fn thin(x: &[f64], z: &[f64], ties_to_ask: bool) -> Thinned {
    let (mut ai, mut av, mut bi, mut bv) = (vec![], vec![], vec![], vec![]);
    for (i, (&xi, &zi)) in x.iter().zip(z).enumerate() {
        if zi > xi || (ties_to_ask && zi == xi) {
            ai.push(i);
            av.push(zi);
        } else if zi < xi {
            bi.push(i);
            bv.push(zi);
        }
    }
    (ai, av, bi, bv)
}

/// `log(s v (round(p / s) s))` for the price `p = exp(log_price)`.
pub fn round_log_price(log_price: f64, tick: f64) -> f64 {
    let p = log_price.exp();
    ((p / tick).round() * tick).max(tick).ln()
}

/// Path, one optional jump and noise for replication `rep` of a study with
/// base seed `seed`.
pub fn simulate_session(
    config: &SimConfig,
    noise: &NoiseSpec,
    jump: Option<Jump>,
    rep: u64,
) -> Result<ObservationSet> {
    let mut rng: SimRng = rng_for(config.seed, rep);
    let mut path = simulate_path_with(config, &mut rng)?;
    if let Some(j) = jump {
        inject_jump(&mut path, j, (0.0, 1.0))?;
    }
    apply_noise_with(&path, noise, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            n: 2_000,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn seasonal_values() {
        assert!((seasonal_factor(0.0) - 0.012).abs() < 1e-15);
        assert!((seasonal_factor(2.0 / 3.0) - 0.010).abs() < 1e-15);
    }

    #[test]
    fn path_shape_and_determinism() {
        let a = simulate_path(&small(5)).unwrap();
        let b = simulate_path(&small(5)).unwrap();
        let c = simulate_path(&small(6)).unwrap();
        assert_eq!(a.x.len(), 2_001);
        assert_eq!(a.x[0], 0.0);
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
        assert!(a.sigma_sq.iter().all(|&s| s >= VARIANCE_FLOOR));
    }

    #[test]
    fn jump_injection() {
        let base = simulate_path(&small(1)).unwrap();
        let mut jumped = base.clone();
        inject_jump(&mut jumped, Jump { time: 0.5, size: 0.003 }, DEFAULT_JUMP_BAND).unwrap();
        for i in 0..=2_000 {
            let d = jumped.x[i] - base.x[i];
            if i >= 1_000 {
                assert!((d - 0.003).abs() < 1e-15);
            } else {
                assert_eq!(d, 0.0);
            }
        }
        let mut same = base.clone();
        inject_jump(&mut same, Jump { time: 0.3, size: 0.0 }, DEFAULT_JUMP_BAND).unwrap();
        assert_eq!(same.x, base.x);
        assert!(inject_jump(&mut same, Jump { time: 0.95, size: 0.1 }, DEFAULT_JUMP_BAND).is_err());
    }

    #[test]
    fn one_sidedness() {
        let path = simulate_path(&small(2)).unwrap();
        for spec in [
            NoiseSpec::ar1(0.001),
            NoiseSpec::HalfNormal { q: 0.001 },
            NoiseSpec::Gaussian { q: 0.001 },
            NoiseSpec::Exponential { q: 0.001 },
            NoiseSpec::Rounding { q: 0.0005, tick: 0.01, x0: 50f64.ln() },
        ] {
            let obs = apply_noise(&path, &spec, 9).unwrap();
            for (&i, &y) in obs.ask_index.iter().zip(obs.ask.values()) {
                assert!(y >= obs.x[i], "{spec:?}");
            }
            for (&i, &y) in obs.bid_index.iter().zip(obs.bid.values()) {
                assert!(y <= obs.x[i], "{spec:?}");
            }
        }
    }

    #[test]
    fn rounding_to_tick() {
        let z = round_log_price(10.004f64.ln(), 0.01);
        assert!((z - 10.0f64.ln()).abs() < 1e-15);
        assert_eq!(round_log_price(0.001f64.ln(), 0.01), 0.01f64.ln());
    }
}
