//! Offline jump inference on one-sided quotes: jump size at a given time,
//! the local test, the global maximum test with localization of the largest
//! jump, and sequential detection of several jumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{gumbel_quantile, local_quantile, GumbelCalibration};
use crate::mmn::BootstrapHandle;
use crate::series::{
    build_block_grid, extrema_window, local_extrema, BlockGrid, ExtremaSeries, GridTarget,
    QuoteSeries, WindowDirection,
};
use crate::spot_vol::{spot_vol_at, spot_vol_path, spot_vol_path_fixed, SpotVolConfig, SpotVolPath, VolMode};

/// `X_tau - X_{tau-}` estimated from extrema of `nh` observations after and
/// at-or-before `tau`.
pub fn estimate_jump(series: &QuoteSeries, tau: f64, nh: usize) -> Result<f64> {
    let after = extrema_window(series, tau, nh, WindowDirection::After)?;
    let before = extrema_window(series, tau, nh, WindowDirection::Before)?;
    Ok(after.value - before.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn of(size: f64) -> Direction {
        if size < 0.0 {
            Direction::Down
        } else {
            Direction::Up
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    /// Estimated jump time in session units.
    pub time: f64,
    pub wall_clock: f64,
    pub size: f64,
    pub direction: Direction,
    pub block: usize,
    /// Seconds from the start of the localization interval to detection.
    pub latency: Option<f64>,
    pub interval: (f64, f64),
    pub alpha: f64,
}

/// Volatility used to standardize a statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolSource {
    /// Estimated from the same series on a separate block grid. With
    /// `fixed_mode`, every block uses `config.mode`; otherwise the pre-window
    /// applies from block `K_n` on and the post-window before it.
    Estimate {
        grid: GridTarget,
        config: SpotVolConfig,
        fixed_mode: bool,
    },
    Supplied(SpotVolPath),
}

impl VolSource {
    pub fn estimate(grid: GridTarget, config: SpotVolConfig) -> Self {
        VolSource::Estimate {
            grid,
            config,
            fixed_mode: false,
        }
    }

    pub fn path(&self, series: &QuoteSeries) -> Result<SpotVolPath> {
        match self {
            VolSource::Supplied(p) => Ok(p.clone()),
            VolSource::Estimate {
                grid,
                config,
                fixed_mode,
            } => {
                let g = build_block_grid(series, *grid)?;
                let m = local_extrema(series, &g)?;
                if *fixed_mode {
                    spot_vol_path_fixed(&m, config)
                } else {
                    spot_vol_path(&m, config)
                }
            }
        }
    }
}

/// Maximum of the volatility-standardized block-extrema differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStatistic {
    pub t_raw: f64,
    pub argmax_block: usize,
    /// `|m_k - m_{k-1}| / sigma_{k h}` per block; `None` for block 0 and for
    /// excluded differences.
    pub standardized: Vec<Option<f64>>,
    pub valid: usize,
}

/// Earliest maximum over the entries not excluded.
fn argmax(values: &[Option<f64>], skip: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        if skip.contains(&k) {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best
}

pub fn global_statistic_from_extrema(
    extrema: &ExtremaSeries,
    volpath: &SpotVolPath,
) -> Result<GlobalStatistic> {
    let mut standardized = vec![None; extrema.block_count()];
    let mut valid = 0;
    for (k, slot) in standardized.iter_mut().enumerate().skip(1) {
        let Some(d) = extrema.difference(k) else { continue };
        let Some(sigma) = volpath.sigma_at(extrema.grid.block_start(k)) else { continue };
        if !(sigma > 0.0) || !sigma.is_finite() {
            continue;
        }
        *slot = Some(d.abs() / sigma);
        valid += 1;
    }
    if valid < 2 {
        return Err(Error::InsufficientObservations(format!(
            "{valid} valid standardized differences"
        )));
    }
    let (argmax_block, t_raw) = argmax(&standardized, &[]).expect("valid > 0");
    Ok(GlobalStatistic {
        t_raw,
        argmax_block,
        standardized,
        valid,
    })
}

/// `max_k |m_k - m_{k-1}| / sigma_{k h}` over blocks of `grid`.
pub fn global_statistic(
    series: &QuoteSeries,
    grid: &BlockGrid,
    volpath: &SpotVolPath,
) -> Result<GlobalStatistic> {
    let m = local_extrema(series, grid)?;
    global_statistic_from_extrema(&m, volpath)
}

/// `(h^{-1/2} T - b_N) / a_N` with the absolute-maximum sequences for `N`
/// differences.
pub fn standardize_global(t_raw: f64, block_length: f64, differences: usize) -> Result<f64> {
    let cal = GumbelCalibration::absolute(differences)?;
    Ok(cal.standardize(t_raw / block_length.sqrt()))
}

/// Block count from the implicit relation `h = 2 log(2/h - 2) n^{-2/3}`,
/// iterated 20 times from `h = 1.3 n^{-2/3}`.
pub fn implicit_block_count(n: usize) -> Result<usize> {
    if n < 8 {
        return Err(Error::InvalidParameter("n too small for the block relation".into()));
    }
    let rate = (n as f64).powf(-2.0 / 3.0);
    let mut h = 1.3 * rate;
    for _ in 0..20 {
        let inner = (2.0 / h - 2.0).max(2.0);
        h = 2.0 * inner.ln() * rate;
    }
    Ok(((1.0 / h).round() as usize).max(3))
}

/// `floor(n^{2/3} / 1.3)` blocks.
pub fn reference_block_count(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0) / 1.3).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CriticalSource {
    /// Gumbel quantile for the standardized statistic.
    Asymptotic,
    /// Bootstrap quantile for the raw statistic.
    Bootstrap { critical_value: f64 },
}

impl CriticalSource {
    pub fn from_handle(handle: &BootstrapHandle, alpha: f64) -> Result<Self> {
        Ok(CriticalSource::Bootstrap {
            critical_value: handle.quantile(alpha)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTestConfig {
    pub grid: GridTarget,
    pub vol: VolSource,
    pub alpha: f64,
    pub critical: CriticalSource,
    /// Window for the jump size at the located time; defaults to the mean
    /// number of observations per block.
    pub jump_window: Option<usize>,
}

impl GlobalTestConfig {
    /// Block count `floor(n^{2/3} / 1.3)`, volatility from blocks of 30 grid
    /// observations with truncated 200-block windows and the 0.954 factor.
    pub fn reference(n: usize, alpha: f64) -> Self {
        Self {
            grid: GridTarget::BlockCount(reference_block_count(n)),
            vol: VolSource::estimate(GridTarget::BlockCount((n / 30).max(2)), SpotVolConfig::default()),
            alpha,
            critical: CriticalSource::Asymptotic,
            jump_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTestReport {
    pub t_raw: f64,
    pub t_std: f64,
    pub critical_value: f64,
    pub source: CriticalSource,
    pub reject: bool,
    pub alpha: f64,
    pub argmax_block: usize,
    pub theta_hat: f64,
    pub jump_estimate: Option<f64>,
    pub block_count: usize,
    pub valid_differences: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub standardized: Vec<Option<f64>>,
}

fn decide(t_raw: f64, t_std: f64, alpha: f64, source: &CriticalSource) -> Result<(f64, bool)> {
    match *source {
        CriticalSource::Asymptotic => {
            let q = gumbel_quantile(alpha)?;
            Ok((q, t_std > q))
        }
        CriticalSource::Bootstrap { critical_value } => Ok((critical_value, t_raw > critical_value)),
    }
}

fn jump_window(series: &QuoteSeries, block_count: usize, cfg: Option<usize>) -> usize {
    cfg.unwrap_or_else(|| (series.len() / block_count).max(1))
}

pub fn global_test(series: &QuoteSeries, cfg: &GlobalTestConfig) -> Result<GlobalTestReport> {
    let grid = build_block_grid(series, cfg.grid)?;
    let vol = cfg.vol.path(series)?;
    global_test_with(series, &grid, &vol, cfg)
}

/// The global test with a prebuilt grid and volatility path.
pub fn global_test_with(
    series: &QuoteSeries,
    grid: &BlockGrid,
    vol: &SpotVolPath,
    cfg: &GlobalTestConfig,
) -> Result<GlobalTestReport> {
    let stat = global_statistic(series, grid, vol)?;
    let h = grid.block_length();
    let t_std = standardize_global(stat.t_raw, h, stat.valid)?;
    let (critical_value, reject) = decide(stat.t_raw, t_std, cfg.alpha, &cfg.critical)?;
    let theta_hat = grid.block_start(stat.argmax_block);
    let nh = jump_window(series, grid.block_count(), cfg.jump_window);
    let jump_estimate = estimate_jump(series, theta_hat, nh).ok();
    Ok(GlobalTestReport {
        t_raw: stat.t_raw,
        t_std,
        critical_value,
        source: cfg.critical,
        reject,
        alpha: cfg.alpha,
        argmax_block: stat.argmax_block,
        theta_hat,
        jump_estimate,
        block_count: grid.block_count(),
        valid_differences: stat.valid,
        standardized: stat.standardized,
    })
}

fn localize_block(k: usize, h: f64) -> f64 {
    k as f64 * h
}

/// Start of the block with the largest standardized difference.
pub fn localize_jump(report: &GlobalTestReport) -> f64 {
    report.theta_hat
}

/// `h * argmax` of a standardized-difference vector whose entry `j` belongs
/// to block `j + 1`.
pub fn localize_differences(differences: &[f64], block_length: f64) -> Option<f64> {
    let v: Vec<Option<f64>> = std::iter::once(None)
        .chain(differences.iter().copied().map(Some))
        .collect();
    argmax(&v, &[]).map(|(k, _)| localize_block(k, block_length))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevelSchedule {
    Constant,
    /// `alpha * factor^round`.
    Geometric { factor: f64 },
}

impl LevelSchedule {
    pub fn level(&self, alpha: f64, round: usize) -> f64 {
        match *self {
            LevelSchedule::Constant => alpha,
            LevelSchedule::Geometric { factor } => alpha * factor.powi(round as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    pub test: GlobalTestConfig,
    pub schedule: LevelSchedule,
    pub max_jumps: usize,
}

/// Repeats the global test, discarding the located difference after each
/// rejection and recentering with one difference fewer.
pub fn sequential_detect(series: &QuoteSeries, cfg: &SequentialConfig) -> Result<Vec<JumpEvent>> {
    let grid = build_block_grid(series, cfg.test.grid)?;
    let vol = cfg.test.vol.path(series)?;
    let stat = global_statistic(series, &grid, &vol)?;
    let h = grid.block_length();
    let nh = jump_window(series, grid.block_count(), cfg.test.jump_window);
    let mut discarded = Vec::new();
    let mut events = Vec::new();
    for round in 0..cfg.max_jumps {
        let remaining = stat.valid - discarded.len();
        if remaining < 1 {
            break;
        }
        let Some((k, t_raw)) = argmax(&stat.standardized, &discarded) else {
            break;
        };
        let alpha = cfg.schedule.level(cfg.test.alpha, round);
        let t_std = standardize_global(t_raw, h, remaining)?;
        let (_, reject) = decide(t_raw, t_std, alpha, &cfg.test.critical)?;
        if !reject {
            break;
        }
        let time = grid.block_start(k);
        let size = estimate_jump(series, time, nh)?;
        events.push(JumpEvent {
            time,
            wall_clock: series.meta().wall_clock(time),
            size,
            direction: Direction::of(size),
            block: k,
            latency: None,
            interval: (time - h, time + h),
            alpha,
        });
        discarded.push(k);
    }
    Ok(events)
}

/// Volatility on either side of the local test time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalVol {
    /// Pre-window estimate from blocks ending before `tau` and post-window
    /// estimate from blocks after it.
    Estimate { grid: GridTarget, config: SpotVolConfig },
    /// Known diffusion variance, read at `tau` for both sides.
    Supplied(SpotVolPath),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LocalCritical {
    /// Quantile of `||V| - |V'||` for independent standard normals.
    Asymptotic,
    Bootstrap { critical_value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTestConfig {
    pub nh: usize,
    pub vol: LocalVol,
    pub alpha: f64,
    pub critical: LocalCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub extremum_after: f64,
    pub extremum_before: f64,
    pub sigma_after: f64,
    pub sigma_before: f64,
    pub jump_estimate: f64,
    /// True when a window was cut short by the session boundary.
    pub shrunk: bool,
}

/// `h^{-1/2} |after - before| (1/sigma_after + 1/sigma_before) / 2`.
pub fn local_statistic_value(after: f64, before: f64, sigma_after: f64, sigma_before: f64, h: f64) -> f64 {
    (after - before).abs() * 0.5 * (1.0 / sigma_after + 1.0 / sigma_before) / h.sqrt()
}

fn local_sigmas(series: &QuoteSeries, tau: f64, vol: &LocalVol) -> Result<(f64, f64)> {
    match vol {
        LocalVol::Supplied(p) => {
            let s = p
                .sigma_at(tau)
                .ok_or(Error::DegenerateVolatility { block: 0 })?;
            Ok((s, s))
        }
        LocalVol::Estimate { grid, config } => {
            let g = build_block_grid(series, *grid)?;
            let m = local_extrema(series, &g)?;
            let k = crate::spot_vol::block_index(tau, g.block_count());
            let before = spot_vol_at(&m, k, &config.with_mode(VolMode::Pre))?;
            let after = spot_vol_at(&m, k, &config.with_mode(VolMode::Post))?;
            Ok((after.sqrt(), before.sqrt()))
        }
    }
}

/// Tests for a jump at `tau`. The window size `h` in the rate is
/// `nh / (len - 1)`.
pub fn local_test(series: &QuoteSeries, tau: f64, cfg: &LocalTestConfig) -> Result<LocalTestReport> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} outside (0, 1)")));
    }
    let after = extrema_window(series, tau, cfg.nh, WindowDirection::After)?;
    let before = extrema_window(series, tau, cfg.nh, WindowDirection::Before)?;
    let (sigma_after, sigma_before) = local_sigmas(series, tau, &cfg.vol)?;
    if !(sigma_after > 0.0 && sigma_before > 0.0) {
        return Err(Error::DegenerateVolatility { block: 0 });
    }
    let h = cfg.nh as f64 / (series.len() - 1) as f64;
    let statistic = local_statistic_value(after.value, before.value, sigma_after, sigma_before, h);
    let critical_value = match cfg.critical {
        LocalCritical::Asymptotic => local_quantile(cfg.alpha)?,
        LocalCritical::Bootstrap { critical_value } => critical_value,
    };
    Ok(LocalTestReport {
        statistic,
        critical_value,
        reject: statistic > critical_value,
        alpha: cfg.alpha,
        extremum_after: after.value,
        extremum_before: before.value,
        sigma_after,
        sigma_before,
        jump_estimate: after.value - before.value,
        shrunk: after.shrunk || before.shrunk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Side;

    #[test]
    fn jump_from_windows() {
        let times: Vec<f64> = (1..=6).map(|i| i as f64 / 7.0).collect();
        let s = QuoteSeries::new(times, vec![2.0, 1.0, 3.0, 5.0, 4.0, 6.0], Side::LowerBounded).unwrap();
        let tau = 3.5 / 7.0;
        assert_eq!(estimate_jump(&s, tau, 3).unwrap(), 3.0);
        assert_eq!(estimate_jump(&s.negated(), tau, 3).unwrap(), -(6.0 - 3.0));
    }

    #[test]
    fn localization_example() {
        assert_eq!(localize_differences(&[0.1, 5.0, 0.2], 0.25), Some(0.5));
        assert_eq!(localize_differences(&[1.0, 1.0], 0.25), Some(0.25));
    }

    #[test]
    fn implicit_blocks() {
        let c = implicit_block_count(23_400).unwrap();
        let h = 1.0 / c as f64;
        let rhs = 2.0 * (2.0 / h - 2.0).ln() * 23_400f64.powf(-2.0 / 3.0);
        assert!((h - rhs).abs() / h < 0.02, "{c}");
        assert_eq!(reference_block_count(23_400), 629);
    }

    #[test]
    fn constant_series_has_no_statistic() {
        let s = QuoteSeries::equispaced(vec![1.0; 400], Side::LowerBounded).unwrap();
        let cfg = GlobalTestConfig {
            grid: GridTarget::BlockCount(40),
            vol: VolSource::estimate(GridTarget::BlockCount(40), SpotVolConfig::default().with_window(5)),
            alpha: 0.05,
            critical: CriticalSource::Asymptotic,
            jump_window: None,
        };
        assert!(global_test(&s, &cfg).is_err());
    }

    #[test]
    fn level_schedule() {
        let g = LevelSchedule::Geometric { factor: 0.5 };
        assert_eq!(g.level(0.08, 0), 0.08);
        assert_eq!(g.level(0.08, 2), 0.02);
        assert_eq!(LevelSchedule::Constant.level(0.05, 3), 0.05);
    }

    #[test]
    fn local_statistic_arithmetic() {
        let v = local_statistic_value(4.0, 1.0, 2.0, 1.0, 0.25);
        assert!((v - 3.0 * 0.75 * 2.0).abs() < 1e-12);
    }
}
