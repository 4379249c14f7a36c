//! Streaming jump detection from running block extrema.
//!
//! For asks the running minimum of the current block can only fall, so a
//! downward jump is flagged at the first observation that lies far enough
//! below the previous block's minimum. Upward jumps on asks (and downward
//! jumps on bids) only show once the block is complete and are reported at
//! the block end. Volatility for block `k` is frozen when the block opens,
//! from differences of blocks that are already complete.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{global_centering, gumbel_quantile, GumbelCalibration};
use crate::inference::{Direction, JumpEvent};
use crate::mmn::block_averages;
use crate::series::{block_of_time, Extremum, QuoteSeries, SessionMeta, Side};
use crate::spot_vol::{SpotVolConfig, SpotVolPath, TruncationScale, STANDARDIZATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// `h^{1/2} sigma (b_N + a_N q_{1-alpha})` with `N = blocks - 1`.
    BlockRate,
    /// `n^{-1/3} sigma (q_{1-alpha} + B_n)`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnlineVol {
    /// Pre-window estimate over completed blocks. Automatic truncation scales
    /// with the untruncated estimate of the same window.
    Estimate(SpotVolConfig),
    Supplied(SpotVolPath),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Expected observations in the session (used by the literal threshold).
    pub n: usize,
    pub block_count: usize,
    pub alpha: f64,
    pub side: Side,
    pub vol: OnlineVol,
    pub threshold: ThresholdMode,
    pub meta: SessionMeta,
}

impl DetectorConfig {
    pub fn new(n: usize, block_count: usize, alpha: f64, side: Side, vol: OnlineVol) -> Self {
        Self {
            n,
            block_count,
            alpha,
            side,
            vol,
            threshold: ThresholdMode::BlockRate,
            meta: SessionMeta::default(),
        }
    }

    /// Multiplier of `sigma` giving the distance that triggers an event.
    pub fn threshold_factor(&self) -> Result<f64> {
        let q = gumbel_quantile(self.alpha)?;
        match self.threshold {
            ThresholdMode::BlockRate => {
                let cal = GumbelCalibration::absolute(self.block_count - 1)?;
                let h = 1.0 / self.block_count as f64;
                Ok(h.sqrt() * cal.unstandardize(q))
            }
            ThresholdMode::Literal => {
                let b = global_centering(self.block_count)?;
                Ok((self.n as f64).powf(-1.0 / 3.0) * (q + b))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    config: DetectorConfig,
    kind: Extremum,
    factor: f64,
    block: usize,
    running: Option<f64>,
    /// Extrema of completed blocks; `None` for empty blocks.
    history: Vec<Option<f64>>,
    sigma: Option<f64>,
    fired: bool,
    last_time: f64,
    started: bool,
    events: Vec<JumpEvent>,
}

impl DetectorState {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        if config.block_count < 3 {
            return Err(Error::InvalidParameter("detector needs at least 3 blocks".into()));
        }
        if config.n < 2 {
            return Err(Error::InvalidParameter("detector needs n >= 2".into()));
        }
        if let OnlineVol::Estimate(v) = &config.vol {
            v.with_mode(crate::spot_vol::VolMode::Pre).validate()?;
        }
        let kind = config.side.extremum()?;
        let factor = config.threshold_factor()?;
        let mut state = Self {
            config,
            kind,
            factor,
            block: 0,
            running: None,
            history: Vec::new(),
            sigma: None,
            fired: false,
            last_time: f64::NEG_INFINITY,
            started: false,
            events: Vec::new(),
        };
        state.sigma = state.block_sigma(0);
        Ok(state)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn running_extremum(&self) -> Option<f64> {
        self.running
    }

    pub fn completed_extrema(&self) -> &[Option<f64>] {
        &self.history
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    /// Volatility frozen for the current block.
    pub fn current_sigma(&self) -> Option<f64> {
        self.sigma
    }

    fn h(&self) -> f64 {
        1.0 / self.config.block_count as f64
    }

    fn block_sigma(&self, k: usize) -> Option<f64> {
        match &self.config.vol {
            OnlineVol::Supplied(p) => p.sigma_at(k as f64 * self.h()),
            OnlineVol::Estimate(cfg) => {
                let lo = k.saturating_sub(cfg.window).max(1);
                let diffs: Vec<f64> = (lo..k)
                    .filter_map(|r| Some(self.history.get(r).copied()?? - self.history[r - 1]?))
                    .collect();
                if diffs.is_empty() {
                    return None;
                }
                let h = self.h();
                let untruncated = STANDARDIZATION * diffs.iter().map(|d| d * d).sum::<f64>()
                    / (diffs.len() as f64 * h);
                let threshold = cfg.truncation.map(|tr| {
                    let beta = match tr.beta {
                        TruncationScale::Fixed(b) => b,
                        TruncationScale::Auto { multiple } => multiple * untruncated.sqrt(),
                    };
                    beta * h.powf(tr.kappa)
                });
                let kept: f64 = diffs
                    .iter()
                    .filter(|d| threshold.is_none_or(|u| d.abs() <= u))
                    .map(|d| d * d)
                    .sum();
                let var = STANDARDIZATION * kept / (diffs.len() as f64 * h);
                let var = match cfg.correction {
                    crate::spot_vol::Correction::Factor(c) => c * var,
                    _ => var,
                };
                (var > 0.0).then(|| var.sqrt())
            }
        }
    }

    fn previous(&self) -> Option<f64> {
        self.history.last().copied().flatten()
    }

    fn signed_gap(&self, value: f64, previous: f64) -> f64 {
        // distance in the direction the running extremum moves
        match self.kind {
            Extremum::Min => previous - value,
            Extremum::Max => value - previous,
        }
    }

    fn event(&self, time: f64, size: f64) -> JumpEvent {
        let lo = self.block as f64 * self.h();
        JumpEvent {
            time,
            wall_clock: self.config.meta.wall_clock(time),
            size,
            direction: Direction::of(size),
            block: self.block,
            latency: Some((time - lo) * self.config.meta.duration()),
            interval: (lo, time),
            alpha: self.config.alpha,
        }
    }

    /// Completes the current block, checks the slow direction, and opens
    /// block `next`.
    fn roll_to(&mut self, next: usize) -> Option<JumpEvent> {
        let mut out = None;
        while self.block < next {
            let finished = self.running.take();
            if let (Some(m), Some(prev), Some(sigma), false) =
                (finished, self.previous(), self.sigma, self.fired)
            {
                if -self.signed_gap(m, prev) > self.factor * sigma {
                    let end = (self.block + 1) as f64 * self.h();
                    let ev = self.event(end, m - prev);
                    self.events.push(ev);
                    out = Some(ev);
                }
            }
            self.history.push(finished);
            self.block += 1;
            self.fired = false;
            self.sigma = self.block_sigma(self.block);
        }
        out
    }

    /// Feeds one observation. Returns the event it triggers or, failing
    /// that, the event for a block it completed. All events are kept in
    /// [`DetectorState::events`].
    pub fn push(&mut self, time: f64, value: f64) -> Result<Option<JumpEvent>> {
        if !time.is_finite() || !value.is_finite() || !(0.0..=1.0).contains(&time) {
            return Err(Error::InvalidParameter(format!(
                "observation ({time}, {value}) outside the session"
            )));
        }
        if self.started && time < self.last_time {
            return Err(Error::OutOfOrder {
                time,
                last: self.last_time,
            });
        }
        self.started = true;
        self.last_time = time;
        let k = block_of_time(time, self.config.block_count);
        let rolled = if k > self.block { self.roll_to(k) } else { None };
        self.running = Some(match self.running {
            Some(r) if !self.kind.improves(value, r) => r,
            _ => value,
        });
        if self.fired {
            return Ok(rolled);
        }
        let (Some(prev), Some(sigma)) = (self.previous(), self.sigma) else {
            return Ok(rolled);
        };
        if self.signed_gap(value, prev) > self.factor * sigma {
            self.fired = true;
            let ev = self.event(time, value - prev);
            self.events.push(ev);
            return Ok(Some(ev));
        }
        Ok(rolled)
    }

    /// Completes the remaining blocks of the session.
    pub fn finish(&mut self) -> Option<JumpEvent> {
        let last = self.config.block_count;
        self.roll_to(last)
    }
}

/// Replays a whole series and returns the events.
pub fn detect_online(series: &QuoteSeries, config: DetectorConfig) -> Result<Vec<JumpEvent>> {
    let mut state = DetectorState::new(config)?;
    for (&t, &v) in series.times().iter().zip(series.values()) {
        state.push(t, v)?;
    }
    state.finish();
    Ok(state.events)
}

/// Local-average detector on mid quotes: a jump is seen only when a block
/// average is complete, at the block end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmnDetectorConfig {
    /// Observations per block.
    pub nh: usize,
    pub noise_level: f64,
    pub critical_value: f64,
    pub sigma: SpotVolPath,
    pub meta: SessionMeta,
}

/// Runs the local-average detector over a complete mid series.
pub fn detect_mmn(mid: &QuoteSeries, cfg: &MmnDetectorConfig) -> Result<Vec<JumpEvent>> {
    if cfg.nh < 2 {
        return Err(Error::InvalidParameter("nh must be at least 2".into()));
    }
    let n = mid.len() - 1;
    let avg = block_averages(mid.values(), cfg.nh);
    let c = cfg.nh as f64 / (n as f64).sqrt();
    let mut events = Vec::new();
    for k in 1..avg.len() {
        let start = mid.times()[k * cfg.nh];
        let end_idx = ((k + 1) * cfg.nh - 1).min(n);
        let end = mid.times()[end_idx];
        let s2 = cfg
            .sigma
            .variance_at(start)
            .ok_or(Error::DegenerateVolatility { block: k })?;
        let scale = (2.0 / 3.0 * s2 * c * c + 2.0 * cfg.noise_level.powi(2)).sqrt();
        let d = avg[k] - avg[k - 1];
        if d.abs() / scale > cfg.critical_value {
            events.push(JumpEvent {
                time: end,
                wall_clock: cfg.meta.wall_clock(end),
                size: d,
                direction: Direction::of(d),
                block: k,
                latency: Some((end - start) * cfg.meta.duration()),
                interval: (mid.times()[(k - 1) * cfg.nh], end),
                alpha: f64::NAN,
            });
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaceMatch {
    pub mmn_time: f64,
    pub ask_time: f64,
    pub bid_time: f64,
    /// `mmn_time - min(ask_time, bid_time)` in seconds.
    pub advantage_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRecord {
    pub ask_events: Vec<JumpEvent>,
    pub bid_events: Vec<JumpEvent>,
    pub mmn_events: Vec<JumpEvent>,
    pub matches: Vec<RaceMatch>,
}

impl RaceRecord {
    pub fn median_advantage(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.matches.iter().map(|m| m.advantage_seconds).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[mid]
        } else {
            0.5 * (v[mid - 1] + v[mid])
        })
    }
}

fn nearest(events: &[JumpEvent], t: f64, window: f64) -> Option<f64> {
    events
        .iter()
        .map(|e| e.time)
        .filter(|s| (s - t).abs() <= window)
        .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
}

/// Runs the ask, bid and mid detectors on one session and pairs events that
/// all three report within `window` session time of the mid event.
pub fn race(
    mid: &QuoteSeries,
    ask: &QuoteSeries,
    bid: &QuoteSeries,
    ask_cfg: DetectorConfig,
    bid_cfg: DetectorConfig,
    mmn_cfg: &MmnDetectorConfig,
    window: f64,
) -> Result<RaceRecord> {
    if ask.side() != Side::LowerBounded || bid.side() != Side::UpperBounded {
        return Err(Error::InvalidSeries("race needs an ask and a bid stream".into()));
    }
    if ask_cfg.side != Side::LowerBounded || bid_cfg.side != Side::UpperBounded {
        return Err(Error::InvalidParameter("detector sides do not match the streams".into()));
    }
    let ask_events = detect_online(ask, ask_cfg)?;
    let bid_events = detect_online(bid, bid_cfg)?;
    let mmn_events = detect_mmn(mid, mmn_cfg)?;
    let duration = mmn_cfg.meta.duration();
    let matches = mmn_events
        .iter()
        .filter_map(|e| {
            let a = nearest(&ask_events, e.time, window)?;
            let b = nearest(&bid_events, e.time, window)?;
            Some(RaceMatch {
                mmn_time: e.time,
                ask_time: a,
                bid_time: b,
                advantage_seconds: (e.time - a.min(b)) * duration,
            })
        })
        .collect();
    Ok(RaceRecord {
        ask_events,
        bid_events,
        mmn_events,
        matches,
    })
}
