//! Observation series, block partitions and block-wise local extrema.
//!
//! Session time is always normalized to `[0, 1]`. Block `k` of a grid with
//! `c` blocks covers the half-open interval `(k/c, (k+1)/c]`; an observation
//! exactly at time zero belongs to block 0. Index sets are computed from the
//! observation times, so irregular (e.g. thinned) sampling is supported.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the book a series comes from, i.e. how its noise is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Ask quotes: noise is nonnegative, use local minima.
    LowerBounded,
    /// Bid quotes: noise is nonpositive, use local maxima.
    UpperBounded,
    /// Mid quotes: centered two-sided noise.
    TwoSided,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::LowerBounded => Side::UpperBounded,
            Side::UpperBounded => Side::LowerBounded,
            Side::TwoSided => Side::TwoSided,
        }
    }

    /// The local order statistic used on this side.
    pub fn extremum(self) -> Result<Extremum> {
        match self {
            Side::LowerBounded => Ok(Extremum::Min),
            Side::UpperBounded => Ok(Extremum::Max),
            Side::TwoSided => Err(Error::InvalidParameter(
                "local extrema require a one-sided (ask or bid) series".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Min,
    Max,
}

impl Extremum {
    pub fn of(self, values: &[f64]) -> Option<f64> {
        let mut it = values.iter().copied();
        let first = it.next()?;
        Some(match self {
            Extremum::Min => it.fold(first, f64::min),
            Extremum::Max => it.fold(first, f64::max),
        })
    }

    /// Whether `candidate` improves on `current` (is a new running extremum).
    pub fn improves(self, candidate: f64, current: f64) -> bool {
        match self {
            Extremum::Min => candidate < current,
            Extremum::Max => candidate > current,
        }
    }
}

/// Wall-clock bounds of the session, in seconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub start_sec: f64,
    pub end_sec: f64,
}

impl Default for SessionMeta {
    /// 09:30 to 16:00.
    fn default() -> Self {
        Self {
            start_sec: 34_200.0,
            end_sec: 57_600.0,
        }
    }
}

impl SessionMeta {
    pub fn wall_clock(&self, session_time: f64) -> f64 {
        self.start_sec + session_time * (self.end_sec - self.start_sec)
    }

    pub fn duration(&self) -> f64 {
        self.end_sec - self.start_sec
    }
}

/// Timestamped log-prices of one side of the book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    side: Side,
    meta: SessionMeta,
}

impl QuoteSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, side: Side) -> Result<Self> {
        Self::with_meta(times, values, side, SessionMeta::default())
    }

    pub fn with_meta(
        times: Vec<f64>,
        values: Vec<f64>,
        side: Side,
        meta: SessionMeta,
    ) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InsufficientObservations(
                "a series needs at least two observations".into(),
            ));
        }
        if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidSeries(format!("time {t} outside [0, 1]")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite value".into()));
        }
        if !(meta.end_sec > meta.start_sec) {
            return Err(Error::InvalidSeries("session end before start".into()));
        }
        Ok(Self {
            times,
            values,
            side,
            meta,
        })
    }

    /// Observations at `i / (len - 1)`.
    pub fn equispaced(values: Vec<f64>, side: Side) -> Result<Self> {
        let n = values.len().saturating_sub(1).max(1) as f64;
        let times = (0..values.len()).map(|i| i as f64 / n).collect();
        Self::new(times, values, side)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn meta(&self) -> SessionMeta {
        self.meta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of observations with time `<= t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// The mirrored series `-Y` on the opposite side of the book.
    pub fn negated(&self) -> QuoteSeries {
        QuoteSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            side: self.side.flipped(),
            meta: self.meta,
        }
    }

    /// `lambda * Y + shift`; `lambda` must be positive to keep the side.
    pub fn affine(&self, lambda: f64, shift: f64) -> Result<QuoteSeries> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter("scale must be positive".into()));
        }
        Ok(QuoteSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|v| lambda * v + shift).collect(),
            side: self.side,
            meta: self.meta,
        })
    }
}

/// How to size a block grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridTarget {
    BlockCount(usize),
    /// `floor(len / B)` blocks of equal session-time length.
    ObsPerBlock(usize),
    /// `floor(len / B)` blocks of exactly `B` consecutive observations (the
    /// last block takes the remainder). Block boundaries sit at the last
    /// observation time of each block.
    ObsChunks(usize),
}

/// Equal-length partition of `[0, 1]` and the index range of each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid {
    block_count: usize,
    starts: Vec<usize>,
    /// Block `k` covers `(edges[k], edges[k + 1]]`.
    edges: Vec<f64>,
}

impl BlockGrid {
    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn block_length(&self) -> f64 {
        1.0 / self.block_count as f64
    }

    pub fn observation_count(&self) -> usize {
        *self.starts.last().unwrap_or(&0)
    }

    /// Indices of the observations on block `k`.
    pub fn index_set(&self, k: usize) -> Range<usize> {
        self.starts[k]..self.starts[k + 1]
    }

    pub fn block_of_time(&self, t: f64) -> usize {
        let k = self.edges[1..self.block_count].partition_point(|&e| e < t);
        k.min(self.block_count - 1)
    }

    pub fn block_start(&self, k: usize) -> f64 {
        self.edges[k]
    }

    /// Whether all blocks have the same session-time length.
    pub fn is_uniform(&self) -> bool {
        self.edges
            .iter()
            .enumerate()
            .all(|(k, &e)| e == k as f64 / self.block_count as f64)
    }
}

pub(crate) fn block_of_time(t: f64, block_count: usize) -> usize {
    let k = (t * block_count as f64).ceil() - 1.0;
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(block_count - 1)
    }
}

pub fn build_block_grid(series: &QuoteSeries, target: GridTarget) -> Result<BlockGrid> {
    let block_count = match target {
        GridTarget::BlockCount(c) => c,
        GridTarget::ObsPerBlock(b) | GridTarget::ObsChunks(b) => {
            if b == 0 {
                return Err(Error::InvalidParameter("observations per block must be positive".into()));
            }
            series.len() / b
        }
    };
    if block_count < 2 {
        return Err(Error::InsufficientObservations(format!(
            "{} observations give {block_count} block(s) for {target:?}",
            series.len()
        )));
    }
    if let GridTarget::ObsChunks(b) = target {
        let times = series.times();
        let mut starts: Vec<usize> = (0..block_count).map(|k| k * b).collect();
        starts.push(series.len());
        let mut edges = vec![0.0];
        edges.extend((1..block_count).map(|k| times[k * b - 1]));
        edges.push(1.0);
        return Ok(BlockGrid {
            block_count,
            starts,
            edges,
        });
    }
    let mut starts = vec![0usize; block_count + 1];
    let mut k = 0usize;
    for (i, &t) in series.times().iter().enumerate() {
        let b = block_of_time(t, block_count);
        while k < b {
            k += 1;
            starts[k] = i;
        }
    }
    while k < block_count {
        k += 1;
        starts[k] = series.len();
    }
    let edges = (0..=block_count).map(|k| k as f64 / block_count as f64).collect();
    Ok(BlockGrid {
        block_count,
        starts,
        edges,
    })
}

/// Block-wise local minima (ask) or maxima (bid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSeries {
    /// Extremum per block; empty blocks carry their nearest neighbor's value.
    pub values: Vec<f64>,
    /// `None` on empty blocks.
    pub raw: Vec<Option<f64>>,
    pub empty_blocks: Vec<usize>,
    pub kind: Extremum,
    pub grid: BlockGrid,
}

impl ExtremaSeries {
    pub fn block_count(&self) -> usize {
        self.values.len()
    }

    pub fn block_length(&self) -> f64 {
        self.grid.block_length()
    }

    pub fn is_empty_block(&self, k: usize) -> bool {
        self.raw[k].is_none()
    }

    /// `m_k - m_{k-1}` for `k >= 1`, or `None` when either block is empty.
    pub fn difference(&self, k: usize) -> Option<f64> {
        if k == 0 || k >= self.raw.len() {
            return None;
        }
        Some(self.raw[k]? - self.raw[k - 1]?)
    }

    /// Rescales all extrema by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> ExtremaSeries {
        ExtremaSeries {
            values: self.values.iter().map(|v| v * lambda).collect(),
            raw: self.raw.iter().map(|v| v.map(|v| v * lambda)).collect(),
            ..self.clone()
        }
    }
}

pub fn local_extrema(series: &QuoteSeries, grid: &BlockGrid) -> Result<ExtremaSeries> {
    let kind = series.side().extremum()?;
    if grid.observation_count() != series.len() {
        return Err(Error::InvalidParameter(
            "grid was built from a different series".into(),
        ));
    }
    let values = series.values();
    let raw: Vec<Option<f64>> = (0..grid.block_count())
        .map(|k| kind.of(&values[grid.index_set(k)]))
        .collect();
    let filled = fill_empty(&raw).ok_or(Error::AllBlocksEmpty)?;
    let empty_blocks = raw
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.is_none().then_some(k))
        .collect();
    Ok(ExtremaSeries {
        values: filled,
        raw,
        empty_blocks,
        kind,
        grid: grid.clone(),
    })
}

/// Nearest nonempty neighbor, preferring the earlier block on ties.
fn fill_empty(raw: &[Option<f64>]) -> Option<Vec<f64>> {
    let nonempty: Vec<usize> = raw
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|_| k))
        .collect();
    if nonempty.is_empty() {
        return None;
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut j = 0;
    for (k, v) in raw.iter().enumerate() {
        if let Some(v) = v {
            out.push(*v);
            continue;
        }
        while j + 1 < nonempty.len() && nonempty[j + 1] < k {
            j += 1;
        }
        let left = (nonempty[j] < k).then_some(nonempty[j]);
        let right = nonempty[j..].iter().copied().find(|&i| i > k);
        let pick = match (left, right) {
            (Some(l), Some(r)) => {
                if k - l <= r - k {
                    l
                } else {
                    r
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!(),
        };
        out.push(raw[pick].unwrap());
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowDirection {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowExtremum {
    pub value: f64,
    /// Observations actually used.
    pub used: usize,
    /// True when the window was cut short by a session boundary.
    pub shrunk: bool,
}

/// Extremum over the `window_obs` observations right after (strictly later
/// than) `tau`, or over the `window_obs` observations at or before `tau`.
pub fn extrema_window(
    series: &QuoteSeries,
    tau: f64,
    window_obs: usize,
    direction: WindowDirection,
) -> Result<WindowExtremum> {
    let kind = series.side().extremum()?;
    let range = window_range(series, tau, window_obs, direction);
    let used = range.len();
    let value = kind.of(&series.values()[range]).ok_or_else(|| {
        Error::EmptyWindow(format!("no observations {direction:?} tau = {tau}"))
    })?;
    Ok(WindowExtremum {
        value,
        used,
        shrunk: used < window_obs,
    })
}

pub(crate) fn window_range(
    series: &QuoteSeries,
    tau: f64,
    window_obs: usize,
    direction: WindowDirection,
) -> Range<usize> {
    let split = series.count_until(tau);
    match direction {
        WindowDirection::After => split..(split + window_obs).min(series.len()),
        WindowDirection::Before => split.saturating_sub(window_obs)..split,
    }
}
