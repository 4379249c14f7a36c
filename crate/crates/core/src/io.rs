//! Quote ingestion, session cleaning, intraday segments, the ACF diagnostic
//! and report serialization.
//!
//! Quote files are CSV with header `time_sec,ask_price,bid_price`: time in
//! seconds after midnight, prices in currency units. LOBSTER level-1 data is
//! read from its message file (time in the first column) and orderbook file
//! (ask price, ask size, bid price, bid size; prices times 10^4).
//!
//! Records sharing a timestamp collapse to the last one, since series times
//! must increase strictly. Mid quotes are the log of the mid price.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Direction, JumpEvent};
use crate::par::map_indexed;
use crate::series::{QuoteSeries, SessionMeta, Side};

/// Seconds after midnight.
pub fn hms(h: u32, m: u32, s: u32) -> f64 {
    f64::from(h * 3600 + m * 60 + s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub time_sec: f64,
    pub ask: f64,
    pub bid: f64,
    /// Ask below bid.
    pub crossed: bool,
}

/// Raw level-1 quotes in file order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuoteBook {
    pub records: Vec<QuoteRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum QuoteFormat {
    Csv,
    /// LOBSTER orderbook file; `message` is the paired message file.
    Lobster { message: PathBuf },
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    time_sec: f64,
    ask_price: f64,
    bid_price: f64,
}

impl QuoteBook {
    fn push(&mut self, line: usize, time_sec: f64, ask: f64, bid: f64) -> Result<()> {
        if !time_sec.is_finite() {
            return Err(Error::Parse { line, msg: "non-finite time".into() });
        }
        if !(ask > 0.0 && bid > 0.0 && ask.is_finite() && bid.is_finite()) {
            return Err(Error::Parse { line, msg: format!("prices must be positive, got ask {ask} bid {bid}") });
        }
        if let Some(last) = self.records.last() {
            if time_sec < last.time_sec {
                return Err(Error::Parse {
                    line,
                    msg: format!("time {time_sec} before previous {}", last.time_sec),
                });
            }
        }
        let crossed = ask < bid;
        if crossed {
            self.warnings.push(format!("line {line}: crossed quote, ask {ask} < bid {bid}"));
        }
        self.records.push(QuoteRecord { time_sec, ask, bid, crossed });
        Ok(())
    }

    fn finish(self) -> Result<Self> {
        if self.records.is_empty() {
            return Err(Error::Empty("no quote records".into()));
        }
        Ok(self)
    }

    /// Reads the `time_sec,ask_price,bid_price` format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut book = QuoteBook::default();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            book.push(line, row.time_sec, row.ask_price, row.bid_price)?;
        }
        book.finish()
    }

    /// Reads paired LOBSTER message and level-1 orderbook files. Rows where a
    /// side of the book is empty are skipped with a warning.
    pub fn read_lobster<M: Read, O: Read>(message: M, orderbook: O) -> Result<Self> {
        let mut book = QuoteBook::default();
        let mut msgs = BufReader::new(message).lines();
        for (i, ob) in BufReader::new(orderbook).lines().enumerate() {
            let line = i + 1;
            let ob = ob?;
            if ob.trim().is_empty() {
                continue;
            }
            let msg = msgs
                .next()
                .ok_or_else(|| Error::Parse { line, msg: "message file shorter than orderbook file".into() })??;
            let time_sec: f64 = field(&msg, 0, line)?;
            let ask_raw: f64 = field(&ob, 0, line)?;
            let bid_raw: f64 = field(&ob, 2, line)?;
            if ask_raw >= 9_999_999_999.0 || bid_raw <= -9_999_999_999.0 || ask_raw <= 0.0 || bid_raw <= 0.0 {
                book.warnings.push(format!("line {line}: empty book side, row skipped"));
                continue;
            }
            book.push(line, time_sec, ask_raw / 1e4, bid_raw / 1e4)?;
        }
        book.finish()
    }

    /// Writes the CSV format; floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_sec", "ask_price", "bid_price"])?;
        for r in &self.records {
            w.write_record([r.time_sec.to_string(), r.ask.to_string(), r.bid.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Session bounds: 09:30-16:00 when every record falls inside, otherwise
    /// the span of the data.
    pub fn default_meta(&self) -> SessionMeta {
        let first = self.records.first().map_or(0.0, |r| r.time_sec);
        let last = self.records.last().map_or(1.0, |r| r.time_sec);
        let day = SessionMeta::default();
        if first >= day.start_sec && last <= day.end_sec {
            day
        } else if last > first {
            SessionMeta { start_sec: first, end_sec: last }
        } else {
            SessionMeta { start_sec: first, end_sec: first + 1.0 }
        }
    }

    /// Ask, bid and mid log-price series on `meta`.
    pub fn to_quotes(&self, meta: SessionMeta) -> Result<LoadedQuotes> {
        let mut times = Vec::with_capacity(self.records.len());
        let mut ask = Vec::with_capacity(self.records.len());
        let mut bid = Vec::with_capacity(self.records.len());
        let mut mid = Vec::with_capacity(self.records.len());
        let mut crossed = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let t = (r.time_sec - meta.start_sec) / meta.duration();
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidSeries(format!(
                    "record at {} s outside the session [{}, {}]",
                    r.time_sec, meta.start_sec, meta.end_sec
                )));
            }
            if r.crossed {
                crossed.push(i);
            }
            let values = (r.ask.ln(), r.bid.ln(), ((r.ask + r.bid) / 2.0).ln());
            if times.last() == Some(&t) {
                let k = times.len() - 1;
                (ask[k], bid[k], mid[k]) = values;
            } else {
                times.push(t);
                ask.push(values.0);
                bid.push(values.1);
                mid.push(values.2);
            }
        }
        Ok(LoadedQuotes {
            ask: QuoteSeries::with_meta(times.clone(), ask, Side::LowerBounded, meta)?,
            bid: QuoteSeries::with_meta(times.clone(), bid, Side::UpperBounded, meta)?,
            mid: QuoteSeries::with_meta(times, mid, Side::TwoSided, meta)?,
            crossed_rows: crossed,
            warnings: self.warnings.clone(),
        })
    }
}

fn field(line: &str, idx: usize, lineno: usize) -> Result<f64> {
    let raw = line
        .split(',')
        .nth(idx)
        .ok_or_else(|| Error::Parse { line: lineno, msg: format!("missing column {}", idx + 1) })?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse { line: lineno, msg: format!("bad number '{}'", raw.trim()) })
}

/// The three series built from one quote file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedQuotes {
    pub ask: QuoteSeries,
    pub bid: QuoteSeries,
    pub mid: QuoteSeries,
    /// Record indices with ask below bid; they are retained.
    pub crossed_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn read_book(path: &Path, format: &QuoteFormat) -> Result<QuoteBook> {
    match format {
        QuoteFormat::Csv => QuoteBook::read_csv(File::open(path)?),
        QuoteFormat::Lobster { message } => QuoteBook::read_lobster(File::open(message)?, File::open(path)?),
    }
}

pub fn load_quotes(path: &Path, format: &QuoteFormat) -> Result<LoadedQuotes> {
    let book = read_book(path, format)?;
    book.to_quotes(book.default_meta())
}

/// Loads several files; files are read in parallel.
pub fn load_many(paths: &[PathBuf], format: &QuoteFormat) -> Vec<Result<LoadedQuotes>> {
    map_indexed(paths.len(), |i| load_quotes(&paths[i], format))
}

/// Trading-session filters, in seconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionCleanRules {
    pub session_start_sec: f64,
    pub session_end_sec: f64,
    pub exclude_start_sec: f64,
    pub exclude_end_sec: f64,
    /// Keep only observations where this series' own quote changes.
    pub change_filter: bool,
}

impl Default for SessionCleanRules {
    /// Session 09:30-16:00, opening 09:30-09:35 excluded, change filter on.
    fn default() -> Self {
        Self {
            session_start_sec: hms(9, 30, 0),
            session_end_sec: hms(16, 0, 0),
            exclude_start_sec: hms(9, 30, 0),
            exclude_end_sec: hms(9, 35, 0),
            change_filter: true,
        }
    }
}

impl SessionCleanRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.session_end_sec > self.session_start_sec) {
            return Err(Error::InvalidParameter("session end must follow its start".into()));
        }
        if !(self.exclude_start_sec >= self.session_start_sec
            && self.exclude_end_sec <= self.session_end_sec
            && self.exclude_end_sec >= self.exclude_start_sec)
        {
            return Err(Error::InvalidParameter("exclusion window must lie inside the session".into()));
        }
        Ok(())
    }

    /// Window the cleaned series is normalized to: the session, shortened
    /// when the exclusion touches one of its ends.
    pub fn target_meta(&self) -> SessionMeta {
        let mut start = self.session_start_sec;
        let mut end = self.session_end_sec;
        if self.exclude_start_sec <= start && self.exclude_end_sec > start {
            start = self.exclude_end_sec;
        }
        if self.exclude_end_sec >= end && self.exclude_start_sec < end {
            end = self.exclude_start_sec;
        }
        SessionMeta { start_sec: start, end_sec: end }
    }

    /// Start inclusive, end exclusive, for both windows.
    pub fn keeps(&self, wall: f64) -> bool {
        let in_session = wall >= self.session_start_sec && wall < self.session_end_sec;
        let excluded = wall >= self.exclude_start_sec && wall < self.exclude_end_sec;
        in_session && !excluded
    }
}

/// Wall-clock time rounded to the microsecond, so that boundary records
/// classify the same way after a round trip through session time.
fn wall_clock_us(meta: SessionMeta, t: f64) -> f64 {
    (meta.wall_clock(t) * 1e6).round() / 1e6
}

fn renormalize(series: &QuoteSeries, keep: &[usize], meta: SessionMeta) -> Result<QuoteSeries> {
    let old = series.meta();
    let same = old == meta;
    let times = keep
        .iter()
        .map(|&i| {
            let t = series.times()[i];
            if same {
                t
            } else {
                ((old.wall_clock(t) - meta.start_sec) / meta.duration()).clamp(0.0, 1.0)
            }
        })
        .collect();
    let values = keep.iter().map(|&i| series.values()[i]).collect();
    QuoteSeries::with_meta(times, values, series.side(), meta)
}

/// Drops records outside the session or inside the exclusion window, drops
/// repeated values under the change filter, and renormalizes times to the
/// cleaned window. Cleaning a cleaned series returns it unchanged.
pub fn clean_session(series: &QuoteSeries, rules: &SessionCleanRules) -> Result<QuoteSeries> {
    rules.validate()?;
    let meta = series.meta();
    let mut keep = Vec::with_capacity(series.len());
    let mut last: Option<f64> = None;
    for (i, (&t, &v)) in series.times().iter().zip(series.values()).enumerate() {
        if !rules.keeps(wall_clock_us(meta, t)) {
            continue;
        }
        if rules.change_filter && last == Some(v) {
            continue;
        }
        last = Some(v);
        keep.push(i);
    }
    if keep.len() < 2 {
        return Err(Error::Empty(format!("{} observation(s) left after cleaning", keep.len())));
    }
    renormalize(series, &keep, rules.target_meta())
}

/// Keeps the first observation and every observation whose value differs
/// from the last kept one. Times and session bounds are unchanged.
pub fn change_filter(series: &QuoteSeries) -> Result<QuoteSeries> {
    let mut times = Vec::with_capacity(series.len());
    let mut values = Vec::with_capacity(series.len());
    for (&t, &v) in series.times().iter().zip(series.values()) {
        if values.last() != Some(&v) {
            times.push(t);
            values.push(v);
        }
    }
    if values.len() < 2 {
        return Err(Error::Empty("fewer than two distinct quotes".into()));
    }
    QuoteSeries::with_meta(times, values, series.side(), series.meta())
}

/// Segment boundaries 09:35, 10:00, 11:00, ..., 16:00.
pub fn interval_bounds() -> [f64; 8] {
    [
        hms(9, 35, 0),
        hms(10, 0, 0),
        hms(11, 0, 0),
        hms(12, 0, 0),
        hms(13, 0, 0),
        hms(14, 0, 0),
        hms(15, 0, 0),
        hms(16, 0, 0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSegment {
    pub start_sec: f64,
    pub end_sec: f64,
    pub observations: usize,
    /// `None` when fewer than two observations fall in the segment.
    pub series: Option<QuoteSeries>,
}

impl IntervalSegment {
    pub fn is_empty(&self) -> bool {
        self.series.is_none()
    }

    pub fn label(&self) -> String {
        let fmt = |s: f64| format!("{:02}:{:02}", (s / 3600.0) as u32, ((s % 3600.0) / 60.0) as u32);
        format!("{}-{}", fmt(self.start_sec), fmt(self.end_sec))
    }
}

/// Splits a series into the seven half-open intraday segments, each
/// renormalized to `[0, 1]`.
pub fn split_intervals(series: &QuoteSeries) -> Result<Vec<IntervalSegment>> {
    let meta = series.meta();
    let bounds = interval_bounds();
    let mut out = Vec::with_capacity(7);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let keep: Vec<usize> = series
            .times()
            .iter()
            .enumerate()
            .filter(|(_, &t)| {
                let wall = wall_clock_us(meta, t);
                wall >= a && wall < b
            })
            .map(|(i, _)| i)
            .collect();
        let seg_meta = SessionMeta { start_sec: a, end_sec: b };
        let series = if keep.len() >= 2 {
            Some(renormalize(series, &keep, seg_meta)?)
        } else {
            None
        };
        out.push(IntervalSegment {
            start_sec: a,
            end_sec: b,
            observations: keep.len(),
            series,
        });
    }
    Ok(out)
}

/// Sample autocorrelations of `x` at lags `1..=max_lag`.
pub fn sample_acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() <= max_lag + 1 {
        return Err(Error::InsufficientObservations(format!(
            "{} values are too few for lag {max_lag}",
            x.len()
        )));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::InvalidSeries("constant input has no autocorrelation".into()));
    }
    Ok((1..=max_lag)
        .map(|k| d.iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfRow {
    pub lag: usize,
    pub median: f64,
}

/// Per lag, the median across days of the sample ACF of first differences.
pub fn acf_median_diagnostic(days: &[QuoteSeries], max_lag: usize) -> Result<Vec<AcfRow>> {
    if days.is_empty() {
        return Err(Error::Empty("no days".into()));
    }
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be positive".into()));
    }
    let per_day = days
        .iter()
        .map(|s| {
            let diffs: Vec<f64> = s.values().windows(2).map(|w| w[1] - w[0]).collect();
            sample_acf(&diffs, max_lag)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..max_lag)
        .map(|k| {
            let mut col: Vec<f64> = per_day.iter().map(|a| a[k]).collect();
            AcfRow { lag: k + 1, median: median(&mut col) }
        })
        .collect())
}

/// Serialized form of a [`JumpEvent`], one per line in event streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_time: f64,
    pub wall_clock: f64,
    pub direction: Direction,
    pub size_estimate: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub alpha: f64,
}

impl From<&JumpEvent> for EventRecord {
    fn from(e: &JumpEvent) -> Self {
        Self {
            session_time: e.time,
            wall_clock: e.wall_clock,
            direction: e.direction,
            size_estimate: e.size,
            interval_lo: e.interval.0,
            interval_hi: e.interval.1,
            alpha: e.alpha,
        }
    }
}

/// Writes events as JSON lines of [`EventRecord`].
pub fn write_events<W: Write>(out: W, events: &[JumpEvent]) -> Result<()> {
    let records: Vec<EventRecord> = events.iter().map(EventRecord::from).collect();
    write_jsonl(out, &records)
}

/// Pretty JSON for reports.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// One JSON object per line, e.g. for online events.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// CSV with header `time,wall_clock_sec,value`.
pub fn write_series_csv<W: Write>(out: W, series: &QuoteSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "wall_clock_sec", "value"])?;
    let meta = series.meta();
    for (&t, &v) in series.times().iter().zip(series.values()) {
        w.write_record([t.to_string(), meta.wall_clock(t).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads [`write_series_csv`] output back; the session bounds are not stored
/// and must be supplied.
pub fn read_series_csv<R: Read>(reader: R, side: Side, meta: SessionMeta) -> Result<QuoteSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse { line, msg: format!("bad column {}", j + 1) })
        };
        times.push(get(0)?);
        values.push(get(2)?);
    }
    if times.is_empty() {
        return Err(Error::Empty("series file has no rows".into()));
    }
    QuoteSeries::with_meta(times, values, side, meta)
}
