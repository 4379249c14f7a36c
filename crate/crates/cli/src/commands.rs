//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use lomn_core::experiment::{TableId, DEFAULT_BOOTSTRAP_SAMPLES};
use lomn_core::inference::{
    global_test, local_test, reference_block_count, sequential_detect, CriticalSource, GlobalTestConfig,
    GlobalTestReport, JumpEvent, LevelSchedule, LocalCritical, LocalTestConfig, LocalTestReport, LocalVol,
    SequentialConfig, VolSource,
};
use lomn_core::io::{
    self as qio, acf_median_diagnostic, change_filter, clean_session, load_quotes, split_intervals,
    write_series_csv, LoadedQuotes, QuoteFormat, SessionCleanRules,
};
use lomn_core::mmn::{
    bootstrap_handle, empirical_quantile, estimate_noise_level, lm_critical_value, local_bootstrap, BootScheme,
    BootStatistic, BootVol, BootstrapConfig, LocalKind,
};
use lomn_core::online::{detect_online, race, DetectorConfig, MmnDetectorConfig, OnlineVol, RaceRecord, ThresholdMode};
use lomn_core::rng::rng_for;
use lomn_core::sim::{sample_jump, seasonal_factor, simulate_session, Jump, NoiseSpec, SimConfig, SvParams, DEFAULT_JUMP_BAND};
use lomn_core::spot_vol::SpotVolConfig;
use lomn_core::{GridTarget, QuoteSeries, SessionMeta, Side};
use serde::Serialize;
use thiserror::Error;

use crate::{
    AcfArgs, CalibrateArgs, CleanArgs, CleanSide, Command, CriticalArg, DetectOnlineArgs, FileFormat, InputArgs,
    NoiseArg, RaceArgs, ReproduceArgs, SchemeArg, SideArg, SimulateArgs, StatisticArg, TableArg, TestGlobalArgs,
    TestLocalArgs, ThresholdArg,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lomn_core::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

/// Builds the global worker pool; `0` leaves the default size.
pub fn init_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::TestGlobal(a) => test_global(a),
        Command::TestLocal(a) => test_local(a),
        Command::DetectOnline(a) => detect(a),
        Command::Race(a) => race_cmd(a),
        Command::CalibrateBootstrap(a) => calibrate(a),
        Command::ReproduceTable(a) => reproduce(a),
        Command::DiagnoseAcf(a) => diagnose_acf(a),
        Command::Clean(a) => clean(a),
    }
    .map(|()| 0)
    .or_else(|e| match e {
        CliError::Usage(ref m) if m == STRICT_FAILURE => Ok(1),
        e => Err(e),
    })
}

const STRICT_FAILURE: &str = "cells outside tolerance";

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn format_of(format: FileFormat, message: Option<&PathBuf>) -> Result<QuoteFormat> {
    match format {
        FileFormat::Csv => Ok(QuoteFormat::Csv),
        FileFormat::Lobster => message
            .map(|m| QuoteFormat::Lobster { message: m.clone() })
            .ok_or_else(|| CliError::Usage("--format lobster needs --message".into())),
    }
}

fn report_warnings(q: &LoadedQuotes) {
    if !q.crossed_rows.is_empty() {
        eprintln!("warning: {} crossed quote record(s) retained", q.crossed_rows.len());
    }
    for w in q.warnings.iter().filter(|w| !w.contains("crossed quote")) {
        eprintln!("warning: {w}");
    }
}

/// Applies the requested cleaning to one series.
fn prepare(series: &QuoteSeries, clean: bool, keep_repeats: bool) -> Result<QuoteSeries> {
    if clean {
        let rules = SessionCleanRules {
            change_filter: !keep_repeats,
            ..SessionCleanRules::default()
        };
        return Ok(clean_session(series, &rules)?);
    }
    if keep_repeats {
        Ok(series.clone())
    } else {
        Ok(change_filter(series)?)
    }
}

struct Input {
    quotes: LoadedQuotes,
    ask: QuoteSeries,
    bid: QuoteSeries,
}

impl Input {
    fn load(args: &InputArgs) -> Result<Self> {
        let format = format_of(args.format, args.message.as_ref())?;
        let quotes = load_quotes(&args.input, &format)?;
        report_warnings(&quotes);
        let ask = prepare(&quotes.ask, args.clean, args.keep_repeats)?;
        let bid = prepare(&quotes.bid, args.clean, args.keep_repeats)?;
        Ok(Self { quotes, ask, bid })
    }

    fn side(&self, side: SideArg) -> &QuoteSeries {
        match side {
            SideArg::Ask => &self.ask,
            SideArg::Bid => &self.bid,
        }
    }

    fn mid(&self, clean: bool) -> Result<QuoteSeries> {
        if clean {
            Ok(clean_session(
                &self.quotes.mid,
                &SessionCleanRules {
                    change_filter: false,
                    ..SessionCleanRules::default()
                },
            )?)
        } else {
            Ok(self.quotes.mid.clone())
        }
    }
}

fn side_label(side: Side) -> &'static str {
    match side {
        Side::LowerBounded => "ask",
        Side::UpperBounded => "bid",
        Side::TwoSided => "mid",
    }
}

fn vol_grid(series: &QuoteSeries) -> GridTarget {
    GridTarget::BlockCount(((series.len() - 1) / 30).max(2))
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimTruth {
    n: usize,
    seed: u64,
    noise: NoiseSpec,
    start_sec: f64,
    end_sec: f64,
    jumps: Vec<Jump>,
    ask_observations: usize,
    bid_observations: usize,
    rows: usize,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let noise = match a.noise {
        NoiseArg::Ar1 => NoiseSpec::Ar1Gaussian { q: a.q, phi: a.phi },
        NoiseArg::HalfNormal => NoiseSpec::HalfNormal { q: a.q },
        NoiseArg::Gaussian => NoiseSpec::Gaussian { q: a.q },
        NoiseArg::Exponential => NoiseSpec::Exponential { q: a.q },
        NoiseArg::Rounding => NoiseSpec::Rounding { q: a.q, tick: a.tick, x0: a.x0 },
    };
    noise.validate()?;
    let meta = SessionMeta { start_sec: a.start_sec, end_sec: a.end_sec };
    if !(meta.end_sec > meta.start_sec) {
        return Err(CliError::Usage("--end-sec must exceed --start-sec".into()));
    }
    let config = SimConfig { n: a.n, seed: a.seed, ..SimConfig::default() };
    let jump = if a.jump == 0.0 {
        None
    } else if let Some(time) = a.jump_time {
        if !(0.0..=1.0).contains(&time) {
            return Err(CliError::Usage("--jump-time must lie in [0, 1]".into()));
        }
        Some(Jump { time, size: a.jump })
    } else {
        let mut rng = rng_for(a.seed, 0x4A55_4D50);
        Some(sample_jump(&mut rng, a.jump.abs(), DEFAULT_JUMP_BAND))
    };
    let obs = simulate_session(&config, &noise, jump, 0)?;
    let offset = if matches!(noise, NoiseSpec::Rounding { .. }) { 0.0 } else { a.x0 };

    let mut w = csv::Writer::from_writer(sink(a.output.as_deref())?);
    w.write_record(["time_sec", "ask_price", "bid_price"])?;
    let (mut i, mut j) = (0, 0);
    let (mut ask, mut bid) = (None::<f64>, None::<f64>);
    let mut rows = 0;
    while i < obs.ask_index.len() || j < obs.bid_index.len() {
        let next_a = obs.ask_index.get(i).copied().unwrap_or(usize::MAX);
        let next_b = obs.bid_index.get(j).copied().unwrap_or(usize::MAX);
        let k = next_a.min(next_b);
        if next_a == k {
            ask = Some(obs.ask.values()[i]);
            i += 1;
        }
        if next_b == k {
            bid = Some(obs.bid.values()[j]);
            j += 1;
        }
        if let (Some(av), Some(bv)) = (ask, bid) {
            let t = meta.wall_clock(k as f64 / a.n as f64);
            w.write_record([t.to_string(), (offset + av).exp().to_string(), (offset + bv).exp().to_string()])?;
            rows += 1;
        }
    }
    w.flush()?;
    if let Some(path) = &a.truth {
        let truth = SimTruth {
            n: a.n,
            seed: a.seed,
            noise,
            start_sec: meta.start_sec,
            end_sec: meta.end_sec,
            jumps: obs.jumps.clone(),
            ask_observations: obs.ask.len(),
            bid_observations: obs.bid.len(),
            rows,
        };
        qio::write_json(File::create(path)?, &truth)?;
    }
    Ok(())
}

// ------------------------------------------------------------- test-global

#[derive(Serialize)]
struct GlobalOutput {
    side: &'static str,
    observations: usize,
    noise_level: Option<f64>,
    bootstrap_samples: Option<usize>,
    #[serde(flatten)]
    report: GlobalTestReport,
}

#[derive(Serialize)]
struct SequentialOutput {
    side: &'static str,
    observations: usize,
    events: Vec<JumpEvent>,
}

fn test_global(a: TestGlobalArgs) -> Result<()> {
    let input = Input::load(&a.input)?;
    let series = input.side(a.side);
    let n = series.len() - 1;
    let mut cfg = GlobalTestConfig::reference(n, a.alpha);
    cfg.vol = VolSource::estimate(vol_grid(series), SpotVolConfig::default().with_window(a.kn));
    if let Some(b) = a.blocks {
        cfg.grid = GridTarget::BlockCount(b);
    } else if let Some(nh) = a.nhn {
        cfg.grid = GridTarget::ObsChunks(nh);
    }
    let mut noise_level = None;
    let mut samples = None;
    if a.critical_source == CriticalArg::Bootstrap {
        let critical_value = match a.critical_value {
            Some(c) => c,
            None => {
                let mid = input.mid(a.input.clean)?;
                let q = estimate_noise_level(&mid);
                let vol = cfg.vol.path(series)?;
                let boot = BootstrapConfig {
                    samples: a.reps,
                    noise_level: q,
                    scheme: BootScheme::Thinned,
                    vol: BootVol::Path(vol),
                    n: mid.len() - 1,
                    seed: a.seed,
                };
                let handle = bootstrap_handle(&boot, BootStatistic::Ext { grid: cfg.grid })?;
                noise_level = Some(q);
                samples = Some(handle.len());
                handle.quantile(a.alpha)?
            }
        };
        cfg.critical = CriticalSource::Bootstrap { critical_value };
    }
    let out = sink(a.output.as_deref())?;
    if a.sequential {
        let seq = SequentialConfig {
            test: cfg,
            schedule: LevelSchedule::Constant,
            max_jumps: a.max_jumps,
        };
        let events = sequential_detect(series, &seq)?;
        qio::write_json(out, &SequentialOutput { side: side_label(series.side()), observations: series.len(), events })?;
    } else {
        let mut report = global_test(series, &cfg)?;
        if !a.full {
            report.standardized.clear();
        }
        let output = GlobalOutput {
            side: side_label(series.side()),
            observations: series.len(),
            noise_level,
            bootstrap_samples: samples,
            report,
        };
        qio::write_json(out, &output)?;
    }
    Ok(())
}

// -------------------------------------------------------------- test-local

#[derive(Serialize)]
struct LocalOutput {
    side: &'static str,
    tau: f64,
    wall_clock: f64,
    nh: usize,
    noise_level: Option<f64>,
    #[serde(flatten)]
    report: LocalTestReport,
}

fn test_local(a: TestLocalArgs) -> Result<()> {
    let input = Input::load(&a.input)?;
    let series = input.side(a.side);
    let meta = series.meta();
    let tau = match (a.tau, a.tau_sec) {
        (Some(t), _) => t,
        (None, Some(s)) => (s - meta.start_sec) / meta.duration(),
        (None, None) => return Err(CliError::Usage("give --tau or --tau-sec".into())),
    };
    let vol_cfg = SpotVolConfig::default().with_window(a.kn);
    let vol = LocalVol::Estimate { grid: vol_grid(series), config: vol_cfg };
    let mut noise_level = None;
    let critical = match a.critical_source {
        CriticalArg::Asymptotic => LocalCritical::Asymptotic,
        CriticalArg::Bootstrap => {
            let critical_value = match a.critical_value {
                Some(c) => c,
                None => {
                    let mid = input.mid(a.input.clean)?;
                    let q = estimate_noise_level(&mid);
                    let path = VolSource::estimate(vol_grid(series), vol_cfg).path(series)?;
                    let s2 = path
                        .variance_at(tau)
                        .ok_or(lomn_core::Error::DegenerateVolatility { block: 0 })?;
                    let draws = local_bootstrap(
                        LocalKind::Ext,
                        a.nhn,
                        mid.len() - 1,
                        s2,
                        q,
                        BootScheme::Thinned,
                        a.reps,
                        a.seed,
                    )?;
                    noise_level = Some(q);
                    empirical_quantile(&draws, a.alpha)?
                }
            };
            LocalCritical::Bootstrap { critical_value }
        }
    };
    let cfg = LocalTestConfig { nh: a.nhn, vol, alpha: a.alpha, critical };
    let report = local_test(series, tau, &cfg)?;
    let output = LocalOutput {
        side: side_label(series.side()),
        tau,
        wall_clock: meta.wall_clock(tau),
        nh: a.nhn,
        noise_level,
        report,
    };
    qio::write_json(sink(a.output.as_deref())?, &output)?;
    Ok(())
}

// ----------------------------------------------------------- detect-online

fn detector_config(series: &QuoteSeries, alpha: f64, blocks: Option<usize>, kn: usize) -> DetectorConfig {
    let n = series.len() - 1;
    let blocks = blocks.unwrap_or_else(|| reference_block_count(n).max(3));
    let mut cfg = DetectorConfig::new(
        n,
        blocks,
        alpha,
        series.side(),
        OnlineVol::Estimate(SpotVolConfig::default().with_window(kn)),
    );
    cfg.meta = series.meta();
    cfg
}

fn detect(a: DetectOnlineArgs) -> Result<()> {
    let input = Input::load(&a.input)?;
    let series = input.side(a.side);
    let mut cfg = detector_config(series, a.alpha, a.blocks, a.kn);
    cfg.threshold = match a.threshold {
        ThresholdArg::BlockRate => ThresholdMode::BlockRate,
        ThresholdArg::Literal => ThresholdMode::Literal,
    };
    let events = detect_online(series, cfg)?;
    qio::write_events(sink(a.output.as_deref())?, &events)?;
    Ok(())
}

// -------------------------------------------------------------------- race

#[derive(Serialize)]
struct RaceOutput {
    noise_level: f64,
    mmn_critical_value: f64,
    median_advantage_seconds: Option<f64>,
    #[serde(flatten)]
    record: RaceRecord,
}

fn race_cmd(a: RaceArgs) -> Result<()> {
    let input = Input::load(&a.input)?;
    let mid = input.mid(a.input.clean)?;
    let ask_cfg = detector_config(&input.ask, a.alpha, a.blocks, a.kn);
    let bid_cfg = detector_config(&input.bid, a.alpha, a.blocks, a.kn);
    let q = estimate_noise_level(&mid);
    let sigma = VolSource::estimate(vol_grid(&input.ask), SpotVolConfig::default().with_window(a.kn))
        .path(&input.ask)?;
    let critical_value = lm_critical_value(mid.len() / a.nhn.max(1), a.alpha)?;
    let meta = mid.meta();
    let mmn = MmnDetectorConfig { nh: a.nhn, noise_level: q, critical_value, sigma, meta };
    let record = race(
        &mid,
        &input.ask,
        &input.bid,
        ask_cfg,
        bid_cfg,
        &mmn,
        a.window_sec / meta.duration(),
    )?;
    let output = RaceOutput {
        noise_level: q,
        mmn_critical_value: critical_value,
        median_advantage_seconds: record.median_advantage(),
        record,
    };
    qio::write_json(sink(a.output.as_deref())?, &output)?;
    Ok(())
}

// ----------------------------------------------------- calibrate-bootstrap

#[derive(Serialize)]
struct CalibrationOutput {
    statistic: &'static str,
    noise_level: f64,
    scheme: BootScheme,
    n: usize,
    nh: usize,
    samples: usize,
    failures: usize,
    alpha: f64,
    critical_value: f64,
    quantiles: Vec<QuantileRow>,
}

#[derive(Serialize)]
struct QuantileRow {
    alpha: f64,
    value: f64,
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let scheme = match a.scheme {
        SchemeArg::Thinned => BootScheme::Thinned,
        SchemeArg::HalfNormal => BootScheme::HalfNormal,
        SchemeArg::Additive => BootScheme::Additive,
    };
    let (label, samples, failures) = match a.statistic {
        StatisticArg::Ext | StatisticArg::Lm => {
            let statistic = match a.statistic {
                StatisticArg::Ext => BootStatistic::Ext {
                    grid: a.blocks.map_or(GridTarget::ObsChunks(a.nhn), GridTarget::BlockCount),
                },
                _ => BootStatistic::Lm { nh: a.nhn },
            };
            let cfg = BootstrapConfig {
                samples: a.reps,
                noise_level: a.q,
                scheme,
                vol: BootVol::Fresh(SimConfig { n: a.n, ..SimConfig::default() }),
                n: a.n,
                seed: a.seed,
            };
            let h = bootstrap_handle(&cfg, statistic)?;
            let label = if a.statistic == StatisticArg::Ext { "ext" } else { "lm" };
            (label, h.samples, h.failures)
        }
        StatisticArg::LocalExt | StatisticArg::LocalLm => {
            let (kind, label) = if a.statistic == StatisticArg::LocalExt {
                (LocalKind::Ext, "local-ext")
            } else {
                (LocalKind::Lm, "local-lm")
            };
            let s2 = a
                .sigma_sq
                .unwrap_or_else(|| seasonal_factor(0.5).powi(2) * SvParams::default().level);
            let draws = local_bootstrap(kind, a.nhn, a.n, s2, a.q, scheme, a.reps, a.seed)?;
            (label, draws, 0)
        }
    };
    let critical_value = empirical_quantile(&samples, a.alpha)?;
    let quantiles = [0.10, 0.05, 0.01]
        .into_iter()
        .filter_map(|alpha| empirical_quantile(&samples, alpha).ok().map(|value| QuantileRow { alpha, value }))
        .collect();
    let output = CalibrationOutput {
        statistic: label,
        noise_level: a.q,
        scheme,
        n: a.n,
        nh: a.nhn,
        samples: samples.len(),
        failures,
        alpha: a.alpha,
        critical_value,
        quantiles,
    };
    qio::write_json(sink(a.output.as_deref())?, &output)?;
    Ok(())
}

// --------------------------------------------------------- reproduce-table

fn reproduce(a: ReproduceArgs) -> Result<()> {
    let id = match a.table {
        TableArg::T1 => TableId::T1,
        TableArg::T2 => TableId::T2,
        TableArg::T3 => TableId::T3,
        TableArg::T4 => TableId::T4,
        TableArg::S1 => TableId::S1,
    };
    if a.reps >= 200 && matches!(id, TableId::T2 | TableId::T3 | TableId::T4) {
        eprintln!("calibrating with {DEFAULT_BOOTSTRAP_SAMPLES} bootstrap samples per row group");
    }
    let report = lomn_core::experiment::reproduce_table(id, a.reps, a.seed)?;
    report.write_checks_csv(sink(a.output.as_deref())?)?;
    if let Some(path) = &a.rows {
        report.table.write_csv(File::create(path)?)?;
    }
    let passed = report.checks.iter().filter(|c| c.pass).count();
    eprintln!("{id:?}: {passed}/{} cells within tolerance", report.checks.len());
    if a.strict && !report.all_pass() {
        return Err(CliError::Usage(STRICT_FAILURE.into()));
    }
    Ok(())
}

// ------------------------------------------------------------ diagnose-acf

fn pick(q: &LoadedQuotes, side: CleanSide) -> Result<&QuoteSeries> {
    match side {
        CleanSide::Ask => Ok(&q.ask),
        CleanSide::Bid => Ok(&q.bid),
        CleanSide::Mid => Ok(&q.mid),
        CleanSide::All => Err(CliError::Usage("choose one of ask, bid or mid".into())),
    }
}

fn diagnose_acf(a: AcfArgs) -> Result<()> {
    let formats: Vec<QuoteFormat> = match a.format {
        FileFormat::Csv => vec![QuoteFormat::Csv; a.inputs.len()],
        FileFormat::Lobster => {
            if a.message.len() != a.inputs.len() {
                return Err(CliError::Usage("give one --message file per input".into()));
            }
            a.message.iter().map(|m| QuoteFormat::Lobster { message: m.clone() }).collect()
        }
    };
    let mut days = Vec::with_capacity(a.inputs.len());
    for (path, format) in a.inputs.iter().zip(&formats) {
        let q = load_quotes(path, format)?;
        let s = pick(&q, a.side)?;
        days.push(if a.clean { clean_session(s, &SessionCleanRules::default())? } else { s.clone() });
    }
    let rows = acf_median_diagnostic(&days, a.max_lag)?;
    let mut w = csv::Writer::from_writer(sink(a.output.as_deref())?);
    w.write_record(["lag", "median_acf"])?;
    for r in rows {
        w.write_record([r.lag.to_string(), r.median.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------------- clean

fn parse_clock(s: &str) -> Result<f64> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    let bad = || CliError::Usage(format!("bad clock time '{s}', expected HH:MM[:SS]"));
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let h: u32 = parts[0].parse().map_err(|_| bad())?;
    let m: u32 = parts[1].parse().map_err(|_| bad())?;
    let sec: f64 = parts.get(2).map_or(Ok(0.0), |p| p.parse().map_err(|_| bad()))?;
    if h > 24 || m > 59 || !(0.0..60.0).contains(&sec) {
        return Err(bad());
    }
    Ok(f64::from(h * 3600 + m * 60) + sec)
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| CliError::Usage(format!("bad window '{s}', expected START-END")))?;
    Ok((parse_clock(a)?, parse_clock(b)?))
}

#[derive(Serialize)]
struct CleanSummary {
    side: &'static str,
    raw_observations: usize,
    observations: usize,
    file: PathBuf,
    segments: Vec<SegmentSummary>,
}

#[derive(Serialize)]
struct SegmentSummary {
    label: String,
    observations: usize,
    file: Option<PathBuf>,
}

fn clean(a: CleanArgs) -> Result<()> {
    let (session_start_sec, session_end_sec) = parse_window(&a.session)?;
    let (exclude_start_sec, exclude_end_sec) = parse_window(&a.exclude)?;
    let rules = SessionCleanRules {
        session_start_sec,
        session_end_sec,
        exclude_start_sec,
        exclude_end_sec,
        change_filter: !a.keep_repeats,
    };
    rules.validate()?;
    let format = format_of(a.format, a.message.as_ref())?;
    let quotes = load_quotes(&a.input, &format)?;
    report_warnings(&quotes);
    fs::create_dir_all(&a.out_dir)?;
    let sides: Vec<(&'static str, &QuoteSeries)> = match a.side {
        CleanSide::Ask => vec![("ask", &quotes.ask)],
        CleanSide::Bid => vec![("bid", &quotes.bid)],
        CleanSide::Mid => vec![("mid", &quotes.mid)],
        CleanSide::All => vec![("ask", &quotes.ask), ("bid", &quotes.bid), ("mid", &quotes.mid)],
    };
    let mut summary = Vec::new();
    for (name, raw) in sides {
        let cleaned = clean_session(raw, &rules)?;
        let file = a.out_dir.join(format!("{name}.csv"));
        write_series_csv(BufWriter::new(File::create(&file)?), &cleaned)?;
        let mut segments = Vec::new();
        if a.split {
            for seg in split_intervals(&cleaned)? {
                let label = seg.label();
                let file = match &seg.series {
                    Some(s) => {
                        let f = a.out_dir.join(format!("{name}_{}.csv", label.replace(':', "")));
                        write_series_csv(BufWriter::new(File::create(&f)?), s)?;
                        Some(f)
                    }
                    None => None,
                };
                segments.push(SegmentSummary { label, observations: seg.observations, file });
            }
        }
        summary.push(CleanSummary {
            side: name,
            raw_observations: raw.len(),
            observations: cleaned.len(),
            file,
            segments,
        });
    }
    qio::write_json(io::stdout().lock(), &summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_parsing() {
        assert_eq!(parse_clock("09:30").unwrap(), 34_200.0);
        assert_eq!(parse_clock("16:00:00").unwrap(), 57_600.0);
        assert_eq!(parse_window("09:30-09:35").unwrap(), (34_200.0, 34_500.0));
        assert!(parse_clock("9").is_err());
        assert!(parse_clock("10:75").is_err());
    }
}
