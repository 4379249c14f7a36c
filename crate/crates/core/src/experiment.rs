//! Size/power Monte Carlo studies and the stored reference tables.
//!
//! A study crosses row groups (a noise specification and an optional block
//! size), tests and jump sizes. Every replication draws one efficient-price
//! path and one jump placement; all cells of that replication reuse them, so
//! cells differ only in what they vary. Seeds derive from `(seed, rep)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    global_test, local_test, CriticalSource, GlobalTestConfig, LocalCritical, LocalTestConfig,
    LocalVol, VolSource,
};
use crate::mmn::{
    bootstrap_handle, estimate_noise_level, lm_statistic, local_bootstrap_draw, local_lm_statistic,
    BootScheme, BootStatistic, BootVol, BootstrapConfig, LMConfig, LocalKind,
};
use crate::par::map_indexed;
use crate::rng::{derive_seed, rng_for, SimRng};
use crate::series::GridTarget;
use crate::sim::{
    apply_noise_with, inject_jump, sample_jump, simulate_path_with, Jump, NoiseSpec, ObservationSet,
    PricePath, SimConfig, DEFAULT_JUMP_BAND,
};
use crate::spot_vol::SpotVolConfig;

const STREAM_NOISE: u64 = 0x100;
const STREAM_PILOT: u64 = 0x200;
const STREAM_BOOT: u64 = 0x300;

/// Runs `f` for replications `0..reps`, each with its own generator seeded
/// from `(seed, rep)`. The output order is the replication order.
pub fn replicate<T, F>(reps: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync + Send,
{
    map_indexed(reps, |r| {
        let mut rng = rng_for(seed, r as u64);
        f(r, &mut rng)
    })
}

/// A global test evaluated in a bootstrap study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalKind {
    /// Block minima of asks.
    ExtAsk,
    /// Block maxima of bids.
    ExtBid,
    /// Block averages of mid quotes.
    Lm,
}

impl GlobalKind {
    pub fn label(self) -> &'static str {
        match self {
            GlobalKind::ExtAsk => "ext-ask",
            GlobalKind::ExtBid => "ext-bid",
            GlobalKind::Lm => "lm",
        }
    }
}

/// Where the local test time sits relative to the jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauScenario {
    /// At a randomly signed jump.
    At,
    /// Up to `nh - 1` observations before a negative jump.
    BeforeNegative,
    /// Up to `nh - 1` observations after a positive jump.
    AfterPositive,
}

impl TauScenario {
    pub fn label(self) -> &'static str {
        match self {
            TauScenario::At => "at",
            TauScenario::BeforeNegative => "bef-",
            TauScenario::AfterPositive => "aft+",
        }
    }
}

fn local_label(kind: LocalKind, scenario: TauScenario) -> String {
    let k = match kind {
        LocalKind::Ext => "ext",
        LocalKind::Lm => "lm",
    };
    format!("{k}@{}", scenario.label())
}

/// One noise setting of a study; `nh` is the block size in observations for
/// bootstrap and local designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowGroup {
    pub noise: NoiseSpec,
    pub nh: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum Design {
    /// Global test on asks with Gumbel critical values and estimated
    /// volatility.
    Gumbel {
        block_count: usize,
        vol_block_count: usize,
        vol: SpotVolConfig,
    },
    /// Global tests with true volatility and critical values from one shared
    /// bootstrap per row group and test.
    Bootstrap {
        tests: Vec<GlobalKind>,
        samples: usize,
        /// Null sessions used to estimate the bootstrap noise level.
        pilot_reps: usize,
    },
    /// Local tests at a chosen time with true volatility and shared
    /// bootstrap critical values.
    Local {
        tests: Vec<LocalKind>,
        scenarios: Vec<TauScenario>,
        samples: usize,
        pilot_reps: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub sim: SimConfig,
    pub groups: Vec<RowGroup>,
    /// Absolute jump sizes; zero gives the size column.
    pub jump_sizes: Vec<f64>,
    pub design: Design,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter("at least one replication is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("level {} outside (0, 1)", self.alpha)));
        }
        if self.groups.is_empty() || self.jump_sizes.is_empty() {
            return Err(Error::InvalidParameter("a study needs row groups and jump sizes".into()));
        }
        if self.jump_sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter("jump sizes must be finite and nonnegative".into()));
        }
        for g in &self.groups {
            g.noise.validate()?;
        }
        let needs_nh = match &self.design {
            Design::Gumbel { block_count, vol_block_count, vol } => {
                vol.validate()?;
                if *block_count < 2 || *vol_block_count < 2 {
                    return Err(Error::InvalidParameter("block counts must be at least 2".into()));
                }
                false
            }
            Design::Bootstrap { tests, .. } => {
                if tests.is_empty() {
                    return Err(Error::InvalidParameter("no tests selected".into()));
                }
                true
            }
            Design::Local { tests, scenarios, .. } => {
                if tests.is_empty() || scenarios.is_empty() {
                    return Err(Error::InvalidParameter("no tests or scenarios selected".into()));
                }
                true
            }
        };
        if needs_nh && self.groups.iter().any(|g| !matches!(g.nh, Some(nh) if nh >= 2)) {
            return Err(Error::InvalidParameter("every row group needs nh >= 2".into()));
        }
        Ok(())
    }

    /// Keeps only the row groups for which `keep` holds.
    pub fn retain_groups<F: Fn(&RowGroup) -> bool>(mut self, keep: F) -> Self {
        self.groups.retain(|g| keep(g));
        self
    }

    fn test_labels(&self) -> Vec<String> {
        match &self.design {
            Design::Gumbel { .. } => vec![GlobalKind::ExtAsk.label().to_string()],
            Design::Bootstrap { tests, .. } => tests.iter().map(|t| t.label().to_string()).collect(),
            Design::Local { tests, scenarios, .. } => scenarios
                .iter()
                .flat_map(|s| tests.iter().map(move |t| local_label(*t, *s)))
                .collect(),
        }
    }

    fn nh_label(&self, group: &RowGroup) -> Option<usize> {
        match &self.design {
            Design::Gumbel { block_count, .. } => {
                Some((self.sim.n as f64 / *block_count as f64).round() as usize)
            }
            _ => group.nh,
        }
    }
}

/// One cell of a size/power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerRow {
    /// Index into the study's row groups.
    pub group: usize,
    pub q: f64,
    pub jump_size: f64,
    pub test: String,
    pub nh_n: Option<usize>,
    pub rejections: usize,
    /// Rejections over successful replications.
    pub rejection_rate: f64,
    pub replications: usize,
    pub failures: usize,
}

impl SizePowerRow {
    pub fn successes(&self) -> usize {
        self.replications - self.failures
    }
}

/// Critical values used by a bootstrap or local study, per row group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub group: usize,
    pub test: String,
    pub noise_level: f64,
    pub critical_value: f64,
    pub samples: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerTable {
    pub rows: Vec<SizePowerRow>,
    pub calibrations: Vec<Calibration>,
}

impl SizePowerTable {
    pub fn cell(&self, group: usize, test: &str, jump_size: f64) -> Option<&SizePowerRow> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.test == test && (r.jump_size - jump_size).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["q", "jump_size", "test", "nh_n", "rejection_rate", "replications", "failures"])?;
        for r in &self.rows {
            w.write_record([
                r.q.to_string(),
                r.jump_size.to_string(),
                r.test.clone(),
                r.nh_n.map(|v| v.to_string()).unwrap_or_default(),
                r.rejection_rate.to_string(),
                r.replications.to_string(),
                r.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn boot_scheme(noise: &NoiseSpec) -> BootScheme {
    match noise {
        NoiseSpec::HalfNormal { .. } => BootScheme::HalfNormal,
        _ => BootScheme::Thinned,
    }
}

fn null_observations(spec: &ExperimentSpec, group: usize, rep: usize) -> Result<ObservationSet> {
    let mut rng = rng_for(derive_seed(spec.seed, STREAM_PILOT + group as u64), rep as u64);
    let path = simulate_path_with(&spec.sim, &mut rng)?;
    apply_noise_with(&path, &spec.groups[group].noise, &mut rng)
}

/// Mean noise-level estimate over null sessions, from asks for half-normal
/// extrema tests and from mid quotes otherwise.
fn pilot_noise_level(spec: &ExperimentSpec, group: usize, from_ask: bool, reps: usize) -> Result<f64> {
    let reps = reps.max(1);
    let levels = map_indexed(reps, |r| {
        null_observations(spec, group, r).map(|o| {
            estimate_noise_level(if from_ask { &o.ask } else { &o.mid })
        })
    });
    let mut sum = 0.0;
    for l in levels {
        sum += l?;
    }
    Ok(sum / reps as f64)
}

#[derive(Debug, Clone, Copy)]
struct Critical {
    noise_level: f64,
    value: f64,
}

fn global_calibration(
    spec: &ExperimentSpec,
    group: usize,
    kind: GlobalKind,
    samples: usize,
    pilot_reps: usize,
) -> Result<(Critical, Calibration)> {
    let g = &spec.groups[group];
    let nh = g.nh.expect("validated");
    let scheme = boot_scheme(&g.noise);
    let from_ask = kind != GlobalKind::Lm && scheme == BootScheme::HalfNormal;
    let q = pilot_noise_level(spec, group, from_ask, pilot_reps)?;
    let (statistic, scheme) = match kind {
        GlobalKind::Lm => (BootStatistic::Lm { nh }, BootScheme::Additive),
        _ => (BootStatistic::Ext { grid: GridTarget::ObsChunks(nh) }, scheme),
    };
    let cfg = BootstrapConfig {
        samples,
        noise_level: q,
        scheme,
        vol: BootVol::Fresh(spec.sim),
        n: spec.sim.n,
        seed: derive_seed(spec.seed, STREAM_BOOT + 8 * group as u64 + kind as u64),
    };
    let handle = bootstrap_handle(&cfg, statistic)?;
    let value = handle.quantile(spec.alpha)?;
    Ok((
        Critical { noise_level: q, value },
        Calibration {
            group,
            test: kind.label().to_string(),
            noise_level: q,
            critical_value: value,
            samples: handle.len(),
            failures: handle.failures,
        },
    ))
}

/// Shared local null law: every draw takes a fresh volatility path and a
/// uniform test time inside the jump band.
fn local_calibration(
    spec: &ExperimentSpec,
    group: usize,
    kind: LocalKind,
    samples: usize,
    pilot_reps: usize,
) -> Result<(Critical, Calibration)> {
    let g = &spec.groups[group];
    let nh = g.nh.expect("validated");
    let scheme = match kind {
        LocalKind::Lm => BootScheme::Additive,
        LocalKind::Ext => boot_scheme(&g.noise),
    };
    let from_ask = kind == LocalKind::Ext && scheme == BootScheme::HalfNormal;
    let q = pilot_noise_level(spec, group, from_ask, pilot_reps)?;
    let seed = derive_seed(spec.seed, STREAM_BOOT + 8 * group as u64 + 4 + kind as u64);
    let sim = SimConfig { drift: 0.0, ..spec.sim };
    let draws = replicate(samples, seed, |_, rng| -> Result<f64> {
        let path = simulate_path_with(&sim, rng)?;
        let (lo, hi) = DEFAULT_JUMP_BAND;
        let tau = lo + (hi - lo) * rng.random::<f64>();
        let idx = (tau * sim.n as f64).floor() as usize;
        let s2 = path.spot_variance[idx];
        Ok(local_bootstrap_draw(kind, nh, sim.n, s2, q, scheme, rng))
    });
    let mut values = Vec::with_capacity(samples);
    let mut failures = 0;
    for d in draws {
        match d {
            Ok(v) if v.is_finite() => values.push(v),
            _ => failures += 1,
        }
    }
    values.sort_by(f64::total_cmp);
    let value = crate::mmn::empirical_quantile(&values, spec.alpha)?;
    let label = match kind {
        LocalKind::Ext => "ext",
        LocalKind::Lm => "lm",
    };
    Ok((
        Critical { noise_level: q, value },
        Calibration {
            group,
            test: label.to_string(),
            noise_level: q,
            critical_value: value,
            samples: values.len(),
            failures,
        },
    ))
}

/// Jump placement shared by every cell of one replication.
#[derive(Debug, Clone, Copy)]
struct Placement {
    jump: Jump,
    /// Grid index of the first observation carrying the jump, for local designs.
    index: usize,
    /// Uniform draw selecting the offset of a shifted test time.
    offset_u: f64,
}

fn draw_placement(spec: &ExperimentSpec, rng: &mut SimRng) -> Placement {
    let n = spec.sim.n;
    match spec.design {
        Design::Local { .. } => {
            let lo = (DEFAULT_JUMP_BAND.0 * n as f64).ceil() as usize + 1;
            let hi = (DEFAULT_JUMP_BAND.1 * n as f64).floor() as usize;
            let index = rng.random_range(lo..=hi);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Placement {
                jump: Jump {
                    time: (index as f64 - 0.5) / n as f64,
                    size: sign,
                },
                index,
                offset_u: rng.random::<f64>(),
            }
        }
        _ => {
            let jump = sample_jump(rng, 1.0, DEFAULT_JUMP_BAND);
            Placement {
                jump,
                index: (jump.time * n as f64).ceil() as usize,
                offset_u: 0.0,
            }
        }
    }
}

fn observations(
    base: &PricePath,
    jump: Option<Jump>,
    noise: &NoiseSpec,
    noise_rng: &SimRng,
) -> Result<ObservationSet> {
    let mut rng = noise_rng.clone();
    match jump {
        Some(j) if j.size != 0.0 => {
            let mut path = base.clone();
            inject_jump(&mut path, j, (0.0, 1.0))?;
            apply_noise_with(&path, noise, &mut rng)
        }
        _ => apply_noise_with(base, noise, &mut rng),
    }
}

/// Test time and signed jump for a local scenario.
fn local_setup(p: &Placement, scenario: TauScenario, nh: usize, n: usize, size: f64) -> (f64, Jump) {
    let d = 1 + ((p.offset_u * (nh - 1) as f64).floor() as usize).min(nh.saturating_sub(2));
    let at = (p.index as f64 - 0.5) / n as f64;
    let (tau, sign) = match scenario {
        TauScenario::At => (at, p.jump.size.signum()),
        TauScenario::BeforeNegative => (at - d as f64 / n as f64, -1.0),
        TauScenario::AfterPositive => (at + d as f64 / n as f64, 1.0),
    };
    (tau, Jump { time: at, size: sign * size })
}

struct Prepared {
    labels: Vec<String>,
    /// Critical values per group and test label (bootstrap designs).
    critical: Vec<Vec<Critical>>,
    calibrations: Vec<Calibration>,
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    let labels = spec.test_labels();
    let mut critical = Vec::new();
    let mut calibrations = Vec::new();
    for g in 0..spec.groups.len() {
        let mut row = Vec::new();
        match &spec.design {
            Design::Gumbel { .. } => {}
            Design::Bootstrap { tests, samples, pilot_reps } => {
                for &t in tests {
                    let (c, cal) = global_calibration(spec, g, t, *samples, *pilot_reps)?;
                    row.push(c);
                    calibrations.push(cal);
                }
            }
            Design::Local { tests, samples, pilot_reps, .. } => {
                for &t in tests {
                    let (c, cal) = local_calibration(spec, g, t, *samples, *pilot_reps)?;
                    row.push(c);
                    calibrations.push(cal);
                }
            }
        }
        critical.push(row);
    }
    Ok(Prepared { labels, critical, calibrations })
}

/// Outcomes of one replication, indexed `[group][label][jump]`.
fn run_replication(spec: &ExperimentSpec, prep: &Prepared, rep: usize) -> Vec<Vec<Vec<Option<bool>>>> {
    let n = spec.sim.n;
    let mut rng = rng_for(spec.seed, rep as u64);
    let failed_all = || {
        vec![vec![vec![None; spec.jump_sizes.len()]; prep.labels.len()]; spec.groups.len()]
    };
    let base = match simulate_path_with(&spec.sim, &mut rng) {
        Ok(p) => p,
        Err(_) => return failed_all(),
    };
    let placement = draw_placement(spec, &mut rng);
    let rep_seed = derive_seed(spec.seed, rep as u64);
    let mut out = Vec::with_capacity(spec.groups.len());
    for (gi, group) in spec.groups.iter().enumerate() {
        let noise_rng = rng_for(rep_seed, STREAM_NOISE + gi as u64);
        let mut cells = vec![vec![None; spec.jump_sizes.len()]; prep.labels.len()];
        match &spec.design {
            Design::Gumbel { block_count, vol_block_count, vol } => {
                let cfg = GlobalTestConfig {
                    grid: GridTarget::BlockCount(*block_count),
                    vol: VolSource::estimate(GridTarget::BlockCount(*vol_block_count), *vol),
                    alpha: spec.alpha,
                    critical: CriticalSource::Asymptotic,
                    jump_window: None,
                };
                for (ji, &size) in spec.jump_sizes.iter().enumerate() {
                    let jump = Jump { size: placement.jump.size * size, ..placement.jump };
                    cells[0][ji] = observations(&base, Some(jump), &group.noise, &noise_rng)
                        .and_then(|o| global_test(&o.ask, &cfg))
                        .ok()
                        .map(|r| r.reject);
                }
            }
            Design::Bootstrap { tests, .. } => {
                let nh = group.nh.expect("validated");
                for (ji, &size) in spec.jump_sizes.iter().enumerate() {
                    let jump = Jump { size: placement.jump.size * size, ..placement.jump };
                    let obs = match observations(&base, Some(jump), &group.noise, &noise_rng) {
                        Ok(o) => o,
                        Err(_) => continue,
                    };
                    let var = obs.variance_path();
                    for (ti, &t) in tests.iter().enumerate() {
                        let crit = prep.critical[gi][ti];
                        let res = match t {
                            GlobalKind::Lm => {
                                let cfg = LMConfig { nh, noise_level: crit.noise_level };
                                lm_statistic(&obs.mid, &cfg, &var).map(|r| r.statistic > crit.value)
                            }
                            GlobalKind::ExtAsk | GlobalKind::ExtBid => {
                                let cfg = GlobalTestConfig {
                                    grid: GridTarget::ObsChunks(nh),
                                    vol: VolSource::Supplied(var.clone()),
                                    alpha: spec.alpha,
                                    critical: CriticalSource::Bootstrap { critical_value: crit.value },
                                    jump_window: None,
                                };
                                let series = if t == GlobalKind::ExtAsk { &obs.ask } else { &obs.bid };
                                global_test(series, &cfg).map(|r| r.reject)
                            }
                        };
                        cells[ti][ji] = res.ok();
                    }
                }
            }
            Design::Local { tests, scenarios, .. } => {
                let nh = group.nh.expect("validated");
                for (si, &scenario) in scenarios.iter().enumerate() {
                    for (ji, &size) in spec.jump_sizes.iter().enumerate() {
                        let (tau, jump) = local_setup(&placement, scenario, nh, n, size);
                        let obs = match observations(&base, Some(jump), &group.noise, &noise_rng) {
                            Ok(o) => o,
                            Err(_) => continue,
                        };
                        let var = obs.variance_path();
                        for (ti, &t) in tests.iter().enumerate() {
                            let crit = prep.critical[gi][ti];
                            let res = match t {
                                LocalKind::Ext => {
                                    let cfg = LocalTestConfig {
                                        nh,
                                        vol: LocalVol::Supplied(var.clone()),
                                        alpha: spec.alpha,
                                        critical: LocalCritical::Bootstrap { critical_value: crit.value },
                                    };
                                    local_test(&obs.ask, tau, &cfg).map(|r| r.reject)
                                }
                                LocalKind::Lm => var
                                    .variance_at(tau)
                                    .ok_or(Error::DegenerateVolatility { block: 0 })
                                    .and_then(|s2| {
                                        local_lm_statistic(&obs.mid, tau, nh, crit.noise_level, s2)
                                    })
                                    .map(|s| s > crit.value),
                            };
                            cells[si * tests.len() + ti][ji] = res.ok();
                        }
                    }
                }
            }
        }
        out.push(cells);
    }
    out
}

/// Rejection frequencies for every (row group, test, jump size) cell.
/// Failed replications are counted per cell and excluded from the rate.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SizePowerTable> {
    spec.validate()?;
    let prep = prepare(spec)?;
    let outcomes = map_indexed(spec.replications, |r| run_replication(spec, &prep, r));
    let mut rows = Vec::new();
    for (gi, group) in spec.groups.iter().enumerate() {
        for (li, label) in prep.labels.iter().enumerate() {
            for (ji, &size) in spec.jump_sizes.iter().enumerate() {
                let mut rejections = 0;
                let mut failures = 0;
                for rep in &outcomes {
                    match rep[gi][li][ji] {
                        Some(true) => rejections += 1,
                        Some(false) => {}
                        None => failures += 1,
                    }
                }
                let ok = spec.replications - failures;
                rows.push(SizePowerRow {
                    group: gi,
                    q: group.noise.level(),
                    jump_size: size,
                    test: label.clone(),
                    nh_n: spec.nh_label(group),
                    rejections,
                    rejection_rate: if ok > 0 { rejections as f64 / ok as f64 } else { f64::NAN },
                    replications: spec.replications,
                    failures,
                });
            }
        }
    }
    Ok(SizePowerTable {
        rows,
        calibrations: prep.calibrations,
    })
}

/// Reference tables that can be regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    S1,
}

impl std::str::FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(TableId::T1),
            "T2" => Ok(TableId::T2),
            "T3" => Ok(TableId::T3),
            "T4" => Ok(TableId::T4),
            "S1" => Ok(TableId::S1),
            _ => Err(Error::InvalidParameter(format!("unknown table '{s}'"))),
        }
    }
}

/// A stored reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCell {
    pub group: usize,
    pub test: String,
    pub jump_size: f64,
    pub value: f64,
}

const GLOBAL_Q: [f64; 5] = [0.0001, 0.00025, 0.0005, 0.00075, 0.001];

const T1_VALUES: [[f64; 6]; 5] = [
    [0.05, 0.09, 0.65, 0.98, 1.00, 1.00],
    [0.06, 0.09, 0.64, 0.98, 1.00, 1.00],
    [0.05, 0.08, 0.60, 0.96, 1.00, 1.00],
    [0.05, 0.09, 0.58, 0.96, 1.00, 1.00],
    [0.05, 0.08, 0.55, 0.95, 1.00, 1.00],
];

const S1_VALUES: [[f64; 7]; 5] = [
    [0.05, 0.16, 0.59, 0.91, 0.99, 1.00, 1.00],
    [0.05, 0.15, 0.56, 0.90, 0.99, 1.00, 1.00],
    [0.05, 0.14, 0.54, 0.89, 0.98, 1.00, 1.00],
    [0.05, 0.13, 0.52, 0.87, 0.98, 1.00, 1.00],
    [0.05, 0.13, 0.50, 0.85, 0.97, 1.00, 1.00],
];

/// Rows of the bootstrap comparison: (q, nh, extrema row, local-average row).
const T2_VALUES: [(f64, usize, [f64; 6], [f64; 6]); 4] = [
    (0.0005, 11, [0.05, 0.31, 0.63, 0.85, 0.94, 0.98], [0.04, 0.14, 0.29, 0.50, 0.69, 0.83]),
    (0.0005, 15, [0.05, 0.29, 0.59, 0.83, 0.94, 0.98], [0.05, 0.16, 0.33, 0.54, 0.72, 0.85]),
    (0.001, 20, [0.05, 0.14, 0.32, 0.57, 0.77, 0.89], [0.05, 0.07, 0.10, 0.19, 0.32, 0.47]),
    (0.001, 34, [0.05, 0.12, 0.23, 0.43, 0.64, 0.80], [0.05, 0.08, 0.14, 0.24, 0.37, 0.52]),
];

/// Rounding rows: (price level, nh, ask, bid, mid).
const T3_VALUES: [(f64, usize, [f64; 6], [f64; 6], [f64; 6]); 4] = [
    (10.0, 10, [0.05, 0.12, 0.26, 0.45, 0.66, 0.84], [0.04, 0.12, 0.25, 0.46, 0.66, 0.85], [0.06, 0.11, 0.20, 0.38, 0.55, 0.74]),
    (10.0, 11, [0.07, 0.16, 0.30, 0.47, 0.67, 0.83], [0.07, 0.16, 0.28, 0.46, 0.68, 0.84], [0.05, 0.11, 0.22, 0.42, 0.60, 0.76]),
    (50.0, 5, [0.07, 0.27, 0.59, 0.82, 0.94, 0.98], [0.05, 0.26, 0.56, 0.82, 0.94, 0.98], [0.04, 0.06, 0.11, 0.23, 0.38, 0.55]),
    (50.0, 12, [0.06, 0.17, 0.35, 0.61, 0.80, 0.92], [0.05, 0.16, 0.35, 0.63, 0.83, 0.93], [0.04, 0.14, 0.32, 0.53, 0.72, 0.85]),
];

/// Local rows: (q, nh, scenario, extrema row, local-average row).
const T4_VALUES: [(f64, usize, TauScenario, [f64; 7], [f64; 7]); 6] = [
    (0.0005, 12, TauScenario::BeforeNegative, [0.05, 0.42, 0.71, 0.88, 0.95, 0.98, 0.99], [0.05, 0.18, 0.34, 0.47, 0.58, 0.66, 0.75]),
    (0.0005, 12, TauScenario::At, [0.05, 0.58, 0.91, 0.99, 1.00, 1.00, 1.00], [0.04, 0.45, 0.79, 0.96, 1.00, 1.00, 1.00]),
    (0.0005, 12, TauScenario::AfterPositive, [0.05, 0.41, 0.71, 0.88, 0.94, 0.97, 0.99], [0.05, 0.19, 0.32, 0.47, 0.58, 0.65, 0.75]),
    (0.001, 26, TauScenario::BeforeNegative, [0.06, 0.26, 0.49, 0.70, 0.84, 0.91, 0.96], [0.05, 0.12, 0.20, 0.31, 0.42, 0.51, 0.64]),
    (0.001, 26, TauScenario::At, [0.05, 0.34, 0.67, 0.89, 0.97, 0.99, 1.00], [0.05, 0.27, 0.51, 0.75, 0.90, 0.98, 1.00]),
    (0.001, 26, TauScenario::AfterPositive, [0.06, 0.26, 0.49, 0.70, 0.84, 0.91, 0.96], [0.05, 0.12, 0.20, 0.32, 0.42, 0.51, 0.64]),
];

const GLOBAL_JUMPS: [f64; 6] = [0.0, 0.001, 0.002, 0.003, 0.004, 0.005];
const S1_JUMPS: [f64; 7] = [0.0, 0.001, 0.0015, 0.002, 0.0025, 0.003, 0.005];
const COMPARISON_JUMPS: [f64; 6] = [0.0, 0.001, 0.00125, 0.0015, 0.00175, 0.002];
const LOCAL_JUMPS: [f64; 7] = [0.0, 0.0005, 0.00075, 0.001, 0.00125, 0.0015, 0.002];

/// Bootstrap samples per shared calibration.
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 5_000;
const PILOT_REPS: usize = 20;

impl TableId {
    /// The study that regenerates this table.
    pub fn spec(self, replications: usize, seed: u64) -> ExperimentSpec {
        let sim = SimConfig { seed, ..SimConfig::default() };
        let n = sim.n;
        let (groups, jump_sizes, design): (Vec<RowGroup>, Vec<f64>, Design) = match self {
            TableId::T1 | TableId::S1 => {
                let groups = GLOBAL_Q
                    .iter()
                    .map(|&q| RowGroup {
                        noise: if self == TableId::T1 {
                            NoiseSpec::ar1(q)
                        } else {
                            NoiseSpec::Exponential { q }
                        },
                        nh: None,
                    })
                    .collect();
                let jumps = if self == TableId::T1 { GLOBAL_JUMPS.to_vec() } else { S1_JUMPS.to_vec() };
                let design = Design::Gumbel {
                    block_count: crate::inference::reference_block_count(n),
                    vol_block_count: n / 30,
                    vol: SpotVolConfig::default(),
                };
                (groups, jumps, design)
            }
            TableId::T2 => (
                T2_VALUES
                    .iter()
                    .map(|&(q, nh, ..)| RowGroup { noise: NoiseSpec::HalfNormal { q }, nh: Some(nh) })
                    .collect(),
                COMPARISON_JUMPS.to_vec(),
                Design::Bootstrap {
                    tests: vec![GlobalKind::ExtAsk, GlobalKind::Lm],
                    samples: DEFAULT_BOOTSTRAP_SAMPLES,
                    pilot_reps: PILOT_REPS,
                },
            ),
            TableId::T3 => (
                T3_VALUES
                    .iter()
                    .map(|&(level, nh, ..)| RowGroup {
                        noise: NoiseSpec::Rounding { q: 0.0005, tick: 0.01, x0: f64::ln(level) },
                        nh: Some(nh),
                    })
                    .collect(),
                COMPARISON_JUMPS.to_vec(),
                Design::Bootstrap {
                    tests: vec![GlobalKind::ExtAsk, GlobalKind::ExtBid, GlobalKind::Lm],
                    samples: DEFAULT_BOOTSTRAP_SAMPLES,
                    pilot_reps: PILOT_REPS,
                },
            ),
            TableId::T4 => (
                vec![
                    RowGroup { noise: NoiseSpec::HalfNormal { q: 0.0005 }, nh: Some(12) },
                    RowGroup { noise: NoiseSpec::HalfNormal { q: 0.001 }, nh: Some(26) },
                ],
                LOCAL_JUMPS.to_vec(),
                Design::Local {
                    tests: vec![LocalKind::Ext, LocalKind::Lm],
                    scenarios: vec![TauScenario::BeforeNegative, TauScenario::At, TauScenario::AfterPositive],
                    samples: DEFAULT_BOOTSTRAP_SAMPLES,
                    pilot_reps: PILOT_REPS,
                },
            ),
        };
        ExperimentSpec {
            sim,
            groups,
            jump_sizes,
            design,
            replications,
            alpha: 0.05,
            seed,
        }
    }

    /// Stored values, keyed by the row groups of [`TableId::spec`].
    pub fn reference(self) -> Vec<ReferenceCell> {
        let mut cells = Vec::new();
        let mut push = |group: usize, test: &str, jumps: &[f64], values: &[f64]| {
            for (&j, &v) in jumps.iter().zip(values) {
                cells.push(ReferenceCell { group, test: test.to_string(), jump_size: j, value: v });
            }
        };
        match self {
            TableId::T1 => {
                for (g, row) in T1_VALUES.iter().enumerate() {
                    push(g, "ext-ask", &GLOBAL_JUMPS, row);
                }
            }
            TableId::S1 => {
                for (g, row) in S1_VALUES.iter().enumerate() {
                    push(g, "ext-ask", &S1_JUMPS, row);
                }
            }
            TableId::T2 => {
                for (g, (_, _, ext, lm)) in T2_VALUES.iter().enumerate() {
                    push(g, "ext-ask", &COMPARISON_JUMPS, ext);
                    push(g, "lm", &COMPARISON_JUMPS, lm);
                }
            }
            TableId::T3 => {
                for (g, (_, _, ask, bid, mid)) in T3_VALUES.iter().enumerate() {
                    push(g, "ext-ask", &COMPARISON_JUMPS, ask);
                    push(g, "ext-bid", &COMPARISON_JUMPS, bid);
                    push(g, "lm", &COMPARISON_JUMPS, mid);
                }
            }
            TableId::T4 => {
                for (i, (_, _, scenario, ext, lm)) in T4_VALUES.iter().enumerate() {
                    let g = i / 3;
                    push(g, &local_label(LocalKind::Ext, *scenario), &LOCAL_JUMPS, ext);
                    push(g, &local_label(LocalKind::Lm, *scenario), &LOCAL_JUMPS, lm);
                }
            }
        }
        cells
    }
}

/// `max(0.03, 3 sqrt(p (1 - p) / reps))`.
pub fn reproduction_tolerance(p: f64, reps: usize) -> f64 {
    let se = (p * (1.0 - p) / reps.max(1) as f64).sqrt();
    (3.0 * se).max(0.03)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub group: usize,
    pub q: f64,
    pub nh_n: Option<usize>,
    pub test: String,
    pub jump_size: f64,
    pub reference: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub table: SizePowerTable,
    pub checks: Vec<CellCheck>,
}

impl ReproductionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_checks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["q", "jump_size", "test", "nh_n", "reference", "observed", "tolerance", "pass"])?;
        for c in &self.checks {
            w.write_record([
                c.q.to_string(),
                c.jump_size.to_string(),
                c.test.clone(),
                c.nh_n.map(|v| v.to_string()).unwrap_or_default(),
                c.reference.to_string(),
                c.observed.to_string(),
                c.tolerance.to_string(),
                c.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `spec` and compares every cell that has a reference value. The
/// tolerance uses the successful replications of the cell.
pub fn compare_with_reference(spec: &ExperimentSpec, reference: &[ReferenceCell]) -> Result<ReproductionReport> {
    let table = run_experiment(spec)?;
    let checks = reference
        .iter()
        .filter_map(|cell| {
            let row = table.cell(cell.group, &cell.test, cell.jump_size)?;
            let tolerance = reproduction_tolerance(cell.value, row.successes());
            let observed = row.rejection_rate;
            Some(CellCheck {
                group: cell.group,
                q: row.q,
                nh_n: row.nh_n,
                test: cell.test.clone(),
                jump_size: cell.jump_size,
                reference: cell.value,
                observed,
                tolerance,
                pass: (observed - cell.value).abs() <= tolerance,
            })
        })
        .collect();
    Ok(ReproductionReport { table, checks })
}

/// Regenerates a stored table with `replications` replications (at least 200).
pub fn reproduce_table(id: TableId, replications: usize, seed: u64) -> Result<ReproductionReport> {
    if replications < 200 {
        return Err(Error::InvalidParameter(format!(
            "reproduction needs at least 200 replications, got {replications}"
        )));
    }
    compare_with_reference(&id.spec(replications, seed), &id.reference())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_formula() {
        assert_eq!(reproduction_tolerance(0.05, 5_000), 0.03);
        let wide = reproduction_tolerance(0.5, 200);
        assert!((wide - 3.0 * (0.25f64 / 200.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reference_shapes() {
        assert_eq!(TableId::T1.reference().len(), 30);
        assert_eq!(TableId::S1.reference().len(), 35);
        assert_eq!(TableId::T2.reference().len(), 48);
        assert_eq!(TableId::T3.reference().len(), 72);
        assert_eq!(TableId::T4.reference().len(), 84);
        for id in [TableId::T1, TableId::T2, TableId::T3, TableId::T4, TableId::S1] {
            let spec = id.spec(10, 1);
            spec.validate().unwrap();
            let labels = spec.test_labels();
            for c in id.reference() {
                assert!(c.group < spec.groups.len());
                assert!(labels.contains(&c.test), "{id:?} {}", c.test);
                assert!(spec.jump_sizes.iter().any(|j| (j - c.jump_size).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn local_offsets_stay_in_range() {
        let p = Placement { jump: Jump { time: 0.5, size: 1.0 }, index: 500, offset_u: 0.999 };
        let (tau, jump) = local_setup(&p, TauScenario::BeforeNegative, 12, 1000, 0.01);
        assert!(jump.size < 0.0);
        let d = ((jump.time - tau) * 1000.0).round() as usize;
        assert!((1..=11).contains(&d));
        let (tau, jump) = local_setup(&Placement { offset_u: 0.0, ..p }, TauScenario::AfterPositive, 12, 1000, 0.01);
        assert!(jump.size > 0.0);
        assert_eq!(((tau - jump.time) * 1000.0).round() as usize, 1);
    }

    #[test]
    fn small_study_is_deterministic() {
        let mut spec = TableId::T1.spec(6, 3).retain_groups(|g| g.noise.level() == 0.001);
        spec.sim.n = 2_000;
        spec.design = Design::Gumbel {
            block_count: 100,
            vol_block_count: 100,
            vol: SpotVolConfig::default().with_window(21),
        };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        let csv = a.to_csv_string().unwrap();
        assert!(csv.starts_with("q,jump_size,test,nh_n,rejection_rate,replications,failures\n"));
    }
}
