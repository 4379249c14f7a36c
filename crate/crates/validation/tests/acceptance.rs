//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line with the
//! measured values; the process exits non-zero if any criterion fails.
//!
//! Pass criterion ids to run a subset, e.g. `cargo test --test acceptance -- 6a 6c`.

use std::time::Instant;

use lomn_core::evt::{gumbel_cdf, gumbel_quantile, halfnorm_diff_density, halfnorm_diff_survival, local_quantile, GumbelCalibration};
use lomn_core::experiment::{compare_with_reference, replicate, run_experiment, Design, ReproductionReport, TableId};
use lomn_core::inference::{
    global_test, reference_block_count, sequential_detect, GlobalTestConfig, LevelSchedule, SequentialConfig,
};
use lomn_core::mmn::{block_averages, bootstrap_handle, lm_critical_value, lm_statistic, BootScheme, BootStatistic, BootVol, BootstrapConfig, LMConfig};
use lomn_core::online::{race, DetectorConfig, DetectorState, MmnDetectorConfig, OnlineVol};
use lomn_core::rng::rng_for;
use lomn_core::series::{build_block_grid, local_extrema};
use lomn_core::sim::{apply_noise, inject_jump, simulate_path_with, simulate_session, Jump, NoiseSpec, SimConfig};
use lomn_core::spot_vol::{psi_mc, spot_vol_path, PsiNoise, SpotVolConfig, SpotVolPath};
use lomn_core::{GridTarget, QuoteSeries, SessionMeta, Side};
use rand::Rng;
use rand_distr::StandardNormal;

const N: usize = 23_400;
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn share(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&f| f).count() as f64 / flags.len().max(1) as f64
}

/// Runs the given row groups of a stored table and checks them against the
/// stored values.
fn reproduce_groups(id: TableId, groups: &[usize], reps: usize, samples: Option<usize>) -> ReproductionReport {
    let mut spec = id.spec(reps, SEED);
    if let (Some(m), Design::Bootstrap { samples, .. } | Design::Local { samples, .. }) = (samples, &mut spec.design) {
        *samples = m;
    }
    spec.groups = groups.iter().map(|&g| spec.groups[g].clone()).collect();
    let reference: Vec<_> = id
        .reference()
        .into_iter()
        .filter_map(|mut c| {
            c.group = groups.iter().position(|&g| g == c.group)?;
            Some(c)
        })
        .collect();
    compare_with_reference(&spec, &reference).expect("reproduction runs")
}

fn failed_cells(report: &ReproductionReport) -> String {
    let bad: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}@q={}/j={}: {:.3} vs {:.2}", c.test, c.q, c.jump_size, c.observed, c.reference))
        .collect();
    if bad.is_empty() {
        "all cells within tolerance".into()
    } else {
        format!("{} of {} cells outside tolerance: {}", bad.len(), report.checks.len(), bad.join(", "))
    }
}

fn rate(report: &ReproductionReport, test: &str, jump: f64) -> f64 {
    report.table.cell(0, test, jump).expect("cell present").rejection_rate
}

fn criterion_1() -> Outcome {
    let report = reproduce_groups(TableId::T1, &[0, 4], 2_000, None);
    outcome(report.all_pass(), failed_cells(&report))
}

fn criterion_2() -> Outcome {
    let report = reproduce_groups(TableId::T2, &[0], 2_000, Some(5_000));
    let jumps: Vec<f64> = report.table.rows.iter().map(|r| r.jump_size).filter(|&j| j > 0.0).collect();
    let dominated: Vec<String> = jumps
        .iter()
        .filter(|&&j| rate(&report, "ext-ask", j) < rate(&report, "lm", j))
        .map(|j| j.to_string())
        .collect();
    let ordering = if dominated.is_empty() {
        "extrema power >= average power in every jump cell".to_string()
    } else {
        format!("average test more powerful at {}", dominated.join(", "))
    };
    outcome(report.all_pass() && dominated.is_empty(), format!("{}; {ordering}", failed_cells(&report)))
}

fn criterion_3() -> Outcome {
    let mut report = reproduce_groups(TableId::T3, &[2], 1_000, Some(5_000));
    // the spot check covers the ask and average rows at size and the largest jump
    report.checks.retain(|c| c.test != "ext-bid" && (c.jump_size == 0.0 || c.jump_size == 0.002));
    outcome(report.all_pass(), failed_cells(&report))
}

fn criterion_4() -> Outcome {
    let mut report = reproduce_groups(TableId::T4, &[0], 1_000, Some(5_000));
    let at = |t: &str| rate(&report, &format!("{t}@at"), 0.0005);
    let bef = |t: &str| rate(&report, &format!("{t}@bef-"), 0.0005);
    let ext_drop = at("ext") - bef("ext");
    let lm_drop = at("lm") - bef("lm");
    let drop_ok = ext_drop + 0.05 < lm_drop;
    report.checks.retain(|c| c.test.starts_with("ext") && (c.jump_size == 0.0 || c.jump_size == 0.0005));
    let lm_size_ok = ["at", "bef-", "aft+"]
        .iter()
        .all(|s| (rate(&report, &format!("lm@{s}"), 0.0) - 0.05).abs() <= 0.03);
    outcome(
        report.all_pass() && drop_ok,
        format!(
            "{}; at->bef- drop extrema {ext_drop:.3} vs averages {lm_drop:.3}; average-test size near 0.05: {lm_size_ok}",
            failed_cells(&report)
        ),
    )
}

fn kolmogorov_to_gumbel(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let m = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = gumbel_cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

fn criterion_5a() -> Outcome {
    let n = 10_000;
    let cal = GumbelCalibration::absolute(n).unwrap();
    let mut maxima = replicate(2_000, SEED, |_, rng| {
        let mut best = 0.0f64;
        for _ in 0..n {
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            best = best.max((u.abs() - v.abs()).abs());
        }
        cal.standardize(best)
    });
    let d = kolmogorov_to_gumbel(&mut maxima);
    outcome(d <= 0.02, format!("Kolmogorov distance {d:.4} (limit 0.02)"))
}

fn criterion_5b() -> Outcome {
    let cfg = GlobalTestConfig::reference(N, 0.05);
    let sim = SimConfig { seed: SEED, ..SimConfig::default() };
    let mut t = replicate(5_000, SEED, |r, _| {
        let obs = simulate_session(&sim, &NoiseSpec::ar1(0.0001), None, r as u64).unwrap();
        global_test(&obs.ask, &cfg).map(|rep| rep.t_std).unwrap_or(f64::NAN)
    });
    t.retain(|v| v.is_finite());
    t.sort_by(f64::total_cmp);
    let q = t[((0.95 * t.len() as f64).ceil() as usize).min(t.len()) - 1];
    let target = gumbel_quantile(0.05).unwrap();
    outcome((q - target).abs() <= 0.25, format!("95% quantile {q:.4} vs {target:.4} (+-0.25), {} sessions", t.len()))
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h)).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn criterion_6a() -> Outcome {
    let total = 2.0 * simpson(halfnorm_diff_density, 0.0, 14.0, 40_000);
    outcome((total - 1.0).abs() < 1e-8, format!("integral of the density {total:.12}"))
}

fn criterion_6b() -> Outcome {
    let n = 1_000_000;
    let cal = GumbelCalibration::one_sided(n).unwrap();
    let ratios: Vec<(f64, f64)> = [-1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|&t| {
            let tail = halfnorm_diff_survival(cal.unstandardize(t)).unwrap();
            (t, n as f64 * tail / (-t as f64).exp())
        })
        .collect();
    let pass = ratios.iter().all(|(_, r)| (r - 1.0).abs() <= 0.05);
    let text: Vec<String> = ratios.iter().map(|(t, r)| format!("t={t}: {r:.4}")).collect();
    outcome(pass, format!("N*tail / exp(-t): {}", text.join(", ")))
}

fn criterion_6c() -> Outcome {
    let mut rng = rng_for(SEED, 6);
    let mut abs: Vec<f64> = (0..10_000_000)
        .map(|_| {
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            (u.abs() - v.abs()).abs()
        })
        .collect();
    let k = (0.95 * abs.len() as f64) as usize;
    let empirical = *abs.select_nth_unstable_by(k, f64::total_cmp).1;
    let exact = local_quantile(0.05).unwrap();
    outcome((exact - empirical).abs() < 1e-2, format!("quantile {exact:.5} vs sampled {empirical:.5}"))
}

fn criterion_7() -> Outcome {
    let cfg = GlobalTestConfig::reference(N, 0.05);
    let blocks = reference_block_count(N);
    let sim = SimConfig { seed: SEED, ..SimConfig::default() };
    let located: Vec<Option<bool>> = replicate(1_000, SEED ^ 7, |r, rng| {
        let time = rng.random_range(0.05..0.95);
        let size = if rng.random::<bool>() { 0.003 } else { -0.003 };
        let obs = simulate_session(&sim, &NoiseSpec::ar1(0.001), Some(Jump { time, size }), r as u64).unwrap();
        let rep = global_test(&obs.ask, &cfg).ok()?;
        let truth = (time * blocks as f64).floor() as i64;
        rep.reject.then(|| (rep.argmax_block as i64 - truth).abs() <= 2)
    });
    let detected: Vec<bool> = located.iter().flatten().copied().collect();
    let localized = share(&detected);

    let seq = SequentialConfig {
        test: GlobalTestConfig::reference(N, 0.05),
        schedule: LevelSchedule::Constant,
        max_jumps: 5,
    };
    let two: Vec<bool> = replicate(500, SEED ^ 77, |r, rng| {
        let mut path = simulate_path_with(&sim, rng).unwrap();
        let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
        let (s1, s2) = (sign(), sign());
        let t1 = rng.random_range(0.1..0.4);
        let t2 = rng.random_range(0.6..0.9);
        inject_jump(&mut path, Jump { time: t1, size: 0.005 * s1 }, (0.0, 1.0)).unwrap();
        inject_jump(&mut path, Jump { time: t2, size: 0.004 * s2 }, (0.0, 1.0)).unwrap();
        let obs = apply_noise(&path, &NoiseSpec::ar1(0.0001), r as u64).unwrap();
        sequential_detect(&obs.ask, &seq).map(|e| e.len() == 2).unwrap_or(false)
    });
    let exactly_two = share(&two);
    outcome(
        localized >= 0.90 && exactly_two >= 0.90,
        format!(
            "{:.3} of {} detections within 2 blocks; exactly two events in {exactly_two:.3} of two-jump sessions",
            localized,
            detected.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let nh = 30;
    let q = 0.0005;
    let window = 60.0 / N as f64;
    let sim = SimConfig { seed: SEED, ..SimConfig::default() };
    let blocks = reference_block_count(N);
    let critical = lm_critical_value(N / nh, 0.05).unwrap();
    let results: Vec<Option<bool>> = replicate(1_000, SEED ^ 8, |r, rng| {
        let time = rng.random_range(0.1..0.9);
        let obs = simulate_session(&sim, &NoiseSpec::HalfNormal { q }, Some(Jump { time, size: -0.01 }), r as u64).unwrap();
        let online = |side| DetectorConfig::new(N, blocks, 0.05, side, OnlineVol::Estimate(SpotVolConfig::default()));
        let mmn = MmnDetectorConfig {
            nh,
            noise_level: q,
            critical_value: critical,
            sigma: obs.variance_path(),
            meta: SessionMeta::default(),
        };
        let record = race(&obs.mid, &obs.ask, &obs.bid, online(Side::LowerBounded), online(Side::UpperBounded), &mmn, window).ok()?;
        let first = |events: &[lomn_core::inference::JumpEvent]| {
            events.iter().map(|e| e.time).filter(|&t| t >= time && t <= time + window).reduce(f64::min)
        };
        let one_sided = [first(&record.ask_events), first(&record.bid_events)].into_iter().flatten().reduce(f64::min)?;
        let averaged = first(&record.mmn_events)?;
        Some(one_sided <= averaged)
    });
    let both: Vec<bool> = results.iter().flatten().copied().collect();
    let s = share(&both);
    outcome(s >= 0.99, format!("one-sided detector first in {s:.4} of {} sessions where both detect", both.len()))
}

/// Dyadic random walk plus nonnegative noise for the exact checks.
fn dyadic_ask(seed: u64, len: usize) -> QuoteSeries {
    let mut rng = rng_for(seed, 90);
    let unit = 1.0 / 65_536.0;
    let mut level = 0i64;
    let values = (0..len)
        .map(|_| {
            level += rng.random_range(-400i64..=400);
            (level + rng.random_range(0i64..600)) as f64 * unit
        })
        .collect();
    QuoteSeries::equispaced(values, Side::LowerBounded).unwrap()
}

fn criterion_9() -> Outcome {
    let mut broken = Vec::new();
    let vol = SpotVolConfig::default().with_window(8);
    let cfg = GlobalTestConfig {
        grid: GridTarget::BlockCount(40),
        vol: lomn_core::inference::VolSource::estimate(GridTarget::BlockCount(60), vol),
        alpha: 0.05,
        critical: lomn_core::inference::CriticalSource::Asymptotic,
        jump_window: Some(10),
    };
    for seed in 0..40u64 {
        let ask = dyadic_ask(seed, 600);
        let grid = build_block_grid(&ask, GridTarget::BlockCount(30)).unwrap();
        let m = local_extrema(&ask, &grid).unwrap();

        let keep: Vec<usize> = (0..ask.len()).filter(|i| (i * 7 + seed as usize) % 3 != 0).collect();
        let sub = QuoteSeries::new(
            keep.iter().map(|&i| ask.times()[i]).collect(),
            keep.iter().map(|&i| ask.values()[i]).collect(),
            Side::LowerBounded,
        )
        .unwrap();
        let ms = local_extrema(&sub, &build_block_grid(&sub, GridTarget::BlockCount(30)).unwrap()).unwrap();
        if m.raw.iter().zip(&ms.raw).any(|(f, p)| matches!((f, p), (Some(f), Some(p)) if p < f)) {
            broken.push("subset monotonicity");
        }

        let shifted = local_extrema(&ask.affine(1.0, 0.375).unwrap(), &grid).unwrap();
        if (1..30).any(|k| m.difference(k) != shifted.difference(k)) {
            broken.push("shift invariance");
        }

        let lambda = 4.0;
        let scaled = local_extrema(&ask.affine(lambda, 0.0).unwrap(), &grid).unwrap();
        if m.scaled(lambda) != scaled {
            broken.push("extrema equivariance");
        }
        let va = spot_vol_path(&m, &vol).unwrap();
        let vb = spot_vol_path(&scaled, &vol).unwrap();
        if va.values().iter().zip(vb.values()).any(|(a, b)| a.map(|a| a * lambda * lambda) != *b) {
            broken.push("variance equivariance");
        }

        if let Ok(a) = global_test(&ask, &cfg) {
            let b = global_test(&ask.affine(0.25, -1.5).unwrap(), &cfg).unwrap();
            let c = global_test(&ask.negated(), &cfg).unwrap();
            if a.t_raw != b.t_raw || a.reject != b.reject || a.argmax_block != b.argmax_block {
                broken.push("extrema test affine invariance");
            }
            if a.t_raw != c.t_raw || a.argmax_block != c.argmax_block || a.jump_estimate.map(|j| -j) != c.jump_estimate {
                broken.push("bid/ask duality");
            }
        }

        let mid = QuoteSeries::new(ask.times().to_vec(), ask.values().to_vec(), Side::TwoSided).unwrap();
        let sigma = SpotVolPath::from_points(vec![1e-3; 11]).unwrap();
        let lm = |s: &QuoteSeries, q: f64, sig: &SpotVolPath| lm_statistic(s, &LMConfig { nh: 8, noise_level: q }, sig).unwrap();
        let a = lm(&mid, 1e-3, &sigma);
        let b = lm(&mid.affine(2.0, 0.5).unwrap(), 2e-3, &sigma.scaled(2.0));
        if a.statistic != b.statistic || a.argmax_block != b.argmax_block {
            broken.push("average test affine invariance");
        }

        for series in [ask.clone(), ask.negated()] {
            let dc = DetectorConfig::new(series.len() - 1, 30, 0.05, series.side(), OnlineVol::Supplied(SpotVolPath::from_points(vec![1.0; 3]).unwrap()));
            let mut state = DetectorState::new(dc).unwrap();
            for (&t, &v) in series.times().iter().zip(series.values()) {
                state.push(t, v).unwrap();
            }
            state.finish();
            let offline = local_extrema(&series, &grid).unwrap();
            if state.completed_extrema() != offline.raw.as_slice() {
                broken.push("online/offline extrema");
            }
        }
    }

    let sim = SimConfig { n: 2_000, seed: 3, ..SimConfig::default() };
    if simulate_session(&sim, &NoiseSpec::ar1(5e-4), None, 1).unwrap() != simulate_session(&sim, &NoiseSpec::ar1(5e-4), None, 1).unwrap() {
        broken.push("simulation determinism");
    }
    let boot = BootstrapConfig { samples: 30, noise_level: 5e-4, scheme: BootScheme::Thinned, vol: BootVol::Fresh(sim), n: 2_000, seed: 2 };
    let stat = BootStatistic::Lm { nh: 10 };
    if bootstrap_handle(&boot, stat).unwrap() != bootstrap_handle(&boot, stat).unwrap() {
        broken.push("bootstrap determinism");
    }
    let psi = |s| psi_mc(1.0, 2_000, 0.02, PsiNoise::HalfNormal { q: 1e-3 }, 40, s).unwrap();
    if psi(4) != psi(4) {
        broken.push("psi determinism");
    }
    let mut spec = TableId::T1.spec(3, 5);
    spec.sim.n = 1_500;
    spec.groups.truncate(1);
    spec.jump_sizes.truncate(2);
    if let Design::Gumbel { block_count, vol_block_count, .. } = &mut spec.design {
        *block_count = reference_block_count(1_500);
        *vol_block_count = 50;
    }
    if run_experiment(&spec).ok() != run_experiment(&spec).ok() {
        broken.push("study determinism");
    }

    broken.dedup();
    outcome(
        broken.is_empty(),
        if broken.is_empty() { "all invariants hold exactly on 40 seeded series".to_string() } else { format!("violated: {}", broken.join(", ")) },
    )
}

fn criterion_10() -> Outcome {
    let nh = 10;
    let jump = 0.005;
    let sim = SimConfig { seed: SEED, ..SimConfig::default() };
    let rows: Vec<(bool, bool)> = replicate(1_000, SEED ^ 10, |r, rng| {
        let block = rng.random_range(200..2_100);
        let index = block * nh + nh / 2;
        let size = if rng.random::<bool>() { jump } else { -jump };
        let time = (index as f64 - 0.5) / N as f64;
        let obs = simulate_session(&sim, &NoiseSpec::HalfNormal { q: 0.0001 }, Some(Jump { time, size }), r as u64).unwrap();
        let avg = block_averages(obs.mid.values(), nh);
        let max_avg = avg.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        let m = local_extrema(&obs.ask, &build_block_grid(&obs.ask, GridTarget::ObsChunks(nh)).unwrap()).unwrap();
        let max_ext = (1..m.block_count()).filter_map(|k| m.difference(k)).map(f64::abs).fold(0.0, f64::max);
        (max_avg < 0.75 * jump, (max_ext - jump).abs() <= 0.10 * jump)
    });
    let split = share(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let intact = share(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    outcome(
        split >= 0.95 && intact >= 0.95,
        format!("averages split the jump in {split:.3} of sessions; extrema keep it within 10% in {intact:.3}"),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 13] = [
        ("1", "global test size/power, AR(1) noise rows", criterion_1),
        ("2", "bootstrap comparison, half-normal noise", criterion_2),
        ("3", "bootstrap comparison, rounded prices", criterion_3),
        ("4", "local test size/power", criterion_4),
        ("5a", "Gumbel limit of i.i.d. maxima", criterion_5a),
        ("5b", "standardized statistic null quantile", criterion_5b),
        ("6a", "density normalization", criterion_6a),
        ("6b", "tail sequences", criterion_6b),
        ("6c", "local quantile", criterion_6c),
        ("7", "localization and sequential detection", criterion_7),
        ("8", "online speed advantage", criterion_8),
        ("9", "exact invariants", criterion_9),
        ("10", "pulverization contrast", criterion_10),
    ];
    let mut failures = 0;
    let mut ran = 0;
    for (id, name, run) in criteria.iter() {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        ran += 1;
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {id:<3} {:<4} {name}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("\n{ran} criteria run, {} passed, {failures} failed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
