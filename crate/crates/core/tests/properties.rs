//! Exact invariants. Values live on a dyadic grid and scale factors are
//! powers of two, so every comparison below is bitwise.

use lomn_core::experiment::{replicate, TableId};
use lomn_core::inference::{
    global_test, local_test, CriticalSource, GlobalTestConfig, LocalCritical, LocalTestConfig, LocalVol,
    VolSource,
};
use lomn_core::mmn::{
    bootstrap_handle, lm_statistic, local_bootstrap, BootScheme, BootStatistic, BootVol, BootstrapConfig,
    LMConfig, LocalKind,
};
use lomn_core::online::{DetectorConfig, DetectorState, OnlineVol};
use lomn_core::rng::rng_for;
use lomn_core::series::{build_block_grid, local_extrema};
use lomn_core::sim::{simulate_session, NoiseSpec, SimConfig};
use lomn_core::spot_vol::{psi_mc, spot_vol_path, PsiNoise, SpotVolConfig, SpotVolPath};
use lomn_core::{GridTarget, QuoteSeries, Side};
use proptest::prelude::*;
use rand::Rng;

const UNIT: f64 = 1.0 / 65_536.0;

/// Random walk plus nonnegative noise, in units of `2^-16`.
fn dyadic_ask(steps: &[i32], noise: &[u16]) -> QuoteSeries {
    let mut level = 0i64;
    let values = steps
        .iter()
        .zip(noise)
        .map(|(&s, &e)| {
            level += i64::from(s);
            (level + i64::from(e)) as f64 * UNIT
        })
        .collect();
    QuoteSeries::equispaced(values, Side::LowerBounded).unwrap()
}

fn ask_strategy(len: usize) -> impl Strategy<Value = QuoteSeries> {
    (
        prop::collection::vec(-400i32..=400, len),
        prop::collection::vec(0u16..600, len),
    )
        .prop_map(|(s, e)| dyadic_ask(&s, &e))
}

fn vol_config() -> SpotVolConfig {
    SpotVolConfig::default().with_window(8)
}

fn global_cfg() -> GlobalTestConfig {
    GlobalTestConfig {
        grid: GridTarget::BlockCount(40),
        vol: VolSource::estimate(GridTarget::BlockCount(60), vol_config()),
        alpha: 0.05,
        critical: CriticalSource::Asymptotic,
        jump_window: Some(10),
    }
}

fn scale_strategy() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.125, 0.25, 0.5, 2.0, 4.0, 16.0])
}

fn shift_strategy() -> impl Strategy<Value = f64> {
    (-4096i32..4096).prop_map(|k| f64::from(k) / 1024.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subset_extrema_never_improve(
        series in ask_strategy(400),
        mask in prop::collection::vec(any::<bool>(), 400),
        blocks in 3usize..40,
    ) {
        let keep: Vec<usize> = (0..series.len()).filter(|&i| mask[i]).collect();
        prop_assume!(keep.len() >= blocks.max(2));
        let sub = QuoteSeries::new(
            keep.iter().map(|&i| series.times()[i]).collect(),
            keep.iter().map(|&i| series.values()[i]).collect(),
            Side::LowerBounded,
        ).unwrap();
        let full = local_extrema(&series, &build_block_grid(&series, GridTarget::BlockCount(blocks)).unwrap()).unwrap();
        let part = local_extrema(&sub, &build_block_grid(&sub, GridTarget::BlockCount(blocks)).unwrap()).unwrap();
        for k in 0..blocks {
            if let (Some(p), Some(f)) = (part.raw[k], full.raw[k]) {
                prop_assert!(p >= f);
            }
        }
        let bid = series.negated();
        let sub_bid = sub.negated();
        let full = local_extrema(&bid, &build_block_grid(&bid, GridTarget::BlockCount(blocks)).unwrap()).unwrap();
        let part = local_extrema(&sub_bid, &build_block_grid(&sub_bid, GridTarget::BlockCount(blocks)).unwrap()).unwrap();
        for k in 0..blocks {
            if let (Some(p), Some(f)) = (part.raw[k], full.raw[k]) {
                prop_assert!(p <= f);
            }
        }
    }

    #[test]
    fn shifted_series_keep_extrema_differences(series in ask_strategy(300), c in shift_strategy(), blocks in 3usize..30) {
        let shifted = series.affine(1.0, c).unwrap();
        let grid = build_block_grid(&series, GridTarget::BlockCount(blocks)).unwrap();
        let a = local_extrema(&series, &grid).unwrap();
        let b = local_extrema(&shifted, &grid).unwrap();
        for k in 1..blocks {
            prop_assert_eq!(a.difference(k), b.difference(k));
        }
    }

    #[test]
    fn scaling_is_equivariant(series in ask_strategy(600), lambda in scale_strategy()) {
        let scaled = series.affine(lambda, 0.0).unwrap();
        let grid = build_block_grid(&series, GridTarget::BlockCount(60)).unwrap();
        let a = local_extrema(&series, &grid).unwrap();
        let b = local_extrema(&scaled, &grid).unwrap();
        prop_assert_eq!(&a.scaled(lambda), &b);
        let va = spot_vol_path(&a, &vol_config()).unwrap();
        let vb = spot_vol_path(&b, &vol_config()).unwrap();
        prop_assert_eq!(va.scaled(lambda), vb);
    }

    #[test]
    fn extrema_test_is_affine_invariant(series in ask_strategy(600), lambda in scale_strategy(), c in shift_strategy()) {
        let cfg = global_cfg();
        let Ok(a) = global_test(&series, &cfg) else { return Ok(()) };
        let b = global_test(&series.affine(lambda, c).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a.t_raw, b.t_raw);
        prop_assert_eq!(a.t_std, b.t_std);
        prop_assert_eq!(a.argmax_block, b.argmax_block);
        prop_assert_eq!(a.reject, b.reject);
        prop_assert_eq!(a.jump_estimate.map(|j| j * lambda), b.jump_estimate);
    }

    #[test]
    fn local_average_test_is_affine_invariant(
        series in ask_strategy(640),
        lambda in scale_strategy(),
        c in shift_strategy(),
        nh in prop::sample::select(vec![4usize, 8, 16, 32]),
        q in 1u32..64,
    ) {
        let mid = QuoteSeries::new(series.times().to_vec(), series.values().to_vec(), Side::TwoSided).unwrap();
        let moved = mid.affine(lambda, c).unwrap();
        let sigma = SpotVolPath::from_points(vec![f64::from(q) * UNIT; 11]).unwrap();
        let q = f64::from(q) * UNIT;
        let a = lm_statistic(&mid, &LMConfig { nh, noise_level: q }, &sigma).unwrap();
        let b = lm_statistic(&moved, &LMConfig { nh, noise_level: q * lambda }, &sigma.scaled(lambda)).unwrap();
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert_eq!(a.argmax_block, b.argmax_block);
        prop_assert_eq!(a.standardized, b.standardized);
    }

    #[test]
    fn bid_is_the_mirrored_ask(series in ask_strategy(600), tau in 0.2f64..0.8) {
        let bid = series.negated();
        prop_assert_eq!(bid.side(), Side::UpperBounded);
        let cfg = global_cfg();
        if let Ok(a) = global_test(&series, &cfg) {
            let b = global_test(&bid, &cfg).unwrap();
            prop_assert_eq!(a.t_raw, b.t_raw);
            prop_assert_eq!(a.argmax_block, b.argmax_block);
            prop_assert_eq!(a.reject, b.reject);
            prop_assert_eq!(a.jump_estimate.map(|j| -j), b.jump_estimate);
        }
        let local = LocalTestConfig {
            nh: 10,
            vol: LocalVol::Estimate { grid: GridTarget::BlockCount(60), config: vol_config() },
            alpha: 0.05,
            critical: LocalCritical::Asymptotic,
        };
        if let Ok(a) = local_test(&series, tau, &local) {
            let b = local_test(&bid, tau, &local).unwrap();
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert_eq!(a.reject, b.reject);
            prop_assert_eq!(a.jump_estimate, -b.jump_estimate);
        }
    }

    #[test]
    fn online_block_extrema_match_offline(
        series in ask_strategy(500),
        blocks in 3usize..50,
        drop in prop::collection::vec(any::<bool>(), 500),
    ) {
        let keep: Vec<usize> = (0..series.len()).filter(|&i| !drop[i] || i % 7 == 0).collect();
        let s = QuoteSeries::new(
            keep.iter().map(|&i| series.times()[i]).collect(),
            keep.iter().map(|&i| series.values()[i]).collect(),
            Side::LowerBounded,
        ).unwrap();
        for side_series in [s.clone(), s.negated()] {
            let offline = local_extrema(&side_series, &build_block_grid(&side_series, GridTarget::BlockCount(blocks)).unwrap()).unwrap();
            let sigma = SpotVolPath::from_points(vec![1.0; 5]).unwrap();
            let cfg = DetectorConfig::new(side_series.len() - 1, blocks, 0.05, side_series.side(), OnlineVol::Supplied(sigma));
            let mut state = DetectorState::new(cfg).unwrap();
            for (&t, &v) in side_series.times().iter().zip(side_series.values()) {
                state.push(t, v).unwrap();
            }
            state.finish();
            prop_assert_eq!(state.completed_extrema(), &offline.raw[..]);
        }
    }
}

#[test]
fn monte_carlo_entry_points_are_seed_deterministic() {
    let sim = SimConfig { n: 2_000, seed: 9, ..SimConfig::default() };
    let noise = NoiseSpec::ar1(0.0005);
    assert_eq!(
        simulate_session(&sim, &noise, None, 3).unwrap(),
        simulate_session(&sim, &noise, None, 3).unwrap()
    );
    assert_ne!(
        simulate_session(&sim, &noise, None, 3).unwrap().ask,
        simulate_session(&sim, &noise, None, 4).unwrap().ask
    );

    let boot = BootstrapConfig {
        samples: 40,
        noise_level: 0.0005,
        scheme: BootScheme::Thinned,
        vol: BootVol::Fresh(sim),
        n: 2_000,
        seed: 5,
    };
    for stat in [BootStatistic::Ext { grid: GridTarget::ObsChunks(10) }, BootStatistic::Lm { nh: 10 }] {
        assert_eq!(bootstrap_handle(&boot, stat).unwrap(), bootstrap_handle(&boot, stat).unwrap());
    }

    let a = local_bootstrap(LocalKind::Ext, 12, 23_400, 1e-4, 0.0005, BootScheme::HalfNormal, 200, 1).unwrap();
    let b = local_bootstrap(LocalKind::Ext, 12, 23_400, 1e-4, 0.0005, BootScheme::HalfNormal, 200, 1).unwrap();
    assert_eq!(a, b);

    let p = |seed| psi_mc(1.0, 2_000, 0.02, PsiNoise::HalfNormal { q: 0.001 }, 50, seed).unwrap();
    assert_eq!(p(3), p(3));
    assert_ne!(p(3), p(4));

    let draws = |seed| replicate(16, seed, |r, rng| r as f64 + rng.random::<f64>());
    assert_eq!(draws(2), draws(2));

    let mut rng_a = rng_for(11, 2);
    let mut rng_b = rng_for(11, 2);
    assert_eq!(rng_a.random::<u64>(), rng_b.random::<u64>());

    let mut spec = TableId::T2.spec(4, 17);
    spec.sim.n = 1_500;
    spec.groups.truncate(1);
    spec.jump_sizes.truncate(2);
    if let lomn_core::experiment::Design::Bootstrap { samples, pilot_reps, .. } = &mut spec.design {
        *samples = 120;
        *pilot_reps = 2;
    }
    let first = lomn_core::experiment::run_experiment(&spec).unwrap();
    let second = lomn_core::experiment::run_experiment(&spec).unwrap();
    assert_eq!(first, second);
}
