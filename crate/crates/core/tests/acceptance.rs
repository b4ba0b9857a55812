//! Acceptance suite: one test per release criterion, each printing a
//! PASS line on success. Run with `cargo test --test acceptance`.

use edgedash_core::bandwidth::{
    generate_markov_timeline, presets, unused_capacity, BandwidthTimeline,
};
use edgedash_core::baseline::{cacheless_finish, BaselineConfig};
use edgedash_core::oracle::enumerate_optimal;
use edgedash_core::qoe::{
    path_utility, segment_quality, switch_penalty, QoeParams, QualitySequence,
};
use edgedash_core::scheduler::{
    find_optimal_path, segment_download_finish, DownloadOutcome, SchedulerConfig, SearchState,
};
use edgedash_core::simcore::{
    required_horizon, run_session, sweep, Policy, SessionConfig, SweepParameter, SweepSpec,
    VideoManifest,
};
use edgedash_core::units::{Rate, TimeNs, Volume};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ts(s: i64) -> TimeNs {
    TimeNs::from_secs(s)
}

fn kbps(k: i64) -> Rate {
    Rate::from_kbps(k)
}

fn kbit(k: i64) -> Volume {
    Volume::from_kbits(k)
}

/// The experiment parameters the bundled case-1 configuration mirrors:
/// 300 s video in 2 s segments, ladder 100/400/1000 kbps, the six-state
/// wireless and core chains, window 10 s.
fn case1_manifest() -> VideoManifest {
    VideoManifest::new(150, ts(2), vec![kbps(100), kbps(400), kbps(1000)]).unwrap()
}

fn case1_timelines(seed: u64, horizon: TimeNs) -> (BandwidthTimeline, BandwidthTimeline) {
    let core = generate_markov_timeline(
        &presets::core_model(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1)),
        horizon,
    )
    .unwrap();
    let edge = generate_markov_timeline(&presets::wireless_model(seed), horizon).unwrap();
    (core, edge)
}

#[test]
fn criterion_1_worked_example_golden() {
    // Two-hop scenario: core constant 300 kbps, edge 100 then 500 kbps.
    let core = BandwidthTimeline::constant(kbps(300), ts(4)).unwrap();
    let edge = BandwidthTimeline::new(vec![(ts(0), kbps(100)), (ts(2), kbps(500))], ts(4)).unwrap();

    // First segment: 200 kbit at the ladder floor finishes at exactly 2 s.
    let (finish, cache) =
        match segment_download_finish(kbit(200), ts(0), Volume::ZERO, &core, &edge).unwrap() {
            DownloadOutcome::Completed {
                finish,
                cache_at_finish,
                ..
            } => (finish, cache_at_finish),
            other => panic!("unexpected outcome {other:?}"),
        };
    assert_eq!(finish, ts(2));

    // Unused capacity over [0, 2] is exactly 400 kbit, and the download
    // walk staged exactly that much.
    assert_eq!(
        unused_capacity(&core, &edge, ts(0), ts(2)).unwrap(),
        kbit(400)
    );
    assert_eq!(cache, kbit(400));

    // Cache-assisted deliverable over [2, 4] is 1000 kbit (the edge
    // binds), versus 600 kbit end-to-end (the core binds).
    let assisted = edge
        .cumulative(ts(2), ts(4))
        .unwrap()
        .min(kbit(400) + core.cumulative(ts(2), ts(4)).unwrap());
    assert_eq!(assisted, kbit(1000));
    match segment_download_finish(kbit(1000), ts(2), kbit(400), &core, &edge).unwrap() {
        DownloadOutcome::Completed { finish, .. } => assert_eq!(finish, ts(4)),
        other => panic!("unexpected outcome {other:?}"),
    }
    let end_to_end = core
        .cumulative(ts(2), ts(4))
        .unwrap()
        .min(edge.cumulative(ts(2), ts(4)).unwrap());
    assert_eq!(end_to_end, kbit(600));
    assert_eq!(
        cacheless_finish(kbit(600), ts(2), &core, &edge, ts(4)),
        Some(ts(4))
    );
    assert_eq!(cacheless_finish(kbit(601), ts(2), &core, &edge, ts(4)), None);

    println!("ACCEPTANCE 1 worked-example golden: PASS");
}

#[test]
fn criterion_2_intro_two_slot_example() {
    // Core offers (2, 1) units per slot, edge (1, 2). Staging at the
    // middle node delivers 3 units in two slots; the end-to-end
    // bottleneck path delivers 2.
    let core = BandwidthTimeline::new(vec![(ts(0), kbps(2)), (ts(1), kbps(1))], ts(2)).unwrap();
    let edge = BandwidthTimeline::new(vec![(ts(0), kbps(1)), (ts(1), kbps(2))], ts(2)).unwrap();
    let unit = kbit(1);

    // cache-assisted: a 1-unit then a 2-unit transfer, back to back
    let (f1, staged) =
        match segment_download_finish(unit, ts(0), Volume::ZERO, &core, &edge).unwrap() {
            DownloadOutcome::Completed {
                finish,
                cache_at_finish,
                ..
            } => (finish, cache_at_finish),
            other => panic!("unexpected outcome {other:?}"),
        };
    assert_eq!(f1, ts(1));
    assert_eq!(staged, unit);
    match segment_download_finish(kbit(2), f1, staged, &core, &edge).unwrap() {
        DownloadOutcome::Completed { finish, .. } => assert_eq!(finish, ts(2)),
        other => panic!("unexpected outcome {other:?}"),
    }

    // end to end: one unit per slot, and the 2-unit second transfer
    // cannot complete
    let f1 = cacheless_finish(unit, ts(0), &core, &edge, ts(2)).unwrap();
    assert_eq!(f1, ts(1));
    assert_eq!(cacheless_finish(unit, f1, &core, &edge, ts(2)), Some(ts(2)));
    assert_eq!(cacheless_finish(kbit(2), f1, &core, &edge, ts(2)), None);

    println!("ACCEPTANCE 2 intro two-slot example: PASS");
}

/// Random small instance for oracle certification. Rates never fall low
/// enough for a window miss to preempt the deadline check, so the window
/// genuinely covers every sequence the oracle enumerates.
struct SmallInstance {
    manifest: VideoManifest,
    core: BandwidthTimeline,
    edge: BandwidthTimeline,
    config: SchedulerConfig,
    max_buffer: TimeNs,
}

fn small_instance(seed: u64) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=6);
    let pool = [100i64, 200, 300, 450, 600, 800, 1000, 1200];
    let mut picks = [0usize; 3];
    picks[0] = rng.random_range(0..pool.len() - 2);
    picks[1] = rng.random_range(picks[0] + 1..pool.len() - 1);
    picks[2] = rng.random_range(picks[1] + 1..pool.len());
    let ladder: Vec<Rate> = picks.iter().map(|&i| kbps(pool[i])).collect();
    let manifest = VideoManifest::new(n, ts(2), ladder).unwrap();

    let window = ts(800);
    let horizon = ts(820);
    let mk_timeline = |rng: &mut ChaCha8Rng| {
        let steps: Vec<(TimeNs, Rate)> = (0..410)
            .map(|k| (ts(2 * k), kbps(rng.random_range(30..=2500))))
            .collect();
        BandwidthTimeline::new(steps, horizon).unwrap()
    };
    let core = mk_timeline(&mut rng);
    let edge = mk_timeline(&mut rng);
    let max_buffer = ts(*[6i64, 10, 20].get(rng.random_range(0..3)).unwrap());
    let config = SchedulerConfig {
        window,
        interleave_holdback: TimeNs::ZERO,
        prune_floor: false,
        ..SchedulerConfig::default()
    };
    SmallInstance {
        manifest,
        core,
        edge,
        config,
        max_buffer,
    }
}

#[test]
fn criterion_3_oracle_equivalence() {
    let instances = 200;
    let mut feasible_instances = 0;
    for seed in 0..instances {
        let inst = small_instance(seed);
        let state = SearchState::session_start(inst.config.window, inst.max_buffer);
        let path = find_optimal_path(&state, &inst.manifest, &inst.core, &inst.edge, &inst.config)
            .unwrap();
        let oracle = enumerate_optimal(
            &inst.manifest,
            &inst.core,
            &inst.edge,
            &inst.config,
            inst.max_buffer,
        )
        .unwrap();
        let m = inst.manifest.ladder.len() as u64;
        assert_eq!(
            oracle.enumerated,
            m.pow(inst.manifest.segment_count as u32),
            "seed {seed}: enumeration incomplete"
        );
        if oracle.feasible == 0 {
            assert!(!path.valid, "seed {seed}: search found a path the oracle did not");
            continue;
        }
        feasible_instances += 1;
        assert!(path.valid, "seed {seed}: search missed a feasible path");
        assert_eq!(
            path.utility, oracle.best_utility,
            "seed {seed}: utility mismatch"
        );
        assert_eq!(
            path.bitrates(),
            oracle.best_path.bitrates(),
            "seed {seed}: tie-broken paths differ"
        );
    }
    assert!(
        feasible_instances >= instances / 2,
        "instance family too degenerate: only {feasible_instances} feasible"
    );
    println!(
        "ACCEPTANCE 3 oracle equivalence: PASS ({instances} instances, {feasible_instances} feasible)"
    );
}

#[test]
fn criterion_4_qoe_arithmetic() {
    const TOL: f64 = 1e-12;
    let params = QoeParams::default();
    let ln3 = 3f64.ln();

    let q = segment_quality(kbps(300), kbps(100), &params).unwrap();
    assert!((q - ln3).abs() < TOL);

    let up = switch_penalty(0.0, ln3, &params);
    assert!((up - 0.1 * ln3).abs() < TOL);

    let seq = QualitySequence::from_bitrates(
        &[kbps(300), kbps(100), kbps(300)],
        kbps(100),
        &params,
    )
    .unwrap();
    let u = path_utility(&seq, &params).unwrap();
    assert!((u - 0.9 * ln3).abs() < TOL);

    println!("ACCEPTANCE 4 qoe arithmetic: PASS");
}

#[test]
fn criterion_5_utility_gain_replication() {
    let manifest = case1_manifest();
    let base = SessionConfig {
        scheduler: SchedulerConfig {
            window: ts(10),
            ..SchedulerConfig::default()
        },
        baseline: BaselineConfig::default(),
        buffer: ts(20),
        seed: 1,
    };
    let spec = SweepSpec {
        parameter: SweepParameter::BufferSize,
        values: vec![ts(10), ts(20), ts(30), ts(40)],
        repetitions: 20,
    };
    let factory =
        |seed: u64, horizon: TimeNs| -> edgedash_core::Result<(BandwidthTimeline, BandwidthTimeline)> {
            Ok(case1_timelines(seed, horizon))
        };
    let outcome = sweep(&spec, &base, &manifest, &factory).unwrap();
    for value in &spec.values {
        let ant = outcome
            .summary
            .iter()
            .find(|r| r.value == *value && r.policy == Policy::Anticipative)
            .expect("anticipative row");
        let dash = outcome
            .summary
            .iter()
            .find(|r| r.value == *value && r.policy == Policy::Baseline)
            .expect("baseline row");
        let gap_pp = (ant.utility_norm_mean - dash.utility_norm_mean) * 100.0;
        assert!(
            gap_pp >= 10.0,
            "buffer {value}: normalized-utility gap {gap_pp:.2}pp below 10pp"
        );
        assert!(
            ant.bitrate_mean >= dash.bitrate_mean,
            "buffer {value}: anticipative bitrate {:.1} below baseline {:.1}",
            ant.bitrate_mean,
            dash.bitrate_mean
        );
        println!(
            "ACCEPTANCE 5 buffer {value}: gap {gap_pp:.1}pp, bitrates {:.0} vs {:.0} kbps",
            ant.bitrate_mean, dash.bitrate_mean
        );
    }
    println!("ACCEPTANCE 5 utility-gain replication: PASS");
}

#[test]
fn criterion_6_zero_rebuffer_above_floor() {
    // Whenever both hops stay at or above the ladder floor, anticipative
    // sessions never stall.
    let manifest = VideoManifest::new(40, ts(2), vec![kbps(100), kbps(400), kbps(1000)]).unwrap();
    let config = SessionConfig {
        scheduler: SchedulerConfig {
            window: ts(10),
            ..SchedulerConfig::default()
        },
        baseline: BaselineConfig::default(),
        buffer: ts(20),
        seed: 0,
    };
    let horizon = required_horizon(&manifest, &config.scheduler);
    let steps_needed = horizon.as_nanos() / ts(2).as_nanos() + 1;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF100D + seed);
        let mk = |rng: &mut ChaCha8Rng| {
            let steps: Vec<(TimeNs, Rate)> = (0..steps_needed)
                .map(|k| (ts(2 * k), kbps(rng.random_range(100..=2500))))
                .collect();
            BandwidthTimeline::new(steps, horizon).unwrap()
        };
        let core = mk(&mut rng);
        let edge = mk(&mut rng);
        let mut cfg = config.clone();
        cfg.seed = seed;
        let report = run_session(Policy::Anticipative, &manifest, &core, &edge, &cfg).unwrap();
        assert_eq!(
            report.rebuffer,
            TimeNs::ZERO,
            "seed {seed}: rebuffered {} with bandwidth above the floor",
            report.rebuffer
        );
        assert!(!report.fallback_used, "seed {seed}: fell back to floor commits");
    }
    println!("ACCEPTANCE 6 zero rebuffer above floor: PASS (100 seeds)");
}

#[test]
fn criterion_7_cache_occupancy_sanity() {
    let manifest = case1_manifest();
    let config = SessionConfig {
        scheduler: SchedulerConfig {
            window: ts(10),
            ..SchedulerConfig::default()
        },
        baseline: BaselineConfig::default(),
        buffer: ts(20),
        seed: 0,
    };
    let horizon = required_horizon(&manifest, &config.scheduler);
    let mut peaks_kb = Vec::new();
    for seed in 0..5u64 {
        let (core, edge) = case1_timelines(seed, horizon);
        let mut cfg = config.clone();
        cfg.seed = seed;
        let report = run_session(Policy::Anticipative, &manifest, &core, &edge, &cfg).unwrap();
        let peak_kb = report.cache_peak.as_kilobytes_f64();
        assert!(peak_kb.is_finite() && peak_kb >= 0.0);
        assert!(
            peak_kb <= 1000.0,
            "seed {seed}: cache peak {peak_kb:.1} kB above the 1000 kB sanity bound"
        );
        peaks_kb.push(peak_kb);
    }
    let max_peak = peaks_kb.iter().cloned().fold(0.0f64, f64::max);
    let in_band = peaks_kb.iter().filter(|&&p| p <= 365.0).count();
    println!(
        "ACCEPTANCE 7 cache occupancy: PASS (peaks {:?} kB; {} of {} within the reported 0-365 kB band, max {:.1} kB)",
        peaks_kb.iter().map(|p| p.round()).collect::<Vec<_>>(),
        in_band,
        peaks_kb.len(),
        max_peak
    );
}

#[test]
fn criterion_8_baseline_convergence() {
    // Constant bandwidth at or above the top rung: the moving average
    // locks onto the top bitrate within k = 5 segments and never leaves.
    let manifest = VideoManifest::new(40, ts(2), vec![kbps(100), kbps(400), kbps(1000)]).unwrap();
    let config = SessionConfig {
        scheduler: SchedulerConfig::default(),
        baseline: BaselineConfig::default(),
        buffer: ts(20),
        seed: 0,
    };
    let horizon = required_horizon(&manifest, &config.scheduler);
    for rate in [kbps(1000), kbps(1500), kbps(4000)] {
        let link = BandwidthTimeline::constant(rate, horizon).unwrap();
        let report = run_session(Policy::Baseline, &manifest, &link, &link, &config).unwrap();
        let first_at_top = report
            .per_segment
            .iter()
            .position(|r| r.bitrate == kbps(1000))
            .expect("top rate reached");
        assert!(
            first_at_top < 5,
            "top rate first chosen at segment index {first_at_top}"
        );
        assert!(
            report.per_segment[first_at_top..]
                .iter()
                .all(|r| r.bitrate == kbps(1000)),
            "baseline left the top rate after locking on"
        );
        assert_eq!(report.rebuffer, TimeNs::ZERO);
    }
    println!("ACCEPTANCE 8 baseline convergence: PASS");
}

#[test]
fn criterion_9_run_determinism() {
    // Bit-identical reports for repeated runs of the bundled case-1
    // parameters; the CLI suite additionally checks byte-identical CSVs.
    let manifest = case1_manifest();
    let config = SessionConfig {
        scheduler: SchedulerConfig {
            window: ts(10),
            ..SchedulerConfig::default()
        },
        baseline: BaselineConfig::default(),
        buffer: ts(20),
        seed: 7,
    };
    let horizon = required_horizon(&manifest, &config.scheduler);
    let (core_a, edge_a) = case1_timelines(7, horizon);
    let (core_b, edge_b) = case1_timelines(7, horizon);
    assert_eq!(core_a, core_b);
    assert_eq!(edge_a, edge_b);
    for policy in [Policy::Anticipative, Policy::Baseline] {
        let a = run_session(policy, &manifest, &core_a, &edge_a, &config).unwrap();
        let b = run_session(policy, &manifest, &core_b, &edge_b, &config).unwrap();
        assert_eq!(a, b, "{policy} runs differ under one seed");
    }
    println!("ACCEPTANCE 9 determinism: PASS");
}
