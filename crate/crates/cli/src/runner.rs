//! The `run` command: fans out seeded sessions, writes the per-run CSV,
//! the Fig-style summary table and the optional per-segment log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use edgedash_core::simcore::{
    required_horizon, run_session, sweep, Policy, SessionConfig, SimulationReport, SweepOutcome,
    SweepParameter, SweepRow, SweepSpec,
};
use edgedash_core::units::TimeNs;
use edgedash_core::{Result, SimError};

use crate::config::{PolicyChoice, ResolvedConfig};

pub const RUNS_HEADER: &str = "seed,policy,buffer_s,window_s,utility,utility_norm,\
mean_bitrate_kbps,up_switches,down_switches,rebuffer_s,cache_peak_kB,cache_mean_kB";

pub const SUMMARY_HEADER: &str = "panel,value_s,policy,mean,stddev";

pub const SEGMENTS_HEADER: &str =
    "seed,policy,buffer_s,window_s,segment,bitrate_kbps,quality,download_start_s,download_finish_s";

/// Derived per-hop seeds: the edge consumes the run seed directly, the
/// core a fixed mix of it, so one seed pins both realizations.
fn core_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1)
}

fn realize(
    config: &ResolvedConfig,
    seed: u64,
    horizon: TimeNs,
) -> Result<(
    edgedash_core::bandwidth::BandwidthTimeline,
    edgedash_core::bandwidth::BandwidthTimeline,
)> {
    let core = config.core.realize(core_seed(seed), horizon)?;
    let edge = config.edge.realize(seed, horizon)?;
    Ok((core, edge))
}

pub struct RunArtifacts {
    pub runs_csv: String,
    pub summary_csv: String,
    pub segments_csv: Option<String>,
    pub reports: Vec<SimulationReport>,
}

/// Executes the configured experiment and renders all output tables.
pub fn execute(config: &ResolvedConfig, want_segments: bool) -> Result<RunArtifacts> {
    let base = SessionConfig {
        scheduler: config.scheduler.clone(),
        baseline: config.baseline.clone(),
        buffer: config.fixed_buffer,
        seed: config.seed,
    };

    let (runs, summary) = match config.policy {
        PolicyChoice::Both => {
            let spec = SweepSpec {
                parameter: config.sweep_parameter.unwrap_or(SweepParameter::BufferSize),
                values: if config.sweep_values.is_empty() {
                    vec![config.fixed_buffer]
                } else {
                    config.sweep_values.clone()
                },
                repetitions: config.repetitions,
            };
            let factory = |seed: u64, horizon: TimeNs| realize(config, seed, horizon);
            let SweepOutcome { runs, summary } = sweep(&spec, &base, &config.manifest, &factory)?;
            (runs, summary)
        }
        single => {
            let policy = match single {
                PolicyChoice::Anticipative => Policy::Anticipative,
                PolicyChoice::Baseline => Policy::Baseline,
                PolicyChoice::Both => unreachable!(),
            };
            run_single_policy(config, &base, policy)?
        }
    };

    let sweep_axis = config.sweep_parameter.unwrap_or(SweepParameter::BufferSize);
    Ok(RunArtifacts {
        runs_csv: render_runs(&runs),
        summary_csv: render_summary(&summary, sweep_axis),
        segments_csv: want_segments.then(|| render_segments(&runs)),
        reports: runs,
    })
}

/// Seeded runs of one policy only, over the configured sweep axis.
fn run_single_policy(
    config: &ResolvedConfig,
    base: &SessionConfig,
    policy: Policy,
) -> Result<(Vec<SimulationReport>, Vec<SweepRow>)> {
    let axis = config.sweep_parameter.unwrap_or(SweepParameter::BufferSize);
    let values = if config.sweep_values.is_empty() {
        vec![config.fixed_buffer]
    } else {
        config.sweep_values.clone()
    };
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &value in &values {
        let mut cell = Vec::new();
        for rep in 0..config.repetitions {
            let mut session = base.clone();
            session.seed = base.seed.wrapping_add(rep as u64);
            match axis {
                SweepParameter::BufferSize => session.buffer = value,
                SweepParameter::WindowSize => {
                    session.scheduler.window = value;
                    if session.scheduler.interleave_holdback >= value {
                        session.scheduler.interleave_holdback = TimeNs::ZERO;
                    }
                }
            }
            let horizon = required_horizon(&config.manifest, &session.scheduler);
            let (core, edge) = realize(config, session.seed, horizon)?;
            let report = run_session(policy, &config.manifest, &core, &edge, &session)?;
            cell.push(report);
        }
        let stat = |f: &dyn Fn(&SimulationReport) -> f64| -> (f64, f64) {
            let v: Vec<f64> = cell.iter().map(f).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
            (mean, var.sqrt())
        };
        let (u_mean, u_std) = stat(&|r| r.utility);
        let (n_mean, n_std) = stat(&|r| r.utility_norm);
        let (b_mean, b_std) = stat(&|r| r.mean_bitrate_kbps);
        let (r_mean, _) = stat(&|r| r.rebuffer.as_secs_f64());
        let (c_mean, _) = stat(&|r| r.cache_peak.as_kbits_f64());
        summary.push(SweepRow {
            parameter: axis,
            value,
            policy,
            utility_mean: u_mean,
            utility_std: u_std,
            utility_norm_mean: n_mean,
            utility_norm_std: n_std,
            bitrate_mean: b_mean,
            bitrate_std: b_std,
            rebuffer_mean_s: r_mean,
            cache_peak_mean_kbits: c_mean,
        });
        runs.extend(cell);
    }
    Ok((runs, summary))
}

fn render_runs(runs: &[SimulationReport]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in runs {
        let window_s = match r.policy {
            Policy::Anticipative => r.window.as_secs_f64(),
            Policy::Baseline => 0.0,
        };
        let _ = writeln!(
            out,
            "{},{},{:.3},{:.3},{:.6},{:.6},{:.3},{},{},{:.6},{:.3},{:.3}",
            r.seed,
            r.policy,
            r.buffer.as_secs_f64(),
            window_s,
            r.utility,
            r.utility_norm,
            r.mean_bitrate_kbps,
            r.switch_up,
            r.switch_down,
            r.rebuffer.as_secs_f64(),
            r.cache_peak.as_kilobytes_f64(),
            r.cache_mean_kbits / 8.0,
        );
    }
    out
}

fn render_summary(rows: &[SweepRow], axis: SweepParameter) -> String {
    let axis_name = axis.as_str();
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (panel, mean, std) in rows.iter().flat_map(|r| {
        [
            (
                format!("utility_vs_{axis_name}"),
                (r, r.utility_mean, r.utility_std),
            ),
            (
                format!("utility_norm_vs_{axis_name}"),
                (r, r.utility_norm_mean, r.utility_norm_std),
            ),
            (
                format!("mean_bitrate_vs_{axis_name}"),
                (r, r.bitrate_mean, r.bitrate_std),
            ),
        ]
        .map(|(p, (r, m, s))| ((p, r.value, r.policy), m, s))
    }) {
        let (panel_name, value, policy) = panel;
        let _ = writeln!(
            out,
            "{},{:.3},{},{:.6},{:.6}",
            panel_name,
            value.as_secs_f64(),
            policy,
            mean,
            std
        );
    }
    out
}

fn render_segments(runs: &[SimulationReport]) -> String {
    let mut out = String::from(SEGMENTS_HEADER);
    out.push('\n');
    for r in runs {
        for seg in &r.per_segment {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{},{:.3},{:.6},{:.6},{:.6}",
                r.seed,
                r.policy,
                r.buffer.as_secs_f64(),
                r.window.as_secs_f64(),
                seg.segment,
                seg.bitrate.as_kbps_f64(),
                seg.quality,
                seg.download_start.as_secs_f64(),
                seg.download_finish.as_secs_f64(),
            );
        }
    }
    out
}

/// Writes the realized bandwidth timelines per distinct seed for audit.
pub fn emit_timelines(config: &ResolvedConfig, out_dir: &Path) -> Result<()> {
    let horizon = required_horizon(&config.manifest, &config.scheduler);
    for rep in 0..config.repetitions {
        let seed = config.seed.wrapping_add(rep as u64);
        let (core, edge) = realize(config, seed, horizon)?;
        for (name, tl) in [("core", &core), ("edge", &edge)] {
            let mut text = String::from("time_s,rate_kbps\n");
            for (start, rate) in tl.steps() {
                let _ = writeln!(text, "{:.3},{:.3}", start.as_secs_f64(), rate.as_kbps_f64());
            }
            let path = out_dir.join(format!("timeline_{name}_seed{seed}.csv"));
            fs::write(&path, text).map_err(|e| {
                SimError::Config(format!("cannot write {}: {e}", path.display()))
            })?;
        }
    }
    Ok(())
}

/// Realizes one seed of both hops purely to confirm feasibility before a
/// long run; trace-backed hops also get their horizon checked here.
pub fn preflight(config: &ResolvedConfig) -> Result<()> {
    let mut scheduler = config.scheduler.clone();
    if let (Some(SweepParameter::WindowSize), Some(max)) = (
        config.sweep_parameter,
        config.sweep_values.iter().max().copied(),
    ) {
        scheduler.window = max;
    }
    let horizon = required_horizon(&config.manifest, &scheduler);
    realize(config, config.seed, horizon).map(|_| ())
}

/// Pass/fail counts for the search-vs-oracle certification harness.
pub struct OracleCheckOutcome {
    pub agreements: usize,
    pub disagreements: Vec<u64>,
    pub infeasible: usize,
}

/// Random small instances compared against exhaustive enumeration, as an
/// ad-hoc certification of the window search.
pub fn oracle_check(
    segments: usize,
    rates: usize,
    instances: u64,
    base_seed: u64,
) -> Result<OracleCheckOutcome> {
    use edgedash_core::bandwidth::BandwidthTimeline;
    use edgedash_core::oracle::enumerate_optimal;
    use edgedash_core::scheduler::{find_optimal_path, SchedulerConfig, SearchState};
    use edgedash_core::simcore::VideoManifest;
    use edgedash_core::units::Rate;
    use rand::{Rng, SeedableRng};

    if segments == 0 || !(1..=6).contains(&rates) {
        return Err(SimError::Config(
            "oracle-check needs segments >= 1 and 1 <= rates <= 6".into(),
        ));
    }
    let mut agreements = 0usize;
    let mut disagreements = Vec::new();
    let mut infeasible = 0usize;
    for k in 0..instances {
        let seed = base_seed.wrapping_add(k);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pool = [100i64, 200, 300, 450, 600, 800, 1000, 1200];
        let mut picks: Vec<usize> = Vec::with_capacity(rates);
        let mut lo = 0usize;
        for slot in 0..rates {
            let hi = pool.len() - (rates - slot - 1);
            let p = rng.random_range(lo..hi);
            picks.push(p);
            lo = p + 1;
        }
        let ladder: Vec<Rate> = picks.iter().map(|&i| Rate::from_kbps(pool[i])).collect();
        let manifest = VideoManifest::new(segments, TimeNs::from_secs(2), ladder)
            .map_err(|e| SimError::Config(format!("instance {k}: {e}")))?;
        let window = TimeNs::from_secs(800);
        let horizon = TimeNs::from_secs(820);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let steps: Vec<(TimeNs, Rate)> = (0..410)
                .map(|j| {
                    (
                        TimeNs::from_secs(2 * j),
                        Rate::from_kbps(rng.random_range(30..=2500)),
                    )
                })
                .collect();
            BandwidthTimeline::new(steps, horizon).expect("well-formed steps")
        };
        let core = mk(&mut rng);
        let edge = mk(&mut rng);
        let max_buffer = TimeNs::from_secs([6i64, 10, 20][rng.random_range(0..3)]);
        let config = SchedulerConfig {
            window,
            interleave_holdback: TimeNs::ZERO,
            prune_floor: false,
            ..SchedulerConfig::default()
        };
        let state = SearchState::session_start(window, max_buffer);
        let path = find_optimal_path(&state, &manifest, &core, &edge, &config)?;
        let oracle = enumerate_optimal(&manifest, &core, &edge, &config, max_buffer)?;
        let agree = if oracle.feasible == 0 {
            infeasible += 1;
            !path.valid
        } else {
            path.valid
                && path.utility == oracle.best_utility
                && path.bitrates() == oracle.best_path.bitrates()
        };
        if agree {
            agreements += 1;
        } else {
            disagreements.push(seed);
        }
    }
    Ok(OracleCheckOutcome {
        agreements,
        disagreements,
        infeasible,
    })
}
