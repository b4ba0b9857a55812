//! Exhaustive certification of the window search on small instances.
//!
//! Enumerates every bitrate sequence for the whole video, replays each one
//! through the same per-segment step the scheduler uses, and keeps the best
//! feasible sequence under the same total order. Meaningful when the
//! knowledge window covers every feasible sequence; the search then has to
//! agree exactly, tie-breaks included.

use std::cmp::Ordering;

use crate::bandwidth::BandwidthTimeline;
use crate::error::{Result, SimError};
use crate::qoe::{cost_of, segment_quality, utility_of_qualities};
use crate::scheduler::{
    advance_segment, compare_candidates, PathEntry, SchedulePath, SchedulerConfig, StepCursor,
    StepOutcome,
};
use crate::simcore::VideoManifest;
use crate::units::{Rate, TimeNs, Volume, VolumeTime};

/// Hard ceiling on `M^N` for one enumeration.
pub const ENUMERATION_GUARD: u64 = 1_000_000;

/// Result of one exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best_path: SchedulePath,
    pub best_utility: f64,
    /// Complete sequences accounted for, pruned or not: always `M^N`.
    pub enumerated: u64,
    /// Sequences in which every segment met its deadline inside the window.
    pub feasible: u64,
}

/// Enumerates all `M^N` bitrate sequences from a fresh session start and
/// returns the exact best feasible one. Sequences violating the session's
/// first-segment floor policy (when configured) count as infeasible; the
/// scheduler's pruning switches are never consulted.
pub fn enumerate_optimal(
    manifest: &VideoManifest,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    config: &SchedulerConfig,
    max_buffer: TimeNs,
) -> Result<OracleResult> {
    config.validate()?;
    manifest.validate()?;
    let m = manifest.ladder.len() as u64;
    let n = manifest.segment_count as u32;
    let total = m
        .checked_pow(n)
        .filter(|&t| t <= ENUMERATION_GUARD)
        .ok_or_else(|| {
            SimError::Guard(format!(
                "{m}^{n} sequences exceed the {ENUMERATION_GUARD} enumeration guard"
            ))
        })?;

    let window_end = config.window;
    let horizon = core.horizon().min(edge.horizon());
    if window_end > horizon {
        return Err(SimError::Horizon(format!(
            "window ends at {window_end} but timelines cover only {horizon}"
        )));
    }

    let qualities: Vec<f64> = manifest
        .ladder
        .iter()
        .map(|&r| segment_quality(r, manifest.ladder[0], &config.qoe))
        .collect::<Result<Vec<_>>>()?;

    let mut enumerator = Enumerator {
        manifest,
        core,
        edge,
        config,
        window_end,
        max_buffer,
        qualities,
        choice_stack: Vec::new(),
        quality_stack: Vec::new(),
        entry_stack: Vec::new(),
        best: None,
        enumerated: 0,
        feasible: 0,
    };
    enumerator.descend(StepCursor::session_start(), Volume::ZERO, VolumeTime::ZERO);
    debug_assert_eq!(enumerator.enumerated, total);

    let (best_path, best_utility) = match enumerator.best {
        Some(best) => {
            let utility = best.utility;
            (
                SchedulePath {
                    entries: best.entries,
                    utility,
                    cost: best.cost,
                    valid: true,
                },
                utility,
            )
        }
        None => (SchedulePath::invalid(), f64::NEG_INFINITY),
    };
    Ok(OracleResult {
        best_path,
        best_utility,
        enumerated: enumerator.enumerated,
        feasible: enumerator.feasible,
    })
}

struct BestSequence {
    entries: Vec<PathEntry>,
    rates: Vec<Rate>,
    utility: f64,
    cost: f64,
    switches: usize,
    volume: Volume,
}

struct Enumerator<'a> {
    manifest: &'a VideoManifest,
    core: &'a BandwidthTimeline,
    edge: &'a BandwidthTimeline,
    config: &'a SchedulerConfig,
    window_end: TimeNs,
    max_buffer: TimeNs,
    qualities: Vec<f64>,
    choice_stack: Vec<usize>,
    quality_stack: Vec<f64>,
    entry_stack: Vec<PathEntry>,
    best: Option<BestSequence>,
    enumerated: u64,
    feasible: u64,
}

impl Enumerator<'_> {
    /// Number of complete sequences under an abandoned prefix.
    fn completions_below(&self, depth: usize) -> u64 {
        let m = self.manifest.ladder.len() as u32;
        let remaining = (self.manifest.segment_count - depth - 1) as u32;
        (m as u64).pow(remaining)
    }

    fn descend(&mut self, cur: StepCursor, volume: Volume, integral: VolumeTime) {
        let depth = self.choice_stack.len();
        for idx in 0..self.manifest.ladder.len() {
            if self.config.force_first_min && depth == 0 && idx != 0 {
                // session policy: the first segment streams at the floor
                self.enumerated += self.completions_below(depth);
                continue;
            }
            match advance_segment(
                cur,
                idx,
                self.manifest,
                self.core,
                self.edge,
                self.config,
                self.window_end,
                self.max_buffer,
                self.config.cost.enabled,
            ) {
                StepOutcome::Advanced { state, entry } => {
                    self.choice_stack.push(idx);
                    self.quality_stack.push(self.qualities[idx]);
                    self.entry_stack.push(entry);
                    if state.next_segment > self.manifest.segment_count {
                        self.enumerated += 1;
                        self.feasible += 1;
                        self.consider(volume + entry.bytes, integral + entry.cache_integral);
                    } else {
                        self.descend(
                            state,
                            volume + entry.bytes,
                            integral + entry.cache_integral,
                        );
                    }
                    self.choice_stack.pop();
                    self.quality_stack.pop();
                    self.entry_stack.pop();
                }
                StepOutcome::WindowMiss | StepOutcome::WouldStall => {
                    // every completion of this prefix is infeasible
                    self.enumerated += self.completions_below(depth);
                }
            }
        }
    }

    fn consider(&mut self, volume: Volume, integral: VolumeTime) {
        let utility = utility_of_qualities(&self.quality_stack, &self.config.qoe);
        let cost = if self.config.cost.enabled {
            cost_of(
                volume.as_kbits_f64(),
                integral.as_kbit_secs_f64(),
                &self.config.cost,
            )
        } else {
            0.0
        };
        let score = utility - cost;
        let switches = self
            .choice_stack
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count();
        let rates: Vec<Rate> = self
            .choice_stack
            .iter()
            .map(|&i| self.manifest.ladder[i])
            .collect();
        if let Some(best) = &self.best {
            if compare_candidates(
                score,
                switches,
                rates.len(),
                volume,
                &rates,
                best.utility - best.cost,
                best.switches,
                best.rates.len(),
                best.volume,
                &best.rates,
            ) != Ordering::Greater
            {
                return;
            }
        }
        self.best = Some(BestSequence {
            entries: self.entry_stack.clone(),
            rates,
            utility,
            cost,
            switches,
            volume,
        });
    }
}

/// Convenience for tests: the bitrates of the oracle winner.
pub fn best_bitrates(result: &OracleResult) -> Vec<Rate> {
    result.best_path.bitrates()
}
