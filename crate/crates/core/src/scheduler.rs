//! Anticipative segment scheduling over a future-knowledge window.
//!
//! Given exact knowledge of core and edge capacity over a finite window,
//! the scheduler searches recursively over per-segment bitrate choices.
//! Download timing uses the cache-augmented delivery model: the client can
//! drain `min(edge cumulative, staged surplus + core cumulative)`, so core
//! capacity the edge could not use earlier still counts. Paths that would
//! stall playback are discarded; surviving paths are compared under a
//! deterministic total order. Whole-window plans are committed only up to
//! a holdback boundary so end-of-window greed never reaches the client.

use std::cmp::Ordering;

use crate::bandwidth::BandwidthTimeline;
use crate::error::{Result, SimError};
use crate::qoe::{cost_of, segment_quality, switch_penalty, utility_of_qualities, CostParams, QoeParams};
use crate::simcore::{ClientState, VideoManifest};
use crate::units::{Rate, TimeNs, Volume, VolumeTime};

/// Scheduler tuning: the knowledge window, the interleaving holdback and
/// the cost-analysis pruning measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    /// Future-knowledge horizon W.
    pub window: TimeNs,
    /// Tail of each window whose tentative decisions are discarded.
    pub interleave_holdback: TimeNs,
    /// Optional limit on quality drops within one window plan.
    pub max_downswitches: Option<u32>,
    /// Drop ladder rungs the whole window can sustain anyway.
    pub prune_floor: bool,
    /// Bound on data parked at the edge cache between transfers.
    /// `None` models an unbounded cache.
    pub cache_cap: Option<Volume>,
    /// Force the first segment of a session to the ladder floor to cut
    /// startup latency.
    pub force_first_min: bool,
    pub qoe: QoeParams,
    pub cost: CostParams,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            window: TimeNs::from_secs(10),
            interleave_holdback: TimeNs::from_secs(4),
            max_downswitches: None,
            prune_floor: true,
            cache_cap: None,
            force_first_min: true,
            qoe: QoeParams::default(),
            cost: CostParams::default(),
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window <= TimeNs::ZERO {
            return Err(SimError::Config("window must be positive".into()));
        }
        if self.interleave_holdback.is_negative() || self.interleave_holdback >= self.window {
            return Err(SimError::Config(format!(
                "interleave holdback {} must lie in [0, window {})",
                self.interleave_holdback, self.window
            )));
        }
        self.qoe.validate()?;
        self.cost.validate()?;
        Ok(())
    }

    /// How far each committed plan advances the planning clock.
    pub fn stride(&self) -> TimeNs {
        self.window - self.interleave_holdback
    }
}

/// Entry state for one window search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchState {
    /// 1-based index of the next segment to schedule.
    pub next_segment: usize,
    /// Surplus already staged at the edge cache. The session driver keeps
    /// this at zero: plans never bank on earlier windows' leftovers.
    pub residual_cache: Volume,
    /// Remaining knowledge horizon from `clock`.
    pub window_remaining: TimeNs,
    /// Seconds of downloaded, not-yet-displaying video at the client.
    pub buffer: TimeNs,
    /// Time left on the currently displaying segment.
    pub display_remaining: TimeNs,
    /// Absolute time.
    pub clock: TimeNs,
    /// Whether playback has begun (segment 1 delivered).
    pub playback_started: bool,
    /// Client buffer bound in seconds of video.
    pub max_buffer: TimeNs,
}

impl SearchState {
    /// State at the very start of a session.
    pub fn session_start(window: TimeNs, max_buffer: TimeNs) -> Self {
        SearchState {
            next_segment: 1,
            residual_cache: Volume::ZERO,
            window_remaining: window,
            buffer: TimeNs::ZERO,
            display_remaining: TimeNs::ZERO,
            clock: TimeNs::ZERO,
            playback_started: false,
            max_buffer,
        }
    }
}

/// One scheduled download inside a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEntry {
    /// 1-based segment index.
    pub segment: usize,
    pub bitrate: Rate,
    pub bytes: Volume,
    pub download_start: TimeNs,
    pub download_finish: TimeNs,
    /// Latest completion that avoids a stall (the window end for the
    /// segment that starts playback).
    pub deadline: TimeNs,
    /// Staged surplus right after this download.
    pub cache_after: Volume,
    /// Cache-occupancy integral over the wait (if any) plus the download.
    pub cache_integral: VolumeTime,
}

/// An ordered bitrate assignment with its computed timing and score.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePath {
    pub entries: Vec<PathEntry>,
    /// QoE utility of the bitrate sequence.
    pub utility: f64,
    /// Operator cost (zero when cost terms are disabled).
    pub cost: f64,
    pub valid: bool,
}

impl SchedulePath {
    pub fn invalid() -> Self {
        SchedulePath {
            entries: Vec::new(),
            utility: f64::NEG_INFINITY,
            cost: 0.0,
            valid: false,
        }
    }

    /// The quantity the search maximizes.
    pub fn score(&self) -> f64 {
        self.utility - self.cost
    }

    pub fn bitrates(&self) -> Vec<Rate> {
        self.entries.iter().map(|e| e.bitrate).collect()
    }

    pub fn switch_count(&self) -> usize {
        self.entries
            .windows(2)
            .filter(|w| w[0].bitrate != w[1].bitrate)
            .count()
    }

    pub fn total_volume(&self) -> Volume {
        self.entries.iter().map(|e| e.bytes).sum()
    }

    pub fn cache_integral(&self) -> VolumeTime {
        self.entries
            .iter()
            .fold(VolumeTime::ZERO, |acc, e| acc + e.cache_integral)
    }
}

/// Picks the better of two paths under the deterministic total order:
/// a valid path always beats an invalid one; then higher score, fewer
/// switches, more segments scheduled, less data transferred, and finally
/// the lexicographically lower bitrate sequence.
pub fn greatest(a: SchedulePath, b: SchedulePath) -> SchedulePath {
    match compare_paths(&a, &b) {
        Ordering::Less => b,
        _ => a,
    }
}

/// `Greater` means `a` wins. See [`greatest`].
pub fn compare_paths(a: &SchedulePath, b: &SchedulePath) -> Ordering {
    match (a.valid, b.valid) {
        (true, false) => return Ordering::Greater,
        (false, true) => return Ordering::Less,
        (false, false) => return Ordering::Equal,
        (true, true) => {}
    }
    compare_candidates(
        a.score(),
        a.switch_count(),
        a.entries.len(),
        a.total_volume(),
        &a.bitrates(),
        b.score(),
        b.switch_count(),
        b.entries.len(),
        b.total_volume(),
        &b.bitrates(),
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn compare_candidates(
    a_score: f64,
    a_switches: usize,
    a_len: usize,
    a_volume: Volume,
    a_rates: &[Rate],
    b_score: f64,
    b_switches: usize,
    b_len: usize,
    b_volume: Volume,
    b_rates: &[Rate],
) -> Ordering {
    a_score
        .partial_cmp(&b_score)
        .unwrap_or(Ordering::Equal)
        .then(b_switches.cmp(&a_switches))
        .then(a_len.cmp(&b_len))
        .then(b_volume.cmp(&a_volume))
        // the lexicographically lower sequence wins
        .then_with(|| b_rates.cmp(a_rates))
}

/// Outcome of timing one segment download.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DownloadOutcome {
    Completed {
        finish: TimeNs,
        cache_at_finish: Volume,
        cache_integral: VolumeTime,
    },
    /// The covered horizon ends before the transfer can complete.
    Exhausted,
}

/// Times a cache-assisted download: the earliest instant the client has
/// received `bytes` when its drain is bounded jointly by edge cumulative
/// capacity and by staged surplus plus core cumulative capacity. Core
/// surplus beyond what the edge drains accrues to the cache meanwhile.
pub fn segment_download_finish(
    bytes: Volume,
    start: TimeNs,
    cache_at_start: Volume,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
) -> Result<DownloadOutcome> {
    if bytes <= Volume::ZERO {
        return Err(SimError::Domain("download of zero bytes".into()));
    }
    let cap = core.horizon().min(edge.horizon());
    if start > cap || start.is_negative() {
        return Err(SimError::Range {
            from: start,
            to: start,
            horizon: cap,
        });
    }
    Ok(download_walk(
        bytes,
        start,
        cache_at_start,
        core,
        edge,
        cap,
        true,
    ))
}

/// Same walk with an explicit cap: anything finishing past `cap` reports
/// `Exhausted`, which the window search treats as missing the window.
pub(crate) fn download_walk(
    bytes: Volume,
    start: TimeNs,
    cache_at_start: Volume,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    cap: TimeNs,
    want_integral: bool,
) -> DownloadOutcome {
    debug_assert!(bytes > Volume::ZERO);
    let t_edge = match inverse_cumulative(edge, start, bytes, cap) {
        Some(t) => t,
        None => return DownloadOutcome::Exhausted,
    };
    let core_needed = bytes - cache_at_start;
    let t_core = if core_needed <= Volume::ZERO {
        start
    } else {
        match inverse_cumulative(core, start, core_needed, cap) {
            Some(t) => t,
            None => return DownloadOutcome::Exhausted,
        }
    };
    let finish = t_edge.max(t_core);
    let core_in = core
        .cumulative(start, finish)
        .expect("walk stays inside horizon");
    let cache_at_finish = (cache_at_start + core_in - bytes).clamp_non_negative();
    let cache_integral = if want_integral {
        staged_surplus_integral(cache_at_start, start, finish, core, edge)
    } else {
        VolumeTime::ZERO
    };
    DownloadOutcome::Completed {
        finish,
        cache_at_finish,
        cache_integral,
    }
}

/// Earliest `t` with `cumulative(timeline, start, t) >= needed`, rounded up
/// to the nanosecond grid; `None` if `cap` arrives first.
pub(crate) fn inverse_cumulative(
    timeline: &BandwidthTimeline,
    start: TimeNs,
    needed: Volume,
    cap: TimeNs,
) -> Option<TimeNs> {
    if needed <= Volume::ZERO {
        return Some(start);
    }
    let mut acc = Volume::ZERO;
    for (a, b, rate) in timeline.intervals_from(start) {
        let b = b.min(cap);
        if a >= b {
            break;
        }
        let slab = rate * (b - a);
        if acc + slab >= needed {
            let dt = (needed - acc)
                .time_to_transfer(rate)
                .expect("rate is positive when the slab covers the need");
            let t = a + dt;
            return if t <= cap { Some(t) } else { None };
        }
        acc += slab;
    }
    None
}

/// Exact integral of `max(cache0 + C(t) - E(t), 0)` over `[start, finish]`:
/// the staged-surplus level while a download is in flight.
fn staged_surplus_integral(
    cache0: Volume,
    start: TimeNs,
    finish: TimeNs,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
) -> VolumeTime {
    let mut total = VolumeTime::ZERO;
    let mut signed = cache0;
    let mut cursor = start;
    let mut core_iter = core.intervals_from(start).peekable();
    let mut edge_iter = edge.intervals_from(start).peekable();
    while cursor < finish {
        let (core_end, core_rate) = match core_iter.peek() {
            Some(&(_, end, rate)) => (end, rate),
            None => break,
        };
        let (edge_end, edge_rate) = match edge_iter.peek() {
            Some(&(_, end, rate)) => (end, rate),
            None => break,
        };
        let seg_end = core_end.min(edge_end).min(finish);
        let span = seg_end - cursor;
        if span > TimeNs::ZERO {
            let slope = Rate::from_bps(core_rate.as_bps() - edge_rate.as_bps());
            let next = signed + slope * span;
            total += clipped_trapezoid(signed, next, span);
            signed = next;
        }
        cursor = seg_end;
        if core_end <= cursor {
            core_iter.next();
        }
        if edge_end <= cursor {
            edge_iter.next();
        }
    }
    total
}

/// Area under `max(g, 0)` for a linear ramp from `g0` to `g1` over `span`.
fn clipped_trapezoid(g0: Volume, g1: Volume, span: TimeNs) -> VolumeTime {
    let zero = Volume::ZERO;
    if g0 >= zero && g1 >= zero {
        return VolumeTime::trapezoid(g0, g1, span);
    }
    if g0 <= zero && g1 <= zero {
        return VolumeTime::ZERO;
    }
    let swing = (g0.as_nanobits() - g1.as_nanobits()).abs();
    if g0 > zero {
        let dt = g0.as_nanobits() * span.as_nanos() as i128 / swing;
        VolumeTime::trapezoid(g0, zero, TimeNs::from_nanos(dt as i64))
    } else {
        let dt = (-g0.as_nanobits()) * span.as_nanos() as i128 / swing;
        VolumeTime::trapezoid(zero, g1, span - TimeNs::from_nanos(dt as i64))
    }
}

/// Minimal per-path state for advancing one segment choice. Shared by the
/// window search and the exhaustive oracle so both time downloads and
/// enforce deadlines identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StepCursor {
    pub next_segment: usize,
    pub clock: TimeNs,
    pub cache: Volume,
    pub buffer: TimeNs,
    pub display_remaining: TimeNs,
    pub started: bool,
}

impl StepCursor {
    pub(crate) fn session_start() -> Self {
        StepCursor {
            next_segment: 1,
            clock: TimeNs::ZERO,
            cache: Volume::ZERO,
            buffer: TimeNs::ZERO,
            display_remaining: TimeNs::ZERO,
            started: false,
        }
    }

    pub(crate) fn runway(&self) -> TimeNs {
        self.buffer + self.display_remaining
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum StepOutcome {
    /// Segment accepted: the successor state and the path entry.
    Advanced { state: StepCursor, entry: PathEntry },
    /// The buffer wait or the download cannot complete inside the window;
    /// the current prefix is a terminal path.
    WindowMiss,
    /// The download would outlive the playout runway; the branch dies.
    WouldStall,
}

/// Advances one segment choice: waits out the displaying segment if the
/// buffer cannot hold another one, times the download against the
/// cache-augmented delivery model, and applies the deadline check.
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance_segment(
    mut cur: StepCursor,
    ladder_idx: usize,
    manifest: &VideoManifest,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    config: &SchedulerConfig,
    window_end: TimeNs,
    max_buffer: TimeNs,
    want_integral: bool,
) -> StepOutcome {
    let seg = manifest.segment_duration;
    let mut wait_integral = VolumeTime::ZERO;

    // Full buffer: wait until the displaying segment completes. Core
    // capacity keeps staging surplus at the cache meanwhile.
    if cur.buffer + seg > max_buffer {
        let wait = cur.display_remaining;
        if wait > window_end - cur.clock {
            return StepOutcome::WindowMiss;
        }
        let accrued = core
            .cumulative(cur.clock, cur.clock + wait)
            .expect("wait stays inside horizon");
        let before = cur.cache;
        cur.cache = apply_cap(before + accrued, config.cache_cap);
        if want_integral {
            wait_integral = VolumeTime::trapezoid(before, cur.cache, wait);
        }
        cur.clock += wait;
        advance_playback(&mut cur, wait, seg);
        debug_assert!(cur.buffer + seg <= max_buffer);
    }

    let bytes = manifest.segment_bytes(ladder_idx);
    match download_walk(bytes, cur.clock, cur.cache, core, edge, window_end, want_integral) {
        DownloadOutcome::Completed {
            finish,
            cache_at_finish,
            cache_integral,
        } if finish < window_end => {
            let t_e = finish - cur.clock;
            if cur.started && t_e > cur.runway() {
                return StepOutcome::WouldStall;
            }
            let deadline = if cur.started {
                (cur.clock + cur.runway()).min(window_end)
            } else {
                window_end
            };
            let entry = PathEntry {
                segment: cur.next_segment,
                bitrate: manifest.ladder[ladder_idx],
                bytes,
                download_start: cur.clock,
                download_finish: finish,
                deadline,
                cache_after: apply_cap(cache_at_finish, config.cache_cap),
                cache_integral: cache_integral + wait_integral,
            };
            let mut next = cur;
            next.clock = finish;
            next.cache = entry.cache_after;
            if next.started {
                advance_playback(&mut next, t_e, seg);
                if next.display_remaining == TimeNs::ZERO {
                    // runway ran out exactly at finish: the new segment
                    // goes straight to the screen
                    next.display_remaining = seg;
                } else {
                    next.buffer += seg;
                }
            } else {
                next.started = true;
                next.display_remaining = seg;
            }
            next.next_segment += 1;
            StepOutcome::Advanced { state: next, entry }
        }
        _ => StepOutcome::WindowMiss,
    }
}

/// A whole-window plan split at the holdback boundary.
#[derive(Debug, Clone)]
pub struct PlannedWindow {
    /// The full optimal path over the window.
    pub path: SchedulePath,
    /// The prefix to actually execute.
    pub committed: Vec<PathEntry>,
    /// When the next planning epoch begins.
    pub next_epoch: TimeNs,
}

/// Plans one window from the live client state and truncates the result at
/// the holdback boundary. Plans that reach the end of the video commit in
/// full; a nonempty plan always commits at least its first download.
pub fn plan_window(
    session: &ClientState,
    clock: TimeNs,
    manifest: &VideoManifest,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    config: &SchedulerConfig,
) -> Result<PlannedWindow> {
    let state = SearchState {
        next_segment: session.delivered.len() + 1,
        residual_cache: Volume::ZERO,
        window_remaining: config.window,
        buffer: session.buffer,
        display_remaining: session.display_remaining,
        clock,
        playback_started: session.playback_started(),
        max_buffer: session.max_buffer,
    };
    let path = find_optimal_path(&state, manifest, core, edge, config)?;
    let boundary = clock + config.stride();
    let committed = if !path.valid {
        Vec::new()
    } else if path
        .entries
        .last()
        .is_some_and(|e| e.segment == manifest.segment_count)
    {
        path.entries.clone()
    } else {
        let mut prefix: Vec<PathEntry> = path
            .entries
            .iter()
            .copied()
            .take_while(|e| e.download_start < boundary)
            .collect();
        if prefix.is_empty() {
            if let Some(&first) = path.entries.first() {
                prefix.push(first);
            }
        }
        prefix
    };
    Ok(PlannedWindow {
        path,
        committed,
        next_epoch: boundary,
    })
}

/// Searches all bitrate sequences reachable inside the knowledge window and
/// returns the best under [`greatest`]'s order. Paths never schedule a
/// download that would finish after the client's playout runway; when no
/// sequence survives even that, the result is flagged invalid so the
/// session driver can fall back to a floor-rate commit.
pub fn find_optimal_path(
    state: &SearchState,
    manifest: &VideoManifest,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    config: &SchedulerConfig,
) -> Result<SchedulePath> {
    config.validate()?;
    manifest.validate()?;
    if state.next_segment == 0 || state.next_segment > manifest.segment_count {
        return Err(SimError::Config(format!(
            "next segment {} outside 1..={}",
            state.next_segment, manifest.segment_count
        )));
    }
    if state.buffer.is_negative()
        || state.display_remaining.is_negative()
        || state.window_remaining < TimeNs::ZERO
        || state.residual_cache < Volume::ZERO
    {
        return Err(SimError::Config("inconsistent search state".into()));
    }
    if state.max_buffer < manifest.segment_duration {
        return Err(SimError::Config(format!(
            "max buffer {} cannot hold one {} segment",
            state.max_buffer, manifest.segment_duration
        )));
    }
    let window_end = state.clock + state.window_remaining;
    let horizon = core.horizon().min(edge.horizon());
    if window_end > horizon {
        return Err(SimError::Horizon(format!(
            "window ends at {window_end} but timelines cover only {horizon}"
        )));
    }

    let ladder_qualities = manifest
        .ladder
        .iter()
        .map(|&r| segment_quality(r, manifest.ladder[0], &config.qoe))
        .collect::<Result<Vec<_>>>()?;

    // Dropping sustainable low rungs presumes higher rates are always at
    // least as good, which cost terms invalidate.
    let floor_idx = if config.prune_floor && !config.cost.enabled {
        let sustained = core
            .min_rate_over(state.clock, window_end)?
            .min(edge.min_rate_over(state.clock, window_end)?);
        manifest
            .ladder
            .iter()
            .rposition(|&r| r <= sustained)
            .unwrap_or(0)
    } else {
        0
    };

    let seg_bytes: Vec<Volume> = (0..manifest.ladder.len())
        .map(|i| manifest.segment_bytes(i))
        .collect();

    let mut ctx = SearchCtx {
        manifest,
        core,
        edge,
        config,
        ladder_qualities,
        seg_bytes,
        floor_idx,
        window_end,
        max_buffer: state.max_buffer,
        best: None,
        choices: Vec::new(),
        qualities: Vec::new(),
        entries: Vec::new(),
    };

    let cursor = Cursor {
        step: StepCursor {
            next_segment: state.next_segment,
            clock: state.clock,
            cache: state.residual_cache,
            buffer: state.buffer,
            display_remaining: state.display_remaining,
            started: state.playback_started,
        },
        downswitches: 0,
        running_utility: 0.0,
        running_volume: Volume::ZERO,
        running_integral: VolumeTime::ZERO,
    };
    ctx.recurse(cursor);

    Ok(match ctx.best {
        Some(best) => SchedulePath {
            entries: best.entries,
            utility: best.utility,
            cost: best.cost,
            valid: true,
        },
        None => SchedulePath::invalid(),
    })
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    step: StepCursor,
    downswitches: u32,
    running_utility: f64,
    running_volume: Volume,
    running_integral: VolumeTime,
}

struct BestPath {
    entries: Vec<PathEntry>,
    choices: Vec<usize>,
    utility: f64,
    cost: f64,
    switches: usize,
    volume: Volume,
}

impl BestPath {
    fn score(&self) -> f64 {
        self.utility - self.cost
    }
}

struct SearchCtx<'a> {
    manifest: &'a VideoManifest,
    core: &'a BandwidthTimeline,
    edge: &'a BandwidthTimeline,
    config: &'a SchedulerConfig,
    ladder_qualities: Vec<f64>,
    seg_bytes: Vec<Volume>,
    floor_idx: usize,
    window_end: TimeNs,
    max_buffer: TimeNs,
    best: Option<BestPath>,
    choices: Vec<usize>,
    qualities: Vec<f64>,
    entries: Vec<PathEntry>,
}

impl SearchCtx<'_> {
    /// Scores the current prefix as a terminal path and keeps it if it
    /// beats the incumbent.
    fn score_prefix(&mut self, cur: &Cursor) {
        if self.choices.is_empty() {
            return;
        }
        let utility = utility_of_qualities(&self.qualities, &self.config.qoe);
        let cost = if self.config.cost.enabled {
            cost_of(
                cur.running_volume.as_kbits_f64(),
                cur.running_integral.as_kbit_secs_f64(),
                &self.config.cost,
            )
        } else {
            0.0
        };
        let score = utility - cost;
        let switches = self.choices.windows(2).filter(|w| w[0] != w[1]).count();
        if let Some(best) = &self.best {
            let rates: Vec<Rate> = self
                .choices
                .iter()
                .map(|&i| self.manifest.ladder[i])
                .collect();
            let best_rates: Vec<Rate> = best
                .choices
                .iter()
                .map(|&i| self.manifest.ladder[i])
                .collect();
            if compare_candidates(
                score,
                switches,
                self.choices.len(),
                cur.running_volume,
                &rates,
                best.score(),
                best.switches,
                best.choices.len(),
                best.volume,
                &best_rates,
            ) != Ordering::Greater
            {
                return;
            }
        }
        self.best = Some(BestPath {
            entries: self.entries.clone(),
            choices: self.choices.clone(),
            utility,
            cost,
            switches,
            volume: cur.running_volume,
        });
    }

    /// Optimistic score any extension of this prefix could reach: the edge
    /// bounds how many more segments fit in the window regardless of
    /// bitrate choices or caching.
    fn upper_bound(&self, cur: &Cursor) -> f64 {
        let q_top = self.ladder_qualities[self.manifest.ladder.len() - 1];
        if q_top <= 0.0 {
            return cur.running_utility;
        }
        let remaining_video = (self.manifest.segment_count + 1 - cur.step.next_segment) as i128;
        let edge_left = self
            .edge
            .cumulative(cur.step.clock, self.window_end)
            .map(|v| v.as_nanobits())
            .unwrap_or(0);
        let floor_bytes = self.seg_bytes[self.floor_idx].as_nanobits().max(1);
        let k = remaining_video.min(edge_left / floor_bytes).max(0) as f64;
        cur.running_utility + k * q_top
    }

    fn recurse(&mut self, cur: Cursor) {
        let force_floor = self.config.force_first_min && cur.step.next_segment == 1;
        let (lo, hi) = if force_floor {
            (0, 0)
        } else {
            (self.floor_idx, self.manifest.ladder.len() - 1)
        };
        let prev_idx = self.choices.last().copied();

        for idx in (lo..=hi).rev() {
            let is_down = prev_idx.is_some_and(|p| idx < p);
            if is_down {
                if let Some(limit) = self.config.max_downswitches {
                    if cur.downswitches + 1 > limit {
                        continue;
                    }
                }
            }

            let (state, entry) = match advance_segment(
                cur.step,
                idx,
                self.manifest,
                self.core,
                self.edge,
                self.config,
                self.window_end,
                self.max_buffer,
                self.config.cost.enabled,
            ) {
                StepOutcome::Advanced { state, entry } => (state, entry),
                StepOutcome::WindowMiss => {
                    // This representation cannot complete inside the
                    // window: the prefix is a terminal path.
                    self.score_prefix(&cur);
                    continue;
                }
                StepOutcome::WouldStall => continue,
            };

            let mut next = cur;
            next.step = state;
            next.running_volume += entry.bytes;
            next.running_integral += entry.cache_integral;
            if is_down {
                next.downswitches += 1;
            }
            let q = self.ladder_qualities[idx];
            next.running_utility += match self.qualities.last() {
                None => q,
                Some(&p) => q - switch_penalty(p, q, &self.config.qoe),
            };

            self.choices.push(idx);
            self.qualities.push(q);
            self.entries.push(entry);

            if next.step.next_segment > self.manifest.segment_count {
                self.score_prefix(&next);
            } else {
                let prune = match &self.best {
                    Some(best) => {
                        let bound = self.upper_bound(&next);
                        bound + 1e-9 * (1.0 + bound.abs()) < best.score()
                    }
                    None => false,
                };
                if !prune {
                    self.recurse(next);
                }
            }

            self.choices.pop();
            self.qualities.pop();
            self.entries.pop();
        }
    }
}

fn apply_cap(cache: Volume, cap: Option<Volume>) -> Volume {
    match cap {
        Some(c) => cache.min(c),
        None => cache,
    }
}

/// Advances playback by `dt` with no starvation (callers check deadlines
/// first). On display boundaries the next buffered segment starts; if the
/// buffer is empty exactly at the end of the span, display goes idle and
/// the caller hands the arriving segment straight to the screen.
fn advance_playback(cur: &mut StepCursor, mut dt: TimeNs, seg: TimeNs) {
    debug_assert!(dt <= cur.runway());
    loop {
        if dt < cur.display_remaining {
            cur.display_remaining -= dt;
            return;
        }
        dt -= cur.display_remaining;
        cur.display_remaining = TimeNs::ZERO;
        if cur.buffer >= seg {
            cur.buffer -= seg;
            cur.display_remaining = seg;
        } else {
            debug_assert!(dt == TimeNs::ZERO);
            return;
        }
    }
}
