//! Client-driven DASH baseline.
//!
//! The reference player keeps a time-bounded buffer and picks each
//! segment's bitrate from a moving average of the rates achieved on the
//! previous deliveries. Downloads see the end-to-end bottleneck only: no
//! cache assistance, each transfer is bounded by the smaller of the two
//! hops' cumulative capacity measured from its own start.

use crate::bandwidth::BandwidthTimeline;
use crate::error::{Result, SimError};
use crate::units::{Rate, TimeNs, Volume};

/// Baseline player knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Number of past segments in the rate moving average.
    pub history_k: usize,
    /// Buffer bound in seconds of playback.
    pub buffer_limit: TimeNs,
    /// Multiplier applied to the rate estimate before ladder selection.
    pub safety_factor: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            history_k: 5,
            buffer_limit: TimeNs::from_secs(20),
            safety_factor: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_k < 1 {
            return Err(SimError::Config("history_k must be >= 1".into()));
        }
        if self.buffer_limit <= TimeNs::ZERO {
            return Err(SimError::Config("buffer_limit must be positive".into()));
        }
        if self.safety_factor <= 0.0 {
            return Err(SimError::Config("safety_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Moving-average throughput estimate over the last `k` achieved rates,
/// scaled by the safety factor. An empty history estimates zero, which
/// forces the ladder floor on the first segment.
pub fn estimate_rate(history: &[f64], config: &BaselineConfig) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let n = history.len().min(config.history_k);
    let tail = &history[history.len() - n..];
    let mean = tail.iter().sum::<f64>() / n as f64;
    mean * config.safety_factor
}

/// Highest ladder bitrate at or below the estimate (in kbps); the floor
/// when the estimate cannot sustain any rung.
pub fn select_bitrate(estimate_kbps: f64, ladder: &[Rate]) -> Rate {
    debug_assert!(!ladder.is_empty());
    let mut chosen = ladder[0];
    for &rate in ladder {
        if rate.as_kbps_f64() <= estimate_kbps {
            chosen = rate;
        }
    }
    chosen
}

/// Earliest completion of an end-to-end transfer: the client can never
/// hold more than `min(E, C)` measured from the download start, with both
/// cumulatives walked jointly (no staging between the hops).
pub fn cacheless_finish(
    bytes: Volume,
    start: TimeNs,
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    cap: TimeNs,
) -> Option<TimeNs> {
    debug_assert!(bytes > Volume::ZERO);
    let mut acc_core = Volume::ZERO;
    let mut acc_edge = Volume::ZERO;
    let mut cursor = start;
    let mut core_iter = core.intervals_from(start).peekable();
    let mut edge_iter = edge.intervals_from(start).peekable();
    loop {
        let (core_end, core_rate) = match core_iter.peek() {
            Some(&(_, end, rate)) => (end, rate),
            None => return None,
        };
        let (edge_end, edge_rate) = match edge_iter.peek() {
            Some(&(_, end, rate)) => (end, rate),
            None => return None,
        };
        let span_end = core_end.min(edge_end).min(cap);
        if cursor >= span_end {
            return None;
        }
        let span = span_end - cursor;
        let core_full = acc_core + core_rate * span;
        let edge_full = acc_edge + edge_rate * span;
        if core_full.min(edge_full) >= bytes {
            // both constraints clear inside this span; finish when the
            // later of the two does
            let dt_core = (bytes - acc_core)
                .time_to_transfer(core_rate)
                .unwrap_or(TimeNs::ZERO);
            let dt_edge = (bytes - acc_edge)
                .time_to_transfer(edge_rate)
                .unwrap_or(TimeNs::ZERO);
            let finish = cursor + dt_core.max(dt_edge);
            return if finish <= cap { Some(finish) } else { None };
        }
        acc_core = core_full;
        acc_edge = edge_full;
        cursor = span_end;
        if core_end <= cursor {
            core_iter.next();
        }
        if edge_end <= cursor {
            edge_iter.next();
        }
    }
}

/// What the baseline player does next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineAction {
    /// Buffer at its bound: idle until the displaying segment drains.
    Idle { until: TimeNs },
    /// Request the next segment at this bitrate.
    Request { segment: usize, bitrate: Rate },
}

/// One decision of the baseline player: idle while the buffer is at its
/// bound, otherwise request the next segment at the highest rate the
/// moving-average estimate sustains.
pub fn baseline_step(
    clock: TimeNs,
    buffer: TimeNs,
    display_remaining: TimeNs,
    next_segment: usize,
    history: &[f64],
    ladder: &[Rate],
    config: &BaselineConfig,
) -> BaselineAction {
    if buffer >= config.buffer_limit {
        BaselineAction::Idle {
            until: clock + display_remaining,
        }
    } else {
        let estimate = estimate_rate(history, config);
        BaselineAction::Request {
            segment: next_segment,
            bitrate: select_bitrate(estimate, ladder),
        }
    }
}
