//! Bandwidth timelines for the two delivery hops.
//!
//! A [`BandwidthTimeline`] is a piecewise-constant rate function of time for
//! one hop (core or edge). Cumulative capacity over an interval is the exact
//! integral of that function; the surplus the core could have staged at the
//! edge cache is the clamped difference of the two cumulatives. Timelines
//! come from finite-state Markov chains with constant dwell epochs or from
//! quantized real-world traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::units::{Rate, TimeNs, Volume};

/// Row-sum slack tolerated when validating transition matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A piecewise-constant rate function covering `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandwidthTimeline {
    starts: Vec<TimeNs>,
    rates: Vec<Rate>,
    /// Exact capacity accumulated from 0 to each step start.
    prefix: Vec<Volume>,
    horizon: TimeNs,
}

impl BandwidthTimeline {
    /// Builds a timeline from `(start, rate)` steps.
    ///
    /// Step starts must be strictly increasing with the first at 0, rates
    /// nonnegative, and the horizon at or past the last start.
    pub fn new(steps: Vec<(TimeNs, Rate)>, horizon: TimeNs) -> Result<Self> {
        if steps.is_empty() {
            return Err(SimError::Config("timeline needs at least one step".into()));
        }
        if steps[0].0 != TimeNs::ZERO {
            return Err(SimError::Config(format!(
                "first step must start at 0, got {}",
                steps[0].0
            )));
        }
        for pair in steps.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(SimError::Config(format!(
                    "step starts must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some(&(_, rate)) = steps.iter().find(|&&(_, r)| r.as_bps() < 0) {
            return Err(SimError::Config(format!("negative rate {rate}")));
        }
        let last_start = steps[steps.len() - 1].0;
        if horizon < last_start {
            return Err(SimError::Config(format!(
                "horizon {horizon} ends before last step start {last_start}"
            )));
        }

        let (starts, rates): (Vec<_>, Vec<_>) = steps.into_iter().unzip();
        let mut prefix = Vec::with_capacity(starts.len());
        let mut acc = Volume::ZERO;
        for i in 0..starts.len() {
            prefix.push(acc);
            if i + 1 < starts.len() {
                acc += rates[i] * (starts[i + 1] - starts[i]);
            }
        }
        Ok(BandwidthTimeline {
            starts,
            rates,
            prefix,
            horizon,
        })
    }

    /// A single constant rate over `[0, horizon]`.
    pub fn constant(rate: Rate, horizon: TimeNs) -> Result<Self> {
        Self::new(vec![(TimeNs::ZERO, rate)], horizon)
    }

    pub fn horizon(&self) -> TimeNs {
        self.horizon
    }

    pub fn steps(&self) -> impl Iterator<Item = (TimeNs, Rate)> + '_ {
        self.starts.iter().copied().zip(self.rates.iter().copied())
    }

    pub fn step_count(&self) -> usize {
        self.starts.len()
    }

    fn check_range(&self, from: TimeNs, to: TimeNs) -> Result<()> {
        if from.is_negative() || from > to || to > self.horizon {
            return Err(SimError::Range {
                from,
                to,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Index of the step in force at `t` (the last step starting at or
    /// before `t`).
    fn step_at(&self, t: TimeNs) -> usize {
        match self.starts.binary_search(&t) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// The rate in force at time `t`.
    pub fn rate_at(&self, t: TimeNs) -> Result<Rate> {
        self.check_range(t, t)?;
        Ok(self.rates[self.step_at(t)])
    }

    /// Capacity accumulated from time 0 to `t`, exact.
    fn cumulative_from_origin(&self, t: TimeNs) -> Volume {
        let i = self.step_at(t);
        self.prefix[i] + self.rates[i] * (t - self.starts[i])
    }

    /// Exact integral of the rate over `[from, to]`.
    pub fn cumulative(&self, from: TimeNs, to: TimeNs) -> Result<Volume> {
        self.check_range(from, to)?;
        Ok(self.cumulative_from_origin(to) - self.cumulative_from_origin(from))
    }

    /// The lowest rate in force anywhere on `[from, to)`.
    pub fn min_rate_over(&self, from: TimeNs, to: TimeNs) -> Result<Rate> {
        self.check_range(from, to)?;
        if from == to {
            return self.rate_at(from);
        }
        let first = self.step_at(from);
        let mut min = self.rates[first];
        for i in (first + 1)..self.starts.len() {
            if self.starts[i] >= to {
                break;
            }
            min = min.min(self.rates[i]);
        }
        Ok(min)
    }

    /// Constant-rate intervals covering `[from, horizon)`, clipped at `from`.
    pub(crate) fn intervals_from(&self, from: TimeNs) -> IntervalIter<'_> {
        let idx = if from >= self.horizon {
            self.starts.len()
        } else {
            self.step_at(from)
        };
        IntervalIter {
            timeline: self,
            idx,
            cursor: from,
        }
    }
}

pub(crate) struct IntervalIter<'a> {
    timeline: &'a BandwidthTimeline,
    idx: usize,
    cursor: TimeNs,
}

impl Iterator for IntervalIter<'_> {
    /// `(start, end, rate)` with `start < end`.
    type Item = (TimeNs, TimeNs, Rate);

    fn next(&mut self) -> Option<Self::Item> {
        let tl = self.timeline;
        if self.idx >= tl.starts.len() || self.cursor >= tl.horizon {
            return None;
        }
        let end = if self.idx + 1 < tl.starts.len() {
            tl.starts[self.idx + 1]
        } else {
            tl.horizon
        };
        let item = (self.cursor, end, tl.rates[self.idx]);
        self.cursor = end;
        self.idx += 1;
        Some(item)
    }
}

/// The surplus `max(0, C - E)` the core could have staged at the edge cache
/// over `[from, to]`: capacity the core offered beyond what the edge could
/// drain to the client.
pub fn unused_capacity(
    core: &BandwidthTimeline,
    edge: &BandwidthTimeline,
    from: TimeNs,
    to: TimeNs,
) -> Result<Volume> {
    let c = core.cumulative(from, to)?;
    let e = edge.cumulative(from, to)?;
    Ok((c - e).clamp_non_negative())
}

/// A finite-state discrete-time Markov chain over link rates, with
/// transitions at constant dwell epochs and only between adjacent states.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovBandwidthModel {
    pub transition_matrix: Vec<Vec<f64>>,
    pub state_rates: Vec<Rate>,
    pub dwell: TimeNs,
    pub initial_state: usize,
    pub seed: u64,
}

impl MarkovBandwidthModel {
    pub const DEFAULT_DWELL: TimeNs = TimeNs::from_secs(2);

    /// Model with the default 2 s dwell and the middle state as start.
    pub fn new(transition_matrix: Vec<Vec<f64>>, state_rates: Vec<Rate>, seed: u64) -> Self {
        let initial_state = state_rates.len() / 2;
        MarkovBandwidthModel {
            transition_matrix,
            state_rates,
            dwell: Self::DEFAULT_DWELL,
            initial_state,
            seed,
        }
    }

    pub fn with_dwell(mut self, dwell: TimeNs) -> Self {
        self.dwell = dwell;
        self
    }

    pub fn with_initial_state(mut self, state: usize) -> Self {
        self.initial_state = state;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks stochasticity, adjacency structure and dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.state_rates.len();
        if n == 0 {
            return Err(SimError::Config("Markov model has no states".into()));
        }
        if self.transition_matrix.len() != n {
            return Err(SimError::Config(format!(
                "transition matrix has {} rows for {} state rates",
                self.transition_matrix.len(),
                n
            )));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            if row.len() != n {
                return Err(SimError::Config(format!(
                    "transition row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(SimError::Config(format!(
                    "transition row {i} has probabilities outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(SimError::Config(format!(
                    "transition row {i} sums to {sum}, not 1"
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                if p != 0.0 && i.abs_diff(j) > 1 {
                    return Err(SimError::Config(format!(
                        "transition row {i} has nonzero probability to non-adjacent state {j}"
                    )));
                }
            }
        }
        if self.state_rates.iter().any(|r| r.as_bps() < 0) {
            return Err(SimError::Config("negative state rate".into()));
        }
        if self.initial_state >= n {
            return Err(SimError::Config(format!(
                "initial state {} out of range for {n} states",
                self.initial_state
            )));
        }
        if self.dwell <= TimeNs::ZERO {
            return Err(SimError::Config("dwell must be positive".into()));
        }
        Ok(())
    }

    /// The state sequence for `epochs` dwell periods, reproducible from the
    /// seed. Exposed for transition-frequency checks.
    pub fn sample_states(&self, epochs: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut state = self.initial_state;
        let mut out = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            out.push(state);
            let u: f64 = rng.random();
            state = next_state(&self.transition_matrix[state], u);
        }
        out
    }
}

/// Inverse-CDF step over one transition row. Rows that fall slightly short
/// of 1 (printed probabilities) resolve to their last reachable state.
fn next_state(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = j;
            if u < acc {
                return j;
            }
        }
    }
    last_nonzero
}

/// Realizes a Markov model as a timeline with one step per dwell epoch.
pub fn generate_markov_timeline(
    model: &MarkovBandwidthModel,
    duration: TimeNs,
) -> Result<BandwidthTimeline> {
    model.validate()?;
    if duration <= TimeNs::ZERO {
        return Err(SimError::Config("duration must be positive".into()));
    }
    let dwell_ns = model.dwell.as_nanos();
    let epochs = (duration.as_nanos() + dwell_ns - 1) / dwell_ns;
    let states = model.sample_states(epochs as usize);
    let steps = states
        .iter()
        .enumerate()
        .map(|(k, &s)| (model.dwell * k as i64, model.state_rates[s]))
        .collect();
    BandwidthTimeline::new(steps, model.dwell * epochs)
}

/// Raw rate samples from a measured link, before quantization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSource {
    pub samples: Vec<(TimeNs, Rate)>,
    pub origin: String,
}

impl TraceSource {
    pub fn new(samples: Vec<(TimeNs, Rate)>, origin: impl Into<String>) -> Result<Self> {
        let source = TraceSource {
            samples,
            origin: origin.into(),
        };
        source.validate()?;
        Ok(source)
    }

    fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(SimError::Ingestion(format!(
                "trace '{}' needs at least 2 samples, got {}",
                self.origin,
                self.samples.len()
            )));
        }
        if self.samples[0].0.is_negative() {
            return Err(SimError::Ingestion(format!(
                "trace '{}' starts before time 0",
                self.origin
            )));
        }
        for pair in self.samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(SimError::Ingestion(format!(
                    "trace '{}' timestamps not strictly increasing near {}",
                    self.origin, pair[0].0
                )));
            }
        }
        if self.samples.iter().any(|&(_, r)| r.as_bps() < 0) {
            return Err(SimError::Ingestion(format!(
                "trace '{}' has negative rates",
                self.origin
            )));
        }
        Ok(())
    }

    /// Parses `time_s,rate_kbps` lines; a non-numeric first line is treated
    /// as a header and skipped.
    pub fn from_csv_str(text: &str, origin: impl Into<String>) -> Result<Self> {
        let origin = origin.into();
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let (t, r) = match (fields.next(), fields.next()) {
                (Some(t), Some(r)) => (t.trim(), r.trim()),
                _ => {
                    return Err(SimError::Ingestion(format!(
                        "trace '{origin}' line {}: expected time_s,rate_kbps",
                        lineno + 1
                    )))
                }
            };
            match (t.parse::<f64>(), r.parse::<f64>()) {
                (Ok(t), Ok(r)) => {
                    samples.push((TimeNs::from_secs_f64(t), Rate::from_kbps_f64(r)));
                }
                _ if lineno == 0 => continue, // header
                _ => {
                    return Err(SimError::Ingestion(format!(
                        "trace '{origin}' line {}: non-numeric fields",
                        lineno + 1
                    )))
                }
            }
        }
        TraceSource::new(samples, origin)
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::Ingestion(format!("cannot read trace {}: {e}", path.display()))
        })?;
        Self::from_csv_str(&text, path.display().to_string())
    }
}

/// Quantizes a trace into a piecewise-constant timeline.
///
/// Each bucket of width `quantization` takes the mean rate of the samples
/// falling inside it (rounded to 1 bps); empty buckets carry the previous
/// rate forward. Leading empty buckets, if any, take the first sample's rate.
pub fn load_trace(source: &TraceSource, quantization: TimeNs) -> Result<BandwidthTimeline> {
    source.validate()?;
    if quantization <= TimeNs::ZERO {
        return Err(SimError::Ingestion("quantization must be positive".into()));
    }
    let q = quantization.as_nanos();
    let last_t = source.samples[source.samples.len() - 1].0.as_nanos();
    let buckets = (last_t / q) + 1;

    let mut steps = Vec::with_capacity(buckets as usize);
    let mut idx = 0usize;
    let mut prev_rate = source.samples[0].1;
    for b in 0..buckets {
        let end = (b + 1) * q;
        let mut sum: i128 = 0;
        let mut count: i128 = 0;
        while idx < source.samples.len() && source.samples[idx].0.as_nanos() < end {
            sum += source.samples[idx].1.as_bps() as i128;
            count += 1;
            idx += 1;
        }
        let rate = if count > 0 {
            // round-half-up mean in bps
            Rate::from_bps(((2 * sum + count) / (2 * count)) as i64)
        } else {
            prev_rate
        };
        steps.push((TimeNs::from_nanos(b * q), rate));
        prev_rate = rate;
    }
    BandwidthTimeline::new(steps, TimeNs::from_nanos(buckets * q))
}

/// The transition matrices and rate vectors used by the bundled experiment
/// configurations: a six-state wireless access model and a six-state core
/// model, with rows of printed thirds normalized to exact thirds.
pub mod presets {
    use super::{MarkovBandwidthModel, Rate};

    const T: f64 = 1.0 / 3.0;

    pub fn wireless_transition() -> Vec<Vec<f64>> {
        vec![
            vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
            vec![T, T, T, 0.0, 0.0, 0.0],
            vec![0.0, T, T, T, 0.0, 0.0],
            vec![0.0, 0.0, T, T, T, 0.0],
            vec![0.0, 0.0, 0.0, 0.4, 0.4, 0.2],
            vec![0.0, 0.0, 0.0, 0.0, 0.7, 0.3],
        ]
    }

    pub fn wireless_rates() -> Vec<Rate> {
        [100, 300, 500, 700, 900, 2300]
            .iter()
            .map(|&k| Rate::from_kbps(k))
            .collect()
    }

    pub fn core_transition() -> Vec<Vec<f64>> {
        vec![
            vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
            vec![T, T, T, 0.0, 0.0, 0.0],
            vec![0.0, T, T, T, 0.0, 0.0],
            vec![0.0, 0.0, T, T, T, 0.0],
            vec![0.0, 0.0, 0.0, T, T, T],
            vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.5],
        ]
    }

    pub fn core_rates() -> Vec<Rate> {
        [700, 900, 1100, 1100, 1100, 1300]
            .iter()
            .map(|&k| Rate::from_kbps(k))
            .collect()
    }

    /// Core rate ladder used alongside replayed cellular traces.
    pub fn core_rates_trace_mode() -> Vec<Rate> {
        [1000, 1200, 1400, 1600, 1800, 2000]
            .iter()
            .map(|&k| Rate::from_kbps(k))
            .collect()
    }

    pub fn wireless_model(seed: u64) -> MarkovBandwidthModel {
        MarkovBandwidthModel::new(wireless_transition(), wireless_rates(), seed)
    }

    pub fn core_model(seed: u64) -> MarkovBandwidthModel {
        MarkovBandwidthModel::new(core_transition(), core_rates(), seed)
    }
}
