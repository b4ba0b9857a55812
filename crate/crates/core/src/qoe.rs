//! Quality-of-experience scoring for segment bitrate sequences.
//!
//! Segment quality follows a logarithmic law in the ratio of the chosen
//! bitrate to the ladder floor. Quality changes between consecutive
//! segments incur asymmetric penalties (downswitches cost more than
//! upswitches at the default parameters), and a path's utility is the sum
//! of per-segment quality minus penalty. Operator-side bandwidth and
//! storage costs can optionally be subtracted by the caller.

use crate::error::{Result, SimError};
use crate::scheduler::SchedulePath;
use crate::units::Rate;

/// Parameters of the quality law and switch penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct QoeParams {
    /// Scale of the logarithmic quality law.
    pub alpha: f64,
    /// Ratio multiplier inside the logarithm.
    pub beta: f64,
    /// Penalty factor for switches to a higher quality.
    pub eta_up: f64,
    /// Penalty factor for switches to a lower quality.
    pub gamma_down: f64,
    /// Number of preceding segments the penalty may consider. Only the
    /// pairwise-adjacent form is defined, so any value behaves as 1; the
    /// field is kept so configurations can declare their intent.
    pub memory_window: usize,
}

impl Default for QoeParams {
    fn default() -> Self {
        QoeParams {
            alpha: 1.0,
            beta: 1.0,
            eta_up: 0.1,
            gamma_down: 1.0,
            memory_window: 1,
        }
    }
}

impl QoeParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(SimError::Config(format!(
                "alpha and beta must be positive (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if self.eta_up < 0.0 || self.gamma_down < 0.0 {
            return Err(SimError::Config(
                "switch penalty factors must be nonnegative".into(),
            ));
        }
        if self.memory_window < 1 {
            return Err(SimError::Config("memory_window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Prices for operator-side cost terms, all nonnegative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostParams {
    /// Utility per kbit transferred.
    pub bandwidth_price: f64,
    /// Utility per kbit-second held at the edge cache.
    pub storage_price: f64,
    pub enabled: bool,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_price < 0.0 || self.storage_price < 0.0 {
            return Err(SimError::Config("cost prices must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-segment qualities paired with the bitrates that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QualitySequence {
    pub qualities: Vec<f64>,
    pub bitrates: Vec<Rate>,
}

impl QualitySequence {
    pub fn from_bitrates(bitrates: &[Rate], min_bitrate: Rate, params: &QoeParams) -> Result<Self> {
        let qualities = bitrates
            .iter()
            .map(|&r| segment_quality(r, min_bitrate, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(QualitySequence {
            qualities,
            bitrates: bitrates.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.qualities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qualities.is_empty()
    }
}

/// Quality of one segment under the logarithmic law
/// `alpha * ln(beta * bitrate / min_bitrate)`.
pub fn segment_quality(bitrate: Rate, min_bitrate: Rate, params: &QoeParams) -> Result<f64> {
    if bitrate.as_bps() <= 0 || min_bitrate.as_bps() <= 0 {
        return Err(SimError::Domain(format!(
            "segment quality needs positive rates, got {bitrate} over floor {min_bitrate}"
        )));
    }
    let ratio = bitrate.as_bps() as f64 / min_bitrate.as_bps() as f64;
    Ok(params.alpha * (params.beta * ratio).ln())
}

/// Penalty for moving between two consecutive segment qualities: scaled by
/// `eta_up` on increases and `gamma_down` on decreases, zero when equal.
pub fn switch_penalty(prev_quality: f64, next_quality: f64, params: &QoeParams) -> f64 {
    if next_quality >= prev_quality {
        params.eta_up * (next_quality - prev_quality)
    } else {
        -params.gamma_down * (next_quality - prev_quality)
    }
}

/// Sum over segments of quality minus switch penalty; the first segment
/// has no predecessor and incurs none.
pub fn path_utility(seq: &QualitySequence, params: &QoeParams) -> Result<f64> {
    if seq.is_empty() {
        return Err(SimError::Domain("utility of an empty sequence".into()));
    }
    Ok(utility_of_qualities(&seq.qualities, params))
}

/// The same sum over a raw quality slice. This is the single evaluation
/// route used by the scheduler, the exhaustive oracle and the reports, so
/// equal sequences always score bit-identically.
pub fn utility_of_qualities(qualities: &[f64], params: &QoeParams) -> f64 {
    let mut total = 0.0;
    for (k, &q) in qualities.iter().enumerate() {
        let penalty = if k == 0 {
            0.0
        } else {
            switch_penalty(qualities[k - 1], q, params)
        };
        total += q - penalty;
    }
    total
}

/// Operator cost of a delivered path: bandwidth price times total kbit
/// moved plus storage price times the cache-occupancy integral. Returned
/// on its own so callers can form `utility - cost`.
pub fn path_cost(path: &SchedulePath, params: &CostParams) -> f64 {
    if !params.enabled {
        return 0.0;
    }
    cost_of(
        path.total_volume().as_kbits_f64(),
        path.cache_integral().as_kbit_secs_f64(),
        params,
    )
}

pub(crate) fn cost_of(total_kbits: f64, cache_kbit_secs: f64, params: &CostParams) -> f64 {
    if !params.enabled {
        return 0.0;
    }
    params.bandwidth_price * total_kbits + params.storage_price * cache_kbit_secs
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn kbps(k: i64) -> Rate {
        Rate::from_kbps(k)
    }

    #[test]
    fn quality_at_floor_is_zero() {
        let p = QoeParams::default();
        assert_eq!(segment_quality(kbps(100), kbps(100), &p).unwrap(), 0.0);
    }

    #[test]
    fn quality_log_law() {
        let p = QoeParams::default();
        let q = segment_quality(kbps(300), kbps(100), &p).unwrap();
        assert!((q - 3f64.ln()).abs() < TOL);

        let p2 = QoeParams {
            alpha: 2.0,
            ..QoeParams::default()
        };
        let q = segment_quality(kbps(1000), kbps(100), &p2).unwrap();
        assert!((q - 2.0 * 10f64.ln()).abs() < TOL);
    }

    #[test]
    fn quality_rejects_nonpositive_rates() {
        let p = QoeParams::default();
        assert!(segment_quality(Rate::ZERO, kbps(100), &p).is_err());
        assert!(segment_quality(kbps(100), Rate::ZERO, &p).is_err());
    }

    #[test]
    fn no_switch_no_penalty() {
        let p = QoeParams::default();
        for q in [0.0, 1.3, -2.0] {
            assert_eq!(switch_penalty(q, q, &p), 0.0);
        }
    }

    #[test]
    fn switch_penalty_hand_values() {
        let p = QoeParams::default();
        let ln3 = 3f64.ln();
        assert!((switch_penalty(0.0, ln3, &p) - 0.1 * ln3).abs() < TOL);
        assert!((switch_penalty(ln3, 0.0, &p) - ln3).abs() < TOL);
    }

    #[test]
    fn constant_path_utility_is_n_times_q() {
        let p = QoeParams::default();
        let seq = QualitySequence {
            qualities: vec![1.7; 5],
            bitrates: vec![kbps(500); 5],
        };
        assert_eq!(path_utility(&seq, &p).unwrap(), 5.0 * 1.7);
    }

    #[test]
    fn two_segment_upswitch_utility() {
        let p = QoeParams::default();
        let ln3 = 3f64.ln();
        let seq = QualitySequence {
            qualities: vec![0.0, ln3],
            bitrates: vec![kbps(100), kbps(300)],
        };
        let u = path_utility(&seq, &p).unwrap();
        assert!((u - 0.9 * ln3).abs() < TOL);
    }

    #[test]
    fn up_down_up_utility() {
        let p = QoeParams::default();
        let ln3 = 3f64.ln();
        let seq = QualitySequence {
            qualities: vec![ln3, 0.0, ln3],
            bitrates: vec![kbps(300), kbps(100), kbps(300)],
        };
        let u = path_utility(&seq, &p).unwrap();
        // ln3 + (0 - gamma*ln3) + (ln3 - eta*ln3)
        assert!((u - 0.9 * ln3).abs() < TOL);
    }

    #[test]
    fn empty_sequence_is_domain_error() {
        let p = QoeParams::default();
        assert!(path_utility(&QualitySequence::default(), &p).is_err());
    }

    #[test]
    fn cost_hand_values() {
        let off = CostParams::default();
        assert_eq!(cost_of(200.0, 800.0, &off), 0.0);

        let bw_only = CostParams {
            bandwidth_price: 0.001,
            storage_price: 0.0,
            enabled: true,
        };
        assert!((cost_of(200.0, 0.0, &bw_only) - 0.2).abs() < TOL);

        let store_only = CostParams {
            bandwidth_price: 0.0,
            storage_price: 0.0005,
            enabled: true,
        };
        // 400 kbit held for 2 s
        assert!((cost_of(0.0, 800.0, &store_only) - 0.4).abs() < TOL);
    }
}
