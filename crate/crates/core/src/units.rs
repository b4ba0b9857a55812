//! Fixed-precision units for simulation time, link rates and data volumes.
//!
//! All timeline arithmetic is exact: instants and durations are integer
//! nanoseconds, rates are integer bits per second, and data volumes are
//! kept in rate-time quanta (`bit * ns / s`, i.e. nanobits) so that the
//! integral of a piecewise-constant rate is a plain integer product.
//! Floating point only appears at the reporting boundary.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

const NS_PER_SEC: i64 = 1_000_000_000;
const NANOBITS_PER_KBIT: i128 = 1_000 * NS_PER_SEC as i128;

/// A point in simulation time or a span between two points, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TimeNs(i64);

impl TimeNs {
    pub const ZERO: TimeNs = TimeNs(0);

    pub const fn from_nanos(ns: i64) -> Self {
        TimeNs(ns)
    }

    pub const fn from_secs(s: i64) -> Self {
        TimeNs(s * NS_PER_SEC)
    }

    pub const fn from_millis(ms: i64) -> Self {
        TimeNs(ms * 1_000_000)
    }

    /// Rounds to the nearest nanosecond; exact for any decimal input with
    /// nine or fewer fractional digits.
    pub fn from_secs_f64(s: f64) -> Self {
        TimeNs((s * NS_PER_SEC as f64).round() as i64)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NS_PER_SEC as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn min(self, other: Self) -> Self {
        TimeNs(self.0.min(other.0))
    }

    pub fn max(self, other: Self) -> Self {
        TimeNs(self.0.max(other.0))
    }

    pub fn saturating_sub(self, other: Self) -> Self {
        TimeNs(self.0.saturating_sub(other.0))
    }
}

impl Add for TimeNs {
    type Output = TimeNs;
    fn add(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0 + rhs.0)
    }
}

impl AddAssign for TimeNs {
    fn add_assign(&mut self, rhs: TimeNs) {
        self.0 += rhs.0;
    }
}

impl Sub for TimeNs {
    type Output = TimeNs;
    fn sub(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0 - rhs.0)
    }
}

impl SubAssign for TimeNs {
    fn sub_assign(&mut self, rhs: TimeNs) {
        self.0 -= rhs.0;
    }
}

impl Neg for TimeNs {
    type Output = TimeNs;
    fn neg(self) -> TimeNs {
        TimeNs(-self.0)
    }
}

impl Mul<i64> for TimeNs {
    type Output = TimeNs;
    fn mul(self, rhs: i64) -> TimeNs {
        TimeNs(self.0 * rhs)
    }
}

impl fmt::Display for TimeNs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.as_secs_f64())
    }
}

/// A link rate in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rate(i64);

impl Rate {
    pub const ZERO: Rate = Rate(0);

    pub const fn from_bps(bps: i64) -> Self {
        Rate(bps)
    }

    pub const fn from_kbps(kbps: i64) -> Self {
        Rate(kbps * 1_000)
    }

    /// Rounds to the nearest bit per second.
    pub fn from_kbps_f64(kbps: f64) -> Self {
        Rate((kbps * 1_000.0).round() as i64)
    }

    pub const fn as_bps(self) -> i64 {
        self.0
    }

    pub fn as_kbps_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn min(self, other: Self) -> Self {
        Rate(self.0.min(other.0))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}kbps", self.as_kbps_f64())
    }
}

/// An exact data volume, stored in nanobits (`1 kbit = 10^12 nanobits`).
///
/// `Rate * TimeNs` lands here without rounding, which is what keeps
/// cumulative-capacity arithmetic exact and additive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Volume(i128);

impl Volume {
    pub const ZERO: Volume = Volume(0);

    pub const fn from_nanobits(nb: i128) -> Self {
        Volume(nb)
    }

    pub const fn from_kbits(kbits: i64) -> Self {
        Volume(kbits as i128 * NANOBITS_PER_KBIT)
    }

    pub const fn as_nanobits(self) -> i128 {
        self.0
    }

    pub fn as_kbits_f64(self) -> f64 {
        // exact whole part first so round values convert exactly
        let whole = self.0 / NANOBITS_PER_KBIT;
        let frac = self.0 % NANOBITS_PER_KBIT;
        whole as f64 + frac as f64 / NANOBITS_PER_KBIT as f64
    }

    /// Kilobytes at 1 kB = 8 kbit, the convention used in cache reports.
    pub fn as_kilobytes_f64(self) -> f64 {
        self.as_kbits_f64() / 8.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn min(self, other: Self) -> Self {
        Volume(self.0.min(other.0))
    }

    pub fn max(self, other: Self) -> Self {
        Volume(self.0.max(other.0))
    }

    pub fn clamp_non_negative(self) -> Self {
        Volume(self.0.max(0))
    }

    /// Exact duration needed to move `self` at `rate`, rounded up to the
    /// nanosecond grid. `None` when the rate is zero (nothing ever moves).
    pub fn time_to_transfer(self, rate: Rate) -> Option<TimeNs> {
        if rate.0 <= 0 {
            return None;
        }
        if self.0 <= 0 {
            return Some(TimeNs::ZERO);
        }
        let rate = rate.0 as i128;
        let ns = (self.0 + rate - 1) / rate;
        Some(TimeNs(ns as i64))
    }
}

impl Add for Volume {
    type Output = Volume;
    fn add(self, rhs: Volume) -> Volume {
        Volume(self.0 + rhs.0)
    }
}

impl AddAssign for Volume {
    fn add_assign(&mut self, rhs: Volume) {
        self.0 += rhs.0;
    }
}

impl Sub for Volume {
    type Output = Volume;
    fn sub(self, rhs: Volume) -> Volume {
        Volume(self.0 - rhs.0)
    }
}

impl SubAssign for Volume {
    fn sub_assign(&mut self, rhs: Volume) {
        self.0 -= rhs.0;
    }
}

impl Sum for Volume {
    fn sum<I: Iterator<Item = Volume>>(iter: I) -> Volume {
        iter.fold(Volume::ZERO, |acc, v| acc + v)
    }
}

impl Mul<TimeNs> for Rate {
    type Output = Volume;
    fn mul(self, rhs: TimeNs) -> Volume {
        Volume(self.0 as i128 * rhs.0 as i128)
    }
}

impl Mul<Rate> for TimeNs {
    type Output = Volume;
    fn mul(self, rhs: Rate) -> Volume {
        rhs * self
    }
}

/// Time-integral of a data volume held over a span, used for cache-storage
/// accounting. Stored as twice the exact area in nanobit-nanoseconds so
/// trapezoids between integer samples never round. Exposed in kbit-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct VolumeTime(i128);

impl VolumeTime {
    pub const ZERO: VolumeTime = VolumeTime(0);

    /// Exact product of an occupancy level and a duration.
    pub fn level_over(volume: Volume, span: TimeNs) -> Self {
        VolumeTime(2 * volume.0 * span.0 as i128)
    }

    /// Exact trapezoid between two occupancy samples.
    pub fn trapezoid(v0: Volume, v1: Volume, span: TimeNs) -> Self {
        VolumeTime((v0.0 + v1.0) * span.0 as i128)
    }

    pub fn as_kbit_secs_f64(self) -> f64 {
        // exact whole part first so round values convert exactly
        const DENOM: i128 = 2 * NANOBITS_PER_KBIT * NS_PER_SEC as i128;
        let whole = self.0 / DENOM;
        let frac = self.0 % DENOM;
        whole as f64 + frac as f64 / DENOM as f64
    }
}

impl Add for VolumeTime {
    type Output = VolumeTime;
    fn add(self, rhs: VolumeTime) -> VolumeTime {
        VolumeTime(self.0 + rhs.0)
    }
}

impl AddAssign for VolumeTime {
    fn add_assign(&mut self, rhs: VolumeTime) {
        self.0 += rhs.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_times_time_is_exact() {
        let r = Rate::from_kbps(100);
        let t = TimeNs::from_secs(2);
        assert_eq!(r * t, Volume::from_kbits(200));
    }

    #[test]
    fn transfer_time_rounds_up() {
        let v = Volume::from_kbits(200);
        assert_eq!(v.time_to_transfer(Rate::from_kbps(100)), Some(TimeNs::from_secs(2)));
        // 1 kbit at 3 bps: 10^6/3 bits... 10^15/3000 ns, not divisible.
        let v = Volume::from_kbits(1);
        let t = v.time_to_transfer(Rate::from_bps(3)).unwrap();
        assert!(Rate::from_bps(3) * t >= v);
        assert!(Rate::from_bps(3) * (t - TimeNs::from_nanos(1)) < v);
        assert_eq!(Volume::ZERO.time_to_transfer(Rate::ZERO), None);
    }

    #[test]
    fn volume_time_level() {
        let vt = VolumeTime::level_over(Volume::from_kbits(400), TimeNs::from_secs(2));
        assert_eq!(vt.as_kbit_secs_f64(), 800.0);
    }

    #[test]
    fn seconds_round_trip() {
        assert_eq!(TimeNs::from_secs_f64(0.5), TimeNs::from_millis(500));
        assert_eq!(TimeNs::from_secs(2).as_secs_f64(), 2.0);
    }
}
