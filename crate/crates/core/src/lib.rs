//! Deterministic simulator for network-assisted DASH delivery.
//!
//! Video reaches a mobile client over two hops: a core network from the
//! origin to an edge cache, and a wireless edge hop from the cache to the
//! client. A controller that knows both hops' capacity over a short future
//! window schedules per-segment bitrates by recursive search, staging core
//! surplus at the cache while the wireless link is the bottleneck. The
//! library also ships the client-driven DASH player this approach is
//! measured against, an exhaustive oracle for certifying the search on
//! small instances, and session drivers that score both policies with a
//! logarithmic-quality, switch-penalized QoE objective.

pub mod bandwidth;
pub mod baseline;
pub mod error;
pub mod oracle;
pub mod qoe;
pub mod scheduler;
pub mod simcore;
pub mod units;

pub use error::{Result, SimError};
pub use units::{Rate, TimeNs, Volume, VolumeTime};
