//! Simulation and optimization of a multi-LED optical wireless downlink that
//! combines lightwave power transfer, joint (analog + spatial) dimming and
//! rate-splitting multiple access.
//!
//! The physical layer lives in [`channel`], [`dimming`], [`rates`] and
//! [`power`]. [`env`] wraps them as a decision process, [`ppo`] trains an
//! actor-critic agent on it and [`oracle`] provides an independent
//! brute-force reference. [`scenario`] and [`sweep`] hold configuration and
//! experiment plumbing used by the `slipt` binary.

pub mod channel;
pub mod dimming;
pub mod env;
pub mod error;
pub mod oracle;
pub mod power;
pub mod ppo;
pub mod rates;
pub mod scenario;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};

/// Version tag written into every result row and checkpoint.
pub const CODE_VERSION: &str = concat!("slipt-", env!("CARGO_PKG_VERSION"));

/// `lhs >= rhs` up to a relative slack, so that equality-at-the-boundary
/// results are not lost to rounding.
pub fn geq_with_slack(lhs: f64, rhs: f64, rel: f64) -> bool {
    lhs - rhs >= -rel * lhs.abs().max(rhs.abs())
}
