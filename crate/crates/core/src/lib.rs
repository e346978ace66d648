//! Computational workbench for the spectral and metric structure of orbits.
//!
//! * [`dynsys`]: concrete systems (shifts, rotations, periodic orbits,
//!   B-free shifts, products), orbit windows, observables and state metrics.
//! * [`wiener_wintner`]: twisted ergodic averages, frequency scans and the
//!   spectral-mass (regularity) identity.
//! * [`besicovitch`]: Besicovitch and d-bar pseudometrics along checkpoint
//!   schedules.
//! * [`measures`]: empirical block measures, periodic measures, block
//!   entropy and weak* distances.
//! * [`rhobar`]: exact rho-bar / d-bar between periodic measures and
//!   certified brackets for empirical data.
//! * [`bfree`]: B-free characteristic sequences and the Mirsky experiments.

pub mod besicovitch;
pub mod bfree;
pub mod dynsys;
pub mod error;
pub mod measures;
pub mod rhobar;
pub mod schedule;
pub mod wiener_wintner;

pub use error::{Error, Result};
pub use schedule::CheckpointSchedule;

/// Slack used when comparing quantities that are equal in exact arithmetic.
pub const TAU_NUM: f64 = 1e-9;

/// Library version echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
