//! Control and scoring core for avatar-mediated upper-limb rehabilitation.
//!
//! Angles are degrees and times seconds at every public interface; the
//! controller works in radians internally.

pub mod controller;
pub mod error;
pub mod log;
pub mod metrics;
pub mod patient;
pub mod plant;
pub mod reference;
pub mod session;
pub mod signal;
pub mod trace;

pub use error::{Error, Result};
pub use trace::KinematicTrace;
