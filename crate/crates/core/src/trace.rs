//! Uniformly sampled angular time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal;

/// A uniformly sampled signal for one movement.
///
/// `order` records which derivative the samples hold: 0 for position (deg),
/// 1 for velocity (deg/s) and so on. Derivative caches, when filled by
/// [`KinematicTrace::with_derivatives`], always match `samples` in length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinematicTrace {
    pub dt: f64,
    pub samples: Vec<f64>,
    #[serde(default)]
    pub order: u8,
    #[serde(skip)]
    derivatives: Option<Derivatives>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub jerk: Vec<f64>,
}

// Cached derivatives are not part of a trace's identity.
impl PartialEq for KinematicTrace {
    fn eq(&self, other: &Self) -> bool {
        self.dt == other.dt && self.order == other.order && self.samples == other.samples
    }
}

impl KinematicTrace {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self> {
        Self::with_order(dt, samples, 0)
    }

    pub fn with_order(dt: f64, samples: Vec<f64>, order: u8) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("sample interval must be > 0, got {dt}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("trace contains non-finite samples".into()));
        }
        Ok(Self { dt, samples, order, derivatives: None })
    }

    /// Samples `f` on `[0, duration]` with step `dt` (inclusive of both ends
    /// when `duration` is a multiple of `dt`).
    pub fn sample_fn(dt: f64, duration: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
        }
        let n = (duration / dt + 1e-9).floor() as usize + 1;
        let samples = (0..n).map(|i| f((i as f64 * dt).min(duration))).collect();
        Self::new(dt, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn first(&self) -> Option<f64> {
        self.samples.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.samples.last().copied()
    }

    /// Fills the velocity/acceleration/jerk caches. Needs at least four samples.
    pub fn with_derivatives(mut self) -> Result<Self> {
        if self.samples.len() < 4 {
            return Err(Error::InsufficientData { needed: 4, got: self.samples.len() });
        }
        let velocity = signal::differentiate_series(&self.samples, self.dt)?;
        let acceleration = signal::differentiate_series(&velocity, self.dt)?;
        let jerk = signal::differentiate_series(&acceleration, self.dt)?;
        self.derivatives = Some(Derivatives { velocity, acceleration, jerk });
        Ok(self)
    }

    pub fn derivatives(&self) -> Option<&Derivatives> {
        self.derivatives.as_ref()
    }

    /// Returns the cached derivatives, computing them if necessary.
    pub fn derivatives_or_compute(&self) -> Result<Derivatives> {
        match &self.derivatives {
            Some(d) => Ok(d.clone()),
            None => Ok(self.clone().with_derivatives()?.derivatives.unwrap()),
        }
    }
}
