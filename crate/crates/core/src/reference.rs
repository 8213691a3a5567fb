//! Minimum-jerk (Hogan) reference movements.
//!
//! A point-to-point movement from `theta0` to `thetaf` over `duration`
//! seconds that minimises the integrated squared jerk follows the quintic
//! `theta0 + delta * (10 s^3 - 15 s^4 + 6 s^5)` with `s = t / duration`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal;
use crate::trace::KinematicTrace;

/// Ratio of peak speed to average speed (`delta / T`) for the quintic.
pub const PEAK_VELOCITY_RATIO: f64 = 1.875;

/// `(theta0, thetaf, T)` for one reference movement, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoganSegment {
    pub theta0: f64,
    pub thetaf: f64,
    pub duration: f64,
}

impl HoganSegment {
    pub fn new(theta0: f64, thetaf: f64, duration: f64) -> Result<Self> {
        if !(theta0.is_finite() && thetaf.is_finite()) {
            return Err(Error::InvalidParameter("segment endpoints must be finite".into()));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidParameter(format!("segment duration must be > 0, got {duration}")));
        }
        Ok(Self { theta0, thetaf, duration })
    }

    /// Equal endpoints: a "hold" rather than a movement.
    pub fn is_hold(&self) -> bool {
        self.theta0 == self.thetaf
    }

    pub fn amplitude(&self) -> f64 {
        self.thetaf - self.theta0
    }

    fn phase(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.duration)));
        }
        Ok(t / self.duration)
    }

    pub fn position(&self, t: f64) -> Result<f64> {
        let s = self.phase(t)?;
        Ok(self.theta0 + self.amplitude() * shape(s))
    }

    pub fn velocity(&self, t: f64) -> Result<f64> {
        self.phase(t)?;
        let d = self.duration;
        Ok(30.0 * t * t * self.amplitude() * (d - t) * (d - t) / d.powi(5))
    }

    pub fn acceleration(&self, t: f64) -> Result<f64> {
        let s = self.phase(t)?;
        let d = self.duration;
        Ok(self.amplitude() / (d * d) * (60.0 * s - 180.0 * s * s + 120.0 * s * s * s))
    }

    pub fn jerk(&self, t: f64) -> Result<f64> {
        let s = self.phase(t)?;
        let d = self.duration;
        Ok(self.amplitude() / d.powi(3) * (60.0 - 360.0 * s + 360.0 * s * s))
    }

    /// Reference velocity on an unbounded time axis: zero before the start
    /// and after the end of the movement.
    pub fn velocity_or_rest(&self, t: f64) -> f64 {
        if (0.0..=self.duration).contains(&t) {
            self.velocity(t).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    pub fn peak_velocity(&self) -> f64 {
        PEAK_VELOCITY_RATIO * self.amplitude() / self.duration
    }

    /// Samples the position profile on `[0, T]`.
    pub fn sample(&self, dt: f64) -> Result<KinematicTrace> {
        KinematicTrace::sample_fn(dt, self.duration, |t| {
            self.position(t.min(self.duration)).unwrap_or(self.thetaf)
        })
    }
}

fn shape(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

pub fn min_jerk_position(seg: &HoganSegment, t: f64) -> Result<f64> {
    seg.position(t)
}

pub fn min_jerk_velocity(seg: &HoganSegment, t: f64) -> Result<f64> {
    seg.velocity(t)
}

/// `C = 1/2 * integral(jerk^2 dt)`, trapezoidal rule on the numerically
/// differentiated trace. Units: deg^2/s^5.
pub fn mean_squared_jerk(trace: &KinematicTrace) -> Result<f64> {
    if trace.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: trace.len() });
    }
    let d = trace.derivatives_or_compute()?;
    let squared: Vec<f64> = d.jerk.iter().map(|j| j * j).collect();
    Ok(0.5 * signal::trapezoid(&squared, trace.dt))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Onset/offset threshold as a fraction of peak speed.
    pub threshold_fraction: f64,
    /// Peak speeds below this (deg/s) count as no movement.
    pub noise_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { threshold_fraction: 0.05, noise_floor: 1e-3 }
    }
}

/// Threshold crossings of the speed profile, interpolated between samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovementBounds {
    pub onset_time: f64,
    pub offset_time: f64,
    pub onset_theta: f64,
    pub offset_theta: f64,
    pub peak_speed: f64,
}

/// Locates movement onset and offset: the first and last points where speed
/// exceeds `threshold_fraction` of its peak.
pub fn detect_movement(trace: &KinematicTrace, cfg: &FitConfig) -> Result<MovementBounds> {
    let velocity = signal::differentiate_series(&trace.samples, trace.dt)?;
    let speed: Vec<f64> = velocity.iter().map(|v| v.abs()).collect();
    let peak = speed.iter().cloned().fold(0.0, f64::max);
    if !(peak > cfg.noise_floor) {
        return Err(Error::NoMovement { peak, floor: cfg.noise_floor });
    }
    let threshold = cfg.threshold_fraction * peak;
    let first = speed.iter().position(|&s| s > threshold).unwrap();
    let last = speed.iter().rposition(|&s| s > threshold).unwrap();

    let x = &trace.samples;
    let (onset_time, onset_theta) = if first == 0 {
        (0.0, x[0])
    } else {
        let frac = (threshold - speed[first - 1]) / (speed[first] - speed[first - 1]);
        let t = (first as f64 - 1.0 + frac) * trace.dt;
        (t, x[first - 1] + frac * (x[first] - x[first - 1]))
    };
    let (offset_time, offset_theta) = if last + 1 == speed.len() {
        (trace.time(last), x[last])
    } else {
        let frac = (speed[last] - threshold) / (speed[last] - speed[last + 1]);
        let t = (last as f64 + frac) * trace.dt;
        (t, x[last] + frac * (x[last + 1] - x[last]))
    };
    Ok(MovementBounds { onset_time, offset_time, onset_theta, offset_theta, peak_speed: peak })
}

/// Fits a reference segment to one observed point-to-point movement.
///
/// The speed threshold cuts off the slow tails of any bell-shaped profile,
/// so the raw crossing span underestimates the movement. Duration and
/// endpoints are extrapolated back through the quintic: for a minimum-jerk
/// movement the crossings occur at phase `s*` where
/// `16 s*^2 (1 - s*)^2 = threshold_fraction`, which makes the fit exact on
/// minimum-jerk input.
pub fn fit_segment(trace: &KinematicTrace, cfg: &FitConfig) -> Result<HoganSegment> {
    let bounds = detect_movement(trace, cfg)?;
    let span = bounds.offset_time - bounds.onset_time;
    if !(span > 0.0) {
        return Err(Error::NoMovement { peak: bounds.peak_speed, floor: cfg.noise_floor });
    }
    let s_cross = (1.0 - (1.0 - cfg.threshold_fraction.sqrt()).sqrt()) / 2.0;
    let p = shape(s_cross);
    let duration = span / (1.0 - 2.0 * s_cross);
    let delta = (bounds.offset_theta - bounds.onset_theta) / (1.0 - 2.0 * p);
    let theta0 = bounds.onset_theta - p * delta;
    HoganSegment::new(theta0, theta0 + delta, duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg() -> HoganSegment {
        HoganSegment::new(0.0, 90.0, 2.0).unwrap()
    }

    #[test]
    fn position_examples() {
        let s = seg();
        assert_eq!(s.position(0.0).unwrap(), 0.0);
        assert_eq!(s.position(2.0).unwrap(), 90.0);
        assert!((s.position(1.0).unwrap() - 45.0).abs() < 1e-12);
        // 90 * (10/64 - 15/256 + 6/1024)
        assert!((s.position(0.5).unwrap() - 9.31640625).abs() < 1e-12);
    }

    #[test]
    fn velocity_examples() {
        let s = seg();
        assert_eq!(s.velocity(0.0).unwrap(), 0.0);
        assert_eq!(s.velocity(2.0).unwrap(), 0.0);
        assert!((s.velocity(1.0).unwrap() - 84.375).abs() < 1e-12);
        assert!((s.peak_velocity() - 84.375).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_time_is_domain_error() {
        assert!(matches!(seg().position(-0.1), Err(Error::Domain(_))));
        assert!(matches!(seg().velocity(2.0001), Err(Error::Domain(_))));
        assert_eq!(seg().velocity_or_rest(3.0), 0.0);
    }

    #[test]
    fn invalid_duration_rejected() {
        assert!(HoganSegment::new(0.0, 1.0, 0.0).is_err());
        assert!(HoganSegment::new(0.0, 1.0, f64::NAN).is_err());
        assert!(HoganSegment::new(5.0, 5.0, 1.0).unwrap().is_hold());
    }

    #[test]
    fn squared_jerk_of_constant_trace_is_zero() {
        let t = KinematicTrace::new(0.001, vec![12.0; 100]).unwrap();
        assert_eq!(mean_squared_jerk(&t).unwrap(), 0.0);
        let short = KinematicTrace::new(0.001, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(mean_squared_jerk(&short), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn squared_jerk_of_quintic() {
        // Analytic: 1/2 * 720 * delta^2 / T^5 = 91125 for delta = 90, T = 2.
        let trace = seg().sample(0.001).unwrap();
        let c = mean_squared_jerk(&trace).unwrap();
        assert!((c / 91125.0 - 1.0).abs() < 0.01, "C = {c}");
    }

    #[test]
    fn fit_recovers_quintic() {
        let trace = seg().sample(0.001).unwrap();
        let fit = fit_segment(&trace, &FitConfig::default()).unwrap();
        assert!(fit.theta0.abs() < 0.5, "{fit:?}");
        assert!((fit.thetaf - 90.0).abs() < 0.5, "{fit:?}");
        assert!((fit.duration - 2.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn fit_rejects_constant_trace() {
        let trace = KinematicTrace::new(0.001, vec![3.0; 500]).unwrap();
        assert!(matches!(fit_segment(&trace, &FitConfig::default()), Err(Error::NoMovement { .. })));
    }

    #[test]
    fn raw_crossings_sit_inside_the_movement() {
        let trace = seg().sample(0.001).unwrap();
        let b = detect_movement(&trace, &FitConfig::default()).unwrap();
        // s* = 0.0594 for a 5 % threshold.
        assert!((b.onset_time - 0.1188).abs() < 0.002, "{b:?}");
        assert!((b.offset_time - 1.8812).abs() < 0.002, "{b:?}");
    }
}
