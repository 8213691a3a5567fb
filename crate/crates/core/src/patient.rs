//! Synthetic impaired reaching movements and severity schedules.
//!
//! A profile superposes a linear ramp, one sinusoid over the whole movement
//! and one with `m` periods:
//!
//! ```text
//! th(t) = A (t/T - (1-b)/(2 pi) sin(2 pi t/T) - b/(2 m pi) sin(2 m pi t/T))
//! ```
//!
//! `m = 1` is single-peaked; larger `m` adds `m - 1` hesitations.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::KinematicTrace;

pub const DEFAULT_AMPLITUDE: f64 = 90.0;
pub const DEFAULT_DURATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    /// Degrees.
    pub amplitude: f64,
    /// Seconds.
    pub duration: f64,
    /// Deviation from the smooth cycloid, in [0, 1].
    pub b: f64,
    /// Number of velocity peaks, >= 1.
    pub m: u32,
}

impl PatientProfile {
    pub fn new(amplitude: f64, duration: f64, b: f64, m: u32) -> Result<Self> {
        let p = Self { amplitude, duration, b, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::InvalidParameter(format!("amplitude must be > 0, got {}", self.amplitude)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidParameter(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("b must lie in [0, 1], got {}", self.b)));
        }
        if self.m < 1 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.duration)));
        }
        Ok(())
    }

    pub fn position(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (a, tt, b, m) = (self.amplitude, self.duration, self.b, self.m as f64);
        let w = 2.0 * PI * t / tt;
        Ok(a * (t / tt - w.sin() * (1.0 - b) / (2.0 * PI) - (m * w).sin() * b / (2.0 * m * PI)))
    }

    pub fn velocity(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (a, tt, b, m) = (self.amplitude, self.duration, self.b, self.m as f64);
        let w = 2.0 * PI * t / tt;
        Ok(a / tt * (1.0 - (1.0 - b) * w.cos() - b * (m * w).cos()))
    }
}

pub fn synthetic_position(p: &PatientProfile, t: f64) -> Result<f64> {
    p.position(t)
}

/// Samples the profile on `[0, T]`. `dt` must resolve at least 100 samples.
pub fn synthetic_trace(p: &PatientProfile, dt: f64) -> Result<KinematicTrace> {
    p.validate()?;
    if !(dt > 0.0 && dt <= p.duration / 100.0 + 1e-15) {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} too coarse for a {} s movement (need <= T/100)",
            p.duration
        )));
    }
    KinematicTrace::sample_fn(dt, p.duration, |t| p.position(t.min(p.duration)).unwrap_or(p.amplitude))
}

/// Strict interior local maxima of a series.
pub fn count_peaks(series: &[f64]) -> usize {
    series.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count()
}

/// Named severity schedules.
///
/// * `paper-fig6`: `(m, b)` = (3, 0.8), (2, 0.5), (1, 0.1), one trial each.
/// * `static`: `trials` copies of (3, 0.8).
/// * `converging`: m = 2 with `b` halving each trial from 0.6.
pub fn severity_schedule(name: &str, amplitude: f64, duration: f64, trials: usize) -> Result<Vec<PatientProfile>> {
    let mk = |m: u32, b: f64| PatientProfile::new(amplitude, duration, b, m);
    match name {
        "paper-fig6" => [(3, 0.8), (2, 0.5), (1, 0.1)].iter().map(|&(m, b)| mk(m, b)).collect(),
        "static" => (0..trials.max(1)).map(|_| mk(3, 0.8)).collect(),
        "converging" => (0..trials.max(1)).map(|k| mk(2, 0.6 * 0.5f64.powi(k as i32))).collect(),
        other => Err(Error::UnknownSchedule(other.to_string())),
    }
}

pub const SCHEDULE_NAMES: [&str; 3] = ["paper-fig6", "static", "converging"];

/// Parses the schedule file format: one `m b A T` record per line,
/// whitespace separated, `#` starts a comment.
pub fn parse_schedule(text: &str) -> Result<Vec<PatientProfile>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::InvalidParameter(format!("schedule line {}: {what}: {raw:?}", lineno + 1));
        if fields.len() != 4 {
            return Err(bad("expected `m b A T`"));
        }
        let m: u32 = fields[0].parse().map_err(|_| bad("m must be a positive integer"))?;
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("bad number"));
        let (b, a, t) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        out.push(PatientProfile::new(a, t, b, m).map_err(|e| bad(&e.to_string()))?);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("schedule contains no profiles".into()));
    }
    Ok(out)
}

pub fn serialize_schedule(profiles: &[PatientProfile]) -> String {
    let mut s = String::from("# m b A T\n");
    for p in profiles {
        let _ = writeln!(s, "{} {} {} {}", p.m, p.b, p.amplitude, p.duration);
    }
    s
}

pub fn load_schedule(path: &Path) -> Result<Vec<PatientProfile>> {
    parse_schedule(&std::fs::read_to_string(path)?)
}
