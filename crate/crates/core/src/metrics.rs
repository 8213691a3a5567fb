//! Smoothness, ability index, session deltas, latency bound and the paired
//! t-test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::HoganSegment;
use crate::signal;
use crate::trace::KinematicTrace;

/// Speeds below this (deg/s) are treated as no movement.
pub const MOVEMENT_NOISE_FLOOR: f64 = 1e-3;

/// Sampling interval used when scoring analytic references, seconds.
pub const METRIC_DT: f64 = 0.001;

/// Normalisation of the integrated squared jerk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SmoothnessVariant {
    /// `T^3 / (max |th'|)^2 * integral(th'''^2)`; 204.8 for the quintic.
    PeakVelocityLiteral,
    /// `ln(T^5 / A^2 * integral(th'''^2))`, `A = |th_f - th_0|`; ln 720 for
    /// the quintic.
    #[default]
    AmplitudeLog,
}

impl fmt::Display for SmoothnessVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PeakVelocityLiteral => "PEAK_VELOCITY_LITERAL",
            Self::AmplitudeLog => "AMPLITUDE_LOG",
        })
    }
}

impl FromStr for SmoothnessVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "PEAK_VELOCITY_LITERAL" | "PEAK" => Ok(Self::PeakVelocityLiteral),
            "AMPLITUDE_LOG" | "LOG" => Ok(Self::AmplitudeLog),
            _ => Err(Error::InvalidParameter(format!("unknown smoothness variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub j: f64,
    pub variant: SmoothnessVariant,
    /// Seconds.
    pub duration: f64,
    /// Peak speed (deg/s) or amplitude (deg), depending on the variant.
    pub normalizer: f64,
}

/// Dimensionless jerk of a movement trace.
pub fn smoothness(trace: &KinematicTrace, variant: SmoothnessVariant) -> Result<SmoothnessReport> {
    let d = trace.derivatives_or_compute()?;
    let peak = d.velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > MOVEMENT_NOISE_FLOOR) {
        return Err(Error::NoMovement { peak, floor: MOVEMENT_NOISE_FLOOR });
    }
    let squared: Vec<f64> = d.jerk.iter().map(|j| j * j).collect();
    let integral = signal::trapezoid(&squared, trace.dt);
    let duration = trace.duration();
    match variant {
        SmoothnessVariant::PeakVelocityLiteral => Ok(SmoothnessReport {
            j: duration.powi(3) / (peak * peak) * integral,
            variant,
            duration,
            normalizer: peak,
        }),
        SmoothnessVariant::AmplitudeLog => {
            let amplitude = (trace.last().unwrap() - trace.first().unwrap()).abs();
            if !(amplitude > MOVEMENT_NOISE_FLOOR * duration) {
                return Err(Error::NoMovement { peak: amplitude, floor: MOVEMENT_NOISE_FLOOR * duration });
            }
            Ok(SmoothnessReport {
                j: (duration.powi(5) / (amplitude * amplitude) * integral).ln(),
                variant,
                duration,
                normalizer: amplitude,
            })
        }
    }
}

/// Smoothness of the sampled minimum-jerk movement for `seg`.
pub fn hogan_reference_j(seg: &HoganSegment, variant: SmoothnessVariant) -> Result<f64> {
    hogan_reference_j_at(seg, variant, METRIC_DT)
}

pub fn hogan_reference_j_at(seg: &HoganSegment, variant: SmoothnessVariant, dt: f64) -> Result<f64> {
    if seg.is_hold() {
        return Err(Error::Domain("reference segment has equal endpoints".into()));
    }
    Ok(smoothness(&seg.sample(dt)?, variant)?.j)
}

/// `min(J_H / J_P, 1)`.
pub fn ability_index(j_p: f64, j_h: f64) -> Result<f64> {
    if !(j_p > 0.0 && j_h > 0.0) || !j_p.is_finite() || !j_h.is_finite() {
        return Err(Error::Domain(format!("smoothness values must be positive (J_P = {j_p}, J_H = {j_h})")));
    }
    Ok((j_h / j_p).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityPoint {
    pub n: u32,
    pub ia: f64,
}

/// First differences `I_A(n) - I_A(n-1)`.
pub fn delta_ability(history: &[AbilityPoint]) -> Result<Vec<f64>> {
    if history.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: history.len() });
    }
    Ok(history.windows(2).map(|w| w[1].ia - w[0].ia).collect())
}

/// Positional error (m) from moving at `speed` (m/s) for `delay` seconds.
pub fn latency_error_bound(speed: f64, delay: f64) -> f64 {
    speed.max(0.0) * delay.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub mean_difference: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!("sample lengths differ ({} vs {})", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: a.len() });
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(TTest { t: 0.0, p: 1.0, df: n - 1.0, mean_difference: 0.0 });
        }
        return Err(Error::DegenerateTest("differences have zero variance".into()));
    }
    let df = n - 1.0;
    let t = mean / (var / n).sqrt();
    Ok(TTest { t, p: student_t_two_sided_p(t, df), df, mean_difference: mean })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` by Lentz's continued fraction, using the symmetry
/// `I_x(a, b) = 1 - I_{1-x}(b, a)` where the fraction converges slowly.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
