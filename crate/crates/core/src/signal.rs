//! Filtering, differentiation, resampling and online velocity estimation.

use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::KinematicTrace;

/// Order of the zero-phase smoothing filter (per pass).
pub const FILTER_ORDER: u32 = 2;

/// One timestamped sample from a wire stream. `t_ms` is in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub value: f64,
    pub t_ms: f64,
}

impl TimedSample {
    pub fn new(value: f64, t_ms: f64) -> Self {
        Self { value, t_ms }
    }
}

/// Central differences in the interior, second-order one-sided stencils at
/// the two edges.
pub fn differentiate_series(x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt));
    for i in 1..n - 1 {
        d.push((x[i + 1] - x[i - 1]) / (2.0 * dt));
    }
    d.push((3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * dt));
    Ok(d)
}

/// Differentiates a trace; the result carries `order + 1`.
pub fn differentiate(trace: &KinematicTrace) -> Result<KinematicTrace> {
    let d = differentiate_series(&trace.samples, trace.dt)?;
    KinematicTrace::with_order(trace.dt, d, trace.order + 1)
}

pub fn trapezoid(y: &[f64], dt: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dt * (y[1..n - 1].iter().sum::<f64>() + 0.5 * (y[0] + y[n - 1])),
    }
}

/// Cumulative sum times `dt`, starting from zero.
pub fn cumulative_integral(y: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    y.iter()
        .map(|v| {
            let out = acc;
            acc += v * dt;
            out
        })
        .collect()
}

/// Second-order section in transposed direct form II, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass via the bilinear transform with
    /// frequency pre-warping.
    pub fn butterworth_lowpass(fc: f64, fs: f64) -> Result<Self> {
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {fc} Hz must lie in (0, {}) Hz",
                fs / 2.0
            )));
        }
        let k = (PI * fc / fs).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - SQRT_2 * k + k2) * norm],
        })
    }

    /// |H(e^{j 2 pi f / fs})|
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    /// Filters `x`, starting from the steady state for a constant input
    /// equal to `x[0]`.
    pub fn filter_steady(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut z2 = (b2 - a2) * x0;
        let mut z1 = (b1 - a1) * x0 + z2;
        x.iter()
            .map(|&xi| {
                let y = b0 * xi + z1;
                z1 = b1 * xi - a1 * y + z2;
                z2 = b2 * xi - a2 * y;
                y
            })
            .collect()
    }
}

/// Zero-phase low-pass: second-order Butterworth run forward then backward
/// over an odd-reflected extension of `3 / fc` seconds at each end.
pub fn butterworth2_zero_phase(trace: &KinematicTrace, fc: f64) -> Result<KinematicTrace> {
    let n = trace.len();
    if n < 12 {
        return Err(Error::InsufficientData { needed: 12, got: n });
    }
    let fs = 1.0 / trace.dt;
    let filt = Biquad::butterworth_lowpass(fc, fs)?;
    let pad = ((3.0 / fc) * fs).round() as usize;
    let pad = pad.clamp(1, n - 1);
    let x = &trace.samples;

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let mut y = filt.filter_steady(&ext);
    y.reverse();
    let mut y = filt.filter_steady(&y);
    y.reverse();
    KinematicTrace::with_order(trace.dt, y[pad..pad + n].to_vec(), trace.order)
}

/// Linear interpolation of a timestamped stream onto a uniform grid of step
/// `dt` seconds starting at the first timestamp.
pub fn resample_uniform(samples: &[TimedSample], dt: f64) -> Result<KinematicTrace> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: samples.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if let Some(w) = samples.windows(2).find(|w| !(w[1].t_ms > w[0].t_ms)) {
        return Err(Error::Stream(format!(
            "timestamps not strictly increasing ({} then {})",
            w[0].t_ms, w[1].t_ms
        )));
    }
    let t0 = samples[0].t_ms;
    let span = (samples[samples.len() - 1].t_ms - t0) / 1000.0;
    if span + 1e-12 < dt {
        return Err(Error::Stream(format!("stream span {span} s shorter than dt {dt} s")));
    }
    let count = (span / dt + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for i in 0..count {
        let t = t0 + i as f64 * dt * 1000.0;
        while j + 2 < samples.len() && samples[j + 1].t_ms <= t {
            j += 1;
        }
        let (a, b) = (samples[j], samples[j + 1]);
        let frac = ((t - a.t_ms) / (b.t_ms - a.t_ms)).clamp(0.0, 1.0);
        out.push(a.value + frac * (b.value - a.value));
    }
    KinematicTrace::new(dt, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    /// deg/s
    pub value: f64,
    /// False when fewer than two samples fell in the window.
    pub confident: bool,
}

/// Least-squares slope over the samples inside the last `window_ms`.
pub fn estimate_velocity_online(recent: &[TimedSample], window_ms: f64) -> VelocityEstimate {
    let Some(last) = recent.last() else {
        return VelocityEstimate { value: 0.0, confident: false };
    };
    let inside: Vec<&TimedSample> =
        recent.iter().filter(|s| s.t_ms >= last.t_ms - window_ms).collect();
    if inside.len() < 2 {
        return VelocityEstimate { value: 0.0, confident: false };
    }
    let n = inside.len() as f64;
    // Centre on the newest sample to keep the sums well conditioned.
    let ts: Vec<f64> = inside.iter().map(|s| (s.t_ms - last.t_ms) / 1000.0).collect();
    let t_mean = ts.iter().sum::<f64>() / n;
    let v_mean = inside.iter().map(|s| s.value).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, s) in ts.iter().zip(&inside) {
        sxy += (t - t_mean) * (s.value - v_mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    if sxx <= 0.0 {
        return VelocityEstimate { value: 0.0, confident: false };
    }
    VelocityEstimate { value: sxy / sxx, confident: true }
}

/// Sliding-window velocity estimator over a small ring of recent samples.
#[derive(Debug, Clone)]
pub struct VelocityEstimator {
    window_ms: f64,
    ring: VecDeque<TimedSample>,
}

impl Default for VelocityEstimator {
    fn default() -> Self {
        Self::new(50.0)
    }
}

impl VelocityEstimator {
    pub fn new(window_ms: f64) -> Self {
        Self { window_ms, ring: VecDeque::new() }
    }

    pub fn push(&mut self, sample: TimedSample) {
        if let Some(last) = self.ring.back() {
            if sample.t_ms <= last.t_ms {
                // Out-of-order or duplicate sample: restart the window.
                self.ring.clear();
            }
        }
        self.ring.push_back(sample);
        while let Some(front) = self.ring.front() {
            if front.t_ms < sample.t_ms - self.window_ms {
                self.ring.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn estimate(&self) -> VelocityEstimate {
        let recent: Vec<TimedSample> = self.ring.iter().copied().collect();
        estimate_velocity_online(&recent, self.window_ms)
    }

    pub fn latest(&self) -> Option<TimedSample> {
        self.ring.back().copied()
    }

    pub fn clear(&mut self) {
        self.ring.clear();
    }
}
