//! Avatar inner dynamics: `I th'' + B th' + K th = u` with a hard range of
//! motion `0 <= th <= th_rom`.
//!
//! Integration uses the exact zero-order-hold discretization. Dynamics run
//! in radians; every public state is in degrees.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::KinematicTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// kg m^2
    pub inertia: f64,
    /// N m s / rad
    pub damping: f64,
    /// N m / rad
    pub stiffness: f64,
    /// Range of motion, degrees.
    pub rom_deg: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self { inertia: 0.014, damping: 0.4, stiffness: 0.64, rom_deg: 120.0 }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.inertia.is_finite()
            && self.inertia > 0.0
            && self.damping.is_finite()
            && self.damping >= 0.0
            && self.stiffness.is_finite()
            && self.stiffness >= 0.0
            && self.rom_deg.is_finite()
            && self.rom_deg > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid plant parameters {self:?}")))
        }
    }

    /// `B^2 - 4 K I`; positive means overdamped.
    pub fn discriminant(&self) -> f64 {
        self.damping * self.damping - 4.0 * self.stiffness * self.inertia
    }

    /// Roots of `I s^2 + B s + K`.
    pub fn eigenvalues(&self) -> (Complex64, Complex64) {
        let c = self.damping / self.inertia;
        let k = self.stiffness / self.inertia;
        let root = Complex64::new(c * c - 4.0 * k, 0.0).sqrt();
        ((-c + root) / 2.0, (-c - root) / 2.0)
    }

    /// Torque that holds the plant at rest at `theta_deg`.
    pub fn holding_torque(&self, theta_deg: f64) -> f64 {
        self.stiffness * theta_deg.to_radians()
    }
}

/// `(theta, theta_dot)` in degrees and deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PlantState {
    pub fn new(theta: f64, theta_dot: f64) -> Self {
        Self { theta, theta_dot }
    }

    pub fn at_rest(theta: f64) -> Self {
        Self { theta, theta_dot: 0.0 }
    }

    pub(crate) fn to_radians(self) -> [f64; 2] {
        [self.theta.to_radians(), self.theta_dot.to_radians()]
    }

    pub(crate) fn from_radians(x: [f64; 2]) -> Self {
        Self { theta: x[0].to_degrees(), theta_dot: x[1].to_degrees() }
    }

    /// `1/2 I th'^2 + 1/2 K th^2` in joules.
    pub fn energy(&self, params: &PlantParams) -> f64 {
        let [th, om] = self.to_radians();
        0.5 * params.inertia * om * om + 0.5 * params.stiffness * th * th
    }
}

/// `x+ = A x + b u` for one hold interval `h` (state in radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub h: f64,
}

impl Discretization {
    pub fn apply(&self, x: [f64; 2], u: f64) -> [f64; 2] {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0] * u,
            self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1] * u,
        ]
    }
}

const SERIES_RADIUS: f64 = 0.05;
const REPEATED_ROOT_GAP: f64 = 1e-5;

/// `(e^{z} - 1) / lambda` with `z = lambda h`.
fn phi(lambda: Complex64, h: f64) -> Complex64 {
    let z = lambda * h;
    if z.norm() < SERIES_RADIUS {
        // h * sum z^k / (k+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..16 {
            term = term * z / (k as f64 + 1.0);
            sum += term;
        }
        sum * h
    } else {
        (z.exp() - 1.0) / lambda
    }
}

/// d/dlambda of [`phi`].
fn phi_prime(lambda: Complex64, h: f64) -> Complex64 {
    let z = lambda * h;
    if z.norm() < SERIES_RADIUS {
        // h^2 * sum_{k>=1} k z^{k-1} / (k+1)!
        let mut fact = 2.0;
        let mut zk = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..16 {
            sum += zk * (k as f64 / fact);
            zk *= z;
            fact *= k as f64 + 2.0;
        }
        sum * h * h
    } else {
        let e = z.exp();
        (z * e - (e - 1.0)) / (lambda * lambda)
    }
}

/// Exact ZOH discretization of the oscillator over `h` seconds.
///
/// Uses the two-eigenvalue interpolation `f(M) = f0 I + f1 M` for both the
/// matrix exponential and its integral, with the confluent form when the
/// roots (nearly) coincide.
pub fn discretize(params: &PlantParams, h: f64) -> Result<Discretization> {
    params.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {h}")));
    }
    let c = params.damping / params.inertia;
    let k = params.stiffness / params.inertia;
    let (l1, l2) = params.eigenvalues();

    let (f0, f1, g0, g1) = if (l1 - l2).norm() * h < REPEATED_ROOT_GAP {
        let l = (l1 + l2) / 2.0;
        let e = (l * h).exp();
        let (p, dp) = (phi(l, h), phi_prime(l, h));
        (e - l * e * h, e * h, p - l * dp, dp)
    } else {
        let (e1, e2) = ((l1 * h).exp(), (l2 * h).exp());
        let (p1, p2) = (phi(l1, h), phi(l2, h));
        let d = l1 - l2;
        ((l1 * e2 - l2 * e1) / d, (e1 - e2) / d, (l1 * p2 - l2 * p1) / d, (p1 - p2) / d)
    };
    let (f0, f1, g0, g1) = (f0.re, f1.re, g0.re, g1.re);
    Ok(Discretization {
        a: [[f0, f1], [-k * f1, f0 - c * f1]],
        b: [g1 / params.inertia, (g0 - c * g1) / params.inertia],
        h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: PlantState,
    pub saturated: bool,
}

/// Plant with a cached discretization for a fixed hold interval.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    disc: Discretization,
}

impl Plant {
    pub fn new(params: PlantParams, h: f64) -> Result<Self> {
        Ok(Self { disc: discretize(&params, h)?, params })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    /// One exact ZOH step without the range-of-motion clamp.
    pub fn propagate(&self, state: PlantState, u: f64) -> Result<PlantState> {
        if !u.is_finite() {
            return Err(Error::Input(format!("non-finite torque {u}")));
        }
        Ok(PlantState::from_radians(self.disc.apply(state.to_radians(), u)))
    }

    /// One ZOH step followed by the range-of-motion clamp: a state leaving
    /// `[0, rom]` is pinned to the bound with zero velocity.
    pub fn step(&self, state: PlantState, u: f64) -> Result<StepOutcome> {
        let next = self.propagate(state, u)?;
        let rom = self.params.rom_deg;
        if next.theta < 0.0 {
            Ok(StepOutcome { state: PlantState::at_rest(0.0), saturated: true })
        } else if next.theta > rom {
            Ok(StepOutcome { state: PlantState::at_rest(rom), saturated: true })
        } else {
            Ok(StepOutcome { state: next, saturated: false })
        }
    }
}

pub fn step(state: PlantState, u: f64, h: f64, params: &PlantParams) -> Result<StepOutcome> {
    Plant::new(*params, h)?.step(state, u)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub position: KinematicTrace,
    pub velocity: Vec<f64>,
    pub saturation_events: usize,
}

/// Iterates [`Plant::step`] over `u_series`; the trace has one more sample
/// than the input series.
pub fn simulate(
    initial: PlantState,
    u_series: &[f64],
    h: f64,
    params: &PlantParams,
) -> Result<Simulation> {
    if u_series.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let plant = Plant::new(*params, h)?;
    let mut state = initial;
    let mut theta = vec![state.theta];
    let mut velocity = vec![state.theta_dot];
    let mut saturation_events = 0;
    for &u in u_series {
        let out = plant.step(state, u)?;
        saturation_events += out.saturated as usize;
        state = out.state;
        theta.push(state.theta);
        velocity.push(state.theta_dot);
    }
    Ok(Simulation { position: KinematicTrace::new(h, theta)?, velocity, saturation_events })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters_are_overdamped() {
        let p = PlantParams::default();
        // 0.16 - 4 * 0.64 * 0.014 = 0.12416
        assert!((p.discriminant() - 0.12416).abs() < 1e-12);
        let (l1, l2) = p.eigenvalues();
        assert!(l1.im == 0.0 && l2.im == 0.0);
        assert!((l1.re + 1.70).abs() < 0.01, "{l1}");
        assert!((l2.re + 26.87).abs() < 0.01, "{l2}");
    }

    #[test]
    fn discrete_eigenvalues_are_exponentials() {
        let p = PlantParams::default();
        let d = discretize(&p, 0.01).unwrap();
        let tr = d.a[0][0] + d.a[1][1];
        let det = d.a[0][0] * d.a[1][1] - d.a[0][1] * d.a[1][0];
        let (l1, l2) = p.eigenvalues();
        let (z1, z2) = ((l1.re * 0.01).exp(), (l2.re * 0.01).exp());
        assert!((tr - (z1 + z2)).abs() < 1e-12);
        assert!((det - z1 * z2).abs() < 1e-12);
    }

    #[test]
    fn small_step_approaches_identity() {
        let p = PlantParams::default();
        for &h in &[1e-3, 1e-4, 1e-5] {
            let d = discretize(&p, h).unwrap();
            let dev = (d.a[0][0] - 1.0).abs() + d.a[0][1].abs() + d.a[1][0].abs() + (d.a[1][1] - 1.0).abs();
            assert!(dev < 80.0 * h, "h = {h}, deviation {dev}");
        }
    }

    #[test]
    fn handles_free_mass_and_critical_damping() {
        // K = 0: one root at zero.
        let free = PlantParams { stiffness: 0.0, ..PlantParams::default() };
        let d = discretize(&free, 0.01).unwrap();
        assert!((d.a[0][0] - 1.0).abs() < 1e-15 && d.a[1][0] == 0.0);
        // Critical damping: B^2 = 4 K I.
        let crit = PlantParams { damping: (4.0f64 * 0.64 * 0.014).sqrt(), ..PlantParams::default() };
        let dc = discretize(&crit, 0.01).unwrap();
        let nudged = PlantParams { damping: crit.damping * (1.0 + 1e-7), ..crit };
        let dn = discretize(&nudged, 0.01).unwrap();
        for i in 0..2 {
            assert!((dc.b[i] - dn.b[i]).abs() < 1e-8 * dc.b[i].abs().max(1e-3));
            for j in 0..2 {
                assert!((dc.a[i][j] - dn.a[i][j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rest_is_equilibrium() {
        let out = step(PlantState::default(), 0.0, 0.01, &PlantParams::default()).unwrap();
        assert_eq!(out.state, PlantState::default());
        assert!(!out.saturated);
    }

    #[test]
    fn free_decay_is_overdamped_and_monotone() {
        let p = PlantParams::default();
        let sim = simulate(PlantState::at_rest(10.0), &vec![0.0; 500], 0.01, &p).unwrap();
        let th = &sim.position.samples;
        assert!(th.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*th.last().unwrap() < 10.0 * (-1.70f64 * 5.0).exp() * 1.1);
        assert_eq!(sim.saturation_events, 0);
    }

    #[test]
    fn clamps_at_range_of_motion() {
        let p = PlantParams::default();
        let out = step(PlantState::at_rest(p.rom_deg - 1e-3), 50.0, 0.01, &p).unwrap();
        assert_eq!(out.state, PlantState::at_rest(p.rom_deg));
        assert!(out.saturated);
        let out = step(PlantState::new(0.5, -200.0), 0.0, 0.01, &p).unwrap();
        assert_eq!(out.state, PlantState::at_rest(0.0));
        assert!(out.saturated);
    }

    #[test]
    fn rejects_non_finite_torque() {
        let p = PlantParams::default();
        assert!(matches!(step(PlantState::default(), f64::NAN, 0.01, &p), Err(Error::Input(_))));
        assert!(simulate(PlantState::default(), &[], 0.01, &p).is_err());
    }

    #[test]
    fn step_input_settles_at_static_equilibrium() {
        let p = PlantParams::default();
        let u = p.holding_torque(45.0);
        let sim = simulate(PlantState::default(), &vec![u; 1000], 0.01, &p).unwrap();
        assert_eq!(sim.position.len(), 1001);
        assert!((sim.position.last().unwrap() - 45.0).abs() < 0.1);
    }

    #[test]
    fn fast_sinusoid_is_attenuated() {
        let p = PlantParams::default();
        let h = 0.001;
        let omega = 20.0 * (p.stiffness / p.inertia).sqrt();
        let amp = p.holding_torque(20.0);
        let u: Vec<f64> = (0..4000).map(|i| amp * (omega * i as f64 * h).sin()).collect();
        let sim = simulate(PlantState::at_rest(40.0), &{
            let hold = p.holding_torque(40.0);
            u.iter().map(|v| v + hold).collect::<Vec<_>>()
        }, h, &p)
        .unwrap();
        let tail = &sim.position.samples[2000..];
        let swing = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
        // Static gain would give a 40 degree peak-to-peak swing.
        assert!(swing < 0.1 * 40.0, "swing {swing}");
    }
}
