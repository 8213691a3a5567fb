use proptest::prelude::*;
use rehab_core::plant::{simulate, Plant, PlantParams, PlantState};

/// Closed-form free response of I x'' + B x' + K x = 0 in radians, for
/// distinct real or complex roots.
fn closed_form(p: &PlantParams, x0: f64, v0: f64, t: f64) -> (f64, f64) {
    let (a, b) = (p.damping / p.inertia, p.stiffness / p.inertia);
    let disc = a * a - 4.0 * b;
    if disc > 0.0 {
        let r = disc.sqrt();
        let (l1, l2) = ((-a + r) / 2.0, (-a - r) / 2.0);
        let c1 = (v0 - l2 * x0) / (l1 - l2);
        let c2 = (l1 * x0 - v0) / (l1 - l2);
        let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
        (c1 * e1 + c2 * e2, c1 * l1 * e1 + c2 * l2 * e2)
    } else {
        let (s, w) = (-a / 2.0, (-disc).sqrt() / 2.0);
        let c = (v0 - s * x0) / w;
        let e = (s * t).exp();
        let (cs, sn) = ((w * t).cos(), (w * t).sin());
        let x = e * (x0 * cs + c * sn);
        let v = s * x + e * (-x0 * w * sn + c * w * cs);
        (x, v)
    }
}

fn exactness_case(p: PlantParams, x0_deg: f64, v0_deg: f64, h: f64, steps: usize) {
    let plant = Plant::new(p, h).unwrap();
    let mut s = PlantState::new(x0_deg, v0_deg);
    // Relative to the natural scales of position and velocity.
    let scale = x0_deg.abs() + v0_deg.abs() * h;
    let vscale = v0_deg.abs() + x0_deg.abs() * p.damping / p.inertia;
    for k in 1..=steps {
        s = plant.propagate(s, 0.0).unwrap();
        let (x, v) = closed_form(&p, x0_deg.to_radians(), v0_deg.to_radians(), k as f64 * h);
        assert!((s.theta - x.to_degrees()).abs() <= 1e-9 * scale, "step {k}: {} vs {}", s.theta, x.to_degrees());
        assert!((s.theta_dot - v.to_degrees()).abs() <= 1e-9 * vscale);
    }
}

#[test]
fn zoh_matches_closed_form_overdamped() {
    exactness_case(PlantParams::default(), 40.0, 0.0, 0.01, 500);
    exactness_case(PlantParams::default(), 10.0, 150.0, 0.005, 800);
}

#[test]
fn zoh_matches_closed_form_underdamped() {
    let p = PlantParams { inertia: 0.014, damping: 0.02, stiffness: 2.0, rom_deg: 120.0 };
    assert!(p.discriminant() < 0.0);
    exactness_case(p, 30.0, -20.0, 0.01, 500);
}

#[test]
fn default_parameters_are_overdamped() {
    let p = PlantParams::default();
    // B^2 - 4KI = 0.16 - 0.03584
    assert!((p.discriminant() - 0.12416).abs() < 1e-12);
}

#[test]
fn simulation_length_and_zero_input() {
    let sim = simulate(PlantState::default(), &[0.0; 50], 0.01, &PlantParams::default()).unwrap();
    assert_eq!(sim.position.len(), 51);
    assert!(sim.position.samples.iter().all(|&x| x == 0.0));
}

proptest! {
    #[test]
    fn free_motion_never_gains_energy(
        theta in 0.0f64..120.0,
        theta_dot in -300.0f64..300.0,
        inertia in 0.005f64..0.1,
        damping in 0.01f64..2.0,
        stiffness in 0.0f64..5.0,
        h in 0.001f64..0.05,
    ) {
        let p = PlantParams { inertia, damping, stiffness, rom_deg: 120.0 };
        let plant = Plant::new(p, h).unwrap();
        let mut s = PlantState::new(theta, theta_dot);
        for _ in 0..200 {
            let e0 = s.energy(&p);
            s = plant.step(s, 0.0).unwrap().state;
            prop_assert!(s.energy(&p) <= e0 * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn state_stays_inside_range_of_motion(
        u in prop::collection::vec(-5.0f64..5.0, 1..300),
        theta in 0.0f64..120.0,
    ) {
        let sim = simulate(PlantState::at_rest(theta), &u, 0.01, &PlantParams::default()).unwrap();
        prop_assert!(sim.position.samples.iter().all(|&x| (0.0..=120.0).contains(&x)));
    }
}
