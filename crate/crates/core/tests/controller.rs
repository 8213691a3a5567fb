use proptest::prelude::*;
use rehab_core::controller::{
    horizon_cost, qp_oracle, solve_horizon, terminal_state, ControlLoop, ControlWeights, HorizonConfig, HorizonProblem,
    LoopConfig, PatientObservation,
};
use rehab_core::plant::{PlantParams, PlantState};

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

prop_compose! {
    fn instance()(
        n in 1usize..=20,
        alpha_p in 0.0f64..=1.0,
        log_eta in -5.0f64..-1.0,
        theta in 0.0f64..120.0,
        theta_dot in -200.0f64..200.0,
        pred in 0.0f64..120.0,
        inertia in 0.005f64..0.05,
        damping in 0.0f64..1.0,
        stiffness in 0.0f64..2.0,
        seed_ref in prop::collection::vec(-200.0f64..200.0, 20),
    ) -> (usize, ControlWeights, PlantState, f64, PlantParams, Vec<f64>) {
        let w = ControlWeights::from_alpha_p(alpha_p, 10f64.powf(log_eta)).unwrap();
        let params = PlantParams { inertia, damping, stiffness, rom_deg: 120.0 };
        (n, w, PlantState::new(theta, theta_dot), pred, params, seed_ref[..n].to_vec())
    }
}

fn cfg(n: usize) -> HorizonConfig {
    HorizonConfig { horizon: 0.1, substeps: n, tick: 0.01 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recursion_matches_dense_oracle((n, weights, state, pred, params, reference) in instance()) {
        let p = HorizonProblem { state, theta_p_pred: pred, reference: &reference, weights, cfg: cfg(n), params };
        let fast = solve_horizon(&p).unwrap();
        let dense = qp_oracle(&p).unwrap();
        prop_assert_eq!(fast.len(), n);
        prop_assert!(rel_close(&fast, &dense, 1e-8), "{:?} vs {:?}", fast, dense);
    }

    #[test]
    fn optimum_never_costs_more_than_doing_nothing(
        (n, weights, state, pred, params, reference) in instance(),
        nudge in prop::collection::vec(-1.0f64..1.0, 20),
    ) {
        let p = HorizonProblem { state, theta_p_pred: pred, reference: &reference, weights, cfg: cfg(n), params };
        let u = solve_horizon(&p).unwrap();
        let best = horizon_cost(&p, &u).unwrap();
        let zero = horizon_cost(&p, &vec![0.0; n]).unwrap();
        prop_assert!(best <= zero * (1.0 + 1e-12) + 1e-15);
        let other: Vec<f64> = u.iter().zip(&nudge).map(|(a, d)| a + 1e-3 * d).collect();
        prop_assert!(best <= horizon_cost(&p, &other).unwrap() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn pure_leader_ignores_the_patient(
        (n, _w, state, _pred, params, reference) in instance(),
        a in 0.0f64..120.0,
        b in 0.0f64..120.0,
    ) {
        let w = ControlWeights::leader(1e-3);
        let p1 = HorizonProblem { state, theta_p_pred: a, reference: &reference, weights: w, cfg: cfg(n), params };
        let p2 = HorizonProblem { theta_p_pred: b, ..p1 };
        let (u1, u2) = (solve_horizon(&p1).unwrap(), solve_horizon(&p2).unwrap());
        prop_assert!(u1.iter().zip(&u2).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn terminal_distance_shrinks_with_follower_weight() {
    let reference = vec![0.0; 10];
    let mut last = f64::INFINITY;
    for &ap in &[0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = HorizonProblem {
            state: PlantState::at_rest(20.0),
            theta_p_pred: 40.0,
            reference: &reference,
            weights: ControlWeights::from_alpha_p(ap, 1e-3).unwrap(),
            cfg: HorizonConfig::default(),
            params: PlantParams::default(),
        };
        let end = terminal_state(&p, &solve_horizon(&p).unwrap()).unwrap();
        let d = (end.theta - 40.0).abs();
        assert!(d <= last + 1e-12, "alpha_p {ap}: {d} > {last}");
        last = d;
    }
    assert!(last < 1.0);
}

fn follow_stationary(cfg: LoopConfig, eta: f64, target: f64, seconds: f64) -> f64 {
    let mut ctl = ControlLoop::new(cfg, ControlWeights::follower(eta), PlantState::at_rest(0.0)).unwrap();
    let ticks = (seconds / cfg.horizon.tick).round() as usize;
    let mut theta = 0.0;
    for k in 0..ticks {
        let t = k as f64 * cfg.horizon.tick;
        let obs = PatientObservation { theta: target, theta_dot: 0.0, t };
        theta = ctl.tick(t, t, Some(&obs)).unwrap().state.theta;
    }
    theta
}

#[test]
fn follower_settles_near_a_stationary_patient() {
    for &eta in &[1e-4, 1e-5] {
        for &target in &[15.0, 30.0, 45.0] {
            let end = follow_stationary(LoopConfig::default(), eta, target, 2.0);
            assert!((end - target).abs() < 1.0, "eta {eta}, target {target}: ended at {end}");
        }
    }
}

#[test]
fn multi_step_follower_overshoots_in_proportion_to_target() {
    // Minimum-effort plans front-load torque, so the closed loop settles
    // where the first planned torque equals the holding torque: slightly
    // beyond the patient. A single-step horizon has no such freedom.
    for &target in &[30.0, 60.0, 90.0] {
        let end = follow_stationary(LoopConfig::default(), 1e-5, target, 4.0);
        let ratio = end / target;
        assert!(ratio > 1.01 && ratio < 1.02, "target {target}: ratio {ratio}");
        let mut single = LoopConfig::default();
        single.horizon.substeps = 1;
        let end = follow_stationary(single, 1e-5, target, 4.0);
        assert!((end - target).abs() < 0.01, "single step, target {target}: {end}");
    }
}

#[test]
fn planned_terminal_error_shrinks_as_effort_weight_drops() {
    // A recorded reach: the patient moves 10 -> 70 degrees over 2 s.
    let seg = rehab_core::reference::HoganSegment::new(10.0, 70.0, 2.0).unwrap();
    let run = |eta: f64| {
        let cfg = LoopConfig::default();
        let w = ControlWeights::follower(eta);
        let mut ctl = ControlLoop::new(cfg, w, PlantState::at_rest(10.0)).unwrap();
        let reference = vec![0.0; cfg.horizon.substeps];
        let mut err = 0.0;
        for k in 0..=200 {
            let t = k as f64 * 0.01;
            let obs = PatientObservation { theta: seg.position(t).unwrap(), theta_dot: seg.velocity(t).unwrap(), t };
            let pred = rehab_core::controller::predict_patient(&obs, cfg.horizon.horizon, cfg.params.rom_deg);
            let p = HorizonProblem {
                state: ctl.state(),
                theta_p_pred: pred,
                reference: &reference,
                weights: w,
                cfg: cfg.horizon,
                params: cfg.params,
            };
            err += (terminal_state(&p, &solve_horizon(&p).unwrap()).unwrap().theta - pred).abs();
            ctl.tick(t, t, Some(&obs)).unwrap();
        }
        err / 201.0
    };
    let errs: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|&e| run(e)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}
