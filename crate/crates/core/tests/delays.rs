use ltv_es_core::builtin::{integrator, robot2d, BuiltinParams};
use ltv_es_core::certificate::{check_pe, verify_certificate, LowerBoundRule, DEFAULT_GRID};
use ltv_es_core::delays::{
    b_new, integrate_input_delay, predictor_certificate, transformed_model,
    IntegratorPredictorReport,
};
use ltv_es_core::mat::{expm, Mat};
use ltv_es_core::simulate::{integrate_closed_loop, SimConfig};
use ltv_es_core::tables::{delayed_robot, DelayedReading};

fn spd(steps_per_dither: usize, horizon: f64) -> SimConfig {
    SimConfig {
        steps_per_dither,
        ..SimConfig::new(horizon)
    }
}

#[test]
fn integrator_predictor_run_respects_delay_bound() {
    let eps = 1e-2;
    let tau = 1e-2;
    let s = integrator(&BuiltinParams::default()).unwrap();
    let rep = IntegratorPredictorReport::new(eps, 1.0, tau).unwrap();
    assert!(rep.is_feasible());
    let xi0 = rep.initial_level() + 0.01 * (rep.xi_l.unwrap() - rep.initial_level());
    let zeta_bound = |t: f64| rep.bound(xi0, t, 0.0).unwrap();
    let run = integrate_input_delay(&s.model, &s.es, tau, &[1.0], &SimConfig::new(20.0), Some(&zeta_bound)).unwrap();
    assert_eq!(run.delay_steps, 50);
    assert!(!run.x.blew_up);
    assert!(run.zeta.violations.is_empty(), "{:?}", run.zeta.violations.first());
    assert!(run.x.violations.is_empty(), "{:?}", run.x.violations.first());
    assert!(run.identity_residual < 1e-10);
}

#[test]
fn predictor_starts_at_plant_state() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let run = integrate_input_delay(&s.model, &s.es, 0.05, &[0.3], &SimConfig::new(0.1), None).unwrap();
    assert_eq!(run.x.state(0), run.zeta.state(0));
    assert_eq!(run.transfer_norm[0], 0.0);

    let run = integrate_input_delay(&s.model, &s.es, 0.05, &[0.0], &SimConfig::new(0.1), None).unwrap();
    assert_eq!(run.zeta.state(0), &[0.0]);
}

#[test]
fn predictor_identity_and_dynamics_residuals_in_two_dimensions() {
    let s = robot2d(&BuiltinParams {
        beta: Some(100.0),
        k_scale: Some(100.0),
        epsilon: Some(1e-4),
    })
    .unwrap();
    let residuals = |steps: usize| {
        let cfg = SimConfig {
            max_samples: 100,
            ..spd(steps, 0.05)
        };
        let run = integrate_input_delay(&s.model, &s.es, 0.01, &[0.5, -0.5], &cfg, None).unwrap();
        (run.identity_residual, run.dynamics_residual)
    };
    let (id50, dyn50) = residuals(50);
    let (id100, dyn100) = residuals(100);
    assert!(id50 < 1e-10 && id100 < 1e-10, "{id50} {id100}");
    // The finite-difference residual must shrink at least linearly with dt.
    assert!(dyn100 <= 0.55 * dyn50, "{dyn50} {dyn100}");
}

#[test]
fn one_step_delay_approaches_undelayed_run() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let gap = |steps: usize| {
        let cfg = spd(steps, 1.0);
        let plain = integrate_closed_loop(&s.model, &s.noise, &s.es, &[0.5], &cfg, None).unwrap();
        let run = integrate_input_delay(&s.model, &s.es, 1e-12, &[0.5], &cfg, None).unwrap();
        assert_eq!(run.delay_steps, 1);
        (0..plain.len())
            .map(|i| (plain.state(i)[0] - run.x.state(i)[0]).abs())
            .fold(0.0, f64::max)
    };
    let (g50, g100) = (gap(50), gap(100));
    assert!(g50 < 0.05, "{g50}");
    assert!(g100 <= 0.6 * g50, "{g50} {g100}");
}

#[test]
fn transformed_input_matches_matrix_exponential() {
    let s = robot2d(&BuiltinParams::default()).unwrap();
    let tau = 0.15;
    let shift = expm(&s.model.a.eval(0.0).scale(-tau)).unwrap();
    for i in 0..50 {
        let t = i as f64 * 1.3e-5;
        let expected = &shift * &s.model.b.eval(t + tau);
        let got = b_new(&s.model.a, &s.model.b, tau, t).unwrap();
        assert!((&got - &expected).max_abs() < 1e-12);
    }
}

#[test]
fn feasible_predictor_yields_valid_certificate() {
    let s = robot2d(&BuiltinParams {
        k_scale: Some(100.0),
        ..Default::default()
    })
    .unwrap();
    let pe = check_pe(&s.model.b, s.excitation_window(), DEFAULT_GRID).unwrap();
    let (cert, feas, _) = predictor_certificate(&s.model, 0.5, &pe, LowerBoundRule::Guaranteed).unwrap();
    assert!(feas.feasible);
    assert!(feas.conditioning.l_star >= 1.0);
    let zeta_model = transformed_model(&s.model, 0.5, &feas.k_new).unwrap();
    let v = verify_certificate(&cert, &zeta_model, 256).unwrap();
    assert!(v.passed(1e-8), "{v:?}");
}

#[test]
fn long_delay_with_small_gain_fails_the_predictor_condition() {
    let (_, _, feasible, margin) = delayed_robot(20.0, 1.0, 1e-8, DelayedReading::Hybrid).unwrap();
    assert!(!feasible);
    assert!(margin > 0.0);
}

#[test]
fn delayed_bound_decreases_with_epsilon() {
    for tau in [0.5, 0.15] {
        let mut prev = f64::INFINITY;
        for eps in [1e-7, 1e-8, 1e-9] {
            let (v, _, feasible, _) = delayed_robot(100.0, tau, eps, DelayedReading::Hybrid).unwrap();
            assert!(feasible);
            assert!(v < prev);
            prev = v;
        }
    }
}

#[test]
fn identity_transition_for_zero_drift() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let got = b_new(&s.model.a, &s.model.b, 0.7, 0.2).unwrap();
    assert_eq!(got, Mat::scalar(1.0));
}
