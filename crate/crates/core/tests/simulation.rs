use std::f64::consts::PI;

use ltv_es_core::builtin::{integrator, scalar1d, BuiltinParams};
use ltv_es_core::constants::{compute_constants, ConstantsReport, EnvelopeParams};
use ltv_es_core::delays::delta_bar_of_tau;
use ltv_es_core::scenario::{NoiseModel, Scenario, Signal};
use ltv_es_core::simulate::{
    check_envelope, integrate_closed_loop, integrate_measurement_delay, Envelope, SimConfig,
};

fn prepared(s: &Scenario) -> (ConstantsReport, EnvelopeParams) {
    let cert = s.build_certificate().unwrap();
    let r = compute_constants(&s.model, &s.noise, &cert, &s.es).unwrap();
    let env = r.xi0_interval(s.es.xi0_policy).unwrap();
    (r, env)
}

#[test]
fn integrator_stays_inside_envelope() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let (r, env) = prepared(&s);
    let bound = Envelope::new(&r, &env).unwrap();
    let traj = integrate_closed_loop(&s.model, &s.noise, &s.es, &[1.0], &SimConfig::new(20.0), Some(&bound)).unwrap();
    assert!(!traj.blew_up);
    assert_eq!(traj.steps, 100_000);
    assert!(traj.violations.is_empty(), "{:?}", traj.violations.first());
    assert_eq!(check_envelope(&traj, &r, &env).unwrap().count, 0);
    // After the transient the state sits inside the ultimate ball.
    assert!(traj.max_norm_after(15.0) <= r.ultimate_bound().unwrap());
}

#[test]
fn negative_initial_state_also_converges() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let (r, env) = prepared(&s);
    let bound = Envelope::new(&r, &env).unwrap();
    let traj = integrate_closed_loop(&s.model, &s.noise, &s.es, &[-0.8], &SimConfig::new(10.0), Some(&bound)).unwrap();
    assert!(traj.violations.is_empty());
    assert!(traj.final_state().unwrap()[0].abs() <= r.ultimate_bound().unwrap());
}

#[test]
fn scalar_example_stays_inside_envelope() {
    let s = scalar1d(&BuiltinParams::default()).unwrap();
    let (r, env) = prepared(&s);
    let bound = Envelope::new(&r, &env).unwrap();
    let traj = integrate_closed_loop(&s.model, &s.noise, &s.es, &[0.7], &SimConfig::new(0.5), Some(&bound)).unwrap();
    assert!(!traj.blew_up);
    assert!(traj.violations.is_empty(), "{:?}", traj.violations.first());
}

#[test]
fn controls_respect_amplitude_and_runs_are_deterministic() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let cfg = SimConfig::new(2.0);
    let a = integrate_closed_loop(&s.model, &s.noise, &s.es, &[0.5], &cfg, None).unwrap();
    let b = integrate_closed_loop(&s.model, &s.noise, &s.es, &[0.5], &cfg, None).unwrap();
    assert_eq!(a, b);
    let amp = (2.0 * PI / s.es.epsilon).sqrt();
    assert!(a.controls.iter().all(|u| u.abs() <= amp * (1.0 + 1e-15)));
}

#[test]
fn zero_measurement_delay_reproduces_undelayed_run() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let cfg = SimConfig::new(1.0);
    let plain = integrate_closed_loop(&s.model, &s.noise, &s.es, &[0.5], &cfg, None).unwrap();
    let delayed =
        integrate_measurement_delay(&s.model, &s.noise, &s.es, &Signal::Zero, &[0.5], &cfg, None).unwrap();
    assert_eq!(plain.states, delayed.states);
}

#[test]
fn measurement_delay_within_budget_stays_inside_noisy_envelope() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let (r, env) = prepared(&s);
    let tau = 1e-6;
    let delta_bar = delta_bar_of_tau(&r, &env, tau, 1e-3).unwrap();
    let noise = NoiseModel {
        delta_bar,
        delta: Signal::Zero,
    };
    let cert = s.build_certificate().unwrap();
    let noisy = compute_constants(&s.model, &noise, &cert, &s.es).unwrap();
    assert!(noisy.is_feasible());
    let noisy_env = noisy.xi0_interval(s.es.xi0_policy).unwrap();
    let bound = Envelope::new(&noisy, &noisy_env).unwrap();
    // Time-varying delay in [0, τ̄], periodic with period 2.
    let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
    let values: Vec<f64> = times.iter().map(|&t| tau * (3.0 * t).sin().abs()).collect();
    let delay = Signal::Tabulated {
        times,
        values,
        period: Some(2.0),
    };
    let traj =
        integrate_measurement_delay(&s.model, &noise, &s.es, &delay, &[1.0], &SimConfig::new(10.0), Some(&bound))
            .unwrap();
    assert!(traj.violations.is_empty(), "{:?}", traj.violations.first());
}

#[test]
fn closed_loop_integration_is_fourth_order() {
    let s = integrator(&BuiltinParams::default()).unwrap();
    let end = |spd: usize| {
        let cfg = SimConfig {
            steps_per_dither: spd,
            ..SimConfig::new(0.5)
        };
        integrate_closed_loop(&s.model, &s.noise, &s.es, &[0.5], &cfg, None)
            .unwrap()
            .final_state()
            .unwrap()[0]
    };
    let reference = end(400);
    let ratio = (end(50) - reference).abs() / (end(100) - reference).abs();
    assert!((8.0..=32.0).contains(&ratio), "{ratio}");
}
