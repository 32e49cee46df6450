//! Oracles shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};

use ltv_es_core::certificate::{closed_loop_h, Certificate, PForm};
use ltv_es_core::constants::{comparison_closed_form, comparison_rhs, ConstantsReport};
use ltv_es_core::ode::integrate;
use ltv_es_core::scenario::SystemModel;

/// Worst value of `V(t)/(V(t₀)e^{−q(t−t₀)}) − 1` along `count` solutions of `φ̇ = H(t)φ`
/// started from random directions and random phases, each followed for `periods` periods.
pub fn lyapunov_decay_excess(
    model: &SystemModel,
    cert: &Certificate,
    count: usize,
    periods: usize,
    seed: u64,
) -> f64 {
    let period = match (&cert.form, model.sampling_period()) {
        (PForm::Floquet { beta, .. }, _) => PI / beta,
        (_, Some(p)) => p,
        (_, None) => 1.0,
    };
    let steps_per_period = 4000;
    let dt = period / steps_per_period as f64;
    let n = model.n;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let t0 = rng.gen_range(0.0..period);
        let mut phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v0 = cert.p(t0).quad_form(&phi);
        let mut t = t0;
        for _ in 0..periods * steps_per_period {
            phi = integrate(
                |s, y, dy| closed_loop_h(model, s).mul_vec_into(y, dy),
                t,
                &phi,
                dt,
                1,
            );
            t += dt;
            let v = cert.p(t).quad_form(&phi);
            worst = worst.max(v / (v0 * (-cert.q * (t - t0)).exp()) - 1.0);
        }
    }
    worst
}

/// Largest relative gap between the closed-form comparison solution and an RK4 solution of
/// the comparison equation with step `10⁻⁴/r₀`, at 1000 instants over `[0, 10/r₀]`.
pub fn comparison_oracle_error(report: &ConstantsReport, xi0: f64) -> f64 {
    let (d1, d3, q, p_lo) = (report.d1, report.d3, report.q, report.p_lo);
    let r0 = report.r0.expect("roots exist");
    let dt = 1e-4 / r0;
    let per_sample = 100;
    let mut xi = vec![xi0];
    let mut t = 0.0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        xi = integrate(
            |_, y, dy| dy[0] = comparison_rhs(d1, d3, q, p_lo, y[0]),
            t,
            &xi,
            dt,
            per_sample,
        );
        t += per_sample as f64 * dt;
        let exact = comparison_closed_form(d1, d3, q, p_lo, xi0, t).unwrap();
        worst = worst.max((xi[0] - exact).abs() / exact);
    }
    worst
}

/// Roots, rate and ultimate bound written directly in terms of `c₁..c₄` for unit weights.
pub struct UnweightedForm {
    pub xi_s: f64,
    pub xi_l: f64,
    pub r0: f64,
    pub b_star: f64,
    pub decay_holds: bool,
    pub discriminant_holds: bool,
}

pub fn unweighted_form(r: &ConstantsReport) -> UnweightedForm {
    let (c1, c2, c3, c4) = (r.c1, r.c2, r.c3, r.c4);
    let p2 = r.p_lo * r.p_lo;
    let root = (r.q * r.q * p2 * p2 - 4.0 * c1 * (c3 + 2.0 * c4) * p2).sqrt();
    let xi_s = 2.0 * c1 * p2 / (r.q * p2 + root);
    let xi_l = (r.q * p2 + root) / (2.0 * c3 + 4.0 * c4);
    UnweightedForm {
        xi_s,
        xi_l,
        r0: (xi_l - xi_s) / p2 * (c3 / 2.0 + c4),
        b_star: r.lambda * (xi_s / r.p_lo).sqrt() + r.b_bar * (r.epsilon / (2.0 * PI)).sqrt(),
        decay_holds: c1 + c3 + 2.0 * c2 <= r.p_lo * r.q,
        discriminant_holds: 4.0 * c1 * (c3 + 2.0 * c4) < p2 * r.q * r.q,
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
