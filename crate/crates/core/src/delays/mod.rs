//! Delays: measurement delays treated as bounded phase noise, and known constant input
//! delays handled by the reduction-model (predictor) transformation
//! `ζ(t) = x(t) + ∫_{t−τ}^{t} Φ_E(t−τ, m)B(m+τ)u(m) dm`, `E(s) = A(s+τ)`.
//!
//! Under that transformation `ζ̇ = A(t+τ)ζ + B_new(t)u(t)` with `B_new(t) = Φ_E(t−τ, t)B(t+τ)`,
//! so the undelayed theory applies to `ζ` with `B_new` in place of `B`.

mod predictor;

pub use predictor::{integrate_input_delay, PredictorRun, StageControls, TransferKernel, MAX_DELAY_STEPS};

use core::f64::consts::PI;

use libm::{exp, sqrt};
use serde::{Deserialize, Serialize};

use crate::certificate::{
    excitation_certificate_unchecked, excitation_margin, Certificate, ExcitationInputs,
    ExcitationSummary, LowerBoundRule, PeReport,
};
use crate::constants::{ConstantsReport, EnvelopeParams};
use crate::error::{Error, Result};
use crate::mat::{expm, opnorm, svd_extremes, Mat};
use crate::scenario::{SystemModel, TimeFn, SUP_SAMPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayKind {
    Measurement,
    Input,
}

/// RK4 steps used for transition matrices of time-varying `A` over one delay interval.
pub const TRANSITION_STEPS: usize = 2000;

/// `Φ_E(t−τ, t)`: transition of `ż = A(s+τ)z` from `s = t` back to `s = t − τ`.
pub fn backward_transition(a: &TimeFn, tau: f64, t: f64, steps: usize) -> Result<Mat> {
    if a.is_constant() {
        return expm(&a.eval(0.0).scale(-tau));
    }
    let n = a.shape().0;
    let steps = steps.max(1);
    let h = -tau / steps as f64;
    let mut phi = Mat::identity(n);
    // s runs from t down to t − τ; E(s) = A(s + τ).
    let e = |s: f64| a.eval(s + tau);
    for i in 0..steps {
        let s = t + h * i as f64;
        let k1 = &e(s) * &phi;
        let k2 = &e(s + 0.5 * h) * &(&phi + &k1.scale(0.5 * h));
        let k3 = &e(s + 0.5 * h) * &(&phi + &k2.scale(0.5 * h));
        let k4 = &e(s + h) * &(&phi + &k3.scale(h));
        let incr = &(&(&k1 + &k2.scale(2.0)) + &k3.scale(2.0)) + &k4;
        phi = &phi + &incr.scale(h / 6.0);
    }
    if !phi.is_finite() {
        return Err(Error::NonFinite("transition matrix".into()));
    }
    Ok(phi)
}

/// `B_new(t) = Φ_E(t−τ, t)B(t+τ)`.
pub fn b_new(a: &TimeFn, b: &TimeFn, tau: f64, t: f64) -> Result<Mat> {
    let phi = backward_transition(a, tau, t, TRANSITION_STEPS)?;
    Ok(&phi * &b.eval(t + tau))
}

/// `B_new` as a time function: exact for constant `A`, tabulated over one period otherwise.
pub fn b_new_fn(model: &SystemModel, tau: f64) -> Result<TimeFn> {
    if model.a.is_constant() {
        return Ok(TimeFn::Transformed {
            left: expm(&model.a.eval(0.0).scale(-tau))?,
            inner: alloc::boxed::Box::new(model.b.clone()),
            shift: tau,
        });
    }
    let period = model.sampling_period().ok_or_else(|| {
        Error::invalid("A", "time-varying A needs a declared period to tabulate B_new")
    })?;
    let n = SUP_SAMPLES;
    let times: alloc::vec::Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
    let values = times
        .iter()
        .map(|&t| b_new(&model.a, &model.b, tau, t))
        .collect::<Result<_>>()?;
    Ok(TimeFn::Tabulated {
        times,
        values,
        period: Some(period),
    })
}

/// Extreme singular values of `e^{−τA}` and the conditioning `L_* = (σ_max/σ_min)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub l_star: f64,
}

pub fn conditioning(a: &Mat, tau: f64) -> Result<Conditioning> {
    let (sigma_min, sigma_max) = svd_extremes(&expm(&a.scale(-tau))?)?;
    if !(sigma_min > 0.0) {
        return Err(Error::invalid("A", "e^{-tau A} is numerically singular"));
    }
    let r = sigma_max / sigma_min;
    Ok(Conditioning {
        sigma_min,
        sigma_max,
        l_star: r * r,
    })
}

/// Feasibility of the excitation certificate for the predictor loop with constant `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorFeasibility {
    pub tau: f64,
    pub conditioning: Conditioning,
    /// Negative when the construction applies.
    pub margin: f64,
    pub feasible: bool,
    pub b_lo_new: f64,
    pub gamma_bar_new: f64,
    pub k_new: Mat,
}

/// Checks the conditioning-weighted excitation inequality for `B_new = e^{−τA}B(t+τ)`
/// and returns the transformed excitation data.
///
/// `rbar` is `sup r(K_s A + Aᵀ K_s)` for the undelayed `K`.
#[allow(clippy::too_many_arguments)]
pub fn check_predictor(
    a: &Mat,
    tau: f64,
    k: &Mat,
    pe: &PeReport,
    a_bar: f64,
    b_bar: f64,
    rbar: f64,
) -> Result<PredictorFeasibility> {
    let cond = conditioning(a, tau)?;
    let k_sym = k.symmetric_part();
    let lmin = crate::mat::sym_eig(&k_sym)?.min();
    let margin = excitation_margin(
        rbar,
        opnorm(k),
        lmin,
        pe.delta,
        pe.gamma_bar,
        b_bar,
        a_bar,
        pe.b_lo,
        cond.l_star,
    );
    let s2 = cond.sigma_min * cond.sigma_min;
    Ok(PredictorFeasibility {
        tau,
        conditioning: cond,
        margin,
        feasible: margin < 0.0,
        b_lo_new: s2 * pe.b_lo,
        gamma_bar_new: cond.sigma_max * cond.sigma_max * pe.gamma_bar,
        k_new: k.scale(1.0 / s2),
    })
}

/// Certificate for the `ζ` loop built from the transformed excitation data
/// (`B_new`, `K_new`, `b_lo_new`, `Γ̄_new`, `|B_new| ≤ σ_max B̄`).
///
/// The certificate is returned even when the feasibility check fails; callers must consult
/// `PredictorFeasibility::feasible` (the CLI and the tables do).
pub fn predictor_certificate(
    model: &SystemModel,
    tau: f64,
    pe: &PeReport,
    rule: LowerBoundRule,
) -> Result<(Certificate, PredictorFeasibility, ExcitationSummary)> {
    if !model.a.is_constant() {
        return Err(Error::invalid(
            "A",
            "the predictor certificate construction needs constant A",
        ));
    }
    let a = model.a.eval(0.0);
    let rbar = crate::certificate::rbar_of(model)?;
    let feas = check_predictor(&a, tau, &model.k, pe, model.a_bar, model.b_bar, rbar)?;
    let pe_new = PeReport {
        b_lo: feas.b_lo_new,
        gamma_bar: feas.gamma_bar_new,
        ..pe.clone()
    };
    let b_new = b_new_fn(model, tau)?;
    let s2 = feas.conditioning.sigma_min * feas.conditioning.sigma_min;
    let (cert, summary) = excitation_certificate_unchecked(&ExcitationInputs {
        k: &feas.k_new,
        b: &b_new,
        a_bar: model.a_bar,
        b_bar: feas.conditioning.sigma_max * model.b_bar,
        rbar: rbar / s2,
        pe: &pe_new,
        rule,
    })?;
    Ok((cert, feas, summary))
}

/// Model seen by the `ζ` loop: `A(t+τ)`, `B_new`, `K_new`, bounds scaled by `σ_max(e^{−τA})`.
pub fn transformed_model(model: &SystemModel, tau: f64, k_new: &Mat) -> Result<SystemModel> {
    let b = b_new_fn(model, tau)?;
    let scale = if model.a.is_constant() {
        svd_extremes(&expm(&model.a.eval(0.0).scale(-tau))?)?.1
    } else {
        exp(model.a_bar * tau)
    };
    let a = match &model.a {
        TimeFn::Constant { .. } => model.a.clone(),
        other => TimeFn::Transformed {
            left: Mat::identity(model.n),
            inner: alloc::boxed::Box::new(other.clone()),
            shift: tau,
        },
    };
    Ok(SystemModel {
        n: model.n,
        a,
        b,
        a_bar: model.a_bar,
        b_bar: scale * model.b_bar,
        db_bar: scale * model.db_bar,
        k: k_new.clone(),
    })
}

/// Quantities behind the measurement-delay budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDelayBound {
    /// `(λ/√p_lo)·√(ξ_l(ξ₀−ξ_s)/(ξ_l−ξ₀))`
    pub c_star: f64,
    /// `(λ/√p_lo)·√ξ_s + B̄√(ε/2π)`
    pub b_u: f64,
    /// `c_star + b_u + eps0`
    pub b_a: f64,
    /// `2|K|B_a(ĀB_a + √(2π/ε)B̄)`: phase error per unit of delay.
    pub gain: f64,
}

pub fn measurement_delay_bound(
    report: &ConstantsReport,
    env: &EnvelopeParams,
    eps0: f64,
) -> Result<MeasurementDelayBound> {
    if !(eps0 > 0.0) {
        return Err(Error::invalid("eps0", "slack must be positive"));
    }
    let c_star = report.transient_amplitude(env)?;
    let b_u = report.ultimate_bound()?;
    let b_a = c_star + b_u + eps0;
    let gain = 2.0
        * report.norms.k_norm
        * b_a
        * (report.a_bar * b_a + sqrt(2.0 * PI / report.epsilon) * report.b_bar);
    Ok(MeasurementDelayBound {
        c_star,
        b_u,
        b_a,
        gain,
    })
}

/// Phase-noise bound `δ̄` produced by measurement delays bounded by `tau_bar`.
pub fn delta_bar_of_tau(
    report: &ConstantsReport,
    env: &EnvelopeParams,
    tau_bar: f64,
    eps0: f64,
) -> Result<f64> {
    Ok(measurement_delay_bound(report, env, eps0)?.gain * tau_bar)
}

/// Largest measurement delay whose phase error stays within `delta_bar`.
pub fn max_tau(
    report: &ConstantsReport,
    env: &EnvelopeParams,
    delta_bar: f64,
    eps0: f64,
) -> Result<f64> {
    Ok(delta_bar / measurement_delay_bound(report, env, eps0)?.gain)
}

/// Ultimate bound on `|x|` for the predictor loop: the `ζ` bound plus a bound on
/// `limsup |∫_{t−τ}^{t} Φ_E B u|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorBound {
    /// Ultimate bound on `|ζ|`.
    pub zeta_bound: f64,
    /// Bound on `limsup |𝒯|`.
    pub transfer_bound: f64,
    pub x_bound: f64,
}

/// Evaluates the predictor bound. `report` must be computed for the `ζ` loop; `model` is the
/// original plant (its `B̄`, `D̄_B`, `Ā`, `|K|` enter the transfer term) and `b_new_sup`
/// bounds `|B_new|`.
pub fn predictor_bound(
    report: &ConstantsReport,
    model: &SystemModel,
    tau: f64,
    b_new_sup: f64,
) -> Result<PredictorBound> {
    report.conditions.require()?;
    let xi_s = report
        .xi_s
        .ok_or_else(|| Error::infeasible("xi_s undefined", report.conditions.discriminant.slack))?;
    let eps = report.epsilon;
    let k_norm = opnorm(&model.k);
    let (a_bar, b_bar, db_bar) = (model.a_bar, model.b_bar, model.db_bar);
    // Bound on |Φ_E| over one delay window.
    let k_star = exp(a_bar * tau);
    let c_star = b_bar * (k_star + 1.0) + tau * a_bar * b_bar * k_star + tau * db_bar * k_star;
    let zeta_level = report.lambda * sqrt(xi_s / report.p_lo) + b_new_sup * sqrt(eps / (2.0 * PI));
    let per_component = eps / (2.0 * PI) * c_star
        + k_norm * a_bar * eps / PI * tau * b_bar * k_star * zeta_level * zeta_level
        + k_norm * tau * sqrt(2.0 * eps / PI) * k_star * b_new_sup * b_bar * zeta_level;
    let transfer_bound = 2.0 * sqrt(2.0 * PI / eps) * per_component;
    let zeta_bound = report.ultimate_bound()?;
    Ok(PredictorBound {
        zeta_bound,
        transfer_bound,
        x_bound: zeta_bound + transfer_bound,
    })
}

/// Closed-form constants for `ẋ = u(t−τ)` with `P = K = 1`, `q = 2` and unit weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorPredictorReport {
    pub epsilon: f64,
    pub sigma0: f64,
    pub tau: f64,
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub xi_s: Option<f64>,
    pub xi_l: Option<f64>,
    /// Decay rate `0.5(ξ_l − ξ_s)c₃` of the comparison solution.
    pub rate: Option<f64>,
    /// `c₁ + c₃ + 2c₂ ≤ 2`
    pub decay_holds: bool,
    /// `c₁c₃ < 1`
    pub discriminant_holds: bool,
    /// `2(1+ε/4π)²(σ₀²+ε/2π) < ξ_l`
    pub initial_state_holds: bool,
}

impl IntegratorPredictorReport {
    pub fn new(epsilon: f64, sigma0: f64, tau: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 2.0 * PI) {
            return Err(Error::invalid("epsilon", "must lie in (0, 2*pi]"));
        }
        let lambda = 4.0 * PI / (4.0 * PI - epsilon);
        let c1 = 2.0 * sqrt(2.0) * sqrt(epsilon / PI) * (1.0 + epsilon / (4.0 * PI));
        let c2 = 7.0 * lambda * epsilon / (2.0 * PI);
        let c3 = 2.0 * lambda * lambda * sqrt(2.0 * epsilon / PI);
        let disc = 1.0 - c1 * c3;
        let (xi_s, xi_l) = if disc >= 0.0 {
            (
                Some(c1 / (1.0 + sqrt(disc))),
                Some((1.0 + sqrt(disc)) / c3),
            )
        } else {
            (None, None)
        };
        let rate = xi_s.zip(xi_l).map(|(s, l)| 0.5 * (l - s) * c3);
        let f = 1.0 + epsilon / (4.0 * PI);
        let level = 2.0 * f * f * (sigma0 * sigma0 + epsilon / (2.0 * PI));
        Ok(IntegratorPredictorReport {
            epsilon,
            sigma0,
            tau,
            lambda,
            c1,
            c2,
            c3,
            xi_s,
            xi_l,
            rate,
            decay_holds: c1 + c3 + 2.0 * c2 <= 2.0,
            discriminant_holds: disc > 0.0,
            initial_state_holds: xi_l.is_some_and(|l| level < l),
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.decay_holds && self.discriminant_holds && self.initial_state_holds
    }

    /// `2(1+ε/4π)²(σ₀²+ε/2π)`.
    pub fn initial_level(&self) -> f64 {
        let f = 1.0 + self.epsilon / (4.0 * PI);
        2.0 * f * f * (self.sigma0 * self.sigma0 + self.epsilon / (2.0 * PI))
    }

    /// Bound on `|x(t)|` given `ξ₀` and the current `|∫_{t−τ}^{t} u|`.
    pub fn bound(&self, xi0: f64, t: f64, integral_abs: f64) -> Result<f64> {
        let (Some(xi_s), Some(xi_l), Some(rate)) = (self.xi_s, self.xi_l, self.rate) else {
            return Err(Error::infeasible("c1*c3 < 1", 1.0 - self.c1 * self.c3));
        };
        if !(xi0 >= xi_s && xi0 < xi_l) {
            return Err(Error::invalid("xi0", "must lie in [xi_s, xi_l)"));
        }
        let e = exp(-rate * t);
        let frac = ((xi0 - xi_s) * xi_l * e + xi_s * (xi_l - xi0)) / ((xi0 - xi_s) * e + xi_l - xi0);
        Ok(self.lambda * sqrt(frac) + sqrt(self.epsilon / (2.0 * PI)) + integral_abs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn robot_a() -> Mat {
        Mat::from_rows(&[[2.1, 4.9], [-7.5, 3.6]])
    }

    #[test]
    fn b_new_with_zero_drift_is_shift() {
        let a = TimeFn::constant(Mat::zeros(2, 2));
        let b = TimeFn::SinCosColumn { beta: 3.0 };
        let v = b_new(&a, &b, 0.4, 1.1).unwrap();
        assert!((&v - &b.eval(1.5)).max_abs() < 1e-15);
    }

    #[test]
    fn b_new_for_integrator_is_one() {
        let a = TimeFn::constant(Mat::scalar(0.0));
        let b = TimeFn::constant(Mat::scalar(1.0));
        assert_eq!(b_new(&a, &b, 0.03, 7.0).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn b_new_constant_a_matches_transition_ode() {
        let a = robot_a();
        let b = TimeFn::SinCosColumn { beta: 1e4 };
        let tau = 0.15;
        // The same matrix written as a (trivially) time-varying table forces the ODE route.
        let tv = TimeFn::Tabulated {
            times: alloc::vec![0.0, 0.5],
            values: alloc::vec![a.clone(), a.clone()],
            period: Some(1.0),
        };
        for t in [0.0, 0.37, 1.2] {
            let closed = b_new(&TimeFn::constant(a.clone()), &b, tau, t).unwrap();
            let ode = &backward_transition(&tv, tau, t, 4000).unwrap() * &b.eval(t + tau);
            assert!((&closed - &ode).max_abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn conditioning_of_scalar_and_zero_delay() {
        assert_eq!(conditioning(&Mat::scalar(3.0), 0.7).unwrap().l_star, 1.0);
        let c = conditioning(&robot_a(), 0.0).unwrap();
        assert_eq!((c.sigma_min, c.sigma_max, c.l_star), (1.0, 1.0, 1.0));
    }

    #[test]
    fn conditioning_invariant_under_rotation() {
        let (s, c) = (libm::sin(0.7), libm::cos(0.7));
        let q = Mat::from_rows(&[[c, -s], [s, c]]);
        let a = robot_a();
        let rotated = &(&q.transpose() * &a) * &q;
        let l1 = conditioning(&a, 0.5).unwrap().l_star;
        let l2 = conditioning(&rotated, 0.5).unwrap().l_star;
        assert_relative_eq!(l1, l2, max_relative = 1e-10);
    }

    #[test]
    fn integrator_predictor_reference_values() {
        let r = IntegratorPredictorReport::new(1e-2, 1.0, 1e-2).unwrap();
        assert_relative_eq!(r.c1, 0.15970, max_relative = 1e-4);
        assert_relative_eq!(r.c3, 0.15983, max_relative = 1e-4);
        assert!(r.is_feasible());
        let big = IntegratorPredictorReport::new(2.0 * PI, 1.0, 1e-2).unwrap();
        assert!(!big.is_feasible());
    }
}
