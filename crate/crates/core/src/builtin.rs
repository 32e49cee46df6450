//! Ready-made scenarios: a planar system with rotating input direction, a scalar system
//! with an oscillating input gain, and the scalar integrator.

use serde::{Deserialize, Serialize};

use crate::certificate::{LowerBoundRule, DEFAULT_GRID};
use crate::error::{Error, Result};
use crate::mat::{opnorm, Mat};
use crate::scenario::{
    CertificateRecipe, EsParams, NoiseModel, Scenario, SystemModel, TimeFn, Xi0Policy,
};

pub const BUILTIN_NAMES: [&str; 3] = ["robot2d", "scalar1d", "integrator"];

/// Drift matrix of `robot2d`.
pub fn robot_drift() -> Mat {
    Mat::from_rows(&[[2.1, 4.9], [-7.5, 3.6]])
}

/// Parameters a builtin exposes for adjustment. `None` keeps the builtin default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    /// Input oscillation frequency (`robot2d`, `scalar1d`).
    #[serde(default)]
    pub beta: Option<f64>,
    /// `K = K_scale·I`.
    #[serde(default, rename = "K_scale")]
    pub k_scale: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

fn es(epsilon: f64, weight_b: f64) -> EsParams {
    EsParams {
        epsilon,
        sigma0: 1.0,
        weight_a: 0.1,
        weight_b,
        xi0_policy: Xi0Policy::default(),
    }
}

/// `ẋ = Ax + [cos βt, sin βt]ᵀu` with `K = 300I`, `β = 10⁴`, `ε = 10⁻⁷`, `a = 0.1`, `b = 1`.
pub fn robot2d(params: &BuiltinParams) -> Result<Scenario> {
    let beta = params.beta.unwrap_or(1e4);
    let k = params.k_scale.unwrap_or(300.0);
    let a = robot_drift();
    let scenario = Scenario {
        model: SystemModel {
            n: 2,
            a_bar: opnorm(&a),
            a: TimeFn::constant(a),
            b: TimeFn::SinCosColumn { beta },
            b_bar: 1.0,
            db_bar: libm::fabs(beta),
            k: Mat::identity(2).scale(k),
        },
        noise: NoiseModel::zero(),
        es: es(params.epsilon.unwrap_or(1e-7), 1.0),
        certificate: CertificateRecipe::Excitation {
            delta: None,
            lower_bound: LowerBoundRule::Stated,
            grid: DEFAULT_GRID,
        },
        delay: None,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// `ẋ = x + cos(βt)u` with `k = 20`, `β = 500`, `ε = 10⁻⁵`, `a = 0.1`, `b = 1`.
pub fn scalar1d(params: &BuiltinParams) -> Result<Scenario> {
    let beta = params.beta.unwrap_or(500.0);
    let k = params.k_scale.unwrap_or(20.0);
    let scenario = Scenario {
        model: SystemModel {
            n: 1,
            a: TimeFn::constant(Mat::scalar(1.0)),
            b: TimeFn::CosScalar { beta },
            a_bar: 1.0,
            b_bar: 1.0,
            db_bar: libm::fabs(beta),
            k: Mat::scalar(k),
        },
        noise: NoiseModel::zero(),
        es: es(params.epsilon.unwrap_or(1e-5), 1.0),
        certificate: CertificateRecipe::Floquet,
        delay: None,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// `ẋ = u` with `K = P = 1`, `q = 2`, `ε = 10⁻²`, `a = 0.1`, `b = 0.9`.
pub fn integrator(params: &BuiltinParams) -> Result<Scenario> {
    if params.beta.is_some() {
        return Err(Error::invalid("beta", "integrator has no oscillation frequency"));
    }
    let k = params.k_scale.unwrap_or(1.0);
    let scenario = Scenario {
        model: SystemModel {
            n: 1,
            a: TimeFn::constant(Mat::scalar(0.0)),
            b: TimeFn::constant(Mat::scalar(1.0)),
            a_bar: 0.0,
            b_bar: 1.0,
            db_bar: 0.0,
            k: Mat::scalar(k),
        },
        noise: NoiseModel::zero(),
        es: es(params.epsilon.unwrap_or(1e-2), 0.9),
        // With A = 0 and B = 1, P = 1 gives Ṗ + 2(A − BBᵀK)P = −2k.
        certificate: CertificateRecipe::User {
            p: TimeFn::constant(Mat::scalar(1.0)),
            q: 2.0 * k,
            p_lo: 1.0,
            p_hi: 1.0,
            pdot_bar: 0.0,
        },
        delay: None,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn builtin(name: &str, params: &BuiltinParams) -> Result<Scenario> {
    match name {
        "robot2d" => robot2d(params),
        "scalar1d" => scalar1d(params),
        "integrator" => integrator(params),
        other => Err(Error::Invalid {
            field: "builtin".into(),
            reason: alloc::format!(
                "unknown builtin {other:?}; expected one of {}",
                BUILTIN_NAMES.join(", ")
            ),
        }),
    }
}

/// Roots of the characteristic polynomial of a real 2×2 matrix as `(re, im)` pairs.
pub fn eigenvalues_2x2(m: &Mat) -> [(f64, f64); 2] {
    let tr = m.trace();
    let det = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0);
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = libm::sqrt(disc);
        [(tr / 2.0 - s, 0.0), (tr / 2.0 + s, 0.0)]
    } else {
        let s = libm::sqrt(-disc);
        [(tr / 2.0, -s), (tr / 2.0, s)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::verify_certificate;

    #[test]
    fn builtins_validate_and_build_certificates() {
        for name in BUILTIN_NAMES {
            let s = builtin(name, &BuiltinParams::default()).unwrap();
            let cert = s.build_certificate().unwrap();
            assert!(cert.q > 0.0, "{name}");
        }
    }

    #[test]
    fn unknown_builtin_rejected() {
        assert!(builtin("pendulum", &BuiltinParams::default()).is_err());
    }

    #[test]
    fn robot_drift_is_unstable_with_complex_poles() {
        let [(re0, im0), (re1, im1)] = eigenvalues_2x2(&robot_drift());
        assert!((re0 - 2.85).abs() < 1e-12 && (re1 - 2.85).abs() < 1e-12);
        // Trace 5.7 and determinant 44.31 fix the imaginary part at √(44.31 − 2.85²).
        let expected = (44.31f64 - 2.85 * 2.85).sqrt();
        assert!((im1 - expected).abs() < 1e-12 && (im0 + expected).abs() < 1e-12);
    }

    #[test]
    fn integrator_certificate_is_exact() {
        let s = integrator(&BuiltinParams::default()).unwrap();
        let cert = s.build_certificate().unwrap();
        assert_eq!((cert.q, cert.p_lo, cert.p_hi), (2.0, 1.0, 1.0));
        verify_certificate(&cert, &s.model, 64).unwrap().require(1e-12).unwrap();
    }

    #[test]
    fn scalar_with_small_gain_has_no_floquet_certificate() {
        let s = scalar1d(&BuiltinParams {
            k_scale: Some(1.0),
            ..Default::default()
        })
        .unwrap();
        assert!(s.build_certificate().is_err());
    }
}
