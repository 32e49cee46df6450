//! Envelope constants for the bounded extremum-seeking loop.
//!
//! Given sampled suprema of the coefficient products, a certificate `(q, p_lo, p_hi)` and
//! the dither parameter `ε`, the state obeys `|x(t)| ≤ (λ/√p_lo)·√ξ(t) + B̄√(ε/2π)` where
//! `ξ` solves the scalar comparison equation `ξ̇ = d₁ − (q/2)ξ + (d₃/p_lo²)ξ²` started at
//! an admissible `ξ₀`. The smaller root `ξ_s` of its right side sets the ultimate bound.

use core::f64::consts::PI;

use libm::{exp, sqrt};
use serde::{Deserialize, Serialize};

use crate::certificate::{rbar_of, Certificate};
use crate::error::{Error, Result};
use crate::mat::opnorm;
use crate::scenario::{
    EsParams, NoiseModel, SystemModel, Xi0Policy, SUP_MARGIN, SUP_SAMPLES,
};

/// Sampled suprema over time of the coefficient products, each inflated by [`SUP_MARGIN`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupNorms {
    pub b: f64,
    pub a: f64,
    pub db: f64,
    /// `|B Bᵀ K|`
    pub bbk: f64,
    /// `|A B|`
    pub ab: f64,
    /// `|B Bᵀ K B|`
    pub bbkb: f64,
    /// `|H B|` sampled directly, for reference.
    pub hb_direct: f64,
    /// `|H B|` as used: `|A B| + |B Bᵀ K B|`.
    pub hb: f64,
    /// `|K B|`
    pub kb: f64,
    /// `|B Bᵀ K H|`
    pub bbkh: f64,
    /// `|H B Bᵀ K|`
    pub hbbk: f64,
    /// `|B Bᵀ K B Bᵀ K|`
    pub bbkbbk: f64,
    /// `sup r(K_s A + Aᵀ K_s)`
    pub rbar: f64,
    /// Operator norm of `K` (exact, no margin).
    pub k_norm: f64,
    pub margin: f64,
    pub samples: usize,
}

/// Samples every supremum the constants need over one coefficient period.
pub fn sup_norms(model: &SystemModel, samples_per_period: usize) -> Result<SupNorms> {
    let period = model.sampling_period();
    let samples = model.sampling_count(samples_per_period);
    let k = &model.k;

    let mut raw = [0.0f64; 11];
    let grid: alloc::vec::Vec<f64> = match period {
        None => alloc::vec![0.0],
        Some(p) => (0..samples)
            .map(|i| p * i as f64 / samples as f64)
            .collect(),
    };
    for &t in &grid {
        let a = model.a.eval(t);
        let b = model.b.eval(t);
        let db = model.b.derivative(t);
        let bbk = &(&b * &b.transpose()) * k;
        let h = &a - &bbk;
        let ab = &a * &b;
        let bbkb = &bbk * &b;
        let values = [
            opnorm(&b),
            opnorm(&a),
            opnorm(&db),
            opnorm(&bbk),
            opnorm(&ab),
            opnorm(&bbkb),
            opnorm(&(&h * &b)),
            opnorm(&(k * &b)),
            opnorm(&(&bbk * &h)),
            opnorm(&(&h * &bbk)),
            opnorm(&(&bbk * &bbk)),
        ];
        for (r, v) in raw.iter_mut().zip(values) {
            *r = r.max(v);
        }
    }
    let inflate = |v: f64| v * (1.0 + SUP_MARGIN);
    let [b, a, db, bbk, ab, bbkb, hb_direct, kb, bbkh, hbbk, bbkbbk] = raw.map(inflate);
    Ok(SupNorms {
        b,
        a,
        db,
        bbk,
        ab,
        bbkb,
        hb_direct,
        hb: ab + bbkb,
        kb,
        bbkh,
        hbbk,
        bbkbbk,
        rbar: rbar_of(model)?,
        k_norm: opnorm(k),
        margin: SUP_MARGIN,
        samples: grid.len(),
    })
}

/// One inequality of the feasibility conditions with its slack (positive when it holds).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    pub slack: f64,
}

impl Condition {
    fn le(lhs: f64, rhs: f64) -> Self {
        Condition {
            holds: lhs <= rhs,
            slack: rhs - lhs,
        }
    }

    fn lt(lhs: f64, rhs: f64) -> Self {
        Condition {
            holds: lhs < rhs,
            slack: rhs - lhs,
        }
    }
}

/// The four feasibility conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    /// `ε|BBᵀK| ≤ 2π`
    pub dither_rate: Condition,
    /// `2d₂ ≤ p_lo·q`
    pub decay: Condition,
    /// `16d₁d₃ < q²p_lo²`
    pub discriminant: Condition,
    /// `2p_hi(1 + ε|BBᵀK|/4π)²(σ₀² + B̄²ε/2π) < ξ_l`
    pub initial_state: Condition,
}

impl Conditions {
    pub fn all_hold(&self) -> bool {
        self.dither_rate.holds
            && self.decay.holds
            && self.discriminant.holds
            && self.initial_state.holds
    }

    /// The first failing condition as an error.
    pub fn require(&self) -> Result<()> {
        let list = [
            ("dither rate: eps*|BB^T K| <= 2*pi", self.dither_rate),
            ("decay: 2*d2 <= p_lo*q", self.decay),
            ("discriminant: 16*d1*d3 < q^2*p_lo^2", self.discriminant),
            ("initial state level below xi_l", self.initial_state),
        ];
        for (what, c) in list {
            if !c.holds {
                return Err(Error::infeasible(what, c.slack));
            }
        }
        Ok(())
    }
}

/// Everything computed from a scenario at one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub epsilon: f64,
    pub sigma0: f64,
    pub weight_a: f64,
    pub weight_b: f64,
    pub delta_bar: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub db_bar: f64,
    pub q: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub norms: SupNorms,
    pub m_c: f64,
    pub m_d: f64,
    pub lambda: f64,
    /// `1 + ε|BBᵀK|/4π`
    pub dither_factor: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// `q²p_lo⁴ − 16d₁d₃p_lo²`
    pub discriminant: f64,
    /// Roots of the comparison right side; `None` when the discriminant is negative.
    pub xi_s: Option<f64>,
    /// Infinite when `d₃ = 0`.
    pub xi_l: Option<f64>,
    pub r0: Option<f64>,
    pub b_star: Option<f64>,
    pub conditions: Conditions,
}

/// Admissible interval for `ξ₀` and the chosen value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub xi0: f64,
    pub xi0_lo: f64,
    pub xi0_hi: f64,
}

/// Roots `(ξ_s, ξ_l)` of `d₁ − (q/2)ξ + (d₃/p²)ξ²`, or `None` if they are complex.
///
/// `ξ_s` uses the form `4d₁p²/(qp² + √disc)`, which stays accurate as `d₁d₃ → 0`.
pub fn comparison_roots(d1: f64, d3: f64, q: f64, p_lo: f64) -> Option<(f64, f64)> {
    let p2 = p_lo * p_lo;
    let disc = q * q * p2 * p2 - 16.0 * d1 * d3 * p2;
    if disc < 0.0 {
        return None;
    }
    let s = q * p2 + sqrt(disc);
    let xi_s = 4.0 * d1 * p2 / s;
    let xi_l = if d3 > 0.0 {
        s / (4.0 * d3)
    } else {
        f64::INFINITY
    };
    Some((xi_s, xi_l))
}

/// Right side of the comparison equation.
pub fn comparison_rhs(d1: f64, d3: f64, q: f64, p_lo: f64, xi: f64) -> f64 {
    d1 - 0.5 * q * xi + d3 / (p_lo * p_lo) * xi * xi
}

/// Exact solution of the comparison equation from `ξ(0) = xi0` with `ξ_s ≤ ξ₀ < ξ_l`.
pub fn comparison_closed_form(
    d1: f64,
    d3: f64,
    q: f64,
    p_lo: f64,
    xi0: f64,
    t: f64,
) -> Result<f64> {
    let (xi_s, xi_l) = comparison_roots(d1, d3, q, p_lo)
        .ok_or_else(|| Error::infeasible("comparison roots are complex", -1.0))?;
    if !(xi0 >= xi_s && xi0 < xi_l) {
        return Err(Error::invalid("xi0", "must lie in [xi_s, xi_l)"));
    }
    if xi_l.is_infinite() {
        return Ok(xi_s + (xi0 - xi_s) * exp(-0.5 * q * t));
    }
    let r0 = (xi_l - xi_s) * d3 / (p_lo * p_lo);
    let e = exp(-r0 * t);
    Ok(((xi0 - xi_s) * xi_l * e + xi_s * (xi_l - xi0)) / ((xi0 - xi_s) * e + xi_l - xi0))
}

/// Raw constants before the comparison roots: `(m_c, m_d, λ, factor, c₁, c₂, c₃, c₄)`.
struct Raw {
    m_c: f64,
    m_d: f64,
    lambda: f64,
    factor: f64,
    c: [f64; 4],
}

fn raw_constants(
    norms: &SupNorms,
    model: &SystemModel,
    delta_bar: f64,
    p_hi: f64,
    eps: f64,
) -> Raw {
    let n = norms;
    let (a_bar, b_bar, db_bar, k) = (model.a_bar, model.b_bar, model.db_bar, n.k_norm);
    let b3 = b_bar * b_bar * b_bar;
    let factor = 1.0 + eps * n.bbk / (4.0 * PI);
    let lambda = 4.0 * PI / (4.0 * PI - eps * n.bbk);
    let m_c = (n.hb + n.bbkb + db_bar) / sqrt(2.0 * PI)
        + sqrt(2.0 / (PI * PI * PI)) * a_bar * k * b3 * eps
        + b_bar * delta_bar * sqrt(2.0 * PI) / eps;
    let m_d = 2.0 * b_bar * a_bar * k * sqrt(2.0 / PI);

    let c1 = 2.0 * p_hi * sqrt(eps) * factor * (m_c + 2.0 * b3 * k * delta_bar / sqrt(2.0 * PI));
    let c2 = 2.0
        * p_hi
        * (lambda * eps * eps / (2.0 * PI * PI) * b_bar * b_bar * n.rbar * n.bbk
            + lambda * eps / PI * b_bar * n.kb * n.bbk
            + lambda * eps / (4.0 * PI) * (n.bbkh + n.hbbk + n.bbkbbk))
        + lambda * eps / PI * p_hi * b_bar * db_bar * k
        + 4.0 * lambda * b_bar * b_bar * k * factor * delta_bar * p_hi;
    let c3 = 2.0
        * p_hi
        * sqrt(2.0 * eps / PI)
        * (lambda * lambda * n.bbk * n.kb + 2.0 * lambda * lambda * factor * b_bar * a_bar * k);
    let c4 = 2.0 * lambda * lambda * lambda * eps * p_hi / PI * n.rbar * n.bbk;
    Raw {
        m_c,
        m_d,
        lambda,
        factor,
        c: [c1, c2, c3, c4],
    }
}

/// Constants for given suprema (reuse `norms` across `ε` or `σ₀` sweeps).
pub fn compute_with_norms(
    norms: &SupNorms,
    model: &SystemModel,
    noise: &NoiseModel,
    cert: &Certificate,
    es: &EsParams,
) -> Result<ConstantsReport> {
    es.validate()?;
    let eps = es.epsilon;
    let rate = Condition::le(eps * norms.bbk, 2.0 * PI);
    if !rate.holds {
        return Err(Error::infeasible(
            "dither rate: eps*|BB^T K| <= 2*pi",
            rate.slack,
        ));
    }
    let (q, p_lo, p_hi) = (cert.q, cert.p_lo, cert.p_hi);
    let raw = raw_constants(norms, model, noise.delta_bar, p_hi, eps);
    let [c1, c2, c3, c4] = raw.c;
    let (a, b) = (es.weight_a, es.weight_b);
    let d1 = a * c1 / 2.0;
    let d2 = 0.5 * (c1 / a + b * c3) + c2;
    let d3 = c4 + c3 / (2.0 * b);
    let p2 = p_lo * p_lo;
    let discriminant = q * q * p2 * p2 - 16.0 * d1 * d3 * p2;
    let roots = comparison_roots(d1, d3, q, p_lo);
    let (xi_s, xi_l) = match roots {
        Some((s, l)) => (Some(s), Some(l)),
        None => (None, None),
    };
    let r0 = roots.map(|_| sqrt(discriminant) / (2.0 * p2));
    let b_star = xi_s.map(|s| raw.lambda * sqrt(s / p_lo) + model.b_bar * sqrt(eps / (2.0 * PI)));
    let level = initial_level(p_hi, raw.factor, es.sigma0, model.b_bar, eps);
    let conditions = Conditions {
        dither_rate: rate,
        decay: Condition::le(2.0 * d2, p_lo * q),
        discriminant: Condition::lt(16.0 * d1 * d3, q * q * p2),
        initial_state: match xi_l {
            Some(l) => Condition::lt(level, l),
            None => Condition {
                holds: false,
                slack: f64::NEG_INFINITY,
            },
        },
    };
    Ok(ConstantsReport {
        epsilon: eps,
        sigma0: es.sigma0,
        weight_a: a,
        weight_b: b,
        delta_bar: noise.delta_bar,
        a_bar: model.a_bar,
        b_bar: model.b_bar,
        db_bar: model.db_bar,
        q,
        p_lo,
        p_hi,
        norms: norms.clone(),
        m_c: raw.m_c,
        m_d: raw.m_d,
        lambda: raw.lambda,
        dither_factor: raw.factor,
        c1,
        c2,
        c3,
        c4,
        d1,
        d2,
        d3,
        discriminant,
        xi_s,
        xi_l,
        r0,
        b_star,
        conditions,
    })
}

/// Samples the suprema and computes all constants.
pub fn compute_constants(
    model: &SystemModel,
    noise: &NoiseModel,
    cert: &Certificate,
    es: &EsParams,
) -> Result<ConstantsReport> {
    let norms = sup_norms(model, SUP_SAMPLES)?;
    compute_with_norms(&norms, model, noise, cert, es)
}

/// `2p_hi·factor²·(σ₀² + B̄²ε/2π)`: the comparison level an initial state of size σ₀ can reach.
pub fn initial_level(p_hi: f64, factor: f64, sigma0: f64, b_bar: f64, eps: f64) -> f64 {
    2.0 * p_hi * factor * factor * (sigma0 * sigma0 + b_bar * b_bar * eps / (2.0 * PI))
}

impl ConstantsReport {
    /// Re-evaluates the four conditions for a different `σ₀`.
    pub fn conditions_for(&self, sigma0: f64) -> Conditions {
        let mut c = self.conditions;
        let level = initial_level(
            self.p_hi,
            self.dither_factor,
            sigma0,
            self.b_bar,
            self.epsilon,
        );
        c.initial_state = match self.xi_l {
            Some(l) => Condition::lt(level, l),
            None => Condition {
                holds: false,
                slack: f64::NEG_INFINITY,
            },
        };
        c
    }

    pub fn is_feasible(&self) -> bool {
        self.conditions.all_hold()
    }

    fn roots(&self) -> Result<(f64, f64, f64)> {
        match (self.xi_s, self.xi_l, self.r0) {
            (Some(s), Some(l), Some(r)) => Ok((s, l, r)),
            _ => Err(Error::infeasible(
                "discriminant: 16*d1*d3 < q^2*p_lo^2",
                self.conditions.discriminant.slack,
            )),
        }
    }

    /// Open interval of admissible `ξ₀` and the value picked by `policy`.
    pub fn xi0_interval(&self, policy: Xi0Policy) -> Result<EnvelopeParams> {
        self.conditions.require()?;
        let (xi_s, xi_l, _) = self.roots()?;
        let level = initial_level(
            self.p_hi,
            self.dither_factor,
            self.sigma0,
            self.b_bar,
            self.epsilon,
        );
        let lo = xi_s.max(level);
        let hi = xi_l;
        if !(lo < hi) {
            return Err(Error::infeasible("empty xi0 interval", hi - lo));
        }
        let xi0 = match (policy, hi.is_finite()) {
            (Xi0Policy::Midpoint, true) => 0.5 * (lo + hi),
            (Xi0Policy::Midpoint, false) => 2.0 * lo,
            (Xi0Policy::Fraction(f), true) => lo + f * (hi - lo),
            (Xi0Policy::Fraction(f), false) => lo * (1.0 + f),
        };
        Ok(EnvelopeParams {
            xi0,
            xi0_lo: lo,
            xi0_hi: hi,
        })
    }

    fn offset(&self) -> f64 {
        self.b_bar * sqrt(self.epsilon / (2.0 * PI))
    }

    /// State bound at time `t` from the exact comparison solution.
    pub fn envelope(&self, env: &EnvelopeParams, t: f64) -> Result<f64> {
        let (xi_s, xi_l, r0) = self.roots()?;
        let xi0 = env.xi0;
        let e = exp(-r0 * t);
        let inner = if xi_l.is_infinite() {
            (xi0 - xi_s) * e + xi_s
        } else {
            ((xi0 - xi_s) * xi_l * e + xi_s * (xi_l - xi0)) / ((xi0 - xi_s) * e + xi_l - xi0)
        };
        Ok(self.lambda / sqrt(self.p_lo) * sqrt(inner.max(0.0)) + self.offset())
    }

    /// Looser bound `(λ/√p_lo)(√(ξ_l(ξ₀−ξ_s)/(ξ_l−ξ₀))·e^{−r₀t/2} + √ξ_s) + B̄√(ε/2π)`.
    pub fn envelope_simplified(&self, env: &EnvelopeParams, t: f64) -> Result<f64> {
        let (xi_s, xi_l, r0) = self.roots()?;
        Ok(self.lambda / sqrt(self.p_lo)
            * (self.transient_coefficient(env, xi_s, xi_l) * exp(-0.5 * r0 * t) + sqrt(xi_s))
            + self.offset())
    }

    /// `√(ξ_l(ξ₀−ξ_s)/(ξ_l−ξ₀))`, or `√(ξ₀−ξ_s)` when `ξ_l` is infinite.
    fn transient_coefficient(&self, env: &EnvelopeParams, xi_s: f64, xi_l: f64) -> f64 {
        let gap = (env.xi0 - xi_s).max(0.0);
        if xi_l.is_infinite() {
            sqrt(gap)
        } else {
            sqrt(xi_l * gap / (xi_l - env.xi0))
        }
    }

    /// `(λ/√p_lo)·√(ξ_l(ξ₀−ξ_s)/(ξ_l−ξ₀))`: amplitude of the decaying part of the simplified bound.
    pub fn transient_amplitude(&self, env: &EnvelopeParams) -> Result<f64> {
        let (xi_s, xi_l, _) = self.roots()?;
        Ok(self.lambda / sqrt(self.p_lo) * self.transient_coefficient(env, xi_s, xi_l))
    }

    /// `λ√(ξ_s/p_lo) + B̄√(ε/2π)`.
    pub fn ultimate_bound(&self) -> Result<f64> {
        self.conditions.require()?;
        self.b_star.ok_or_else(|| {
            Error::infeasible(
                "ultimate bound undefined",
                self.conditions.discriminant.slack,
            )
        })
    }
}

/// Largest `ε` in `[lo, hi]` at which all four conditions hold, by bisection in `log ε`
/// down to relative width `rel_tol`.
pub fn epsilon_search(
    model: &SystemModel,
    noise: &NoiseModel,
    cert: &Certificate,
    es: &EsParams,
    bracket: (f64, f64),
    rel_tol: f64,
) -> Result<f64> {
    let norms = sup_norms(model, SUP_SAMPLES)?;
    let feasible = |eps: f64| {
        let p = EsParams {
            epsilon: eps,
            ..es.clone()
        };
        compute_with_norms(&norms, model, noise, cert, &p).is_ok_and(|r| r.is_feasible())
    };
    bisect_largest(feasible, bracket, rel_tol, true)
}

/// Largest `σ₀` in `[lo, hi]` at which all four conditions hold at fixed `ε`.
pub fn sigma0_search(
    model: &SystemModel,
    noise: &NoiseModel,
    cert: &Certificate,
    es: &EsParams,
    bracket: (f64, f64),
    rel_tol: f64,
) -> Result<f64> {
    let report = compute_constants(model, noise, cert, es)?;
    let feasible = |s: f64| report.conditions_for(s).all_hold();
    bisect_largest(feasible, bracket, rel_tol, false)
}

fn bisect_largest<F: Fn(f64) -> bool>(
    feasible: F,
    (lo, hi): (f64, f64),
    rel_tol: f64,
    logarithmic: bool,
) -> Result<f64> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::invalid("bracket", "need 0 < lo <= hi"));
    }
    if !feasible(lo) {
        return Err(Error::EmptyBracket { lo, hi });
    }
    if feasible(hi) {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    while b / a - 1.0 > rel_tol {
        let mid = if logarithmic {
            sqrt(a * b)
        } else {
            0.5 * (a + b)
        };
        if feasible(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{CertificateSource, PForm};
    use crate::mat::Mat;
    use crate::scenario::TimeFn;
    use approx::assert_relative_eq;

    fn integrator() -> (SystemModel, Certificate) {
        let model = SystemModel {
            n: 1,
            a: TimeFn::constant(Mat::scalar(0.0)),
            b: TimeFn::constant(Mat::scalar(1.0)),
            a_bar: 0.0,
            b_bar: 1.0,
            db_bar: 0.0,
            k: Mat::scalar(1.0),
        };
        let cert = Certificate {
            form: PForm::User {
                p: TimeFn::constant(Mat::scalar(1.0)),
            },
            q: 2.0,
            p_lo: 1.0,
            p_hi: 1.0,
            pdot_bar: 0.0,
            source: CertificateSource::User,
        };
        (model, cert)
    }

    fn es(eps: f64, a: f64, b: f64) -> EsParams {
        EsParams {
            epsilon: eps,
            sigma0: 1.0,
            weight_a: a,
            weight_b: b,
            xi0_policy: Xi0Policy::default(),
        }
    }

    // Exact norms (no sampling margin) for the integrator.
    fn exact_integrator_norms() -> SupNorms {
        SupNorms {
            b: 1.0,
            a: 0.0,
            db: 0.0,
            bbk: 1.0,
            ab: 0.0,
            bbkb: 1.0,
            hb_direct: 1.0,
            hb: 1.0,
            kb: 1.0,
            bbkh: 1.0,
            hbbk: 1.0,
            bbkbbk: 1.0,
            rbar: 0.0,
            k_norm: 1.0,
            margin: 0.0,
            samples: 1,
        }
    }

    #[test]
    fn integrator_matches_closed_forms() {
        let (model, cert) = integrator();
        let eps = 1e-2;
        let r = compute_with_norms(
            &exact_integrator_norms(),
            &model,
            &NoiseModel::zero(),
            &cert,
            &es(eps, 1.0, 1.0),
        )
        .unwrap();
        let lambda = 4.0 * PI / (4.0 * PI - eps);
        assert_relative_eq!(r.lambda, lambda, max_relative = 1e-15);
        assert_relative_eq!(
            r.c1,
            2.0 * sqrt(2.0) * sqrt(eps / PI) * (1.0 + eps / (4.0 * PI)),
            max_relative = 1e-13
        );
        assert_relative_eq!(r.c2, 7.0 * lambda * eps / (2.0 * PI), max_relative = 1e-13);
        assert_relative_eq!(
            r.c3,
            2.0 * lambda * lambda * sqrt(2.0 * eps / PI),
            max_relative = 1e-13
        );
        assert_eq!(r.c4, 0.0);
        assert_relative_eq!(r.c1, 0.15970, max_relative = 1e-4);
        assert_relative_eq!(r.c3, 0.15983, max_relative = 1e-4);
        assert!(r.is_feasible());
    }

    #[test]
    fn epsilon_to_zero_gives_unit_lambda() {
        let (model, cert) = integrator();
        let r =
            compute_constants(&model, &NoiseModel::zero(), &cert, &es(1e-14, 1.0, 1.0)).unwrap();
        assert_relative_eq!(r.lambda, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn unit_weights_reduce_to_unweighted_roots() {
        let (model, cert) = integrator();
        let r = compute_constants(&model, &NoiseModel::zero(), &cert, &es(3e-3, 1.0, 1.0)).unwrap();
        let (c1, c3, c4, p, q) = (r.c1, r.c3, r.c4, r.p_lo, r.q);
        let root = sqrt(q * q * p.powi(4) - 4.0 * c1 * (c3 + 2.0 * c4) * p * p);
        let xi_s = 2.0 * c1 * p * p / (q * p * p + root);
        let xi_l = (q * p * p + root) / (2.0 * c3 + 4.0 * c4);
        let r0 = (xi_l - xi_s) / (p * p) * (c3 / 2.0 + c4);
        assert_relative_eq!(r.xi_s.unwrap(), xi_s, max_relative = 1e-12);
        assert_relative_eq!(r.xi_l.unwrap(), xi_l, max_relative = 1e-12);
        assert_relative_eq!(r.r0.unwrap(), r0, max_relative = 1e-12);
        assert_relative_eq!(
            16.0 * r.d1 * r.d3,
            4.0 * c1 * (c3 + 2.0 * c4),
            max_relative = 1e-14
        );
    }

    #[test]
    fn initial_interval_for_integrator() {
        let (model, cert) = integrator();
        let eps = 1e-2;
        let r = compute_with_norms(
            &exact_integrator_norms(),
            &model,
            &NoiseModel::zero(),
            &cert,
            &es(eps, 1.0, 1.0),
        )
        .unwrap();
        let env = r.xi0_interval(Xi0Policy::default()).unwrap();
        let expect = 2.0 * (1.0 + eps / (4.0 * PI)).powi(2) * (1.0 + eps / (2.0 * PI));
        assert_relative_eq!(env.xi0_lo, expect, max_relative = 1e-14);
        assert!(env.xi0_lo < env.xi0 && env.xi0 < env.xi0_hi);
    }

    #[test]
    fn envelope_limits() {
        let (model, cert) = integrator();
        let r = compute_constants(&model, &NoiseModel::zero(), &cert, &es(1e-2, 0.1, 0.9)).unwrap();
        let env = r.xi0_interval(Xi0Policy::default()).unwrap();
        let at0 = r.envelope(&env, 0.0).unwrap();
        let off = r.b_bar * sqrt(r.epsilon / (2.0 * PI));
        assert_relative_eq!(
            at0,
            r.lambda * sqrt(env.xi0 / r.p_lo) + off,
            max_relative = 1e-12
        );
        let late = r.envelope(&env, 1e6).unwrap();
        assert_relative_eq!(late, r.b_star.unwrap(), max_relative = 1e-12);
        let pinned = EnvelopeParams {
            xi0: r.xi_s.unwrap(),
            ..env
        };
        for t in [0.0, 0.5, 10.0] {
            assert_relative_eq!(
                r.envelope(&pinned, t).unwrap(),
                r.b_star.unwrap(),
                max_relative = 1e-12
            );
        }
        for t in [0.0, 0.3, 2.0, 50.0] {
            assert!(
                r.envelope_simplified(&env, t).unwrap() >= r.envelope(&env, t).unwrap() - 1e-15
            );
        }
    }

    #[test]
    fn closed_form_endpoints() {
        let (d1, d3, q, p) = (0.01, 0.3, 2.0, 1.0);
        let (s, l) = comparison_roots(d1, d3, q, p).unwrap();
        assert_eq!(comparison_closed_form(d1, d3, q, p, s, 3.0).unwrap(), s);
        let near = l * (1.0 - 1e-9);
        assert_relative_eq!(
            comparison_closed_form(d1, d3, q, p, near, 1e-6).unwrap(),
            near,
            max_relative = 1e-6
        );
        assert_relative_eq!(
            comparison_closed_form(d1, d3, q, p, near, 1e4).unwrap(),
            s,
            max_relative = 1e-9
        );
        assert!(comparison_rhs(d1, d3, q, p, 0.5 * (s + l)) < 0.0);
    }

    #[test]
    fn empty_epsilon_bracket_errors() {
        let (model, cert) = integrator();
        let r = epsilon_search(
            &model,
            &NoiseModel::zero(),
            &cert,
            &es(1e-2, 0.1, 0.9),
            (100.0, 200.0),
            1e-3,
        );
        assert!(matches!(r, Err(Error::EmptyBracket { .. })));
    }
}
