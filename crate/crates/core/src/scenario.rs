//! Plant, noise and dither parameters, plus supremum evaluation for periodic coefficients.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, fabs, sin};
use serde::{Deserialize, Serialize};

use crate::certificate::{
    check_pe, excitation_certificate, floquet_scalar, Certificate, LowerBoundRule, DEFAULT_GRID,
};
use crate::delays::DelayKind;
use crate::error::{Error, Result};
use crate::mat::{opnorm, sym_eig, Mat};

/// Relative inflation applied to every sampled supremum.
pub const SUP_MARGIN: f64 = 1e-3;
/// Default number of samples per coefficient period for suprema.
pub const SUP_SAMPLES: usize = 4096;
/// Slack allowed when comparing declared bounds against raw samples (rounding only).
const BOUND_SLACK: f64 = 1e-9;

/// A matrix-valued function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TimeFn {
    Constant {
        value: Mat,
    },
    /// `[cos βt, sin βt]ᵀ`.
    #[serde(rename = "sincos")]
    SinCosColumn {
        beta: f64,
    },
    /// `cos βt` as a 1x1 matrix.
    #[serde(rename = "cos")]
    CosScalar {
        beta: f64,
    },
    /// Piecewise-linear interpolation of samples. With a period the samples must lie in
    /// `[0, period)` and the last one connects back to the first; without one the ends are held.
    Tabulated {
        times: Vec<f64>,
        values: Vec<Mat>,
        #[serde(default)]
        period: Option<f64>,
    },
    /// `left · inner(t + shift)`.
    Transformed {
        left: Mat,
        inner: Box<TimeFn>,
        shift: f64,
    },
}

impl TimeFn {
    pub fn constant(value: Mat) -> Self {
        TimeFn::Constant { value }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            TimeFn::Constant { value } => (value.rows(), value.cols()),
            TimeFn::SinCosColumn { .. } => (2, 1),
            TimeFn::CosScalar { .. } => (1, 1),
            TimeFn::Tabulated { values, .. } => {
                values.first().map_or((0, 0), |m| (m.rows(), m.cols()))
            }
            TimeFn::Transformed { left, inner, .. } => (left.rows(), inner.shape().1),
        }
    }

    /// `None` for constant functions and non-periodic tables.
    pub fn period(&self) -> Option<f64> {
        match self {
            TimeFn::Constant { .. } => None,
            TimeFn::SinCosColumn { beta } | TimeFn::CosScalar { beta } => {
                Some(2.0 * PI / fabs(*beta))
            }
            TimeFn::Tabulated { period, .. } => *period,
            TimeFn::Transformed { inner, .. } => inner.period(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            TimeFn::Constant { .. } => true,
            TimeFn::Transformed { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }

    /// Whether a sampled supremum is meaningful: constant or periodic.
    pub fn is_supremum_computable(&self) -> bool {
        self.is_constant() || self.period().is_some()
    }

    pub fn eval(&self, t: f64) -> Mat {
        let (r, c) = self.shape();
        let mut m = Mat::zeros(r, c);
        self.eval_into(t, &mut m);
        m
    }

    /// Writes the value at `t` into `out`, which must have the right shape.
    pub fn eval_into(&self, t: f64, out: &mut Mat) {
        match self {
            TimeFn::Constant { value } => out.clone_from(value),
            TimeFn::SinCosColumn { beta } => {
                out.set(0, 0, cos(beta * t));
                out.set(1, 0, sin(beta * t));
            }
            TimeFn::CosScalar { beta } => out.set(0, 0, cos(beta * t)),
            TimeFn::Tabulated {
                times,
                values,
                period,
            } => {
                let (i, j, w) = table_bracket(times, *period, t);
                let (r, c) = (out.rows(), out.cols());
                for a in 0..r {
                    for b in 0..c {
                        let v = (1.0 - w) * values[i].get(a, b) + w * values[j].get(a, b);
                        out.set(a, b, v);
                    }
                }
            }
            TimeFn::Transformed { left, inner, shift } => {
                *out = left * &inner.eval(t + shift);
            }
        }
    }

    /// Exact derivative for closed-form descriptors, slope of the active segment for tables.
    pub fn derivative(&self, t: f64) -> Mat {
        match self {
            TimeFn::Constant { value } => Mat::zeros(value.rows(), value.cols()),
            TimeFn::SinCosColumn { beta } => {
                Mat::column(&[-beta * sin(beta * t), beta * cos(beta * t)])
            }
            TimeFn::CosScalar { beta } => Mat::scalar(-beta * sin(beta * t)),
            TimeFn::Tabulated {
                times,
                values,
                period,
            } => {
                let (i, j, _) = table_bracket(times, *period, t);
                let (r, c) = self.shape();
                let mut span = times[j] - times[i];
                if let (Some(p), true) = (period, j < i) {
                    span += p;
                }
                if j == i || span <= 0.0 {
                    return Mat::zeros(r, c);
                }
                (&values[j] - &values[i]).scale(1.0 / span)
            }
            TimeFn::Transformed { left, inner, shift } => left * &inner.derivative(t + shift),
        }
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        match self {
            TimeFn::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::NonFinite(field.into()));
                }
            }
            TimeFn::SinCosColumn { beta } | TimeFn::CosScalar { beta } => {
                if !(beta.is_finite() && *beta != 0.0) {
                    return Err(Error::invalid(
                        &format!("{field}.beta"),
                        "frequency must be finite and nonzero",
                    ));
                }
            }
            TimeFn::Tabulated {
                times,
                values,
                period,
            } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Dimension {
                        field: format!("{field}.values"),
                        expected: format!("{} samples", times.len()),
                        found: format!("{}", values.len()),
                    });
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid(
                        &format!("{field}.times"),
                        "sample times must be strictly increasing",
                    ));
                }
                let shape = (values[0].rows(), values[0].cols());
                if values.iter().any(|m| (m.rows(), m.cols()) != shape) {
                    return Err(Error::invalid(
                        &format!("{field}.values"),
                        "all samples must share one shape",
                    ));
                }
                if let Some(p) = period {
                    if !(p.is_finite() && *p > 0.0) {
                        return Err(Error::invalid(
                            &format!("{field}.period"),
                            "period must be positive",
                        ));
                    }
                    if times[0] < 0.0 || times[times.len() - 1] >= *p {
                        return Err(Error::invalid(
                            &format!("{field}.times"),
                            "periodic samples must lie in [0, period)",
                        ));
                    }
                }
            }
            TimeFn::Transformed { left, inner, .. } => {
                inner.validate(field)?;
                if left.cols() != inner.shape().0 {
                    return Err(Error::Dimension {
                        field: field.into(),
                        expected: format!("{} columns", inner.shape().0),
                        found: format!("{}", left.cols()),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Indices of the two samples around `t` and the weight of the second.
fn table_bracket(times: &[f64], period: Option<f64>, t: f64) -> (usize, usize, f64) {
    let n = times.len();
    if n == 1 {
        return (0, 0, 0.0);
    }
    match period {
        Some(p) => {
            let mut s = t - p * libm::floor(t / p);
            if s >= p {
                s = 0.0;
            }
            if s < times[0] || s >= times[n - 1] {
                // Wrap-around segment from the last sample to the first one of the next period.
                let start = times[n - 1];
                let span = times[0] + p - start;
                let offset = if s >= start { s - start } else { s + p - start };
                (n - 1, 0, offset / span)
            } else {
                let j = times.partition_point(|&x| x <= s);
                let i = j - 1;
                (i, j, (s - times[i]) / (times[j] - times[i]))
            }
        }
        None => {
            if t <= times[0] {
                (0, 0, 0.0)
            } else if t >= times[n - 1] {
                (n - 1, n - 1, 0.0)
            } else {
                let j = times.partition_point(|&x| x <= t);
                let i = j - 1;
                (i, j, (t - times[i]) / (times[j] - times[i]))
            }
        }
    }
}

/// A scalar function of time (measurement noise, delays).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Signal {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · sin(frequency · t + phase)`, frequency in rad/s.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        period: Option<f64>,
    },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * sin(frequency * t + phase),
            Signal::Tabulated {
                times,
                values,
                period,
            } => {
                let (i, j, w) = table_bracket(times, *period, t);
                (1.0 - w) * values[i] + w * values[j]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Signal::Zero => true,
            Signal::Constant { value } => *value == 0.0,
            Signal::Sinusoid { amplitude, .. } => *amplitude == 0.0,
            Signal::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Exact `sup |·|` where available, sample maximum for tables (exact for linear interpolation).
    pub fn sup_abs(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => fabs(*value),
            Signal::Sinusoid { amplitude, .. } => fabs(*amplitude),
            Signal::Tabulated { values, .. } => values.iter().fold(0.0, |m, v| m.max(fabs(*v))),
        }
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        match self {
            Signal::Tabulated {
                times,
                values,
                period,
            } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Dimension {
                        field: format!("{field}.values"),
                        expected: format!("{} samples", times.len()),
                        found: format!("{}", values.len()),
                    });
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid(
                        &format!("{field}.times"),
                        "sample times must be strictly increasing",
                    ));
                }
                if let Some(p) = period {
                    if !(*p > 0.0) || times[0] < 0.0 || times[times.len() - 1] >= *p {
                        return Err(Error::invalid(
                            &format!("{field}.period"),
                            "periodic samples must lie in [0, period) with period > 0",
                        ));
                    }
                }
                Ok(())
            }
            Signal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } if !(amplitude.is_finite() && frequency.is_finite() && phase.is_finite()) => {
                Err(Error::NonFinite(field.into()))
            }
            Signal::Constant { value } if !value.is_finite() => Err(Error::NonFinite(field.into())),
            _ => Ok(()),
        }
    }
}

/// `ẋ = A(t)x + B(t)u` with declared bounds and the gain of the quadratic form `xᵀKx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub n: usize,
    pub a: TimeFn,
    pub b: TimeFn,
    /// Declared bound on `|A(t)|`.
    pub a_bar: f64,
    /// Declared bound on `|B(t)|`.
    pub b_bar: f64,
    /// Declared bound on `|Ḃ(t)|`.
    pub db_bar: f64,
    pub k: Mat,
}

impl SystemModel {
    /// Checks shapes, positive definiteness of the quadratic form and the declared bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::invalid("n", "state dimension must be positive"));
        }
        self.a.validate("A")?;
        self.b.validate("B")?;
        check_shape("A", self.a.shape(), (n, n))?;
        check_shape("B", self.b.shape(), (n, 1))?;
        check_shape("K", (self.k.rows(), self.k.cols()), (n, n))?;
        for (name, v) in [
            ("bounds.A_bar", self.a_bar),
            ("bounds.B_bar", self.b_bar),
            ("bounds.DB_bar", self.db_bar),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "bound must be finite and nonnegative"));
            }
        }
        let min_eig = sym_eig(&self.k_sym())?.min();
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite {
                field: "K".into(),
                min_eig,
            });
        }
        for (field, f, declared) in [
            ("bounds.A_bar", Coefficient::A, self.a_bar),
            ("bounds.B_bar", Coefficient::B, self.b_bar),
            ("bounds.DB_bar", Coefficient::DB, self.db_bar),
        ] {
            let sampled = self.raw_sup(f)?;
            if sampled - declared > BOUND_SLACK * sampled.max(1.0) {
                return Err(Error::BoundViolated {
                    field: field.into(),
                    sampled,
                    declared,
                });
            }
        }
        Ok(())
    }

    /// Symmetric part of `K`; the quadratic form only sees this.
    pub fn k_sym(&self) -> Mat {
        self.k.symmetric_part()
    }

    /// Window over which suprema are sampled: the longest coefficient period, or `None`
    /// if every coefficient is constant.
    pub fn sampling_period(&self) -> Option<f64> {
        match (self.a.period(), self.b.period()) {
            (Some(p), Some(q)) => Some(p.max(q)),
            (p, q) => p.or(q),
        }
    }

    /// Sample count for a window so that the fastest coefficient still gets `per_period` points.
    pub fn sampling_count(&self, per_period: usize) -> usize {
        match (self.a.period(), self.b.period()) {
            (Some(p), Some(q)) => {
                let ratio = libm::ceil(p.max(q) / p.min(q)) as usize;
                per_period.saturating_mul(ratio.clamp(1, 64))
            }
            _ => per_period,
        }
    }

    fn raw_sup(&self, which: Coefficient) -> Result<f64> {
        let f = match which {
            Coefficient::A => &self.a,
            Coefficient::B | Coefficient::DB => &self.b,
        };
        if !f.is_supremum_computable() {
            return Err(Error::invalid(
                match which {
                    Coefficient::A => "A.period",
                    _ => "B.period",
                },
                "non-periodic tabulated coefficient needs a declared period",
            ));
        }
        let period = f.period();
        let samples = match period {
            Some(_) => SUP_SAMPLES.max(tabulated_len(f)),
            None => 1,
        };
        Ok(sample_max(
            |t| match which {
                Coefficient::A | Coefficient::B => opnorm(&f.eval(t)),
                Coefficient::DB => opnorm(&f.derivative(t)),
            },
            period,
            samples,
        ))
    }
}

#[derive(Clone, Copy)]
enum Coefficient {
    A,
    B,
    DB,
}

fn tabulated_len(f: &TimeFn) -> usize {
    match f {
        TimeFn::Tabulated { times, .. } => 4 * times.len(),
        TimeFn::Transformed { inner, .. } => tabulated_len(inner),
        _ => 0,
    }
}

fn check_shape(field: &str, found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Dimension {
            field: field.into(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        })
    }
}

/// Measurement uncertainty `δ(t)` entering the phase of the dither, with its declared bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub delta_bar: f64,
    pub delta: Signal,
}

impl NoiseModel {
    pub fn zero() -> Self {
        NoiseModel {
            delta_bar: 0.0,
            delta: Signal::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.delta.validate("noise.delta")?;
        if !(self.delta_bar.is_finite() && self.delta_bar >= 0.0) {
            return Err(Error::invalid(
                "noise.delta_bar",
                "must be finite and nonnegative",
            ));
        }
        let sup = self.delta.sup_abs();
        if sup > self.delta_bar * (1.0 + BOUND_SLACK) {
            return Err(Error::BoundViolated {
                field: "noise.delta_bar".into(),
                sampled: sup,
                declared: self.delta_bar,
            });
        }
        Ok(())
    }
}

/// How the initial comparison value `ξ₀` is placed inside its admissible open interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Xi0Policy {
    Midpoint,
    /// `lo + f·(hi − lo)`, or `lo·(1 + f)` when the interval is unbounded above.
    Fraction(f64),
}

impl Default for Xi0Policy {
    fn default() -> Self {
        Xi0Policy::Fraction(0.01)
    }
}

/// Dither parameters and the weights used when splitting cross terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsParams {
    pub epsilon: f64,
    pub sigma0: f64,
    pub weight_a: f64,
    pub weight_b: f64,
    #[serde(default)]
    pub xi0_policy: Xi0Policy,
}

impl EsParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("es.epsilon", self.epsilon),
            ("es.sigma0", self.sigma0),
            ("es.a", self.weight_a),
            ("es.b", self.weight_b),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be finite and positive"));
            }
        }
        if let Xi0Policy::Fraction(f) = self.xi0_policy {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(
                    "es.xi0_policy",
                    "fraction must lie in (0, 1)",
                ));
            }
        }
        Ok(())
    }

    /// Dither amplitude `√(2π/ε)`.
    pub fn amplitude(&self) -> f64 {
        libm::sqrt(2.0 * PI / self.epsilon)
    }
}

fn sample_max<F: FnMut(f64) -> f64>(mut f: F, period: Option<f64>, samples: usize) -> f64 {
    match period {
        None => f(0.0),
        Some(p) => {
            let n = samples.max(1);
            (0..n).fold(0.0, |m, i| m.max(f(p * i as f64 / n as f64)))
        }
    }
}

/// Supremum of a scalar function over one period sampled on a uniform grid of `samples`
/// points, inflated by [`SUP_MARGIN`]. A constant function (`period = None`) is evaluated once.
pub fn sup_over_time<F: FnMut(f64) -> f64>(f: F, period: Option<f64>, samples: usize) -> f64 {
    sample_max(f, period, samples) * (1.0 + SUP_MARGIN)
}

/// How the Lyapunov certificate for a scenario is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateRecipe {
    /// From persistence of excitation of `B` over windows of length `delta`
    /// (default: the period of `B`).
    Excitation {
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        lower_bound: LowerBoundRule,
        #[serde(default = "default_grid")]
        grid: usize,
    },
    /// Closed form for scalar `ẋ = a(t)x + cos(βt)u`.
    Floquet,
    User {
        p: TimeFn,
        q: f64,
        p_lo: f64,
        p_hi: f64,
        pdot_bar: f64,
    },
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

/// Known constant delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub kind: DelayKind,
    pub tau: f64,
}

/// A complete, validated problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: SystemModel,
    pub noise: NoiseModel,
    pub es: EsParams,
    pub certificate: CertificateRecipe,
    #[serde(default)]
    pub delay: Option<DelaySpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.noise.validate()?;
        self.es.validate()?;
        if let Some(d) = &self.delay {
            if !(d.tau.is_finite() && d.tau >= 0.0) {
                return Err(Error::invalid("delay.tau", "must be finite and nonnegative"));
            }
        }
        match &self.certificate {
            CertificateRecipe::Excitation { delta, grid, .. } => {
                if let Some(d) = delta {
                    if !(d.is_finite() && *d > 0.0) {
                        return Err(Error::invalid("certificate.delta", "must be positive"));
                    }
                }
                if *grid == 0 {
                    return Err(Error::invalid("certificate.grid", "must be positive"));
                }
            }
            CertificateRecipe::Floquet => {
                if self.model.n != 1 || !matches!(self.model.b, TimeFn::CosScalar { .. }) {
                    return Err(Error::invalid(
                        "certificate",
                        "the floquet certificate needs n = 1 and B of type \"cos\"",
                    ));
                }
            }
            CertificateRecipe::User { p, .. } => {
                p.validate("certificate.p")?;
                check_shape("certificate.p", p.shape(), (self.model.n, self.model.n))?;
            }
        }
        Ok(())
    }

    /// Excitation window for the certificate: declared, else one period of `B`, else 1.
    pub fn excitation_window(&self) -> f64 {
        match &self.certificate {
            CertificateRecipe::Excitation { delta: Some(d), .. } => *d,
            _ => self.model.b.period().unwrap_or(1.0),
        }
    }

    /// Builds the certificate described by the recipe.
    pub fn build_certificate(&self) -> Result<Certificate> {
        match &self.certificate {
            CertificateRecipe::Excitation {
                lower_bound, grid, ..
            } => {
                let pe = check_pe(&self.model.b, self.excitation_window(), *grid)?;
                Ok(excitation_certificate(&self.model, &pe, *lower_bound)?.0)
            }
            CertificateRecipe::Floquet => {
                let TimeFn::CosScalar { beta } = self.model.b else {
                    return Err(Error::invalid("certificate", "floquet needs B of type \"cos\""));
                };
                floquet_scalar(self.model.k.get(0, 0), beta, self.model.a_bar)
            }
            CertificateRecipe::User {
                p,
                q,
                p_lo,
                p_hi,
                pdot_bar,
            } => Certificate::user(p.clone(), *q, *p_lo, *p_hi, *pdot_bar),
        }
    }
}
