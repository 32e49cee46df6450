//! Lyapunov certificates for the averaged closed loop `H(t) = A(t) − B(t)B(t)ᵀK`.
//!
//! A certificate is a symmetric `P(t)` with `Ṗ + PH + HᵀP ⪯ −qP` and
//! `p_lo·I ⪯ P(t) ⪯ p_hi·I`, `|Ṗ(t)| ≤ pdot_bar`. Three constructions are provided:
//! one from persistence of excitation of `B`, a closed form for scalar systems driven
//! through `cos βt`, and user-supplied `P` checked on a grid.

use alloc::vec::Vec;

use libm::{exp, fabs, sin};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{opnorm, spectral_radius_sym, sym_eig, Mat};
use crate::quad::simpson_vec;
use crate::scenario::{sup_over_time, SystemModel, TimeFn, SUP_MARGIN, SUP_SAMPLES};

/// Simpson intervals for the window integrals over `[t, t + Δ]`.
pub const WINDOW_INTERVALS: usize = 512;
/// Default number of grid points for excitation checks and certificate verification.
pub const DEFAULT_GRID: usize = 2048;

/// Result of sampling the persistence-of-excitation integral of `B Bᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    /// Window length `Δ`.
    pub delta: f64,
    /// Certified lower bound on the smallest eigenvalue of the windowed average (deflated).
    pub b_lo: f64,
    /// Certified bound with `|Γ(t)| ≤ Δ·gamma_bar` (inflated).
    pub gamma_bar: f64,
    /// Raw minimum over the grid of the smallest eigenvalue of the windowed average.
    pub min_window_eig: f64,
    /// Raw maximum over the grid of `|Γ(t)|/Δ`.
    pub max_gamma_ratio: f64,
    pub grid: usize,
}

fn outer_into(b: &Mat, out: &mut [f64]) {
    let n = b.rows();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = b.get(i, 0) * b.get(j, 0);
        }
    }
}

/// `(1/Δ)∫ₜ^{t+Δ} B(ℓ)B(ℓ)ᵀ dℓ`.
pub fn window_average(b: &TimeFn, delta: f64, t: f64) -> Mat {
    let n = b.shape().0;
    let mut buf = Mat::zeros(n, 1);
    let mut out = alloc::vec![0.0; n * n];
    simpson_vec(
        |s, dst| {
            b.eval_into(s, &mut buf);
            outer_into(&buf, dst);
        },
        t,
        t + delta,
        WINDOW_INTERVALS,
        &mut out,
    );
    let m = Mat::new(n, n, out).expect("finite window integral");
    m.scale(1.0 / delta)
}

/// `Γ(t) = (1/Δ)∫ₜ^{t+Δ}∫ₘᵗ B(ℓ)B(ℓ)ᵀ dℓ dm`.
///
/// Swapping the order of integration leaves a single integral,
/// `Γ(t) = −(1/Δ)∫ₜ^{t+Δ} (t + Δ − ℓ) B(ℓ)B(ℓ)ᵀ dℓ`, evaluated with composite Simpson.
pub fn gamma_of_t(b: &TimeFn, delta: f64, t: f64) -> Mat {
    let n = b.shape().0;
    let mut buf = Mat::zeros(n, 1);
    let mut out = alloc::vec![0.0; n * n];
    let end = t + delta;
    simpson_vec(
        |s, dst| {
            b.eval_into(s, &mut buf);
            outer_into(&buf, dst);
            let w = end - s;
            dst.iter_mut().for_each(|v| *v *= w);
        },
        t,
        end,
        WINDOW_INTERVALS,
        &mut out,
    );
    let m = Mat::new(n, n, out).expect("finite window integral");
    m.scale(-1.0 / delta)
}

/// `Γ̇(t) = B(t)B(t)ᵀ − (1/Δ)∫ₜ^{t+Δ} B Bᵀ`.
pub fn gamma_dot(b: &TimeFn, delta: f64, t: f64) -> Mat {
    let bt = b.eval(t);
    &(&bt * &bt.transpose()) - &window_average(b, delta, t)
}

fn grid_times(period: Option<f64>, grid: usize) -> Vec<f64> {
    match period {
        None => alloc::vec![0.0],
        Some(p) => {
            let n = grid.max(1);
            (0..n).map(|i| p * i as f64 / n as f64).collect()
        }
    }
}

/// Samples the windowed average and `Γ` over one period of `B`.
pub fn check_pe(b: &TimeFn, delta: f64, grid: usize) -> Result<PeReport> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("delta", "window length must be positive"));
    }
    let mut min_eig = f64::INFINITY;
    let mut max_gamma = 0.0f64;
    for t in grid_times(b.period(), grid) {
        let avg = window_average(b, delta, t);
        min_eig = min_eig.min(sym_eig(&avg.symmetric_part())?.min());
        max_gamma = max_gamma.max(opnorm(&gamma_of_t(b, delta, t)) / delta);
    }
    let b_lo = min_eig * (1.0 - SUP_MARGIN);
    if !(b_lo > 0.0) {
        return Err(Error::PeFails { min_eig });
    }
    Ok(PeReport {
        delta,
        b_lo,
        gamma_bar: max_gamma * (1.0 + SUP_MARGIN),
        min_window_eig: min_eig,
        max_gamma_ratio: max_gamma,
        grid,
    })
}

/// Which lower bound to publish for the excitation-based `P(t)`.
///
/// `P(t) = w·K/2 + KΓ(t)K` with `Γ(t) ⪯ 0`, so only `λ_min(K)·w/2 − Δ·Γ̄·|K|²` is a true
/// lower bound. `Stated` publishes `λ_min(K)·w/2`, which is the value the published
/// bound tables were computed with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowerBoundRule {
    #[default]
    Stated,
    Guaranteed,
}

/// Where a certificate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateSource {
    Excitation,
    Floquet,
    User,
}

/// Form of `P(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PForm {
    /// `weight·K/2 + KΓ(t)K` with `Γ` built from `b` over windows of length `delta`.
    Excitation {
        k_sym: Mat,
        weight: f64,
        b: TimeFn,
        delta: f64,
    },
    /// `exp((gain/2β)·sin 2βt)` (1x1).
    Floquet {
        gain: f64,
        beta: f64,
    },
    User {
        p: TimeFn,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub form: PForm,
    pub q: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub pdot_bar: f64,
    pub source: CertificateSource,
}

impl Certificate {
    pub fn p(&self, t: f64) -> Mat {
        match &self.form {
            PForm::Excitation {
                k_sym,
                weight,
                b,
                delta,
            } => {
                let g = gamma_of_t(b, *delta, t);
                &k_sym.scale(0.5 * weight) + &(&(k_sym * &g) * k_sym)
            }
            PForm::Floquet { gain, beta } => {
                Mat::scalar(exp(gain / (2.0 * beta) * sin(2.0 * beta * t)))
            }
            PForm::User { p } => p.eval(t),
        }
    }

    pub fn pdot(&self, t: f64) -> Mat {
        match &self.form {
            PForm::Excitation {
                k_sym, b, delta, ..
            } => &(k_sym * &gamma_dot(b, *delta, t)) * k_sym,
            PForm::Floquet { gain, beta } => {
                let p = exp(gain / (2.0 * beta) * sin(2.0 * beta * t));
                Mat::scalar(gain * libm::cos(2.0 * beta * t) * p)
            }
            PForm::User { p } => p.derivative(t),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            PForm::Excitation { k_sym, .. } => k_sym.rows(),
            PForm::Floquet { .. } => 1,
            PForm::User { p } => p.shape().0,
        }
    }

    /// User-supplied certificate. Constants are taken as given; use [`verify_certificate`].
    pub fn user(p: TimeFn, q: f64, p_lo: f64, p_hi: f64, pdot_bar: f64) -> Result<Self> {
        p.validate("certificate.P")?;
        let (r, c) = p.shape();
        if r != c {
            return Err(Error::NotSquare {
                field: "certificate.P".into(),
                rows: r,
                cols: c,
            });
        }
        for (field, v) in [
            ("certificate.q", q),
            ("certificate.p_lo", p_lo),
            ("certificate.p_hi", p_hi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be finite and positive"));
            }
        }
        if p_hi < p_lo {
            return Err(Error::invalid("certificate.p_hi", "must be at least p_lo"));
        }
        if !(pdot_bar.is_finite() && pdot_bar >= 0.0) {
            return Err(Error::invalid(
                "certificate.pdot_bar",
                "must be finite and nonnegative",
            ));
        }
        Ok(Certificate {
            form: PForm::User { p },
            q,
            p_lo,
            p_hi,
            pdot_bar,
            source: CertificateSource::User,
        })
    }
}

/// Everything the excitation construction needs, decoupled from a [`SystemModel`] so the
/// delay module can feed it transformed data.
#[derive(Clone, Debug)]
pub struct ExcitationInputs<'a> {
    pub k: &'a Mat,
    pub b: &'a TimeFn,
    pub a_bar: f64,
    pub b_bar: f64,
    /// `sup_t r(K_s A + Aᵀ K_s)`.
    pub rbar: f64,
    pub pe: &'a PeReport,
    pub rule: LowerBoundRule,
}

/// Intermediate quantities of the excitation construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSummary {
    pub k_norm: f64,
    pub k_min_eig: f64,
    pub k_max_eig: f64,
    pub weight: f64,
    pub rbar: f64,
    /// Must be negative for the construction to apply.
    pub condition_margin: f64,
}

/// The feasibility expression of the excitation construction; negative means feasible.
///
/// `r̄[½ + 2|K|⁴Δ²Γ̄²B̄²L³/(b̲λ²)] + 2ĀΔΓ̄|K|²L − (b̲/4)λ²`, where `λ = λ_min(K)` and
/// `L = conditioning` (1 without delay).
#[allow(clippy::too_many_arguments)]
pub fn excitation_margin(
    rbar: f64,
    k_norm: f64,
    k_min_eig: f64,
    delta: f64,
    gamma_bar: f64,
    b_bar: f64,
    a_bar: f64,
    b_lo: f64,
    conditioning: f64,
) -> f64 {
    let lam2 = k_min_eig * k_min_eig;
    let k2 = k_norm * k_norm;
    let dg = delta * gamma_bar;
    let l3 = conditioning * conditioning * conditioning;
    rbar * (0.5 + 2.0 * k2 * k2 * dg * dg * b_bar * b_bar * l3 / (b_lo * lam2))
        + 2.0 * a_bar * dg * k2 * conditioning
        - 0.25 * b_lo * lam2
}

/// Builds `P(t) = w·K/2 + KΓ(t)K` from excitation data, refusing when the feasibility
/// expression is not negative.
pub fn excitation_certificate_from(
    inputs: &ExcitationInputs<'_>,
) -> Result<(Certificate, ExcitationSummary)> {
    let (cert, summary) = excitation_certificate_unchecked(inputs)?;
    if !(summary.condition_margin < 0.0) {
        return Err(Error::infeasible(
            "excitation certificate condition",
            summary.condition_margin,
        ));
    }
    Ok((cert, summary))
}

/// Same construction without enforcing the feasibility expression. The returned constants
/// then carry no guarantee; the summary's `condition_margin` says by how much it failed.
pub fn excitation_certificate_unchecked(
    inputs: &ExcitationInputs<'_>,
) -> Result<(Certificate, ExcitationSummary)> {
    let k_sym = inputs.k.symmetric_part();
    let eig = sym_eig(&k_sym)?;
    let (lmin, lmax) = (eig.min(), eig.max());
    if !(lmin > 0.0) {
        return Err(Error::NotPositiveDefinite {
            field: "K".into(),
            min_eig: lmin,
        });
    }
    let k_norm = opnorm(inputs.k);
    let pe = inputs.pe;
    let dg = pe.delta * pe.gamma_bar;
    let margin = excitation_margin(
        inputs.rbar,
        k_norm,
        lmin,
        pe.delta,
        pe.gamma_bar,
        inputs.b_bar,
        inputs.a_bar,
        pe.b_lo,
        1.0,
    );
    let k2 = k_norm * k_norm;
    let weight =
        1.0 + 4.0 * k2 * k2 * dg * dg * inputs.b_bar * inputs.b_bar / (pe.b_lo * lmin * lmin);
    let summary = ExcitationSummary {
        k_norm,
        k_min_eig: lmin,
        k_max_eig: lmax,
        weight,
        rbar: inputs.rbar,
        condition_margin: margin,
    };
    let p_hi = lmax * weight / 2.0 + dg * k_norm * k_norm;
    let p_lo = match inputs.rule {
        LowerBoundRule::Stated => lmin * weight / 2.0,
        LowerBoundRule::Guaranteed => lmin * weight / 2.0 - dg * k_norm * k_norm,
    };
    if !(p_lo > 0.0) {
        return Err(Error::infeasible("certificate lower bound p_lo", p_lo));
    }
    let cert = Certificate {
        form: PForm::Excitation {
            k_sym,
            weight,
            b: inputs.b.clone(),
            delta: pe.delta,
        },
        q: pe.b_lo * lmin * lmin / (2.0 * p_hi),
        p_lo,
        p_hi,
        pdot_bar: 2.0 * inputs.b_bar * inputs.b_bar * k_norm * k_norm,
        source: CertificateSource::Excitation,
    };
    Ok((cert, summary))
}

/// `sup_t r(K_s A(t) + A(t)ᵀ K_s)` sampled with margin.
pub fn rbar_of(model: &SystemModel) -> Result<f64> {
    let ks = model.k_sym();
    let mut failure = None;
    let value = sup_over_time(
        |t| {
            let a = model.a.eval(t);
            let s = &(&ks * &a) + &(&a.transpose() * &ks);
            match spectral_radius_sym(&s.symmetric_part()) {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        model.sampling_period(),
        model.sampling_count(SUP_SAMPLES),
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Excitation-based certificate for a validated model.
pub fn excitation_certificate(
    model: &SystemModel,
    pe: &PeReport,
    rule: LowerBoundRule,
) -> Result<(Certificate, ExcitationSummary)> {
    let rbar = rbar_of(model)?;
    excitation_certificate_from(&ExcitationInputs {
        k: &model.k,
        b: &model.b,
        a_bar: model.a_bar,
        b_bar: model.b_bar,
        rbar,
        pe,
        rule,
    })
}

/// Closed-form certificate for `ẋ = a(t)x + cos(βt)u` with gain `k`: `P(t) = exp((k/2β) sin 2βt)`.
///
/// Along the averaged loop `Ṗ + 2HP = (2a − k)P`, so `q = k − 2·a_sup`.
pub fn floquet_scalar(gain: f64, beta: f64, a_sup: f64) -> Result<Certificate> {
    if !(beta.is_finite() && beta != 0.0) {
        return Err(Error::invalid("beta", "must be finite and nonzero"));
    }
    let q = gain - 2.0 * a_sup;
    if !(q > 0.0) {
        return Err(Error::infeasible("gain must exceed twice sup |a|", q));
    }
    let beta = fabs(beta);
    let r = gain / (2.0 * beta);
    Ok(Certificate {
        form: PForm::Floquet { gain, beta },
        q,
        p_lo: exp(-r),
        p_hi: exp(r),
        pdot_bar: gain * exp(r),
        source: CertificateSource::Floquet,
    })
}

/// Sampled check of a certificate against a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// Max over the grid of `λ_max(Ṗ + PH + HᵀP + qP)`; must be ≤ 0.
    pub max_lmi_eig: f64,
    pub worst_t: f64,
    /// `p_lo − min λ_min(P)`; ≤ 0 when the lower bound holds.
    pub p_lo_margin: f64,
    /// `max λ_max(P) − p_hi`; ≤ 0 when the upper bound holds.
    pub p_hi_margin: f64,
    /// `max |Ṗ| − pdot_bar`; ≤ 0 when the derivative bound holds.
    pub pdot_margin: f64,
    pub grid: usize,
}

impl VerifyReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_lmi_eig <= tol
            && self.p_lo_margin <= tol
            && self.p_hi_margin <= tol
            && self.pdot_margin <= tol
    }

    /// Turns the first failing margin into an error.
    pub fn require(&self, tol: f64) -> Result<()> {
        let checks = [
            ("Lyapunov inequality", self.max_lmi_eig),
            ("lower bound p_lo", self.p_lo_margin),
            ("upper bound p_hi", self.p_hi_margin),
            ("derivative bound pdot_bar", self.pdot_margin),
        ];
        for (what, margin) in checks {
            if margin > tol {
                return Err(Error::CertificateRejected {
                    what: what.into(),
                    t: self.worst_t,
                    margin,
                });
            }
        }
        Ok(())
    }
}

/// `H(t) = A(t) − B(t)B(t)ᵀK`.
pub fn closed_loop_h(model: &SystemModel, t: f64) -> Mat {
    let b = model.b.eval(t);
    &model.a.eval(t) - &(&(&b * &b.transpose()) * &model.k)
}

/// Evaluates the Lyapunov inequality and the bounds of `cert` on `grid` points spanning one
/// coefficient period (a single point for constant data).
pub fn verify_certificate(
    cert: &Certificate,
    model: &SystemModel,
    grid: usize,
) -> Result<VerifyReport> {
    if cert.dim() != model.n {
        return Err(Error::Dimension {
            field: "certificate.P".into(),
            expected: alloc::format!("{0}x{0}", model.n),
            found: alloc::format!("{0}x{0}", cert.dim()),
        });
    }
    let period = match (&cert.form, model.sampling_period()) {
        (PForm::User { p }, None) => p.period(),
        (PForm::Floquet { beta, .. }, None) => Some(core::f64::consts::PI / beta),
        (_, p) => p,
    };
    let mut report = VerifyReport {
        max_lmi_eig: f64::NEG_INFINITY,
        worst_t: 0.0,
        p_lo_margin: f64::NEG_INFINITY,
        p_hi_margin: f64::NEG_INFINITY,
        pdot_margin: f64::NEG_INFINITY,
        grid,
    };
    for t in grid_times(period, grid) {
        let p = cert.p(t);
        let pdot = cert.pdot(t);
        let h = closed_loop_h(model, t);
        let ph = &p * &h;
        let lmi = &(&(&pdot + &ph) + &ph.transpose()) + &p.scale(cert.q);
        let top = sym_eig(&lmi.symmetric_part())?.max();
        if top > report.max_lmi_eig {
            report.max_lmi_eig = top;
            report.worst_t = t;
        }
        let pe = sym_eig(&p.symmetric_part())?;
        report.p_lo_margin = report.p_lo_margin.max(cert.p_lo - pe.min());
        report.p_hi_margin = report.p_hi_margin.max(pe.max() - cert.p_hi);
        report.pdot_margin = report.pdot_margin.max(opnorm(&pdot) - cert.pdot_bar);
    }
    Ok(report)
}
