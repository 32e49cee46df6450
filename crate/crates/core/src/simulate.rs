//! Fixed-step simulation of the closed loop
//! `ẋ = A(t)x + B(t)√(2π/ε)cos(2πt/ε + y + δ(t))`, where `y = xᵀKx` is either measured
//! instantly or with a time-varying delay.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{ceil, cos, fabs, floor, sqrt};
use serde::{Deserialize, Serialize};

use crate::constants::{ConstantsReport, EnvelopeParams};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::ode::{Rk4, STAGE_OFFSETS};
use crate::scenario::{EsParams, NoiseModel, Signal, SystemModel, TimeFn};

pub const DEFAULT_STEPS_PER_DITHER: usize = 50;
pub const MIN_STEPS_PER_DITHER: usize = 20;
pub const DEFAULT_MAX_SAMPLES: usize = 100_000;
/// Absolute slack before `|x(t)| > bound(t)` counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-9;
/// States beyond this norm are treated as a numerical blow-up.
const BLOW_UP: f64 = 1e150;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    /// `dt = ε / steps_per_dither`.
    pub steps_per_dither: usize,
    /// Upper limit on retained samples; every `⌈steps/max_samples⌉`-th step is kept.
    pub max_samples: usize,
}

impl SimConfig {
    pub fn new(horizon: f64) -> Self {
        SimConfig {
            horizon,
            steps_per_dither: DEFAULT_STEPS_PER_DITHER,
            max_samples: DEFAULT_MAX_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::invalid("horizon", "must be finite and nonnegative"));
        }
        if self.steps_per_dither < MIN_STEPS_PER_DITHER {
            return Err(Error::invalid(
                "steps_per_dither",
                "at least 20 steps per dither period are required",
            ));
        }
        if self.max_samples < 2 {
            return Err(Error::invalid("max_samples", "must be at least 2"));
        }
        Ok(())
    }

    pub fn dt(&self, epsilon: f64) -> f64 {
        epsilon / self.steps_per_dither as f64
    }

    /// `⌈horizon/dt⌉`, ignoring rounding noise when the ratio is an integer.
    pub fn total_steps(&self, epsilon: f64) -> usize {
        let ratio = self.horizon / self.dt(epsilon);
        let nearest = libm::round(ratio);
        if fabs(ratio - nearest) <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ceil(ratio) as usize
        }
    }

    fn stride(&self, steps: usize) -> usize {
        steps.div_ceil(self.max_samples - 1).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub norm: f64,
    pub bound: f64,
}

/// Retained samples of one run on a uniform grid (every `stride`-th step plus the last).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub dt: f64,
    pub stride: usize,
    /// Steps actually taken.
    pub steps: usize,
    pub times: Vec<f64>,
    /// Row-major, `n` entries per sample.
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    #[serde(default)]
    pub envelope: Option<Vec<f64>>,
    /// Every step at which the monitored bound was exceeded, retained or not.
    pub violations: Vec<Violation>,
    /// The state became nonfinite or huge; the run stopped there.
    pub blew_up: bool,
}

impl Trajectory {
    fn new(n: usize, dt: f64, stride: usize, monitored: bool) -> Self {
        Trajectory {
            n,
            dt,
            stride,
            steps: 0,
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            envelope: monitored.then(Vec::new),
            violations: Vec::new(),
            blew_up: false,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn norm(&self, i: usize) -> f64 {
        euclid(self.state(i))
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// Largest `|x|` over retained samples with `t ≥ from`.
    pub fn max_norm_after(&self, from: f64) -> f64 {
        (0..self.len())
            .filter(|&i| self.times[i] >= from)
            .map(|i| self.norm(i))
            .fold(0.0, f64::max)
    }

    fn push(&mut self, t: f64, x: &[f64], u: f64, bound: Option<f64>) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.controls.push(u);
        if let (Some(env), Some(b)) = (self.envelope.as_mut(), bound) {
            env.push(b);
        }
    }
}

pub(crate) fn euclid(x: &[f64]) -> f64 {
    sqrt(x.iter().map(|v| v * v).sum::<f64>())
}

/// A time-dependent bound on `|x(t)|`.
pub trait Bound {
    fn at(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Bound for F {
    fn at(&self, t: f64) -> f64 {
        self(t)
    }
}

/// The simplified exponential envelope of a feasible report.
#[derive(Clone, Debug)]
pub struct Envelope {
    report: ConstantsReport,
    params: EnvelopeParams,
}

impl Envelope {
    pub fn new(report: &ConstantsReport, params: &EnvelopeParams) -> Result<Self> {
        report.envelope_simplified(params, 0.0)?;
        Ok(Envelope {
            report: report.clone(),
            params: *params,
        })
    }
}

impl Bound for Envelope {
    fn at(&self, t: f64) -> f64 {
        self.report
            .envelope_simplified(&self.params, t)
            .unwrap_or(f64::INFINITY)
    }
}

/// Control and coefficient evaluation shared by the simulators.
pub(crate) struct Loop<'a> {
    pub model: &'a SystemModel,
    pub noise: &'a NoiseModel,
    pub amplitude: f64,
    pub spd: usize,
    pub dt: f64,
    a: Mat,
    b: Mat,
    a_const: bool,
    b_const: bool,
}

impl<'a> Loop<'a> {
    pub fn new(model: &'a SystemModel, noise: &'a NoiseModel, es: &EsParams, spd: usize) -> Self {
        Loop {
            model,
            noise,
            amplitude: es.amplitude(),
            spd,
            dt: es.epsilon / spd as f64,
            a: model.a.eval(0.0),
            b: model.b.eval(0.0),
            a_const: model.a.is_constant(),
            b_const: model.b.is_constant(),
        }
    }

    /// Time of stage `s` in step `i`.
    pub fn time(&self, i: usize, s: usize) -> f64 {
        (i as f64 + STAGE_OFFSETS[s]) * self.dt
    }

    /// Dither phase `2πt/ε` reduced exactly via the step index.
    pub fn dither_phase(&self, i: usize, s: usize) -> f64 {
        2.0 * PI * ((i % self.spd) as f64 + STAGE_OFFSETS[s]) / self.spd as f64
    }

    pub fn control(&self, i: usize, s: usize, measured: f64) -> f64 {
        let t = self.time(i, s);
        self.amplitude * cos(self.dither_phase(i, s) + measured + self.noise.delta.eval(t))
    }

    /// `dx = A(t)x + B(t)u`.
    pub fn drift(&mut self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        if !self.a_const {
            self.model.a.eval_into(t, &mut self.a);
        }
        if !self.b_const {
            self.model.b.eval_into(t, &mut self.b);
        }
        self.a.mul_vec_into(x, dx);
        for (d, bi) in dx.iter_mut().zip(self.b.data()) {
            *d += bi * u;
        }
    }
}

fn check_x0(model: &SystemModel, x0: &[f64]) -> Result<()> {
    if x0.len() != model.n {
        return Err(Error::Dimension {
            field: "x0".into(),
            expected: alloc::format!("{}", model.n),
            found: alloc::format!("{}", x0.len()),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("x0".into()));
    }
    Ok(())
}

/// Delayed measurement `y(t − τ(t))` served from node values with linear interpolation.
struct History {
    /// `y` at steps `first..=last`.
    values: VecDeque<f64>,
    first: usize,
    capacity: usize,
    initial: f64,
}

impl History {
    fn new(initial: f64, capacity: usize) -> Self {
        let mut values = VecDeque::with_capacity(capacity + 1);
        values.push_back(initial);
        History {
            values,
            first: 0,
            capacity,
            initial,
        }
    }

    fn push(&mut self, y: f64) {
        self.values.push_back(y);
        if self.values.len() > self.capacity {
            self.values.pop_front();
            self.first += 1;
        }
    }

    fn last(&self) -> usize {
        self.first + self.values.len() - 1
    }

    fn node(&self, j: usize) -> f64 {
        self.values[j - self.first]
    }

    /// `y` at time `s`, where the current step started at node `i` with stage value
    /// `y_stage` at offset `stage_dt` (used when `s` falls inside the current step).
    fn at(&self, s: f64, dt: f64, stage_dt: f64, y_stage: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(self.initial);
        }
        let i = self.last();
        let pos = s / dt;
        let j = floor(pos) as usize;
        if j >= i {
            // Inside the current step: between the node and the stage estimate.
            let offset = s - i as f64 * dt;
            if stage_dt <= 0.0 {
                return Ok(self.node(i));
            }
            let w = (offset / stage_dt).min(1.0);
            return Ok(self.node(i) + w * (y_stage - self.node(i)));
        }
        if j < self.first {
            return Err(Error::invalid(
                "tau",
                "delay exceeds the history buffer horizon",
            ));
        }
        let w = pos - j as f64;
        Ok((1.0 - w) * self.node(j) + w * self.node(j + 1))
    }
}

fn run(
    model: &SystemModel,
    noise: &NoiseModel,
    es: &EsParams,
    x0: &[f64],
    cfg: &SimConfig,
    bound: Option<&dyn Bound>,
    delay: Option<&Signal>,
) -> Result<Trajectory> {
    es.validate()?;
    cfg.validate()?;
    check_x0(model, x0)?;
    let n = model.n;
    let mut lp = Loop::new(model, noise, es, cfg.steps_per_dither);
    let dt = lp.dt;
    let steps = cfg.total_steps(es.epsilon);
    let stride = cfg.stride(steps);
    let k = &model.k;
    let mut traj = Trajectory::new(n, dt, stride, bound.is_some());

    let mut history = match delay {
        Some(tau) => {
            let horizon = tau.sup_abs();
            let capacity = ceil(horizon / dt) as usize + 3;
            Some((tau, horizon, History::new(k.quad_form(x0), capacity)))
        }
        None => None,
    };

    let mut x = x0.to_vec();
    let mut rk = Rk4::new(n);
    let mut failure: Option<Error> = None;

    let measured = |i: usize,
                    s: usize,
                    xs: &[f64],
                    history: &Option<(&Signal, f64, History)>|
     -> Result<f64> {
        let y = k.quad_form(xs);
        match history {
            None => Ok(y),
            Some((tau, horizon, h)) => {
                let t = (i as f64 + STAGE_OFFSETS[s]) * dt;
                let d = tau.eval(t);
                if !(d >= 0.0 && d <= horizon * (1.0 + 1e-12)) {
                    return Err(Error::invalid("tau", "delay must lie in [0, sup|tau|]"));
                }
                if d == 0.0 {
                    return Ok(y);
                }
                h.at(t - d, dt, STAGE_OFFSETS[s] * dt, y)
            }
        }
    };

    let observe = |traj: &mut Trajectory, i: usize, x: &[f64], u: f64, keep: bool| {
        let t = i as f64 * dt;
        let b = bound.map(|b| b.at(t));
        if let Some(b) = b {
            let norm = euclid(x);
            if norm > b + VIOLATION_TOL {
                traj.violations.push(Violation { t, norm, bound: b });
            }
        }
        if keep {
            traj.push(t, x, u, b);
        }
    };

    let u0 = lp.control(0, 0, measured(0, 0, &x, &history)?);
    observe(&mut traj, 0, &x, u0, true);
    for i in 0..steps {
        rk.step(
            |s, xs, dx| {
                if failure.is_some() {
                    dx.iter_mut().for_each(|d| *d = 0.0);
                    return;
                }
                match measured(i, s, xs, &history) {
                    Ok(y) => {
                        let u = lp.control(i, s, y);
                        lp.drift(lp.time(i, s), xs, u, dx);
                    }
                    Err(e) => failure = Some(e),
                }
            },
            dt,
            &mut x,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        traj.steps = i + 1;
        let norm = euclid(&x);
        if !(norm.is_finite() && norm < BLOW_UP) {
            traj.blew_up = true;
            break;
        }
        if let Some((_, _, h)) = history.as_mut() {
            h.push(k.quad_form(&x));
        }
        let keep = (i + 1) % stride == 0 || i + 1 == steps;
        let u = if keep {
            lp.control(i + 1, 0, measured(i + 1, 0, &x, &history)?)
        } else {
            0.0
        };
        observe(&mut traj, i + 1, &x, u, keep);
    }
    Ok(traj)
}

/// Simulates the undelayed loop from `x0` over `cfg.horizon`.
///
/// When `bound` is given, `|x|` is compared against it after every step.
pub fn integrate_closed_loop(
    model: &SystemModel,
    noise: &NoiseModel,
    es: &EsParams,
    x0: &[f64],
    cfg: &SimConfig,
    bound: Option<&dyn Bound>,
) -> Result<Trajectory> {
    run(model, noise, es, x0, cfg, bound, None)
}

/// Simulates the loop with the measurement `xᵀKx` taken at `t − τ(t)`; the history before
/// `t = 0` is held at `x0`.
pub fn integrate_measurement_delay(
    model: &SystemModel,
    noise: &NoiseModel,
    es: &EsParams,
    tau: &Signal,
    x0: &[f64],
    cfg: &SimConfig,
    bound: Option<&dyn Bound>,
) -> Result<Trajectory> {
    tau.validate("tau")?;
    run(model, noise, es, x0, cfg, bound, Some(tau))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub samples: usize,
    pub count: usize,
    /// Largest `|x| − bound`; negative when every sample is inside.
    pub worst_excess: f64,
    pub worst_t: f64,
}

/// Compares retained samples of `traj` with the simplified envelope of `report`.
pub fn check_envelope(
    traj: &Trajectory,
    report: &ConstantsReport,
    env: &EnvelopeParams,
) -> Result<ViolationSummary> {
    if traj.is_empty() {
        return Ok(ViolationSummary::default());
    }
    let mut summary = ViolationSummary {
        samples: traj.len(),
        count: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_t: 0.0,
    };
    for i in 0..traj.len() {
        let t = traj.times[i];
        let excess = traj.norm(i) - report.envelope_simplified(env, t)?;
        if excess > VIOLATION_TOL {
            summary.count += 1;
        }
        if excess > summary.worst_excess {
            summary.worst_excess = excess;
            summary.worst_t = t;
        }
    }
    Ok(summary)
}

/// Uncontrolled reference: `B ≡ 0` makes the loop linear.
pub fn is_uncontrolled(model: &SystemModel) -> bool {
    matches!(&model.b, TimeFn::Constant { value } if value.max_abs() == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::expm;

    fn hurwitz_uncontrolled() -> SystemModel {
        SystemModel {
            n: 2,
            a: TimeFn::constant(Mat::from_rows(&[[-1.0, 2.0], [-2.0, -1.5]])),
            b: TimeFn::constant(Mat::column(&[0.0, 0.0])),
            a_bar: 3.0,
            b_bar: 0.0,
            db_bar: 0.0,
            k: Mat::identity(2),
        }
    }

    fn es(eps: f64) -> EsParams {
        EsParams {
            epsilon: eps,
            sigma0: 1.0,
            weight_a: 0.1,
            weight_b: 1.0,
            xi0_policy: Default::default(),
        }
    }

    #[test]
    fn uncontrolled_matches_matrix_exponential() {
        let model = hurwitz_uncontrolled();
        assert!(is_uncontrolled(&model));
        let cfg = SimConfig::new(1.0);
        let traj =
            integrate_closed_loop(&model, &NoiseModel::zero(), &es(1e-2), &[1.0, -0.5], &cfg, None)
                .unwrap();
        let exact = expm(&model.a.eval(0.0)).unwrap().mul_vec(&[1.0, -0.5]);
        let last = traj.final_state().unwrap();
        assert!((last[0] - exact[0]).abs() < 1e-6 && (last[1] - exact[1]).abs() < 1e-6);
        assert_eq!(*traj.times.last().unwrap(), traj.steps as f64 * traj.dt);
    }

    #[test]
    fn decimation_respects_sample_cap() {
        let model = hurwitz_uncontrolled();
        let cfg = SimConfig {
            max_samples: 10,
            ..SimConfig::new(1.0)
        };
        let traj =
            integrate_closed_loop(&model, &NoiseModel::zero(), &es(1e-2), &[1.0, 0.0], &cfg, None)
                .unwrap();
        assert!(traj.len() <= 10);
        assert_eq!(traj.steps, 5000);
    }

    #[test]
    fn blow_up_is_flagged() {
        let mut model = hurwitz_uncontrolled();
        model.a = TimeFn::constant(Mat::identity(2).scale(400.0));
        model.a_bar = 400.0;
        let traj = integrate_closed_loop(
            &model,
            &NoiseModel::zero(),
            &es(1e-2),
            &[1.0, 0.0],
            &SimConfig::new(2.0),
            None,
        )
        .unwrap();
        assert!(traj.blew_up && traj.steps < 10_000);
    }

    #[test]
    fn too_coarse_steps_rejected() {
        let cfg = SimConfig {
            steps_per_dither: 10,
            ..SimConfig::new(1.0)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_interpolates_linearly() {
        let mut h = History::new(1.0, 8);
        h.push(3.0);
        h.push(5.0);
        assert_eq!(h.at(-0.3, 1.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(h.at(0.5, 1.0, 0.0, 0.0).unwrap(), 2.0);
        assert_eq!(h.at(1.25, 1.0, 0.0, 0.0).unwrap(), 3.5);
        // Inside the current step, halfway to a stage value of 9 placed at offset 0.5.
        assert_eq!(h.at(2.25, 1.0, 0.5, 9.0).unwrap(), 7.0);
    }
}
