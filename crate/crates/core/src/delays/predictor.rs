//! Simulation of `ẋ = A x + B(t)u(t−τ)` under predictor feedback
//! `u(t) = √(2π/ε)cos(2πt/ε + ζᵀKζ)`, `u = 0` before `t = 0`.
//!
//! `ζ` is integrated from `ζ̇ = Aζ + B_new(t)u(t)` alongside `x` in one RK4 system; the
//! delayed input of `x` replays the stage values of `u` recorded `τ/dt` steps earlier, so
//! `ζ = x + 𝒯` holds up to quadrature error and serves as a diagnostic.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, fabs, round};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{expm, Mat};
use crate::ode::Rk4;
use crate::scenario::{EsParams, SystemModel};
use crate::simulate::{euclid, Bound, SimConfig, Trajectory, Violation, VIOLATION_TOL};

/// Largest delay, in steps, the simulator keeps history for.
pub const MAX_DELAY_STEPS: usize = 200_000;

/// Stage values `[u₁, u₂, u₃, u₄]` of one RK4 step.
pub type StageControls = [f64; 4];

/// Kernel `Φ_E(t−τ, m)B(m+τ)` of the transfer integral for constant `A`, sampled at
/// half-step offsets `m − (t−τ) = k·dt/2`, `k = 0..=2·steps`.
#[derive(Clone, Debug)]
pub struct TransferKernel {
    /// `e^{−k(dt/2)A}`.
    transitions: Vec<Mat>,
    dt: f64,
    tau: f64,
    steps: usize,
}

impl TransferKernel {
    pub fn new(a: &Mat, dt: f64, steps: usize) -> Result<Self> {
        let transitions = (0..=2 * steps)
            .map(|k| expm(&a.scale(-(k as f64) * 0.5 * dt)))
            .collect::<Result<_>>()?;
        Ok(TransferKernel {
            transitions,
            dt,
            tau: steps as f64 * dt,
            steps,
        })
    }

    /// `𝒯(t) = ∫_{t−τ}^{t} Φ_E(t−τ, m)B(m+τ)u(m) dm` by Simpson's rule on each step, using
    /// the recorded stage controls of the `steps` steps preceding `t` (oldest first) and
    /// the mean of the two midpoint stages.
    pub fn transfer(
        &self,
        model: &SystemModel,
        t: f64,
        history: &VecDeque<StageControls>,
        out: &mut [f64],
    ) -> Result<()> {
        if history.len() < self.steps {
            return Err(Error::invalid("history", "does not cover the delay window"));
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let start = t - self.tau;
        let skip = history.len() - self.steps;
        for (j, u) in history.iter().skip(skip).enumerate() {
            let mid = 0.5 * (u[1] + u[2]);
            for (off, w, uv) in [(0, 1.0, u[0]), (1, 4.0, mid), (2, 1.0, u[3])] {
                if uv == 0.0 {
                    continue;
                }
                let k = 2 * j + off;
                let m = start + 0.5 * self.dt * k as f64;
                let kernel = &self.transitions[k] * &model.b.eval(m + self.tau);
                for (o, kv) in out.iter_mut().zip(kernel.data()) {
                    *o += self.dt / 6.0 * w * kv * uv;
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one predictor-feedback run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorRun {
    /// Delay actually simulated: `delay_steps·dt`.
    pub tau: f64,
    pub delay_steps: usize,
    /// Plant state. Violations compare `|x|` with the bound plus `|𝒯|` at retained samples.
    pub x: Trajectory,
    /// Predictor state with its own controls. Violations compare `|ζ|` with the bound.
    pub zeta: Trajectory,
    /// `|𝒯|` at the retained samples.
    pub transfer_norm: Vec<f64>,
    /// `max |ζ − x − 𝒯|` over retained samples.
    pub identity_residual: f64,
    /// `max |Δζ/Δt − Aζ − B_new u|` with a central difference at every interior step.
    pub dynamics_residual: f64,
}

/// Simulates predictor feedback for constant `A` and input delay `tau` (rounded to a whole
/// number of steps, at least one).
///
/// `zeta_bound` bounds `|ζ(t)|`; `|x(t)|` is then checked against it plus `|𝒯(t)|`.
pub fn integrate_input_delay(
    model: &SystemModel,
    es: &EsParams,
    tau: f64,
    x0: &[f64],
    cfg: &SimConfig,
    zeta_bound: Option<&dyn Bound>,
) -> Result<PredictorRun> {
    es.validate()?;
    cfg.validate()?;
    if !model.a.is_constant() {
        return Err(Error::invalid(
            "A",
            "input-delay simulation supports constant A only",
        ));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", "input delay must be positive"));
    }
    let n = model.n;
    if x0.len() != n {
        return Err(Error::Dimension {
            field: "x0".into(),
            expected: alloc::format!("{n}"),
            found: alloc::format!("{}", x0.len()),
        });
    }
    let dt = cfg.dt(es.epsilon);
    let delay_steps = (round(tau / dt) as usize).max(1);
    if delay_steps > MAX_DELAY_STEPS {
        return Err(Error::invalid(
            "tau",
            "delay spans too many integration steps; raise epsilon or shorten the delay",
        ));
    }
    let tau = delay_steps as f64 * dt;
    let a = model.a.eval(0.0);
    let shift = expm(&a.scale(-tau))?;
    let kernel = TransferKernel::new(&a, dt, delay_steps)?;
    let amplitude = es.amplitude();
    let spd = cfg.steps_per_dither;
    let steps = cfg.total_steps(es.epsilon);
    let stride = steps.div_ceil(cfg.max_samples - 1).max(1);
    let k = &model.k;
    let phase = |i: usize, s: usize| {
        2.0 * core::f64::consts::PI * ((i % spd) as f64 + crate::ode::STAGE_OFFSETS[s])
            / spd as f64
    };
    let time = |i: usize, s: usize| (i as f64 + crate::ode::STAGE_OFFSETS[s]) * dt;
    let b_new = |t: f64| &shift * &model.b.eval(t + tau);

    let empty = |monitored: bool| Trajectory {
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
    };
    let mut run = PredictorRun {
        tau,
        delay_steps,
        x: empty(zeta_bound.is_some()),
        zeta: empty(zeta_bound.is_some()),
        transfer_norm: Vec::new(),
        identity_residual: 0.0,
        dynamics_residual: 0.0,
    };

    let mut history: VecDeque<StageControls> = (0..delay_steps).map(|_| [0.0; 4]).collect();
    // State layout: [x; ζ], ζ(0) = x(0) because u vanishes before t = 0.
    let mut state = vec![0.0; 2 * n];
    state[..n].copy_from_slice(x0);
    state[n..].copy_from_slice(x0);
    let mut rk = Rk4::new(2 * n);
    let mut transfer = vec![0.0; n];
    let mut bx = Mat::zeros(n, 1);
    let mut zeta_prev: Option<Vec<f64>> = None;
    let mut zeta_node = x0.to_vec();

    let record = |run: &mut PredictorRun,
                      i: usize,
                      state: &[f64],
                      history: &VecDeque<StageControls>,
                      transfer: &mut [f64]|
     -> Result<()> {
        let t = i as f64 * dt;
        let (x, zeta) = state.split_at(n);
        kernel.transfer(model, t, history, transfer)?;
        let t_norm = euclid(transfer);
        let resid: Vec<f64> = (0..n).map(|r| zeta[r] - x[r] - transfer[r]).collect();
        run.identity_residual = run.identity_residual.max(euclid(&resid));
        run.transfer_norm.push(t_norm);
        let u_now = amplitude * cos(phase(i, 0) + k.quad_form(zeta));
        let u_applied = history.front().map_or(0.0, |u| u[0]);
        let bound = zeta_bound.map(|b| b.at(t));
        run.x.times.push(t);
        run.x.states.extend_from_slice(x);
        run.x.controls.push(u_applied);
        run.zeta.times.push(t);
        run.zeta.states.extend_from_slice(zeta);
        run.zeta.controls.push(u_now);
        if let Some(b) = bound {
            if let Some(e) = run.x.envelope.as_mut() {
                e.push(b + t_norm);
            }
            if let Some(e) = run.zeta.envelope.as_mut() {
                e.push(b);
            }
            let (xn, zn) = (euclid(x), euclid(zeta));
            if xn > b + t_norm + VIOLATION_TOL {
                run.x.violations.push(Violation {
                    t,
                    norm: xn,
                    bound: b + t_norm,
                });
            }
            if zn > b + VIOLATION_TOL {
                run.zeta.violations.push(Violation {
                    t,
                    norm: zn,
                    bound: b,
                });
            }
        }
        Ok(())
    };

    record(&mut run, 0, &state, &history, &mut transfer)?;
    for i in 0..steps {
        let delayed = *history.front().expect("history holds delay_steps entries");
        let mut current: StageControls = [0.0; 4];
        rk.step(
            |s, y, dy| {
                let (x, zeta) = y.split_at(n);
                let (dx, dzeta) = dy.split_at_mut(n);
                let t = time(i, s);
                let u = amplitude * cos(phase(i, s) + k.quad_form(zeta));
                current[s] = u;
                model.b.eval_into(t, &mut bx);
                a.mul_vec_into(x, dx);
                for (d, bv) in dx.iter_mut().zip(bx.data()) {
                    *d += bv * delayed[s];
                }
                let bn = b_new(t);
                a.mul_vec_into(zeta, dzeta);
                for (d, bv) in dzeta.iter_mut().zip(bn.data()) {
                    *d += bv * u;
                }
            },
            dt,
            &mut state,
        );
        // Central difference of ζ around the node that started this step.
        let zeta_next = &state[n..];
        if let Some(prev) = &zeta_prev {
            let mut rhs = a.mul_vec(&zeta_node);
            for (r, bv) in rhs.iter_mut().zip(b_new(time(i, 0)).data()) {
                *r += bv * current[0];
            }
            let res: Vec<f64> = (0..n)
                .map(|r| (zeta_next[r] - prev[r]) / (2.0 * dt) - rhs[r])
                .collect();
            run.dynamics_residual = run.dynamics_residual.max(euclid(&res));
        }
        zeta_prev = Some(core::mem::replace(&mut zeta_node, zeta_next.to_vec()));
        history.push_back(current);
        history.pop_front();
        run.x.steps = i + 1;
        run.zeta.steps = i + 1;
        if !state.iter().all(|v| v.is_finite() && fabs(*v) < 1e150) {
            run.x.blew_up = true;
            run.zeta.blew_up = true;
            break;
        }
        if (i + 1) % stride == 0 || i + 1 == steps {
            record(&mut run, i + 1, &state, &history, &mut transfer)?;
        }
    }
    Ok(run)
}
