//! Classical fixed-step Runge–Kutta.

use alloc::vec;
use alloc::vec::Vec;

/// Scratch space for RK4 steps on an `n`-dimensional state.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

/// Fractions of the step at which the four stages are evaluated.
pub const STAGE_OFFSETS: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` by one step of length `dt`.
    ///
    /// `f(stage, x, dx)` writes the derivative at stage `stage` (time offset
    /// `STAGE_OFFSETS[stage]·dt` from the step start) into `dx`.
    pub fn step<F: FnMut(usize, &[f64], &mut [f64])>(&mut self, mut f: F, dt: f64, x: &mut [f64]) {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        f(0, x, k1);
        for ((t, xi), k) in tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
            *t = xi + 0.5 * dt * k;
        }
        f(1, tmp, k2);
        for ((t, xi), k) in tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
            *t = xi + 0.5 * dt * k;
        }
        f(2, tmp, k3);
        for ((t, xi), k) in tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
            *t = xi + dt * k;
        }
        f(3, tmp, k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Integrates `ẋ = f(t, x)` from `t0` over `steps` steps of `dt`, returning the final state.
pub fn integrate<F: FnMut(f64, &[f64], &mut [f64])>(
    mut f: F,
    t0: f64,
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    for i in 0..steps {
        let t = t0 + dt * i as f64;
        rk.step(|s, y, dy| f(t + STAGE_OFFSETS[s] * dt, y, dy), dt, &mut x);
    }
    x
}
