//! Certification, ultimate bounds and simulation for bounded extremum-seeking control of
//! single-input linear time-varying systems whose control direction is unknown.
//!
//! The closed loop is `ẋ = A(t)x + B(t)√(2π/ε)·cos(2πt/ε + xᵀKx + δ(t))`. Its averaged
//! behaviour is governed by `H(t) = A(t) − B(t)B(t)ᵀK`; a Lyapunov certificate for `H`
//! turns into explicit exponential envelopes and an ultimate bound for the state.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod builtin;
pub mod certificate;
pub mod constants;
pub mod delays;
pub mod error;
pub mod mat;
pub mod ode;
pub mod quad;
pub mod scenario;
pub mod simulate;
pub mod tables;

pub use error::{Error, Result};
pub use mat::{expm, opnorm, spectral_radius_sym, svd_extremes, sym_eig, Mat, SymEig};
