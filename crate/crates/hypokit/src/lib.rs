//! Numerical toolkit for hypocoercive decay of the kinetic Fokker–Planck
//! equation
//!
//! ```text
//! ∂t f + v·∇ₓf − ∇ₓV·∇ᵥf = ν ∇ᵥ·(v f) + σ Δᵥ f
//! ```
//!
//! The crate covers explicit decay rates, sampling-based certificates for the
//! matrix inequalities behind them, exact propagator norms for quadratic
//! potentials and a small phase-space solver (one space dimension) used to
//! cross-check all of the above.
//!
//! Everything except the optional `parallel` feature works under `no_std` with
//! `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod assumptions;
mod error;
pub mod fit;
mod fmath;
pub mod lyapunov;
pub mod matrix;
pub mod potential;
pub mod propagator;
pub mod rates;
pub mod solver;

pub use error::{Error, Result};
