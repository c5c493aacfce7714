//! Phase-space solver for the h-formulation in one space dimension,
//!
//! ```text
//! ∂t h + v ∂x h − V'(x) ∂v h = σ ∂²v h − ν v ∂v h,    h = f / f∞,
//! ```
//!
//! on a truncated box, with weighted functional tracking and the two
//! cross-checks against the analytic side: the dS/dt identity and the
//! short-time regularization exponents.

mod experiments;
mod functionals;
mod grid;
mod scheme;

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{domain, invalid, Result};
use crate::fmath::{exp, tanh};

pub use experiments::{
    ds_dt_residual, evolve, fit_l2_rate, hypoelliptic_experiment, DsDtReport, EvolveOptions, FunctionalSeries,
    HypoOptions, HypoSlopes,
};
pub use functionals::{functionals, FunctionalSample, FunctionalSpec, PChoice};
pub use grid::{default_lv, default_lx, PhaseGrid, TAIL};
pub use scheme::{Limiter, Stepper, CFL_LIMIT};

/// Solution state: the ratio `h = f/f∞` on a grid.
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Arc<PhaseGrid>,
    /// Row-major `h[i·nv + j]` with i along x.
    pub h: Vec<f64>,
}

/// One bump `amplitude · exp(−|ξ − center|² / (2 width²))` added to h.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Bump {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: f64,
}

/// Initial datum.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum InitialDatum {
    /// `f0 = f∞`.
    Equilibrium,
    /// Gaussian density with the given mean `(x, v)` and covariance.
    GaussianShifted { mean: [f64; 2], covariance: [[f64; 2]; 2] },
    /// `h = 1 + Σ bumps`.
    HPerturbation { bumps: Vec<Bump> },
    /// v-independent `h ∝ 1_[a,b](x)`, smoothed over `smoothing` by tanh ramps.
    RoughIndicator { x_interval: [f64; 2], smoothing: f64 },
}

impl Field {
    /// `h ≡ 1`.
    pub fn equilibrium(grid: Arc<PhaseGrid>) -> Self {
        let n = grid.len();
        Field { grid, h: alloc::vec![1.0; n] }
    }

    /// Wraps an existing array (for restarts); no normalization.
    pub fn from_h(grid: Arc<PhaseGrid>, h: Vec<f64>) -> Result<Self> {
        if h.len() != grid.len() {
            return Err(invalid("h has the wrong number of cells for this grid"));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(invalid("h contains non-finite values"));
        }
        Ok(Field { grid, h })
    }

    /// Builds h from a datum and normalizes it to unit weighted mass.
    pub fn init(grid: Arc<PhaseGrid>, datum: &InitialDatum) -> Result<Self> {
        let g = &*grid;
        let beta = g.nu / g.sigma;
        let mut h = alloc::vec![0.0; g.len()];
        match datum {
            InitialDatum::Equilibrium => h.iter_mut().for_each(|v| *v = 1.0),
            InitialDatum::GaussianShifted { mean, covariance } => {
                let [[sxx, sxv], [svx, svv]] = *covariance;
                if [mean[0], mean[1], sxx, sxv, svx, svv].iter().any(|v| !v.is_finite()) {
                    return Err(invalid("Gaussian parameters must be finite"));
                }
                if (sxv - svx).abs() > 1e-12 * (1.0 + sxv.abs()) {
                    return Err(invalid("covariance must be symmetric"));
                }
                let det = sxx * svv - sxv * sxv;
                if !(sxx > 0.0 && det > 0.0) {
                    return Err(domain("covariance is not positive definite"));
                }
                let (ixx, ixv, ivv) = (svv / det, -sxv / det, sxx / det);
                // log(N / f∞) up to a constant, normalized below.
                let mut logs = alloc::vec![0.0; g.len()];
                let mut top = f64::NEG_INFINITY;
                for i in 0..g.nx {
                    let pot = beta * (g.pot[i] - g.v_min);
                    for j in 0..g.nv {
                        let dx = g.x[i] - mean[0];
                        let dv = g.v[j] - mean[1];
                        let q = ixx * dx * dx + 2.0 * ixv * dx * dv + ivv * dv * dv;
                        let l = -0.5 * q + pot + 0.5 * beta * g.v[j] * g.v[j];
                        logs[g.idx(i, j)] = l;
                        top = top.max(l);
                    }
                }
                for (hv, l) in h.iter_mut().zip(&logs) {
                    *hv = exp(l - top);
                }
            }
            InitialDatum::HPerturbation { bumps } => {
                for b in bumps {
                    if !(b.width > 0.0) || !b.amplitude.is_finite() || b.center.iter().any(|c| !c.is_finite()) {
                        return Err(invalid("bumps need a finite amplitude, finite centre and positive width"));
                    }
                }
                for i in 0..g.nx {
                    for j in 0..g.nv {
                        let mut s = 1.0;
                        for b in bumps {
                            let (ex, ev) = (g.x[i] - b.center[0], g.v[j] - b.center[1]);
                            let r2 = ex * ex + ev * ev;
                            s += b.amplitude * exp(-0.5 * r2 / (b.width * b.width));
                        }
                        h[g.idx(i, j)] = s;
                    }
                }
            }
            InitialDatum::RoughIndicator { x_interval: [lo, hi], smoothing } => {
                if !(lo < hi) || !(*smoothing >= 0.0) {
                    return Err(invalid("indicator needs lo < hi and nonnegative smoothing"));
                }
                for i in 0..g.nx {
                    let x = g.x[i];
                    let val = if *smoothing == 0.0 {
                        if x >= *lo && x <= *hi {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        0.5 * (tanh((x - lo) / smoothing) - tanh((x - hi) / smoothing))
                    };
                    h[i * g.nv..(i + 1) * g.nv].iter_mut().for_each(|v| *v = val);
                }
            }
        }
        let mut f = Field { grid, h };
        let m = f.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(domain("initial datum is not normalizable on this grid"));
        }
        f.h.iter_mut().for_each(|v| *v /= m);
        Ok(f)
    }

    /// `Σ w h`.
    pub fn mass(&self) -> f64 {
        self.grid.w.iter().zip(&self.h).map(|(w, h)| w * h).sum()
    }

    /// `f = h f∞` as a density (per unit dx dv).
    pub fn density(&self) -> Vec<f64> {
        let cell = self.grid.dx * self.grid.dv;
        self.grid.w.iter().zip(&self.h).map(|(w, h)| w * h / cell).collect()
    }
}
