use alloc::vec::Vec;

use super::functionals::{ds_dt_terms, functionals, FunctionalSample, FunctionalSpec, PChoice};
use super::scheme::{Limiter, Stepper};
use super::Field;
use crate::error::{domain, invalid, Result};
use crate::fit::linear_fit;
use crate::fmath::{ln, round};
use crate::lyapunov::LyapunovSelection;

impl From<&LyapunovSelection> for PChoice {
    fn from(sel: &LyapunovSelection) -> Self {
        PChoice::CaseMatrix { a: sel.a }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Steps between samples; the final state is always sampled.
    pub sample_every: usize,
    pub spec: FunctionalSpec,
    pub limiter: Limiter,
    pub theta: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalSeries {
    pub samples: Vec<FunctionalSample>,
}

impl FunctionalSeries {
    pub const HEADER: [&'static str; 7] = ["t", "mass", "l2sq", "gradx_sq", "gradv_weighted", "S", "Phi"];

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// One row per sample in [`Self::HEADER`] order.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 7]> + '_ {
        self.samples.iter().map(|s| [s.t, s.mass, s.l2sq, s.gradx_sq, s.gradv_weighted, s.s, s.phi])
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(invalid("need dt > 0 and T ≥ 0"));
    }
    let n = round(t_end / dt);
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(invalid("T must be an integer multiple of dt"));
    }
    Ok(n as usize)
}

/// Advances `field` to `T`, sampling the functionals along the way.
pub fn evolve(field: &mut Field, opts: &EvolveOptions) -> Result<FunctionalSeries> {
    if opts.sample_every == 0 {
        return Err(invalid("sample_every must be at least 1"));
    }
    let steps = step_count(opts.t_end, opts.dt)?;
    let mut stepper = Stepper::new(&field.grid, opts.limiter, opts.theta)?;
    let sample = |f: &Field, t: f64| FunctionalSample { t, ..functionals(f, &opts.spec) };
    let mut samples = alloc::vec![sample(field, 0.0)];
    for k in 1..=steps {
        stepper.step(field, opts.dt)?;
        if k % opts.sample_every == 0 || k == steps {
            samples.push(sample(field, k as f64 * opts.dt));
        }
    }
    Ok(FunctionalSeries { samples })
}

/// Decay rate of `l2sq`: minus the slope of `ln l2sq` against t over the last
/// half of the samples.
pub fn fit_l2_rate(series: &FunctionalSeries) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(invalid("need at least four samples to fit a rate"));
    }
    let tail = &series.samples[n / 2..];
    if tail.iter().any(|s| !(s.l2sq > 0.0)) {
        return Err(domain("l2sq reached zero; nothing to fit"));
    }
    let t: Vec<f64> = tail.iter().map(|s| s.t).collect();
    let y: Vec<f64> = tail.iter().map(|s| ln(s.l2sq)).collect();
    Ok(-linear_fit(&t, &y)?.1)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DsDtReport {
    /// `(S(t+dt) − S(t−dt)) / 2dt`.
    pub fd: f64,
    pub rhs: f64,
    /// Second-derivative, QP+PQᵀ and transport-of-P integrals.
    pub terms: [f64; 3],
    pub residual: f64,
}

/// Compares a centred time difference of S along the discrete flow with the
/// quadrature of the three right-hand-side integrals at the middle state.
/// The state itself is not modified.
pub fn ds_dt_residual(field: &Field, dt: f64, p: PChoice, limiter: Limiter) -> Result<DsDtReport> {
    let spec = FunctionalSpec { p, gamma: 0.0, alpha0: 0.0 };
    let mut stepper = Stepper::new(&field.grid, limiter, 0.5)?;
    let mut f = field.clone();
    let s0 = functionals(&f, &spec).s;
    stepper.step(&mut f, dt)?;
    let terms = ds_dt_terms(&f, p);
    stepper.step(&mut f, dt)?;
    let s2 = functionals(&f, &spec).s;
    let fd = (s2 - s0) / (2.0 * dt);
    let rhs = terms.iter().sum::<f64>();
    let residual = (fd - rhs).abs() / fd.abs().max(f64::EPSILON);
    Ok(DsDtReport { fd, rhs, terms, residual })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypoOptions {
    pub t_lo: f64,
    pub t_hi: f64,
    pub dt: f64,
    pub alpha0: f64,
    pub limiter: Limiter,
    pub theta: f64,
}

impl HypoOptions {
    pub fn standard(alpha0: f64) -> Self {
        HypoOptions { t_lo: 2e-3, t_hi: 2e-2, dt: 1e-4, alpha0, limiter: Limiter::VanLeer, theta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypoSlopes {
    pub slope_x: f64,
    pub slope_v: f64,
    pub times: Vec<f64>,
    pub gradx_sq: Vec<f64>,
    pub gradv_weighted: Vec<f64>,
}

/// Log-log slopes of `gradx_sq` and `gradv_weighted` against t over the
/// window, starting from `field` at t = 0.
pub fn hypoelliptic_experiment(field: &Field, opts: &HypoOptions) -> Result<HypoSlopes> {
    if !(opts.t_lo > 0.0 && opts.t_hi > opts.t_lo) {
        return Err(invalid("window must satisfy 0 < t_lo < t_hi"));
    }
    if !(opts.dt > 0.0) || opts.dt > 0.1 * opts.t_lo {
        return Err(domain("time window is below the resolvable time scale: need dt ≤ t_lo/10"));
    }
    let steps = step_count(opts.t_hi, opts.dt)?;
    let spec = FunctionalSpec { p: PChoice::Identity, gamma: 0.0, alpha0: opts.alpha0 };
    let mut stepper = Stepper::new(&field.grid, opts.limiter, opts.theta)?;
    let mut f = field.clone();
    let (mut times, mut gx, mut gv) = (Vec::new(), Vec::new(), Vec::new());
    for k in 1..=steps {
        stepper.step(&mut f, opts.dt)?;
        let t = k as f64 * opts.dt;
        if t >= opts.t_lo * (1.0 - 1e-9) {
            let s = functionals(&f, &spec);
            times.push(t);
            gx.push(s.gradx_sq);
            gv.push(s.gradv_weighted);
        }
    }
    if gx.iter().chain(&gv).any(|v| !(*v > 0.0)) {
        return Err(domain("gradient norms vanish in the window; datum is not rough"));
    }
    let lt: Vec<f64> = times.iter().map(|t| ln(*t)).collect();
    let lx: Vec<f64> = gx.iter().map(|v| ln(*v)).collect();
    let lv: Vec<f64> = gv.iter().map(|v| ln(*v)).collect();
    let slope_x = linear_fit(&lt, &lx)?.1;
    let slope_v = linear_fit(&lt, &lv)?.1;
    Ok(HypoSlopes { slope_x, slope_v, times, gradx_sq: gx, gradv_weighted: gv })
}
