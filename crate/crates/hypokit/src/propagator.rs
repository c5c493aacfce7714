//! Finite-dimensional reduction for quadratic potentials.
//!
//! For `V(x) = xᵀM⁻¹x/2 + …` the propagator norm on the mean-zero weighted L²
//! space equals `‖e^{−Ct}‖₂` with `C = [[0, −M^{−1/2}], [M^{−1/2}, νI]]`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fit::lstsq;
use crate::fmath::{exp, ln, sqrt};
use crate::lyapunov::{q_spectrum, Complex};
use crate::matrix::{mat_exp, min_eigenvalue, op_norm2, spd_sqrt, sym_eig, Matrix, SymMatrix};

/// Relative tolerance for detecting `αᵢ = ν²/4`.
pub const DEFECT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypotheses {
    pub positive_stable: bool,
    /// No nontrivial C-invariant subspace inside `Ker D = span{(ψ, 0)}`.
    pub no_invariant_kerd_subspace: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeSystem {
    pub n: usize,
    pub m_inv: SymMatrix,
    pub nu: f64,
    pub sigma: f64,
    pub c: Matrix,
    pub hypotheses: Hypotheses,
}

/// Decay regime of the propagator norm.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum Classification {
    /// `e^{−νt/2}` for `α₀ > ν²/4`.
    ExpHalfNu,
    /// `(1+t)e^{−νt/2}` for `α₀ = ν²/4`.
    PolyTimesExpHalfNu,
    /// `e^{−rate·t}` with `rate = (ν − √(ν² − 4α₀))/2` for `α₀ < ν²/4`.
    ExpSlow { rate: f64 },
}

impl Classification {
    /// Asymptotic exponential rate.
    pub fn rate(&self, nu: f64) -> f64 {
        match self {
            Classification::ExpSlow { rate } => *rate,
            _ => 0.5 * nu,
        }
    }

    pub fn poly_degree(&self) -> u32 {
        match self {
            Classification::PolyTimesExpHalfNu => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JordanReport {
    pub classification: Classification,
    pub alphas: Vec<f64>,
    pub betas: Vec<(Complex, Complex)>,
    /// Indices of Hessian eigenvalues equal to ν²/4 (defective pairs).
    pub defective: Vec<usize>,
    /// Largest Jordan block size of C.
    pub jordan_block_size: usize,
}

fn is_defective(alpha: f64, nu: f64) -> bool {
    let q = 0.25 * nu * nu;
    (alpha - q).abs() <= DEFECT_TOL * q.max(1.0)
}

/// Assembles C and checks the hypotheses of the reduction.
pub fn build_ode(m_inv: &SymMatrix, nu: f64, sigma: f64) -> Result<OdeSystem> {
    if !(nu > 0.0 && sigma > 0.0) || !nu.is_finite() || !sigma.is_finite() {
        return Err(invalid("ν and σ must be positive"));
    }
    let n = m_inv.dim();
    let root = spd_sqrt(m_inv).map_err(|_| invalid("M⁻¹ must be symmetric positive definite"))?;
    let mut c = Matrix::zeros(2 * n, 2 * n);
    c.set_block(0, n, &root.scaled(-1.0).into_matrix());
    c.set_block(n, 0, root.as_matrix());
    c.set_block(n, n, &Matrix::identity(n).scaled(nu));

    let alphas = sym_eig(m_inv)?.values;
    let positive_stable = q_spectrum(&alphas, nu).positive_stable;
    let no_invariant_kerd_subspace = observability_gram_min(&c, n)? > 1e-10;
    Ok(OdeSystem {
        n,
        m_inv: m_inv.clone(),
        nu,
        sigma,
        c,
        hypotheses: Hypotheses { positive_stable, no_invariant_kerd_subspace },
    })
}

/// Smallest eigenvalue of `Σ_k (ΠCᵏ)ᵀ(ΠCᵏ)` (normalized), with Π the projection
/// onto the velocity block. It vanishes exactly when some nonzero C-invariant
/// subspace lies in the kernel of Π.
fn observability_gram_min(c: &Matrix, n: usize) -> Result<f64> {
    let dim = 2 * n;
    let scale = c.max_abs().max(1.0);
    let cs = c.scaled(1.0 / scale);
    let mut gram = Matrix::zeros(dim, dim);
    let mut power = Matrix::identity(dim);
    for _ in 0..dim {
        let proj = power.block(n, 0, n, dim);
        gram = gram.add(&proj.transpose().matmul(&proj));
        power = cs.matmul(&power);
    }
    min_eigenvalue(&SymMatrix::new(gram)?)
}

/// Trichotomy on `α₀` versus `ν²/4`, with the Jordan structure.
pub fn classify(m_inv: &SymMatrix, nu: f64) -> Result<JordanReport> {
    if !(nu > 0.0) {
        return Err(invalid("ν must be positive"));
    }
    let alphas = sym_eig(m_inv)?.values;
    if alphas.first().map_or(true, |&a| !(a > 0.0)) {
        return Err(invalid("M⁻¹ must be symmetric positive definite"));
    }
    let betas = q_spectrum(&alphas, nu).roots;
    let alpha0 = alphas[0];
    let defective: Vec<usize> = (0..alphas.len()).filter(|&i| is_defective(alphas[i], nu)).collect();
    let classification = if is_defective(alpha0, nu) {
        Classification::PolyTimesExpHalfNu
    } else if alpha0 > 0.25 * nu * nu {
        Classification::ExpHalfNu
    } else {
        Classification::ExpSlow { rate: 0.5 * (nu - sqrt(nu * nu - 4.0 * alpha0)) }
    };
    let jordan_block_size = if defective.is_empty() { 1 } else { 2 };
    Ok(JordanReport { classification, alphas, betas, defective, jordan_block_size })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagatorCurve {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub classification: Classification,
    pub nu: f64,
}

impl PropagatorCurve {
    /// `e^{−νt/2}` at each time.
    pub fn envelope_exp(&self) -> Vec<f64> {
        self.times.iter().map(|&t| exp(-0.5 * self.nu * t)).collect()
    }

    /// `(1+t)e^{−νt/2}` at each time.
    pub fn envelope_poly(&self) -> Vec<f64> {
        self.times.iter().map(|&t| (1.0 + t) * exp(-0.5 * self.nu * t)).collect()
    }
}

/// Default sampling: t = 0, 49 log-spaced points up to 1/ν, then 200 evenly
/// spaced points on (1/ν, 50/ν].
pub fn default_times(nu: f64) -> Vec<f64> {
    let unit = 1.0 / nu;
    let mut t = Vec::with_capacity(250);
    t.push(0.0);
    let (lo, hi) = (ln(1e-3), 0.0);
    for i in 0..49 {
        t.push(unit * exp(lo + (hi - lo) * i as f64 / 48.0));
    }
    for i in 1..=200 {
        t.push(unit * (1.0 + 49.0 * i as f64 / 200.0));
    }
    t
}

/// `‖e^{−Ct}‖₂` on the given ascending grid.
pub fn norm_curve(sys: &OdeSystem, times: &[f64]) -> Result<PropagatorCurve> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time grid must be finite and strictly ascending"));
    }
    let minus_c = sys.c.scaled(-1.0);
    let eval = |t: &f64| -> Result<f64> { op_norm2(&mat_exp(&minus_c, *t)?) };
    #[cfg(feature = "parallel")]
    let norms: Vec<Result<f64>> = {
        use rayon::prelude::*;
        times.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let norms: Vec<Result<f64>> = times.iter().map(eval).collect();
    let norms = norms.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(PropagatorCurve { times: times.to_vec(), norms, classification: classify(&sys.m_inv, sys.nu)?.classification, nu: sys.nu })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub rate: f64,
    pub poly_degree: u32,
    /// Coefficients on `{1, t, log(1+t)}` of the pinned fit.
    pub coefficients: [f64; 3],
    pub samples: usize,
}

/// Fits `log norm ≈ c₀ + c₁t + c₂ log(1+t)` on the window. The polynomial
/// degree is 1 when `c₂ > 0.5`; the rate is `−c₁` from a second fit with `c₂`
/// pinned to that degree.
pub fn fit_rate(curve: &PropagatorCurve, window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(hi > lo) || !(lo >= 1.0) {
        return Err(invalid("fit window must satisfy t_hi > t_lo ≥ 1"));
    }
    fit_log_samples(&curve.times, &curve.norms, window)
}

/// The fit behind [`fit_rate`] on raw samples.
pub fn fit_log_samples(times: &[f64], values: &[f64], (lo, hi): (f64, f64)) -> Result<RateFit> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= lo && t <= hi && v > 0.0 {
            ts.push(t);
            ys.push(ln(v));
        }
    }
    if ts.len() < 4 {
        return Err(invalid("fit window holds fewer than four usable samples"));
    }
    let ones = alloc::vec![1.0; ts.len()];
    let logs: Vec<f64> = ts.iter().map(|t| ln(1.0 + t)).collect();
    let c = lstsq(&[ones.clone(), ts.clone(), logs.clone()], &ys)?;
    let poly_degree = if c[2] > 0.5 { 1 } else { 0 };
    // The free log coefficient trades off against the slope when the norm
    // oscillates, so refit with the detected degree held fixed.
    let d = poly_degree as f64;
    let detrended: Vec<f64> = ys.iter().zip(&logs).map(|(y, l)| y - d * l).collect();
    let r = lstsq(&[ones, ts.clone()], &detrended)?;
    Ok(RateFit { rate: -r[1], poly_degree, coefficients: [r[0], r[1], d], samples: ts.len() })
}

/// Default asymptotic window `[20/ν, 50/ν]`.
pub fn default_window(nu: f64) -> (f64, f64) {
    (20.0 / nu, 50.0 / nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn block_form() {
        let sys = build_ode(&SymMatrix::diag(&[1.0]), 1.0, 1.0).unwrap();
        assert_eq!(sys.c, Matrix::from_rows(&[[0.0, -1.0], [1.0, 1.0]]).unwrap());
        assert!(sys.hypotheses.positive_stable && sys.hypotheses.no_invariant_kerd_subspace);
    }

    #[test]
    fn classification_examples() {
        let r = classify(&SymMatrix::diag(&[0.25]), 1.0).unwrap();
        assert_eq!((r.classification, r.jordan_block_size), (Classification::PolyTimesExpHalfNu, 2));
        let r = classify(&SymMatrix::diag(&[0.25 + 1e-3]), 1.0).unwrap();
        assert_eq!((r.classification, r.jordan_block_size), (Classification::ExpHalfNu, 1));
        let r = classify(&SymMatrix::diag(&[0.25, 1.0]), 1.0).unwrap();
        assert_eq!(r.defective, alloc::vec![0]);
    }

    #[test]
    fn synthetic_fits() {
        let t: Vec<f64> = (0..200).map(|i| 1.0 + 0.25 * i as f64).collect();
        let e: Vec<f64> = t.iter().map(|t| exp(-0.5 * t)).collect();
        let f = fit_log_samples(&t, &e, (1.0, 60.0)).unwrap();
        assert_relative_eq!(f.rate, 0.5, epsilon = 1e-10);
        assert_eq!(f.poly_degree, 0);
        let p: Vec<f64> = t.iter().map(|t| (1.0 + t) * exp(-0.5 * t)).collect();
        let f = fit_log_samples(&t, &p, (1.0, 60.0)).unwrap();
        assert_relative_eq!(f.rate, 0.5, epsilon = 1e-10);
        assert_eq!(f.poly_degree, 1);
    }
}
