//! The condition matrix coupling `ν(∂²V + cI)` with third-derivative slices,
//! its sampled PSD certificates, and the search for feasible `(c, τ)`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fmath::sqrt;
use crate::matrix::{min_eigenvalue, psd_tol, Matrix, SymMatrix};
use crate::potential::{estimate_alpha0, Potential, PotentialJet, SampleBox};
use crate::rates::{decay_rate, RateReport};

/// Friction ν, diffusion σ and the condition constants c, τ.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypoParams {
    pub nu: f64,
    pub sigma: f64,
    pub c: f64,
    pub tau: f64,
}

impl HypoParams {
    pub fn new(nu: f64, sigma: f64, c: f64, tau: f64) -> Result<Self> {
        let p = HypoParams { nu, sigma, c, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(invalid("ν must be positive and finite"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid("σ must be positive and finite"));
        }
        if !self.c.is_finite() {
            return Err(invalid("c must be finite"));
        }
        if !(self.tau >= 0.0 && self.tau < self.nu) {
            return Err(invalid("τ must lie in [0, ν)"));
        }
        Ok(())
    }
}

/// Which pointwise condition a certificate checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConditionTag {
    /// PSD of the full n(n+1)-square block matrix.
    BlockMatrix,
    /// The per-slice two-sided bounds `±κ(α+c)I` together with `∂²V + cI ⪰ 0`.
    SliceBounds,
    /// A Lyapunov matrix inequality (produced by the lyapunov module).
    Lyapunov,
    /// Both sandwich differences (produced by the lyapunov module).
    Sandwich,
}

/// Outcome of a sampled PSD verification.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionCertificate {
    pub params: HypoParams,
    pub sample_box: SampleBox,
    pub passed: bool,
    pub points_checked: usize,
    pub worst_point: Vec<f64>,
    /// Smallest eigenvalue found at `worst_point`.
    pub worst_min_eig: f64,
    /// Tolerance that applied at `worst_point`.
    pub worst_tol: f64,
    pub checked_condition: ConditionTag,
}

/// Pointwise result: smallest eigenvalue of the tested matrices and the
/// tolerance that applies to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PointCheck {
    pub min_eig: f64,
    pub tol: f64,
}

impl PointCheck {
    fn margin(&self) -> f64 {
        self.min_eig + self.tol
    }
}

/// Evaluates `check` at every sample point and reduces to a certificate. The
/// worst point is the one with the smallest `min_eig + tol`; ties go to the
/// lower index, so the result does not depend on evaluation order.
pub(crate) fn sweep<F>(bx: &SampleBox, params: HypoParams, tag: ConditionTag, check: F) -> Result<ConditionCertificate>
where
    F: Fn(&[f64]) -> Result<PointCheck> + Sync,
{
    bx.validate()?;
    let results: Vec<Result<PointCheck>> = eval_points(bx, &check);
    let mut worst: Option<(usize, PointCheck)> = None;
    let mut passed = true;
    for (idx, r) in results.into_iter().enumerate() {
        let pc = r?;
        if pc.min_eig < -pc.tol || pc.min_eig.is_nan() {
            passed = false;
        }
        let better = match &worst {
            None => true,
            Some((_, w)) => pc.margin() < w.margin(),
        };
        if better {
            worst = Some((idx, pc));
        }
    }
    let (idx, w) = worst.expect("validated boxes are nonempty");
    Ok(ConditionCertificate {
        params,
        sample_box: bx.clone(),
        passed,
        points_checked: bx.len(),
        worst_point: bx.point(idx),
        worst_min_eig: w.min_eig,
        worst_tol: w.tol,
        checked_condition: tag,
    })
}

#[cfg(feature = "parallel")]
fn eval_points<F>(bx: &SampleBox, check: &F) -> Vec<Result<PointCheck>>
where
    F: Fn(&[f64]) -> Result<PointCheck> + Sync,
{
    use rayon::prelude::*;
    (0..bx.len()).into_par_iter().map(|i| check(&bx.point(i))).collect()
}

#[cfg(not(feature = "parallel"))]
fn eval_points<F>(bx: &SampleBox, check: &F) -> Vec<Result<PointCheck>>
where
    F: Fn(&[f64]) -> Result<PointCheck> + Sync,
{
    (0..bx.len()).map(|i| check(&bx.point(i))).collect()
}

fn shifted_hessian(jet: &PotentialJet, c: f64) -> SymMatrix {
    jet.hessian.add_identity(c)
}

/// Condition matrix from an already computed jet.
pub fn condition_matrix_from_jet(jet: &PotentialJet, p: &HypoParams) -> SymMatrix {
    let n = jet.hessian.dim();
    let hc = shifted_hessian(jet, p.c);
    let mut m = Matrix::zeros(n * (n + 1), n * (n + 1));
    let diag = hc.scaled(p.nu).into_matrix();
    for k in 0..n {
        m.set_block(k * n, k * n, &diag);
        let off = jet.third_slices[k].scaled(-0.5).into_matrix();
        m.set_block(k * n, n * n, &off);
        m.set_block(n * n, k * n, &off);
    }
    m.set_block(n * n, n * n, hc.scaled(p.tau * p.nu / (2.0 * p.sigma)).as_matrix());
    SymMatrix::new(m).expect("square by construction")
}

/// The n(n+1)-square condition matrix at `x`: diagonal blocks `ν(∂²V + cI)`,
/// last block column `−½ ∂²(∂_{x_k}V)`, corner `(τν/2σ)(∂²V + cI)`.
pub fn build_condition_matrix(v: &Potential, x: &[f64], p: &HypoParams) -> Result<SymMatrix> {
    p.validate()?;
    Ok(condition_matrix_from_jet(&v.jet(x)?, p))
}

/// `κ = √(2τν²/(nσ))`, the slice bound factor.
pub fn slice_kappa(n: usize, p: &HypoParams) -> f64 {
    sqrt(2.0 * p.tau * p.nu * p.nu / (n as f64 * p.sigma))
}

pub(crate) fn block_matrix_check(jet: &PotentialJet, p: &HypoParams) -> Result<PointCheck> {
    let m = condition_matrix_from_jet(jet, p);
    Ok(PointCheck { min_eig: min_eigenvalue(&m)?, tol: psd_tol(&m) })
}

/// Smallest eigenvalue over `∂²V + cI` and the 2n one-sided slice bounds.
pub(crate) fn slice_bounds_check(jet: &PotentialJet, p: &HypoParams) -> Result<PointCheck> {
    let n = jet.hessian.dim();
    let hc = shifted_hessian(jet, p.c);
    let alpha = min_eigenvalue(&jet.hessian)?;
    let bound = slice_kappa(n, p) * (alpha + p.c);
    let mut min_eig = min_eigenvalue(&hc)?;
    let mut tol = psd_tol(&hc);
    for t in &jet.third_slices {
        for sign in [1.0, -1.0] {
            let d = t.scaled(sign).add_identity(bound);
            min_eig = min_eig.min(min_eigenvalue(&d)?);
            tol = tol.max(psd_tol(&d));
        }
    }
    Ok(PointCheck { min_eig, tol })
}

/// Samples the chosen condition over the box.
pub fn check_assumption(v: &Potential, bx: &SampleBox, p: &HypoParams, which: ConditionTag) -> Result<ConditionCertificate> {
    p.validate()?;
    if bx.dim() != v.dim() {
        return Err(invalid("sampling box dimension differs from the potential's"));
    }
    match which {
        ConditionTag::BlockMatrix => sweep(bx, *p, which, |x| block_matrix_check(&v.jet(x)?, p)),
        ConditionTag::SliceBounds => sweep(bx, *p, which, |x| slice_bounds_check(&v.jet(x)?, p)),
        _ => Err(invalid("check_assumption handles the block-matrix and slice-bound conditions only")),
    }
}

/// Search grid for [`find_feasible`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchGrid {
    pub c_points: usize,
    pub tau_points: usize,
    /// Width of the c range above `−α₀`, as a multiple of `max(1, ν²)`.
    pub c_span: f64,
    /// Largest τ as a fraction of ν.
    pub tau_max_frac: f64,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid { c_points: 64, tau_points: 32, c_span: 10.0, tau_max_frac: 0.99 }
    }
}

/// Result of the `(c, τ)` search.
#[derive(Clone, Debug)]
pub enum Feasibility {
    Found { params: HypoParams, certificate: ConditionCertificate, rate: RateReport, alpha0: f64 },
    /// No grid pair passed; carries the certificate of the least violated pair.
    InfeasibleOnGrid { best_attempt: Option<ConditionCertificate>, alpha0: f64 },
}

/// α₀ from the closed form when known, otherwise from the box estimate.
pub fn alpha0_for(v: &Potential, bx: &SampleBox) -> Result<f64> {
    match v.closed_form_alpha0() {
        Some(a) => Ok(a),
        None => Ok(estimate_alpha0(v, bx)?.0),
    }
}

/// Grid search over `c ∈ [−α₀, −α₀ + span·max(1,ν²)]`, `τ ∈ [0, 0.99ν]` for
/// the certified pair with the largest rate. Ties within 1e−12 go to the
/// smaller τ, then the smaller c.
pub fn find_feasible(
    v: &Potential,
    bx: &SampleBox,
    nu: f64,
    sigma: f64,
    c_pi: f64,
    grid: SearchGrid,
) -> Result<Feasibility> {
    HypoParams::new(nu, sigma, 0.0, 0.0)?;
    if grid.c_points == 0 || grid.tau_points == 0 {
        return Err(invalid("search grid needs at least one point per axis"));
    }
    let alpha0 = alpha0_for(v, bx)?;
    let span = grid.c_span * nu.max(1.0).max(nu * nu);
    let lin = |k: usize, m: usize, lo: f64, hi: f64| if m == 1 { lo } else { lo + (hi - lo) * k as f64 / (m - 1) as f64 };

    let mut candidates: Vec<(HypoParams, RateReport)> = Vec::new();
    for it in 0..grid.tau_points {
        let tau = lin(it, grid.tau_points, 0.0, grid.tau_max_frac * nu);
        for ic in 0..grid.c_points {
            let c = lin(ic, grid.c_points, -alpha0, -alpha0 + span);
            let p = HypoParams { nu, sigma, c, tau };
            if let Ok(rate) = decay_rate(&p, alpha0, c_pi, None) {
                candidates.push((p, rate));
            }
        }
    }
    // Highest rate first; the stable sort keeps (τ, c) ascending within ties.
    candidates.sort_by(|a, b| b.1.lambda.total_cmp(&a.1.lambda));

    let mut best_attempt: Option<ConditionCertificate> = None;
    let mut chosen: Option<(HypoParams, ConditionCertificate, RateReport)> = None;
    let mut lambda_star = f64::NAN;
    for (p, rate) in candidates {
        if chosen.is_some() && rate.lambda < lambda_star - 1e-12 {
            break;
        }
        let cert = check_assumption(v, bx, &p, ConditionTag::BlockMatrix)?;
        if cert.passed {
            let better = match &chosen {
                None => true,
                Some((q, _, _)) => (p.tau, p.c) < (q.tau, q.c),
            };
            if chosen.is_none() {
                lambda_star = rate.lambda;
            }
            if better {
                chosen = Some((p, cert, rate));
            }
        } else {
            let worse = best_attempt.as_ref().map_or(true, |b| {
                cert.worst_min_eig + cert.worst_tol > b.worst_min_eig + b.worst_tol
            });
            if worse {
                best_attempt = Some(cert);
            }
        }
    }
    Ok(match chosen {
        Some((params, certificate, rate)) => Feasibility::Found { params, certificate, rate, alpha0 },
        None => Feasibility::InfeasibleOnGrid { best_attempt, alpha0 },
    })
}

/// Pointwise form of the slice-bound condition (for property tests and
/// callers that already hold a jet).
pub fn slice_bounds_hold(jet: &PotentialJet, p: &HypoParams) -> Result<bool> {
    let pc = slice_bounds_check(jet, p)?;
    Ok(pc.min_eig >= -pc.tol)
}

/// Smallest eigenvalue of the condition matrix and its tolerance at a jet.
pub fn condition_min_eig(jet: &PotentialJet, p: &HypoParams) -> Result<(f64, f64)> {
    let pc = block_matrix_check(jet, p)?;
    Ok((pc.min_eig, pc.tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_matrix_is_diag() {
        let v = Potential::harmonic(1.0).unwrap();
        let p = HypoParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let m = build_condition_matrix(&v, &[0.7], &p).unwrap();
        assert_eq!(m, SymMatrix::diag(&[1.0, 0.0]));
    }

    #[test]
    fn double_well_entries() {
        let v = Potential::double_well(1, 1.0, 1.0).unwrap();
        let p = HypoParams::new(1.0, 1.0, 2.1, 0.5).unwrap();
        let m = build_condition_matrix(&v, &[1.0], &p).unwrap();
        // V'' = 12x² − 2, V''' = 24x.
        assert_relative_eq!(m[(0, 0)], 12.1, epsilon = 1e-12);
        assert_relative_eq!(m[(0, 1)], -12.0, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], 0.25 * 12.1, epsilon = 1e-12);
    }

    #[test]
    fn tau_out_of_range_is_rejected() {
        assert!(HypoParams::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(HypoParams::new(1.0, 1.0, 0.0, -0.1).is_err());
    }
}
