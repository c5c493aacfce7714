//! Closed-form exponential decay rates.
//!
//! With `k = ν − τ` and a shift `a` fixed per case,
//!
//! ```text
//! A(a) = (1 + a + α₀ + √((a + α₀ − 1)² + ν²)) / (2σ C_PI)
//! B(a) = a / √(a + α₀ − ν²/4)
//! 2λ   = k − B                                  if k ≥ 1/A + B
//!      = (k − B(√(1+s²) − s)) / (1 + A B s)     otherwise
//! ```
//!
//! where `s` is the unique positive maximizer of the second expression.

use crate::assumptions::{find_feasible, ConditionCertificate, Feasibility, HypoParams, SearchGrid};
use crate::error::{domain, invalid, Error, Result};
use crate::fmath::{abs, sqrt};
use crate::potential::{Potential, SampleBox};

/// Absolute tolerance for the boundary `c = −α₀ = −ν²/4`.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Which rate formula applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateCase {
    /// `α₀ > ν²/4` and `c ≤ −ν²/4`.
    A,
    /// `c = −α₀ = −ν²/4`.
    B,
    /// `c > −ν²/4` and `c + 2α₀ > ν²/4`.
    C,
    /// `c > −ν²/4` and `c + 2α₀ ≤ ν²/4`.
    D,
}

impl RateCase {
    pub fn tag(self) -> &'static str {
        match self {
            RateCase::A => "a",
            RateCase::B => "b",
            RateCase::C => "c",
            RateCase::D => "d",
        }
    }
}

/// Which of the two rate expressions was used in cases (c) and (d).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateBranch {
    /// `2λ = k − B`, reached when `k ≥ 1/A + B` (s = 0).
    Boundary,
    /// Interior maximizer `s > 0`.
    Interior,
    /// Cases (a) and (b), which have no s-optimization.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateReport {
    pub case_tag: RateCase,
    pub branch: RateBranch,
    pub lambda: f64,
    pub two_lambda: f64,
    pub c_pi: f64,
    pub params: HypoParams,
    pub alpha0: f64,
    pub a: f64,
    #[cfg_attr(feature = "serde", serde(rename = "A"))]
    pub big_a: f64,
    #[cfg_attr(feature = "serde", serde(rename = "B"))]
    pub big_b: f64,
    pub s: f64,
    pub epsilon_b: Option<f64>,
    /// Set only where the rate is known to be optimal (quadratic potentials in
    /// cases (a) and (d)).
    pub sharp: bool,
}

/// Poincaré constant of the Gaussian steady state of a quadratic potential.
pub fn poincare_constant_quadratic(nu: f64, sigma: f64, alpha0: f64) -> Result<f64> {
    if !(nu > 0.0 && sigma > 0.0) || !nu.is_finite() || !sigma.is_finite() {
        return Err(invalid("ν and σ must be positive"));
    }
    if !(alpha0 > 0.0) || !alpha0.is_finite() {
        return Err(domain("α₀ must be positive for a normalizable quadratic steady state"));
    }
    Ok(nu * alpha0.min(1.0) / sigma)
}

/// `A(a)`.
pub fn big_a(a: f64, alpha0: f64, nu: f64, sigma: f64, c_pi: f64) -> f64 {
    let z = a + alpha0;
    (1.0 + z + sqrt((z - 1.0) * (z - 1.0) + nu * nu)) / (2.0 * sigma * c_pi)
}

/// `B(a)`; requires `a + α₀ > ν²/4`.
pub fn big_b(a: f64, alpha0: f64, nu: f64) -> f64 {
    a / sqrt(a + alpha0 - 0.25 * nu * nu)
}

/// Positive root `s` of `(1 − kA)√(1+s²) − s + AB = 0` (special-cased at
/// `kA = 2`).
///
/// Squaring gives two candidate roots. The usual closed form takes the
/// factor `|(kA − 1)/(kA − 2)|`, which picks the spurious one when
/// `1 < kA < 2`; the signed factor is correct on every branch.
pub fn optimal_s(k: f64, big_a: f64, big_b: f64) -> f64 {
    let ka = k * big_a;
    if abs(ka - 2.0) <= 1e-12 * ka.max(1.0) {
        let ab = big_a * big_b;
        return (ab * ab - 1.0) / (2.0 * ab);
    }
    let radicand = big_b * big_b + 2.0 * k / big_a - k * k;
    let root = sqrt(radicand.max(0.0));
    ((ka - 1.0) / (ka - 2.0) * root - big_b / (ka - 2.0)) / k
}

/// `Λ(s) = (k − B(√(1+s²) − s)) / (1 + ABs)`, the value `2λ` takes at `s`.
pub fn rate_at_s(k: f64, big_a: f64, big_b: f64, s: f64) -> f64 {
    (k - big_b * (sqrt(1.0 + s * s) - s)) / (1.0 + big_a * big_b * s)
}

/// Residual of the stationarity condition, used as a self-check.
pub fn stationarity_residual(k: f64, big_a: f64, big_b: f64, s: f64) -> f64 {
    (1.0 - k * big_a) * sqrt(s * s + 1.0) - s + big_a * big_b
}

/// `(2λ, s, branch)` for given A, B.
fn optimized_rate(k: f64, big_a: f64, big_b: f64) -> (f64, f64, RateBranch) {
    if k >= 1.0 / big_a + big_b {
        (k - big_b, 0.0, RateBranch::Boundary)
    } else {
        let s = optimal_s(k, big_a, big_b);
        (rate_at_s(k, big_a, big_b, s), s, RateBranch::Interior)
    }
}

/// Default ε for case (b): 5% of `ν − τ`.
pub fn default_epsilon_b(p: &HypoParams) -> f64 {
    0.05 * (p.nu - p.tau)
}

/// Rate for already certified `(c, τ)`.
pub fn decay_rate(p: &HypoParams, alpha0: f64, c_pi: f64, epsilon_b: Option<f64>) -> Result<RateReport> {
    p.validate()?;
    if !(c_pi > 0.0) || !c_pi.is_finite() {
        return Err(invalid("C_PI must be positive"));
    }
    if !alpha0.is_finite() {
        return Err(invalid("α₀ must be finite"));
    }
    let (nu, sigma, c, tau) = (p.nu, p.sigma, p.c, p.tau);
    let q = 0.25 * nu * nu;
    let k = nu - tau;
    let uncovered = || Error::UncoveredRegion { c, alpha0, nu };
    let on_boundary = abs(c + alpha0) <= BOUNDARY_TOL && abs(alpha0 - q) <= BOUNDARY_TOL;

    let mut report = RateReport {
        case_tag: RateCase::A,
        branch: RateBranch::Fixed,
        lambda: 0.0,
        two_lambda: 0.0,
        c_pi,
        params: *p,
        alpha0,
        a: 0.0,
        big_a: big_a(0.0, alpha0, nu, sigma, c_pi),
        big_b: 0.0,
        s: 0.0,
        epsilon_b: None,
        sharp: false,
    };

    let strict = |report: RateReport| -> Result<RateReport> {
        if alpha0 > q && c <= -q {
            Ok(RateReport { two_lambda: k, ..report })
        } else if c > -q && c + 2.0 * alpha0 > q {
            if !(c + alpha0 > 0.0) {
                return Err(uncovered());
            }
            let a = c + q;
            let (ba, bb) = (big_a(a, alpha0, nu, sigma, c_pi), big_b(a, alpha0, nu));
            let (two_lambda, s, branch) = optimized_rate(k, ba, bb);
            Ok(RateReport { case_tag: RateCase::C, branch, two_lambda, a, big_a: ba, big_b: bb, s, ..report })
        } else if c > -q {
            let a = 2.0 * (q - alpha0);
            let ba = big_a(a, alpha0, nu, sigma, c_pi);
            let bb = sqrt(nu * nu - 4.0 * alpha0);
            let (two_lambda, s, branch) = optimized_rate(k, ba, bb);
            Ok(RateReport { case_tag: RateCase::D, branch, two_lambda, a, big_a: ba, big_b: bb, s, ..report })
        } else {
            Err(uncovered())
        }
    };

    if on_boundary {
        let eps = epsilon_b.unwrap_or_else(|| default_epsilon_b(p));
        if !(eps > 0.0 && eps < k) {
            return Err(invalid("ε for the defective case must lie in (0, ν − τ)"));
        }
        let a = 0.5 * eps * eps;
        let defective = RateReport {
            case_tag: RateCase::B,
            a,
            big_a: big_a(a, alpha0, nu, sigma, c_pi),
            big_b: big_b(a, alpha0, nu),
            epsilon_b: Some(eps),
            two_lambda: k - eps,
            ..report.clone()
        };
        // Within the boundary tolerance a strict case may also apply; keep
        // whichever rate is larger.
        report = match strict(report) {
            Ok(r) if r.two_lambda > defective.two_lambda => r,
            _ => defective,
        };
    } else {
        report = strict(report)?;
    }

    if !(report.two_lambda > 0.0) || !report.two_lambda.is_finite() {
        return Err(domain("parameters give a non-positive decay rate"));
    }
    report.lambda = 0.5 * report.two_lambda;
    Ok(report)
}

/// `ν ≥ 1/A₂ + √(ν² − 4α₀)` with `C_PI = (ν/σ)min{1, α₀}`.
pub fn check_a2_inequality(nu: f64, sigma: f64, alpha0: f64) -> Result<bool> {
    if !(alpha0 > 0.0 && alpha0 < 0.25 * nu * nu) {
        return Err(domain("α₀ must lie in (0, ν²/4)"));
    }
    let c_pi = poincare_constant_quadratic(nu, sigma, alpha0)?;
    let a2 = 2.0 * (0.25 * nu * nu - alpha0);
    let ba = big_a(a2, alpha0, nu, sigma, c_pi);
    Ok(nu >= 1.0 / ba + sqrt(nu * nu - 4.0 * alpha0))
}

/// Best rate over the feasible `(c, τ)` grid together with its certificate.
#[derive(Clone, Debug)]
pub struct OptimizedRate {
    pub report: RateReport,
    pub certificate: ConditionCertificate,
}

/// Runs the `(c, τ)` search and returns the best certified rate. For quadratic
/// potentials `c_pi = None` uses the Gaussian Poincaré constant; other kinds
/// require an explicit value.
pub fn optimize_rate(
    v: &Potential,
    bx: &SampleBox,
    nu: f64,
    sigma: f64,
    c_pi: Option<f64>,
    grid: SearchGrid,
) -> Result<core::result::Result<OptimizedRate, Feasibility>> {
    let c_pi = match (c_pi, v.closed_form_alpha0()) {
        (Some(c), _) => c,
        (None, Some(a0)) if v.is_quadratic() => poincare_constant_quadratic(nu, sigma, a0)?,
        _ => return Err(invalid("C_PI must be supplied for non-quadratic potentials")),
    };
    match find_feasible(v, bx, nu, sigma, c_pi, grid)? {
        Feasibility::Found { mut rate, certificate, .. } => {
            rate.sharp = v.is_quadratic() && matches!(rate.case_tag, RateCase::A | RateCase::D);
            Ok(Ok(OptimizedRate { report: rate, certificate }))
        }
        other => Ok(Err(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(nu: f64, c: f64, tau: f64) -> HypoParams {
        HypoParams::new(nu, 1.0, c, tau).unwrap()
    }

    #[test]
    fn poincare_examples() {
        assert_eq!(poincare_constant_quadratic(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(poincare_constant_quadratic(2.0, 1.0, 0.25).unwrap(), 0.5);
        assert_eq!(poincare_constant_quadratic(1.0, 2.0, 1.0).unwrap(), 0.5);
        assert!(matches!(poincare_constant_quadratic(1.0, 1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn case_examples() {
        let r = decay_rate(&p(1.0, -1.0, 0.0), 1.0, 1.0, None).unwrap();
        assert_eq!((r.case_tag, r.lambda), (RateCase::A, 0.5));
        let r = decay_rate(&p(1.0, -0.1875, 0.0), 0.1875, 0.1875, None).unwrap();
        assert_eq!(r.case_tag, RateCase::D);
        assert_relative_eq!(r.two_lambda, 0.5, epsilon = 1e-15);
        let r = decay_rate(&p(1.0, -0.25, 0.0), 0.25, 0.25, Some(0.1)).unwrap();
        assert_eq!(r.case_tag, RateCase::B);
        assert_relative_eq!(r.two_lambda, 0.9, epsilon = 1e-15);
    }

    #[test]
    fn uncovered_region() {
        let r = decay_rate(&p(1.0, -0.3, 0.0), 0.2, 1.0, None);
        assert!(matches!(r, Err(Error::UncoveredRegion { .. })));
    }
}
