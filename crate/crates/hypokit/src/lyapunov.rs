//! Weight matrices for the modified dissipation functional and the matrix
//! inequalities they must satisfy.
//!
//! With `Q(x) = [[0, I], [−∂²V, νI]]`, `P(x) = [[2I, νI], [νI, 2∂²V + 2aI]]`
//! and `D = diag(0, σI)`, the central inequality is
//!
//! ```text
//! Q P + P Qᵀ + γ D ⪰ (ν − δ) P
//! ```
//!
//! which holds whenever `4δ²(a + α₀ − ν²/4) + 2δγσ − 4a² = 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::assumptions::{sweep, ConditionCertificate, ConditionTag, HypoParams, PointCheck};
use crate::error::{invalid, Result};
use crate::fmath::{abs, exp, sqrt};
use crate::matrix::{kron, min_eigenvalue, psd_tol, Matrix, SymMatrix};
use crate::potential::{Potential, PotentialJet, SampleBox};
use crate::rates::{RateCase, RateReport};

/// Minimal complex number for closed-form eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

/// `Q(x)` as a dense 2n×2n matrix.
pub fn q_from_hessian(h: &SymMatrix, nu: f64) -> Matrix {
    let n = h.dim();
    let mut q = Matrix::zeros(2 * n, 2 * n);
    q.set_block(0, n, &Matrix::identity(n));
    q.set_block(n, 0, &h.scaled(-1.0).into_matrix());
    q.set_block(n, n, &Matrix::identity(n).scaled(nu));
    q
}

pub fn build_q(v: &Potential, x: &[f64], nu: f64) -> Result<Matrix> {
    Ok(q_from_hessian(&v.jet(x)?.hessian, nu))
}

/// Eigenvalues of `Q` from the Hessian eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct QSpectrum {
    /// `(β⁻ᵢ, β⁺ᵢ)` per Hessian eigenvalue.
    pub roots: Vec<(Complex, Complex)>,
    /// Smallest real part.
    pub mu: f64,
    pub positive_stable: bool,
}

/// `β±ᵢ = (ν ± √(ν² − 4αᵢ))/2`, complex when `ν² < 4αᵢ`.
pub fn q_spectrum(alphas: &[f64], nu: f64) -> QSpectrum {
    let mut roots = Vec::with_capacity(alphas.len());
    let mut mu = f64::INFINITY;
    for &alpha in alphas {
        let disc = nu * nu - 4.0 * alpha;
        let pair = if disc >= 0.0 {
            let r = sqrt(disc);
            (Complex { re: 0.5 * (nu - r), im: 0.0 }, Complex { re: 0.5 * (nu + r), im: 0.0 })
        } else {
            let r = sqrt(-disc);
            (Complex { re: 0.5 * nu, im: -0.5 * r }, Complex { re: 0.5 * nu, im: 0.5 * r })
        };
        mu = mu.min(pair.0.re);
        roots.push(pair);
    }
    QSpectrum { roots, mu, positive_stable: alphas.iter().all(|&a| a > 0.0) }
}

/// `P = [[2I, νI], [νI, 2H + 2aI]]`.
pub fn p_from_hessian(h: &SymMatrix, a: f64, nu: f64) -> SymMatrix {
    let n = h.dim();
    let mut p = Matrix::zeros(2 * n, 2 * n);
    p.set_block(0, 0, &Matrix::identity(n).scaled(2.0));
    p.set_block(0, n, &Matrix::identity(n).scaled(nu));
    p.set_block(n, 0, &Matrix::identity(n).scaled(nu));
    p.set_block(n, n, h.scaled(2.0).add_identity(2.0 * a).as_matrix());
    SymMatrix::new(p).expect("square by construction")
}

fn check_shift(a: f64, alpha0: f64, nu: f64) -> Result<()> {
    if !(a + alpha0 > 0.25 * nu * nu) || !a.is_finite() {
        return Err(invalid("the shift a must satisfy a + α₀ > ν²/4"));
    }
    Ok(())
}

pub fn build_p(v: &Potential, x: &[f64], a: f64, alpha0: f64, nu: f64) -> Result<SymMatrix> {
    check_shift(a, alpha0, nu)?;
    Ok(p_from_hessian(&v.jet(x)?.hessian, a, nu))
}

/// Lower bound `η` on the spectrum of P: `4X / (1 + a + α₀ + √((a+α₀−1)² + ν²))`
/// with `X = a + α₀ − ν²/4`.
pub fn eta(a: f64, alpha0: f64, nu: f64) -> f64 {
    let z = a + alpha0;
    4.0 * (z - 0.25 * nu * nu) / (1.0 + z + sqrt((z - 1.0) * (z - 1.0) + nu * nu))
}

/// Closed-form eigenvalues of the 2×2 block of P for Hessian eigenvalue `ζ`:
/// `1 + ζ + a ± √((ζ + a + 1)² − (4(ζ + a) − ν²))`.
pub fn p_eigenvalues(zeta: f64, a: f64, nu: f64) -> (f64, f64) {
    let z = zeta + a;
    let r = sqrt((z + 1.0) * (z + 1.0) - (4.0 * z - nu * nu));
    (1.0 + z - r, 1.0 + z + r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LyapunovSelection {
    pub a: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub mu: f64,
    /// `s = γσ / (4a√(a + α₀ − ν²/4))`; zero when `a = 0`.
    pub s: f64,
    pub alpha0: f64,
}

/// Positive root of `4Xδ² + 2γσδ − 4a² = 0`, in the cancellation-free form.
pub fn delta_closed_form(a: f64, gamma: f64, sigma: f64, x: f64) -> f64 {
    let gs = gamma * sigma;
    let denom = gs + sqrt(gs * gs + 16.0 * x * a * a);
    if denom == 0.0 {
        0.0
    } else {
        4.0 * a * a / denom
    }
}

/// `4δ²X + 2δγσ − 4a²`.
pub fn delta_residual(sel: &LyapunovSelection, nu: f64, sigma: f64) -> f64 {
    let x = sel.a + sel.alpha0 - 0.25 * nu * nu;
    4.0 * sel.delta * sel.delta * x + 2.0 * sel.delta * sel.gamma * sigma - 4.0 * sel.a * sel.a
}

/// Selection from `(a, γ)`.
pub fn select_gamma_delta(a: f64, gamma: f64, nu: f64, sigma: f64, alpha0: f64) -> Result<LyapunovSelection> {
    check_shift(a, alpha0, nu)?;
    if !(gamma >= 0.0) || !gamma.is_finite() || !(a >= 0.0) {
        return Err(invalid("γ and a must be nonnegative"));
    }
    if !(nu > 0.0 && sigma > 0.0) {
        return Err(invalid("ν and σ must be positive"));
    }
    let x = a + alpha0 - 0.25 * nu * nu;
    let s = if a > 0.0 { gamma * sigma / (4.0 * a * sqrt(x)) } else { 0.0 };
    let mu = q_spectrum(&[alpha0], nu).mu;
    Ok(LyapunovSelection { a, gamma, delta: delta_closed_form(a, gamma, sigma, x), eta: eta(a, alpha0, nu), mu, s, alpha0 })
}

/// Selection from `(a, s)`, with `γ = 4sa√(a + α₀ − ν²/4)/σ`.
pub fn select_from_s(a: f64, s: f64, nu: f64, sigma: f64, alpha0: f64) -> Result<LyapunovSelection> {
    check_shift(a, alpha0, nu)?;
    if !(s >= 0.0) {
        return Err(invalid("s must be nonnegative"));
    }
    let gamma = 4.0 * s * a * sqrt(a + alpha0 - 0.25 * nu * nu) / sigma;
    let mut sel = select_gamma_delta(a, gamma, nu, sigma, alpha0)?;
    sel.s = s;
    Ok(sel)
}

/// Selection matching a rate report: `a`, `s` from the report; `γ = 0` in
/// cases (a) and (b).
pub fn selection_for_report(r: &RateReport) -> Result<LyapunovSelection> {
    let (nu, sigma) = (r.params.nu, r.params.sigma);
    match r.case_tag {
        RateCase::A | RateCase::B => select_gamma_delta(r.a, 0.0, nu, sigma, r.alpha0),
        RateCase::C | RateCase::D => select_from_s(r.a, r.s, nu, sigma, r.alpha0),
    }
}

/// `QP + PQᵀ + γD − (ν − δ)P` at a Hessian.
pub fn lyapunov_matrix(h: &SymMatrix, sel: &LyapunovSelection, nu: f64, sigma: f64) -> SymMatrix {
    let n = h.dim();
    let q = q_from_hessian(h, nu);
    let p = p_from_hessian(h, sel.a, nu);
    let qp = q.matmul(p.as_matrix());
    let mut m = qp.add(&qp.transpose()).sub(&p.as_matrix().scaled(nu - sel.delta));
    for i in n..2 * n {
        m[(i, i)] += sel.gamma * sigma;
    }
    SymMatrix::new(m).expect("square by construction")
}

/// Samples the Lyapunov inequality over the box.
pub fn verify_lyapunov_inequality(
    v: &Potential,
    bx: &SampleBox,
    sel: &LyapunovSelection,
    p: &HypoParams,
) -> Result<ConditionCertificate> {
    p.validate()?;
    sweep(bx, *p, ConditionTag::Lyapunov, |x| {
        let m = lyapunov_matrix(&v.jet(x)?.hessian, sel, p.nu, p.sigma);
        Ok(PointCheck { min_eig: min_eigenvalue(&m)?, tol: psd_tol(&m) })
    })
}

/// Constants with `c₁P ⪯ diag(I, ∂²V + (1−α₀)I) ⪯ c₂P`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SandwichConstants {
    pub c1: f64,
    pub c2: f64,
}

pub fn sandwich_constants(a: f64, alpha0: f64, nu: f64) -> Result<SandwichConstants> {
    let denom = 4.0 * (a + alpha0) - nu * nu;
    if !(denom > 0.0) {
        return Err(invalid("sandwich constants need 4(a + α₀) > ν²"));
    }
    let z = a + alpha0;
    let top = z + 1.0 + sqrt((z - 1.0) * (z - 1.0) + nu * nu);
    Ok(SandwichConstants { c1: 1.0 / top, c2: top / denom })
}

/// `diag(I, H + (1 − α₀)I)`.
pub fn sandwich_middle(h: &SymMatrix, alpha0: f64) -> SymMatrix {
    let n = h.dim();
    let mut m = Matrix::zeros(2 * n, 2 * n);
    m.set_block(0, 0, &Matrix::identity(n));
    m.set_block(n, n, h.add_identity(1.0 - alpha0).as_matrix());
    SymMatrix::new(m).expect("square by construction")
}

/// Smallest eigenvalues of `c₂P − mid` and `mid − c₁P` at a Hessian.
pub fn sandwich_margins(h: &SymMatrix, a: f64, alpha0: f64, nu: f64, k: &SandwichConstants) -> Result<(f64, f64)> {
    let p = p_from_hessian(h, a, nu);
    let mid = sandwich_middle(h, alpha0);
    let upper = min_eigenvalue(&p.scaled(k.c2).sub(&mid))?;
    let lower = min_eigenvalue(&mid.sub(&p.scaled(k.c1)))?;
    Ok((upper, lower))
}

/// Samples both sandwich differences over the box.
pub fn verify_sandwich(v: &Potential, bx: &SampleBox, a: f64, alpha0: f64, p: &HypoParams) -> Result<ConditionCertificate> {
    let k = sandwich_constants(a, alpha0, p.nu)?;
    sweep(bx, *p, ConditionTag::Sandwich, |x| {
        let h = v.jet(x)?.hessian;
        let (u, l) = sandwich_margins(&h, a, alpha0, p.nu, &k)?;
        Ok(PointCheck { min_eig: u.min(l), tol: psd_tol(&p_from_hessian(&h, a, p.nu)) })
    })
}

/// Both sides of the trace inequality at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceCheck {
    pub lhs: f64,
    pub rhs: Vec<f64>,
    pub ok: bool,
}

fn trace_of_product(a: &SymMatrix, b: &SymMatrix) -> f64 {
    let n = a.dim();
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[(i, j)] * b[(j, i)]).sum()
}

/// `√(2τν²/σ) Tr[(H+cI)²]` against `Tr[(H+cI) ∂²(∂_{x_k}V)]` for each k.
pub fn trace_inequality_from_jet(jet: &PotentialJet, p: &HypoParams) -> TraceCheck {
    let hc = jet.hessian.add_identity(p.c);
    let lhs = sqrt(2.0 * p.tau * p.nu * p.nu / p.sigma) * trace_of_product(&hc, &hc);
    let rhs: Vec<f64> = jet.third_slices.iter().map(|t| trace_of_product(&hc, t)).collect();
    let scale = 1e-10 * (1.0 + lhs.abs() + rhs.iter().fold(0.0f64, |m, r| m.max(abs(*r))));
    let ok = rhs.iter().all(|r| lhs >= *r - scale);
    TraceCheck { lhs, rhs, ok }
}

pub fn trace_inequality_check(v: &Potential, x: &[f64], p: &HypoParams) -> Result<TraceCheck> {
    p.validate()?;
    Ok(trace_inequality_from_jet(&v.jet(x)?, p))
}

/// `Tr(X_δ Y_k)` for every k, where `X_δ = [[1, δ], [δ, δ²]] ⊗ (H + cI)` and
/// `Y_k` is the k-th principal 2n×2n submatrix of the condition matrix.
pub fn kronecker_traces(jet: &PotentialJet, p: &HypoParams, delta: f64) -> Vec<f64> {
    let n = jet.hessian.dim();
    let hc = jet.hessian.add_identity(p.c);
    let xd = kron(&SymMatrix::from_rows(&[[1.0, delta], [delta, delta * delta]]).expect("2x2"), &hc);
    jet.third_slices
        .iter()
        .map(|t| {
            let mut y = Matrix::zeros(2 * n, 2 * n);
            y.set_block(0, 0, hc.scaled(p.nu).as_matrix());
            y.set_block(0, n, t.scaled(-0.5).as_matrix());
            y.set_block(n, 0, t.scaled(-0.5).as_matrix());
            y.set_block(n, n, hc.scaled(p.tau * p.nu / (2.0 * p.sigma)).as_matrix());
            trace_of_product(&xd, &SymMatrix::new(y).expect("square"))
        })
        .collect()
}

/// Result of the short-time certificate search.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypoellipticCertificate {
    pub t0: f64,
    pub n: usize,
    pub hessnorm_max: f64,
    pub epsilon: f64,
    /// Supremum of admissible ε (the certificate uses half of it).
    pub epsilon_sup: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub feasible: bool,
    /// Smallest sampled value of the auxiliary expression at the chosen pair.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub worst_w: f64,
}

/// Number of samples per axis (time and Hessian norm).
pub const HYPO_SAMPLES: usize = 1000;
/// Upper cap on γ₁, γ₂.
pub const GAMMA_CAP: f64 = 1e12;

/// `min_{t∈[0,t₀]} 1 − 3ε − ε|1 − 2ε²t²|`, exact since `|1 − 2ε²t²|` peaks at
/// an endpoint.
pub fn epsilon_condition(eps: f64, t0: f64) -> f64 {
    let worst = 1.0f64.max(abs(1.0 - 2.0 * eps * eps * t0 * t0));
    1.0 - 3.0 * eps - eps * worst
}

/// Supremum of ε > 0 satisfying the condition on `[0, t₀]`, by bisection.
pub fn epsilon_sup(t0: f64) -> f64 {
    // At ε = 1/4 the t = 0 value is already zero.
    let (mut lo, mut hi) = (0.0, 0.25);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if epsilon_condition(mid, t0) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Time-dependent coefficients of the auxiliary expression
/// `(σe^{−8τnt}γ₁ − p)w² − qw + 2σγ₂ + r`.
#[derive(Clone, Copy, Debug)]
struct AuxCoefs {
    e: f64,
    p: f64,
    q: f64,
    r: f64,
}

fn aux_coefs(eps: f64, t: f64, params: &HypoParams, n: usize) -> AuxCoefs {
    let HypoParams { nu, sigma, c, tau } = *params;
    let (e2, e3) = (eps * eps, eps * eps * eps);
    let t2 = t * t;
    let denom = 2.0 * (1.0 - 3.0 * eps - eps * abs(1.0 - 2.0 * e2 * t2));
    let num = 2.0 * c * e2 * t2 + nu * eps * t + 2.0 * (1.0 - eps);
    AuxCoefs {
        e: sigma * exp(-8.0 * tau * n as f64 * t),
        p: abs(1.0 - 2.0 * e3 * t2) / (2.0 * e3),
        q: abs(-1.0 + 2.0 * nu * t - 2.0 * e2 * t2) + tau * t,
        r: 2.0 * c * e2 * t2 + 4.0 * eps * nu * t - 2.0 * eps - num * num / denom,
    }
}

/// The auxiliary expression at one `(t, w)`.
pub fn aux_expression(eps: f64, gamma1: f64, gamma2: f64, t: f64, w: f64, params: &HypoParams, n: usize) -> f64 {
    let k = aux_coefs(eps, t, params, n);
    (k.e * gamma1 - k.p) * w * w - k.q * w + 2.0 * params.sigma * gamma2 + k.r
}

fn samples(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if hi == lo {
        return vec![lo];
    }
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

/// Certificate with ε fixed at half its supremum.
pub fn hypoelliptic_certificate(t0: f64, p: &HypoParams, n: usize, hessnorm_max: f64) -> Result<HypoellipticCertificate> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(invalid("t₀ must be positive"));
    }
    let sup = epsilon_sup(t0);
    let mut cert = hypoelliptic_certificate_with_epsilon(t0, p, n, hessnorm_max, 0.5 * sup)?;
    cert.epsilon_sup = sup;
    Ok(cert)
}

/// Certificate for a caller-chosen ε; rejects ε violating the positivity
/// condition on `[0, t₀]`.
pub fn hypoelliptic_certificate_with_epsilon(
    t0: f64,
    p: &HypoParams,
    n: usize,
    hessnorm_max: f64,
    eps: f64,
) -> Result<HypoellipticCertificate> {
    p.validate()?;
    if !(t0 > 0.0) || !t0.is_finite() || n == 0 {
        return Err(invalid("t₀ must be positive and n at least 1"));
    }
    if !(hessnorm_max >= 0.0) || !hessnorm_max.is_finite() {
        return Err(invalid("the Hessian-norm bound must be finite and nonnegative"));
    }
    if !(eps > 0.0) || !(epsilon_condition(eps, t0) > 0.0) {
        return Err(crate::error::domain("ε violates 1 − 3ε − ε|1 − 2ε²t²| > 0 on [0, t₀]"));
    }
    let ts = samples(0.0, t0, HYPO_SAMPLES);
    let ws = samples(0.0, hessnorm_max, HYPO_SAMPLES);
    let coefs: Vec<AuxCoefs> = ts.iter().map(|&t| aux_coefs(eps, t, p, n)).collect();

    // Smallest γ₂ that works for a given γ₁: the expression is affine in γ₂.
    let required_gamma2 = |g1: f64| -> f64 {
        let mut need = f64::NEG_INFINITY;
        for k in &coefs {
            let lead = k.e * g1 - k.p;
            for &w in &ws {
                let val = lead * w * w - k.q * w + k.r;
                need = need.max(-val / (2.0 * p.sigma));
            }
        }
        need
    };

    let grid: Vec<f64> = (-30..=40).map(|j| libm::ldexp(1.0, j)).filter(|g| *g <= GAMMA_CAP).collect();
    let mut best: Option<(f64, f64)> = None;
    for &g1 in &grid {
        let need = required_gamma2(g1);
        if let Some(&g2) = grid.iter().find(|&&g| g >= need) {
            let better = best.map_or(true, |(b1, b2)| g1 + g2 < b1 + b2);
            if better {
                best = Some((g1, g2));
            }
        }
    }

    let (gamma1, gamma2, feasible) = match best {
        Some((g1, g2)) => (g1, g2, true),
        None => (GAMMA_CAP, GAMMA_CAP, false),
    };
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for (k, &t) in coefs.iter().zip(&ts) {
        for &w in &ws {
            let val = (k.e * gamma1 - k.p) * w * w - k.q * w + 2.0 * p.sigma * gamma2 + k.r;
            if val < worst.0 {
                worst = (val, t, w);
            }
        }
    }
    Ok(HypoellipticCertificate {
        t0,
        n,
        hessnorm_max,
        epsilon: eps,
        epsilon_sup: eps,
        gamma1,
        gamma2,
        feasible: feasible && worst.0 >= 0.0,
        worst_margin: worst.0,
        worst_t: worst.1,
        worst_w: worst.2,
    })
}

/// Largest `‖∂²V + cI‖_F` over the box (the Hessian-norm range fed to the
/// certificate).
pub fn hessnorm_over_box(v: &Potential, bx: &SampleBox, c: f64) -> Result<f64> {
    let mut m = 0.0f64;
    for x in bx.points() {
        m = m.max(v.jet(&x)?.hessian.add_identity(c).frobenius_norm());
    }
    Ok(m)
}
