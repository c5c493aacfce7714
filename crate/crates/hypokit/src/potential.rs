//! Confining potentials and their derivative jets.
//!
//! Built-in kinds have analytic derivatives. The tabulated kind wraps a
//! callback and differentiates it numerically.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{domain, invalid, Result};
use crate::fmath::{abs, pow, sqrt};
use crate::matrix::{min_eigenvalue, spd_spectrum_check, SymMatrix};

/// One monomial `coef · Π x_i^{exps[i]}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exps: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    /// Value of the monomial after differentiating by the listed coordinates.
    fn derivative(&self, x: &[f64], by: &[usize]) -> f64 {
        let mut exps = self.exps.clone();
        let mut factor = self.coef;
        for &i in by {
            if exps[i] == 0 {
                return 0.0;
            }
            factor *= exps[i] as f64;
            exps[i] -= 1;
        }
        exps.iter().zip(x).fold(factor, |acc, (&e, &xi)| acc * pow(xi, e as f64))
    }
}

/// Polynomial in n variables as a list of monomials.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial { n, terms: Vec::new() }
    }

    /// One-dimensional polynomial from a flat coefficient array, lowest degree first.
    pub fn univariate(coefs: &[f64]) -> Self {
        let terms = coefs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, &c)| Monomial { coef: c, exps: vec![k as u32] })
            .collect();
        Polynomial { n: 1, terms }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|m| m.coef != 0.0).map(Monomial::degree).max().unwrap_or(0)
    }

    fn eval_derivative(&self, x: &[f64], by: &[usize]) -> f64 {
        self.terms.iter().map(|m| m.derivative(x, by)).sum()
    }

    /// A constant `A` with `‖∂²P(x)‖ ≤ A(1 + |x|^{deg−2})` for all x, from
    /// `|x^β| ≤ |x|^{|β|}` and the Frobenius bound.
    fn hessian_growth_constant(&self) -> f64 {
        let mut total = 0.0;
        for m in &self.terms {
            for i in 0..self.n {
                for j in 0..self.n {
                    let unit = Monomial { coef: 1.0, exps: m.exps.clone() };
                    let ones = vec![1.0; self.n];
                    total += abs(m.coef * unit.derivative(&ones, &[i, j]));
                }
            }
        }
        total
    }
}

/// Callback type for tabulated potentials.
pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    /// `xᵀM⁻¹x/2 + p·x + q`.
    Quadratic { m_inv: SymMatrix, p: Vec<f64>, q: f64 },
    /// `r|x|^{2k} + V₀(x)` with `deg V₀ < 2k`.
    RadialPoly { r: f64, k: u32, v0: Polynomial },
    /// `r₁|x|⁴ − r₂|x|²`.
    DoubleWell { r1: f64, r2: f64 },
    /// Arbitrary smooth callback, differentiated numerically.
    Tabulated { f: PotentialFn },
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Quadratic { m_inv, p, q } => {
                f.debug_struct("Quadratic").field("m_inv", m_inv).field("p", p).field("q", q).finish()
            }
            PotentialKind::RadialPoly { r, k, v0 } => {
                f.debug_struct("RadialPoly").field("r", r).field("k", k).field("v0", v0).finish()
            }
            PotentialKind::DoubleWell { r1, r2 } => {
                f.debug_struct("DoubleWell").field("r1", r1).field("r2", r2).finish()
            }
            PotentialKind::Tabulated { .. } => f.write_str("Tabulated(..)"),
        }
    }
}

/// A confining potential on ℝⁿ.
#[derive(Clone, Debug)]
pub struct Potential {
    n: usize,
    kind: PotentialKind,
}

/// Value and derivatives of V at one point. `third_slices[k]` is the Hessian
/// of `∂V/∂x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialJet {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymMatrix,
    pub third_slices: Vec<SymMatrix>,
}

impl Potential {
    pub fn quadratic(m_inv: SymMatrix, p: Vec<f64>, q: f64) -> Result<Self> {
        let n = m_inv.dim();
        if n == 0 || p.len() != n {
            return Err(invalid("quadratic potential: M⁻¹ and p must share a positive dimension"));
        }
        spd_spectrum_check(&m_inv).map_err(|_| invalid("quadratic potential needs an SPD M⁻¹"))?;
        if !q.is_finite() || p.iter().any(|v| !v.is_finite()) {
            return Err(invalid("quadratic potential: non-finite coefficient"));
        }
        Ok(Potential { n, kind: PotentialKind::Quadratic { m_inv, p, q } })
    }

    /// One-dimensional `α x²/2`.
    pub fn harmonic(alpha: f64) -> Result<Self> {
        Self::quadratic(SymMatrix::diag(&[alpha]), vec![0.0], 0.0)
    }

    pub fn radial_poly(n: usize, r: f64, k: u32, v0: Polynomial) -> Result<Self> {
        if n == 0 || !(r > 0.0) || !r.is_finite() || k < 2 {
            return Err(invalid("radial polynomial needs n ≥ 1, r > 0 and k ≥ 2"));
        }
        if v0.n != n && !v0.terms.is_empty() {
            return Err(invalid("V₀ dimension does not match n"));
        }
        if v0.terms.iter().any(|m| m.exps.len() != n || !m.coef.is_finite()) {
            return Err(invalid("malformed V₀ monomial"));
        }
        if !v0.terms.is_empty() && v0.degree() >= 2 * k {
            return Err(invalid(format!("deg V₀ = {} must be below 2k = {}", v0.degree(), 2 * k)));
        }
        Ok(Potential { n, kind: PotentialKind::RadialPoly { r, k, v0: Polynomial { n, terms: v0.terms } } })
    }

    pub fn double_well(n: usize, r1: f64, r2: f64) -> Result<Self> {
        if n == 0 || !(r1 > 0.0 && r2 > 0.0) || !r1.is_finite() || !r2.is_finite() {
            return Err(invalid("double well needs n ≥ 1 and r₁, r₂ > 0"));
        }
        Ok(Potential { n, kind: PotentialKind::DoubleWell { r1, r2 } })
    }

    pub fn tabulated(n: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if n == 0 {
            return Err(invalid("tabulated potential needs n ≥ 1"));
        }
        Ok(Potential { n, kind: PotentialKind::Tabulated { f: Arc::new(f) } })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, PotentialKind::Quadratic { .. })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(invalid(format!("point has dimension {}, potential has {}", x.len(), self.n)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite evaluation point"));
        }
        Ok(())
    }

    /// V(x) only.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let v = match &self.kind {
            PotentialKind::Quadratic { m_inv, p, q } => {
                0.5 * m_inv.bilinear(x, x) + p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + q
            }
            PotentialKind::RadialPoly { r, k, v0 } => {
                let s = norm_sq(x);
                r * pow(s, *k as f64) + v0.eval_derivative(x, &[])
            }
            PotentialKind::DoubleWell { r1, r2 } => {
                let s = norm_sq(x);
                r1 * s * s - r2 * s
            }
            PotentialKind::Tabulated { f } => f(x),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain("potential evaluated to a non-finite value"))
        }
    }

    /// Gradient only; cheaper than a full jet for the built-in kinds.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let g = match &self.kind {
            PotentialKind::Quadratic { m_inv, p, .. } => {
                m_inv.as_matrix().mul_vec(x).iter().zip(p).map(|(a, b)| a + b).collect()
            }
            PotentialKind::RadialPoly { .. } | PotentialKind::DoubleWell { .. } => {
                let (g1, _, _) = self.radial_profile(norm_sq(x));
                let mut g: Vec<f64> = x.iter().map(|xi| 2.0 * g1 * xi).collect();
                if let PotentialKind::RadialPoly { v0, .. } = &self.kind {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += v0.eval_derivative(x, &[i]);
                    }
                }
                g
            }
            PotentialKind::Tabulated { f } => numeric_gradient(f.as_ref(), x),
        };
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(domain("potential gradient is not finite"))
        }
    }

    /// Derivatives g', g'', g''' of the radial profile V = g(|x|²).
    fn radial_profile(&self, s: f64) -> (f64, f64, f64) {
        match &self.kind {
            PotentialKind::RadialPoly { r, k, .. } => {
                let k = *k as f64;
                (r * k * pow(s, k - 1.0), r * k * (k - 1.0) * pow(s, k - 2.0), r * k * (k - 1.0) * (k - 2.0) * pow_or_zero(s, k - 3.0))
            }
            PotentialKind::DoubleWell { r1, r2 } => (2.0 * r1 * s - r2, 2.0 * r1, 0.0),
            _ => unreachable!("radial profile requested for a non-radial potential"),
        }
    }

    /// Value, gradient, Hessian and third-derivative slices at `x`.
    pub fn jet(&self, x: &[f64]) -> Result<PotentialJet> {
        self.check_point(x)?;
        let n = self.n;
        let jet = match &self.kind {
            PotentialKind::Quadratic { m_inv, .. } => PotentialJet {
                x: x.to_vec(),
                value: self.value(x)?,
                gradient: self.gradient(x)?,
                hessian: m_inv.clone(),
                third_slices: vec![SymMatrix::zeros(n); n],
            },
            PotentialKind::RadialPoly { .. } | PotentialKind::DoubleWell { .. } => {
                let (g1, g2, g3) = self.radial_profile(norm_sq(x));
                let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                let mut hessian = SymMatrix::from_fn(n, |i, j| 4.0 * g2 * x[i] * x[j] + 2.0 * g1 * delta(i, j));
                let mut third_slices: Vec<SymMatrix> = (0..n)
                    .map(|k| {
                        SymMatrix::from_fn(n, |i, j| {
                            8.0 * g3 * x[i] * x[j] * x[k]
                                + 4.0 * g2 * (delta(i, j) * x[k] + delta(i, k) * x[j] + delta(j, k) * x[i])
                        })
                    })
                    .collect();
                if let PotentialKind::RadialPoly { v0, .. } = &self.kind {
                    if !v0.terms.is_empty() {
                        hessian = hessian.add(&SymMatrix::from_fn(n, |i, j| v0.eval_derivative(x, &[i, j])));
                        for (k, slice) in third_slices.iter_mut().enumerate() {
                            *slice = slice.add(&SymMatrix::from_fn(n, |i, j| v0.eval_derivative(x, &[i, j, k])));
                        }
                    }
                }
                PotentialJet { x: x.to_vec(), value: self.value(x)?, gradient: self.gradient(x)?, hessian, third_slices }
            }
            PotentialKind::Tabulated { f } => numeric_jet(f.as_ref(), x)?,
        };
        let finite = jet.value.is_finite()
            && jet.gradient.iter().all(|v| v.is_finite())
            && jet.hessian.as_matrix().is_finite()
            && jet.third_slices.iter().all(|s| s.as_matrix().is_finite());
        if finite {
            Ok(jet)
        } else {
            Err(domain("potential jet is not finite"))
        }
    }

    /// Smallest Hessian eigenvalue at `x`.
    pub fn alpha(&self, x: &[f64]) -> Result<f64> {
        let hess = match &self.kind {
            PotentialKind::Quadratic { m_inv, .. } => m_inv.clone(),
            _ => self.jet(x)?.hessian,
        };
        min_eigenvalue(&hess)
    }

    /// Exact `inf_x α(x)` where it is known in closed form.
    pub fn closed_form_alpha0(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Quadratic { m_inv, .. } => min_eigenvalue(m_inv).ok(),
            PotentialKind::DoubleWell { r2, .. } => Some(-2.0 * r2),
            PotentialKind::RadialPoly { v0, .. } if v0.terms.iter().all(|m| m.coef == 0.0) => Some(0.0),
            _ => None,
        }
    }

    /// For radial polynomials, a constant `A` with
    /// `∂²V(x) ⪰ (2kr|x|^{2k−2} − A|x|^{2k−3} − A) I`.
    pub fn radial_lower_bound_constant(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::RadialPoly { v0, .. } => Some(v0.hessian_growth_constant()),
            _ => None,
        }
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `s^p`, reading `0^0` as 1 and `s^p` for p < 0 as 0 (the coefficient in
/// front vanishes in exactly those cases).
fn pow_or_zero(s: f64, p: f64) -> f64 {
    if p < 0.0 {
        0.0
    } else {
        pow(s, p)
    }
}

fn fd_step(x: &[f64], rel: f64) -> f64 {
    rel * (1.0 + sqrt(norm_sq(x)))
}

fn shifted(x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += h;
    y
}

fn numeric_gradient(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64]) -> Vec<f64> {
    let h = fd_step(x, 1e-4);
    (0..x.len()).map(|i| (f(&shifted(x, i, h)) - f(&shifted(x, i, -h))) / (2.0 * h)).collect()
}

fn numeric_hessian(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64], h: f64) -> SymMatrix {
    let n = x.len();
    let f0 = f(x);
    SymMatrix::from_fn(n, |i, j| {
        if i == j {
            (f(&shifted(x, i, h)) - 2.0 * f0 + f(&shifted(x, i, -h))) / (h * h)
        } else {
            let pp = f(&shifted(&shifted(x, i, h), j, h));
            let pm = f(&shifted(&shifted(x, i, h), j, -h));
            let mp = f(&shifted(&shifted(x, i, -h), j, h));
            let mm = f(&shifted(&shifted(x, i, -h), j, -h));
            (pp - pm - mp + mm) / (4.0 * h * h)
        }
    })
}

fn numeric_jet(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64]) -> Result<PotentialJet> {
    let n = x.len();
    let value = f(x);
    let gradient = numeric_gradient(f, x);
    let hessian = numeric_hessian(f, x, fd_step(x, 1e-4));
    // Third derivatives difference Hessians; a coarser step keeps rounding
    // error (∝ ε/h³) from swamping the truncation error.
    let h3 = fd_step(x, 1e-3);
    let dh: Vec<SymMatrix> = (0..n)
        .map(|k| {
            let up = numeric_hessian(f, &shifted(x, k, h3), h3);
            let dn = numeric_hessian(f, &shifted(x, k, -h3), h3);
            up.sub(&dn).scaled(1.0 / (2.0 * h3))
        })
        .collect();
    // Average over the six index permutations.
    let third_slices = (0..n)
        .map(|k| {
            SymMatrix::from_fn(n, |i, j| {
                (dh[k][(i, j)] + dh[k][(j, i)] + dh[i][(j, k)] + dh[i][(k, j)] + dh[j][(i, k)] + dh[j][(k, i)]) / 6.0
            })
        })
        .collect();
    Ok(PotentialJet { x: x.to_vec(), value, gradient, hessian, third_slices })
}

/// Axis-aligned sampling box with a per-axis point count. An axis with a
/// single point samples its midpoint.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let b = SampleBox { lo, hi, resolution };
        b.validate()?;
        Ok(b)
    }

    /// Cube `[lo, hi]ⁿ` with `points` samples per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n], vec![points; n])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lo.len();
        if n == 0 || self.hi.len() != n || self.resolution.len() != n {
            return Err(invalid("sampling box bounds and resolution must share a positive dimension"));
        }
        for i in 0..n {
            if !(self.lo[i] <= self.hi[i]) || !self.lo[i].is_finite() || !self.hi[i].is_finite() {
                return Err(invalid("empty or non-finite sampling box"));
            }
            if self.resolution[i] == 0 {
                return Err(invalid("sampling box needs at least one point per axis"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(&self, axis: usize, k: usize) -> f64 {
        let m = self.resolution[axis];
        if m == 1 {
            0.5 * (self.lo[axis] + self.hi[axis])
        } else {
            self.lo[axis] + (self.hi[axis] - self.lo[axis]) * k as f64 / (m - 1) as f64
        }
    }

    /// Point with flat index `idx` (first axis varies slowest).
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        for axis in (0..n).rev() {
            let m = self.resolution[axis];
            x[axis] = self.coord(axis, idx % m);
            idx /= m;
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    fn spacing(&self, axis: usize) -> f64 {
        let m = self.resolution[axis];
        if m == 1 {
            self.hi[axis] - self.lo[axis]
        } else {
            (self.hi[axis] - self.lo[axis]) / (m - 1) as f64
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Minimum of α over the box grid, refined by compass search from the best
/// grid point. Returns `(α₀ estimate, minimizer)`.
pub fn estimate_alpha0(v: &Potential, bx: &SampleBox) -> Result<(f64, Vec<f64>)> {
    bx.validate()?;
    if bx.dim() != v.dim() {
        return Err(invalid("sampling box dimension differs from the potential's"));
    }
    let mut best = f64::INFINITY;
    let mut arg = bx.point(0);
    for x in bx.points() {
        let a = v.alpha(&x)?;
        if a < best {
            best = a;
            arg = x;
        }
    }
    let mut step: Vec<f64> = (0..bx.dim()).map(|i| bx.spacing(i)).collect();
    let floor = 1e-10 * (1.0 + step.iter().fold(0.0f64, |m, s| m.max(*s)));
    while step.iter().any(|&s| s > floor) {
        let mut improved = false;
        for i in 0..bx.dim() {
            for sign in [-1.0, 1.0] {
                let mut y = arg.clone();
                y[i] += sign * step[i];
                bx.clamp(&mut y);
                let a = v.alpha(&y)?;
                if a < best {
                    best = a;
                    arg = y;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
        }
    }
    Ok((best, arg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_jet() {
        let a0 = 0.7;
        let v = Potential::harmonic(a0).unwrap();
        let j = v.jet(&[2.0]).unwrap();
        assert_relative_eq!(j.value, 2.0 * a0);
        assert_relative_eq!(j.gradient[0], 2.0 * a0);
        assert_relative_eq!(j.hessian[(0, 0)], a0);
        assert_eq!(j.third_slices[0][(0, 0)], 0.0);
    }

    #[test]
    fn double_well_curvature() {
        let v = Potential::double_well(1, 1.0, 1.0).unwrap();
        assert_relative_eq!(v.jet(&[0.0]).unwrap().hessian[(0, 0)], -2.0);
        assert_relative_eq!(v.alpha(&[0.0]).unwrap(), -2.0);
        assert_relative_eq!(v.alpha(&[1.0]).unwrap(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(v.jet(&[1.0]).unwrap().third_slices[0][(0, 0)], 24.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha0_examples() {
        let q = Potential::quadratic(SymMatrix::diag(&[1.0, 4.0]), vec![0.0, 0.0], 0.0).unwrap();
        let bx = SampleBox::cube(2, -1.0, 1.0, 5).unwrap();
        assert_relative_eq!(estimate_alpha0(&q, &bx).unwrap().0, 1.0, epsilon = 1e-14);
        let dw = Potential::double_well(1, 1.0, 1.0).unwrap();
        let (a0, arg) = estimate_alpha0(&dw, &SampleBox::cube(1, -3.0, 3.0, 61).unwrap()).unwrap();
        assert_relative_eq!(a0, -2.0, epsilon = 1e-12);
        assert!(arg[0].abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Potential::harmonic(-1.0).is_err());
        assert!(Potential::radial_poly(1, 1.0, 2, Polynomial::univariate(&[0.0, 0.0, 0.0, 0.0, 1.0])).is_err());
        let v = Potential::harmonic(1.0).unwrap();
        assert!(v.jet(&[f64::NAN]).is_err());
        let t = Potential::tabulated(1, |x| 1.0 / x[0]).unwrap();
        assert!(t.jet(&[0.0]).is_err());
    }
}
