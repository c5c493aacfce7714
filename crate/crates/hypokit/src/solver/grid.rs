use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fmath::{abs, exp, ln, sqrt};
use crate::potential::Potential;

/// Steady-state tail mass targeted by the box size.
pub const TAIL: f64 = 1e-14;

/// Truncated phase space `[−Lx, Lx] × [−Lv, Lv]` with cell-centred samples
/// and precomputed equilibrium weights.
///
/// Weights factor as `a_i b_j`, discrete stand-ins for `e^{−(ν/σ)(V − V_min)}`
/// and `e^{−(ν/σ)v²/2}` for which the discrete divergence of the equilibrium
/// flux `(v a b, −V' a b)` vanishes identically. So `h ≡ 1` is an exact fixed
/// point while transport uses the true coefficients almost everywhere.
#[derive(Clone, Debug)]
pub struct PhaseGrid {
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
    pub dx: f64,
    pub dv: f64,
    pub nu: f64,
    pub sigma: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Quadrature weight of each cell, `a_i b_j dx dv / Z`; sums to 1.
    pub w: Vec<f64>,
    pub(crate) a_ratio_plus: Vec<f64>,
    pub(crate) a_ratio_minus: Vec<f64>,
    pub(crate) b_ratio_plus: Vec<f64>,
    pub(crate) b_ratio_minus: Vec<f64>,
    /// `b_{j±½}/b_j` at the faces used by the OU step (zero at the walls).
    pub(crate) ou_plus: Vec<f64>,
    pub(crate) ou_minus: Vec<f64>,
    /// Transport velocity; `v_j` except in a fallback cell at v ≈ 0.
    pub vt: Vec<f64>,
    /// Transport force; `V'(x_i)` except where V' nearly vanishes.
    pub dvt: Vec<f64>,
    /// `V(x_i)`.
    pub pot: Vec<f64>,
    pub vp: Vec<f64>,
    pub vpp: Vec<f64>,
    pub vppp: Vec<f64>,
    pub v_min: f64,
}

fn potential_min(v: &Potential, lo: f64, hi: f64) -> Result<f64> {
    let m = 4000;
    let mut best = f64::INFINITY;
    for k in 0..=m {
        let x = lo + (hi - lo) * k as f64 / m as f64;
        best = best.min(v.value(&[x])?);
    }
    Ok(best)
}

/// Half-width in x beyond which `e^{−(ν/σ)(V − V_min)} < TAIL` on both sides.
pub fn default_lx(v: &Potential, nu: f64, sigma: f64) -> Result<f64> {
    let need = (sigma / nu) * -ln(TAIL);
    let mut l = 1.0;
    for _ in 0..60 {
        let vmin = potential_min(v, -l, l)?;
        if v.value(&[l])? - vmin >= need && v.value(&[-l])? - vmin >= need {
            // Tighten by bisection on the larger of the two side requirements.
            let (mut lo, mut hi) = (0.0, l);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if v.value(&[mid])? - vmin >= need && v.value(&[-mid])? - vmin >= need {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
        l *= 1.5;
    }
    Err(invalid("potential does not confine: no finite x box reaches the tail threshold"))
}

/// Cell weights and transport coefficients along one axis, from the face
/// weights `faces` (length m+1), midpoint weights `mid` and exact
/// coefficients `coef` (V' or v at the cell centres).
///
/// The weight `(faces_k − faces_{k+1}) / (β coef_k d)` makes the discrete
/// equilibrium flux divergence-free with the exact coefficient. Where the
/// coefficient nearly vanishes that quotient is 0/0, so the midpoint weight
/// is kept and the coefficient is modified instead.
fn balanced_weights(faces: &[f64], mid: &[f64], coef: &[f64], beta: f64, d: f64) -> (Vec<f64>, Vec<f64>) {
    let mut w = Vec::with_capacity(mid.len());
    let mut c = Vec::with_capacity(mid.len());
    for k in 0..mid.len() {
        let g = beta * coef[k] * d;
        let diff = faces[k] - faces[k + 1];
        let cell = diff / g;
        if abs(g) > 1e-6 && diff != 0.0 && cell > 0.0 && cell.is_finite() {
            w.push(cell);
            c.push(coef[k]);
        } else {
            w.push(mid[k]);
            c.push(diff / (beta * d * mid[k]));
        }
    }
    (w, c)
}

/// `√(2(σ/ν) ln(1/TAIL))`.
pub fn default_lv(nu: f64, sigma: f64) -> f64 {
    sqrt(2.0 * (sigma / nu) * -ln(TAIL))
}

impl PhaseGrid {
    pub fn new(v: &Potential, nu: f64, sigma: f64, nx: usize, nv: usize, lx: Option<f64>, lv: Option<f64>) -> Result<Self> {
        if v.dim() != 1 {
            return Err(invalid("the phase-space solver handles one spatial dimension"));
        }
        if nx < 64 || nv < 64 {
            return Err(invalid("grids need at least 64 cells per direction"));
        }
        if !(nu > 0.0 && sigma > 0.0) || !nu.is_finite() || !sigma.is_finite() {
            return Err(invalid("ν and σ must be positive"));
        }
        let lx = match lx {
            Some(l) if l > 0.0 && l.is_finite() => l,
            Some(_) => return Err(invalid("Lx must be positive")),
            None => default_lx(v, nu, sigma)?,
        };
        let lv = match lv {
            Some(l) if l > 0.0 && l.is_finite() => l,
            Some(_) => return Err(invalid("Lv must be positive")),
            None => default_lv(nu, sigma),
        };
        let dx = 2.0 * lx / nx as f64;
        let dv = 2.0 * lv / nv as f64;
        let beta = nu / sigma;
        let x: Vec<f64> = (0..nx).map(|i| -lx + (i as f64 + 0.5) * dx).collect();
        let vv: Vec<f64> = (0..nv).map(|j| -lv + (j as f64 + 0.5) * dv).collect();
        let xf: Vec<f64> = (0..=nx).map(|i| -lx + i as f64 * dx).collect();
        let vf: Vec<f64> = (0..=nv).map(|j| -lv + j as f64 * dv).collect();

        let pot_c: Vec<f64> = x.iter().map(|&xi| v.value(&[xi])).collect::<Result<_>>()?;
        let pot_f: Vec<f64> = xf.iter().map(|&xi| v.value(&[xi])).collect::<Result<_>>()?;
        let v_min = pot_c.iter().chain(&pot_f).fold(f64::INFINITY, |m, p| m.min(*p));

        let mut vp = Vec::with_capacity(nx);
        let mut vpp = Vec::with_capacity(nx);
        let mut vppp = Vec::with_capacity(nx);
        for &xi in &x {
            let jet = v.jet(&[xi])?;
            vp.push(jet.gradient[0]);
            vpp.push(jet.hessian[(0, 0)]);
            vppp.push(jet.third_slices[0][(0, 0)]);
        }
        let x_faces: Vec<f64> = pot_f.iter().map(|p| exp(-beta * (p - v_min))).collect();
        let x_mid: Vec<f64> = pot_c.iter().map(|p| exp(-beta * (p - v_min))).collect();
        let (a, dvt) = balanced_weights(&x_faces, &x_mid, &vp, beta, dx);
        let v_faces: Vec<f64> = vf.iter().map(|s| exp(-0.5 * beta * s * s)).collect();
        let v_mid: Vec<f64> = vv.iter().map(|s| exp(-0.5 * beta * s * s)).collect();
        let (b, vt) = balanced_weights(&v_faces, &v_mid, &vv, beta, dv);

        let a_ratio_plus: Vec<f64> = (0..nx).map(|i| x_faces[i + 1] / (dx * a[i])).collect();
        let a_ratio_minus: Vec<f64> = (0..nx).map(|i| x_faces[i] / (dx * a[i])).collect();
        let b_ratio_plus: Vec<f64> = (0..nv).map(|j| v_faces[j + 1] / (dv * b[j])).collect();
        let b_ratio_minus: Vec<f64> = (0..nv).map(|j| v_faces[j] / (dv * b[j])).collect();
        let ou_plus: Vec<f64> = (0..nv).map(|j| if j + 1 == nv { 0.0 } else { v_faces[j + 1] / b[j] }).collect();
        let ou_minus: Vec<f64> = (0..nv).map(|j| if j == 0 { 0.0 } else { v_faces[j] / b[j] }).collect();

        let z: f64 = a.iter().sum::<f64>() * b.iter().sum::<f64>();
        let mut w = Vec::with_capacity(nx * nv);
        for ai in &a {
            for bj in &b {
                w.push(ai * bj / z);
            }
        }
        Ok(PhaseGrid {
            nx,
            nv,
            lx,
            lv,
            dx,
            dv,
            nu,
            sigma,
            x,
            v: vv,
            w,
            a_ratio_plus,
            a_ratio_minus,
            b_ratio_plus,
            b_ratio_minus,
            ou_plus,
            ou_minus,
            vt,
            dvt,
            pot: pot_c,
            vp,
            vpp,
            vppp,
            v_min,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nv + j
    }

    /// Courant number `max|ṽ|dt/dx + max|Ṽ'|dt/dv`.
    pub fn courant(&self, dt: f64) -> f64 {
        let vmax = self.vt.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let fmax = self.dvt.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        vmax * dt / self.dx + fmax * dt / self.dv
    }

    /// Largest dt allowed by the Courant limit.
    pub fn max_dt(&self, limit: f64) -> f64 {
        limit / self.courant(1.0)
    }
}
