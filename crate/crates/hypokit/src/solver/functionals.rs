use alloc::vec::Vec;

use super::grid::PhaseGrid;
use super::Field;

/// Weight matrix inside S.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum PChoice {
    Identity,
    /// `P(x) = [[2, ν], [ν, 2V''(x) + 2a]]`.
    CaseMatrix { a: f64 },
}

/// What to evaluate along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalSpec {
    pub p: PChoice,
    pub gamma: f64,
    /// Enters the weight `V'' + 1 − α₀` of `gradv_weighted`.
    pub alpha0: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalSample {
    pub t: f64,
    pub mass: f64,
    pub l2sq: f64,
    pub gradx_sq: f64,
    /// Unweighted `∫ (∂v h)² f∞`.
    pub gradv_sq: f64,
    pub gradv_weighted: f64,
    pub s: f64,
    pub phi: f64,
}

/// Difference stencils with second-order one-sided closures.
pub(crate) struct Stencil<'a> {
    pub g: &'a PhaseGrid,
    pub h: &'a [f64],
}

impl Stencil<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.g.nv + j]
    }

    #[inline]
    pub fn dx(&self, i: usize, j: usize) -> f64 {
        let nx = self.g.nx;
        let r = 0.5 / self.g.dx;
        if i == 0 {
            r * (-3.0 * self.at(0, j) + 4.0 * self.at(1, j) - self.at(2, j))
        } else if i == nx - 1 {
            r * (3.0 * self.at(nx - 1, j) - 4.0 * self.at(nx - 2, j) + self.at(nx - 3, j))
        } else {
            r * (self.at(i + 1, j) - self.at(i - 1, j))
        }
    }

    #[inline]
    pub fn dv(&self, i: usize, j: usize) -> f64 {
        let nv = self.g.nv;
        let r = 0.5 / self.g.dv;
        if j == 0 {
            r * (-3.0 * self.at(i, 0) + 4.0 * self.at(i, 1) - self.at(i, 2))
        } else if j == nv - 1 {
            r * (3.0 * self.at(i, nv - 1) - 4.0 * self.at(i, nv - 2) + self.at(i, nv - 3))
        } else {
            r * (self.at(i, j + 1) - self.at(i, j - 1))
        }
    }

    #[inline]
    pub fn dvv(&self, i: usize, j: usize) -> f64 {
        let nv = self.g.nv;
        let r = 1.0 / (self.g.dv * self.g.dv);
        if j == 0 {
            r * (2.0 * self.at(i, 0) - 5.0 * self.at(i, 1) + 4.0 * self.at(i, 2) - self.at(i, 3))
        } else if j == nv - 1 {
            r * (2.0 * self.at(i, nv - 1) - 5.0 * self.at(i, nv - 2) + 4.0 * self.at(i, nv - 3) - self.at(i, nv - 4))
        } else {
            r * (self.at(i, j + 1) - 2.0 * self.at(i, j) + self.at(i, j - 1))
        }
    }

    #[inline]
    pub fn dxv(&self, i: usize, j: usize) -> f64 {
        let nx = self.g.nx;
        let r = 0.5 / self.g.dx;
        if i == 0 {
            r * (-3.0 * self.dv(0, j) + 4.0 * self.dv(1, j) - self.dv(2, j))
        } else if i == nx - 1 {
            r * (3.0 * self.dv(nx - 1, j) - 4.0 * self.dv(nx - 2, j) + self.dv(nx - 3, j))
        } else {
            r * (self.dv(i + 1, j) - self.dv(i - 1, j))
        }
    }
}

/// Entries `(p11, p12, p22)` of P at cell row i.
#[inline]
pub(crate) fn p_entries(p: PChoice, g: &PhaseGrid, i: usize) -> (f64, f64, f64) {
    match p {
        PChoice::Identity => (1.0, 0.0, 1.0),
        PChoice::CaseMatrix { a } => (2.0, g.nu, 2.0 * g.vpp[i] + 2.0 * a),
    }
}

/// Sums per-row partial results in a fixed order.
pub(crate) fn row_reduce<const K: usize, F>(nx: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Send + Sync,
{
    #[cfg(feature = "parallel")]
    let rows: Vec<[f64; K]> = {
        use rayon::prelude::*;
        (0..nx).into_par_iter().map(&f).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<[f64; K]> = (0..nx).map(&f).collect();
    let mut acc = [0.0; K];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc
}

/// All functionals of one state, by cell quadrature against the equilibrium
/// weights.
pub fn functionals(field: &Field, spec: &FunctionalSpec) -> FunctionalSample {
    let g = &*field.grid;
    let st = Stencil { g, h: &field.h };
    let nv = g.nv;
    let [mass, l2sq, gx, gv, gvw, s] = row_reduce(g.nx, |i| {
        let (p11, p12, p22) = p_entries(spec.p, g, i);
        let weight_v = g.vpp[i] + 1.0 - spec.alpha0;
        let mut acc = [0.0; 6];
        for j in 0..nv {
            let w = g.w[i * nv + j];
            let hv = field.h[i * nv + j];
            let ux = st.dx(i, j);
            let uv = st.dv(i, j);
            acc[0] += w * hv;
            acc[1] += w * (hv - 1.0) * (hv - 1.0);
            acc[2] += w * ux * ux;
            acc[3] += w * uv * uv;
            acc[4] += w * weight_v * uv * uv;
            acc[5] += w * (p11 * ux * ux + 2.0 * p12 * ux * uv + p22 * uv * uv);
        }
        acc
    });
    let s = 2.0 * s;
    FunctionalSample {
        t: 0.0,
        mass,
        l2sq,
        gradx_sq: gx,
        gradv_sq: gv,
        gradv_weighted: gvw,
        s,
        phi: spec.gamma * l2sq + s,
    }
}

/// The three integrals of the dS/dt identity:
/// `−4σ∫(∂v u)ᵀP ∂v u f∞`, `−2∫uᵀ(QP + PQᵀ)u f∞` and `2∫uᵀ(v ∂x P)u f∞`.
pub(crate) fn ds_dt_terms(field: &Field, p: PChoice) -> [f64; 3] {
    let g = &*field.grid;
    let st = Stencil { g, h: &field.h };
    let nv = g.nv;
    row_reduce(g.nx, |i| {
        let (p11, p12, p22) = p_entries(p, g, i);
        let vpp = g.vpp[i];
        // QP + PQᵀ with Q = [[0, 1], [−V'', ν]].
        let m11 = 2.0 * p12;
        let m12 = p22 - vpp * p11 + g.nu * p12;
        let m22 = 2.0 * (g.nu * p22 - vpp * p12);
        let dp22 = match p {
            PChoice::Identity => 0.0,
            PChoice::CaseMatrix { .. } => 2.0 * g.vppp[i],
        };
        let mut acc = [0.0; 3];
        for j in 0..nv {
            let w = g.w[i * nv + j];
            let ux = st.dx(i, j);
            let uv = st.dv(i, j);
            let wx = st.dxv(i, j);
            let wv = st.dvv(i, j);
            acc[0] += w * (p11 * wx * wx + 2.0 * p12 * wx * wv + p22 * wv * wv);
            acc[1] += w * (m11 * ux * ux + 2.0 * m12 * ux * uv + m22 * uv * uv);
            acc[2] += w * g.v[j] * dp22 * uv * uv;
        }
        acc
    })
    .into_iter()
    .zip([-4.0 * g.sigma, -2.0, 2.0])
    .map(|(v, c)| c * v)
    .collect::<Vec<_>>()
    .try_into()
    .expect("three terms")
}
