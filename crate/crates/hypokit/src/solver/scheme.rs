//! Strang-split time stepping: flux-form MUSCL transport (SSP-RK2) around an
//! implicit Ornstein–Uhlenbeck solve in v.

use alloc::vec;
use alloc::vec::Vec;

use super::grid::PhaseGrid;
use super::Field;
use crate::error::{invalid, Error, Result};

/// Courant bound enforced by [`Stepper::step`].
pub const CFL_LIMIT: f64 = 0.9;

/// Slope limiter of the second-order upwind reconstruction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Limiter {
    /// Unlimited central slope (Fromm).
    #[default]
    Linear,
    Minmod,
    VanLeer,
    /// Unlimited κ = 1/3 reconstruction, third order on smooth data.
    ThirdOrder,
}

impl Limiter {
    /// Reconstructed value of the centre cell `h0` at its face toward `hp`
    /// (`toward_plus`) or toward `hm`.
    #[inline]
    fn face(self, hm: f64, h0: f64, hp: f64, toward_plus: bool) -> f64 {
        let dl = h0 - hm;
        let dr = hp - h0;
        let half_slope = match self {
            Limiter::Linear => 0.25 * (dl + dr),
            Limiter::Minmod => {
                if dl * dr <= 0.0 {
                    0.0
                } else if dl.abs() < dr.abs() {
                    0.5 * dl
                } else {
                    0.5 * dr
                }
            }
            Limiter::VanLeer => {
                if dl * dr <= 0.0 {
                    0.0
                } else {
                    dl * dr / (dl + dr)
                }
            }
            Limiter::ThirdOrder => {
                // Weighted toward the difference across the reconstructed face.
                return if toward_plus { h0 + (dl + 2.0 * dr) / 6.0 } else { h0 - (2.0 * dl + dr) / 6.0 };
            }
        };
        if toward_plus {
            h0 + half_slope
        } else {
            h0 - half_slope
        }
    }
}

pub(crate) fn for_rows<F>(out: &mut [f64], nv: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(nv).enumerate().for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(nv).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// Reusable stepping workspace bound to one grid.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub limiter: Limiter,
    /// Implicitness of the OU solve: 0.5 is Crank–Nicolson, 1 is backward Euler.
    pub theta: f64,
    k1: Vec<f64>,
    stage: Vec<f64>,
    ou_cache: Option<OuFactor>,
}

#[derive(Clone, Debug)]
struct OuFactor {
    dt: f64,
    sub: Vec<f64>,
    // Thomas elimination factors.
    cprime: Vec<f64>,
    inv_denom: Vec<f64>,
    // Explicit part.
    ex_lo: Vec<f64>,
    ex_diag: Vec<f64>,
    ex_hi: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &PhaseGrid, limiter: Limiter, theta: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&theta) {
            return Err(invalid("OU implicitness must lie in [0.5, 1]"));
        }
        let n = grid.len();
        Ok(Stepper { limiter, theta, k1: vec![0.0; n], stage: vec![0.0; n], ou_cache: None })
    }

    /// One Strang step `T(dt/2) OU(dt) T(dt/2)`.
    pub fn step(&mut self, field: &mut Field, dt: f64) -> Result<()> {
        let grid = field.grid.clone();
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("time step must be positive"));
        }
        let courant = grid.courant(dt);
        if courant > CFL_LIMIT {
            return Err(Error::Cfl { courant, limit: CFL_LIMIT });
        }
        if self.k1.len() != grid.len() || field.h.len() != grid.len() {
            return Err(invalid("stepper and field belong to different grids"));
        }
        self.transport(&grid, &mut field.h, 0.5 * dt);
        self.ou(&grid, &mut field.h, dt);
        self.transport(&grid, &mut field.h, 0.5 * dt);
        Ok(())
    }

    /// Transport sub-flow only (exposed for sub-flow tests).
    pub fn transport_only(&mut self, field: &mut Field, dt: f64) {
        let grid = field.grid.clone();
        self.transport(&grid, &mut field.h, dt);
    }

    /// OU sub-flow only (exposed for sub-flow tests).
    pub fn ou_only(&mut self, field: &mut Field, dt: f64) {
        let grid = field.grid.clone();
        self.ou(&grid, &mut field.h, dt);
    }

    fn transport(&mut self, g: &PhaseGrid, h: &mut [f64], dt: f64) {
        let lim = self.limiter;
        // Stage 1: stage = h + dt L(h).
        transport_rhs(g, lim, h, &mut self.k1);
        for ((s, hv), k) in self.stage.iter_mut().zip(h.iter()).zip(&self.k1) {
            *s = hv + dt * k;
        }
        // Stage 2: h = ½h + ½(stage + dt L(stage)).
        transport_rhs(g, lim, &self.stage, &mut self.k1);
        for ((hv, s), k) in h.iter_mut().zip(&self.stage).zip(&self.k1) {
            *hv = 0.5 * *hv + 0.5 * (s + dt * k);
        }
    }

    fn ou(&mut self, g: &PhaseGrid, h: &mut [f64], dt: f64) {
        let stale = self.ou_cache.as_ref().map_or(true, |c| c.dt != dt);
        if stale {
            self.ou_cache = Some(OuFactor::new(g, dt, self.theta));
        }
        let fac = self.ou_cache.as_ref().expect("set above");
        let nv = g.nv;
        for_rows(h, nv, |_, row| fac.solve_row(row));
    }
}

impl OuFactor {
    fn new(g: &PhaseGrid, dt: f64, theta: f64) -> Self {
        let nv = g.nv;
        let k = g.sigma * dt / (g.dv * g.dv);
        let mut sub = vec![0.0; nv];
        let mut sup = vec![0.0; nv];
        let mut diag = vec![0.0; nv];
        let mut ex_lo = vec![0.0; nv];
        let mut ex_diag = vec![0.0; nv];
        let mut ex_hi = vec![0.0; nv];
        for j in 0..nv {
            let (op, om) = (g.ou_plus[j], g.ou_minus[j]);
            sub[j] = -theta * k * om;
            sup[j] = -theta * k * op;
            diag[j] = 1.0 + theta * k * (op + om);
            ex_lo[j] = (1.0 - theta) * k * om;
            ex_hi[j] = (1.0 - theta) * k * op;
            ex_diag[j] = 1.0 - (1.0 - theta) * k * (op + om);
        }
        let mut cprime = vec![0.0; nv];
        let mut inv_denom = vec![0.0; nv];
        let mut prev_c = 0.0;
        for j in 0..nv {
            let denom = diag[j] - sub[j] * prev_c;
            inv_denom[j] = 1.0 / denom;
            cprime[j] = sup[j] * inv_denom[j];
            prev_c = cprime[j];
        }
        OuFactor { dt, sub, cprime, inv_denom, ex_lo, ex_diag, ex_hi }
    }

    fn solve_row(&self, row: &mut [f64]) {
        let nv = row.len();
        // Explicit half, then forward sweep in place.
        let mut prev_old = 0.0;
        let mut prev_d = 0.0;
        for j in 0..nv {
            let cur = row[j];
            let next = if j + 1 < nv { row[j + 1] } else { 0.0 };
            let rhs = self.ex_lo[j] * prev_old + self.ex_diag[j] * cur + self.ex_hi[j] * next;
            prev_old = cur;
            let d = (rhs - self.sub[j] * prev_d) * self.inv_denom[j];
            row[j] = d;
            prev_d = d;
        }
        for j in (0..nv.saturating_sub(1)).rev() {
            row[j] -= self.cprime[j] * row[j + 1];
        }
    }
}

#[inline]
fn at(h: &[f64], nx: usize, nv: usize, i: isize, j: usize) -> f64 {
    if i < 0 || i as usize >= nx {
        1.0
    } else {
        h[i as usize * nv + j]
    }
}

/// Upwind face value of h in x at the face between cells `k−1` and `k`.
#[inline]
fn face_x(h: &[f64], nx: usize, nv: usize, lim: Limiter, k: isize, j: usize, vel: f64) -> f64 {
    if vel >= 0.0 {
        if k == 0 {
            return 1.0;
        }
        lim.face(at(h, nx, nv, k - 2, j), at(h, nx, nv, k - 1, j), at(h, nx, nv, k, j), true)
    } else {
        if k as usize == nx {
            return 1.0;
        }
        lim.face(at(h, nx, nv, k - 1, j), at(h, nx, nv, k, j), at(h, nx, nv, k + 1, j), false)
    }
}

/// Upwind face value of h in v along one row, face between `k−1` and `k`.
#[inline]
fn face_v(row: &[f64], lim: Limiter, k: usize, vel: f64) -> f64 {
    let nv = row.len();
    let get = |j: isize| if j < 0 || j as usize >= nv { 1.0 } else { row[j as usize] };
    let k = k as isize;
    if vel >= 0.0 {
        if k == 0 {
            return 1.0;
        }
        lim.face(get(k - 2), get(k - 1), get(k), true)
    } else {
        if k as usize == nv {
            return 1.0;
        }
        lim.face(get(k - 1), get(k), get(k + 1), false)
    }
}

/// `dh/dt` of the transport part in flux form.
pub(crate) fn transport_rhs(g: &PhaseGrid, lim: Limiter, h: &[f64], out: &mut [f64]) {
    let (nx, nv) = (g.nx, g.nv);
    for_rows(out, nv, |i, orow| {
        let ii = i as isize;
        let row = &h[i * nv..(i + 1) * nv];
        let force = g.dvt[i];
        // Flux velocity in v is −Ṽ'.
        let vel_v = -force;
        let mut lower_v = face_v(row, lim, 0, vel_v);
        for j in 0..nv {
            let vel = g.vt[j];
            let hp = face_x(h, nx, nv, lim, ii + 1, j, vel);
            let hm = face_x(h, nx, nv, lim, ii, j, vel);
            let dx_part = -vel * (g.a_ratio_plus[i] * hp - g.a_ratio_minus[i] * hm);
            let upper_v = face_v(row, lim, j + 1, vel_v);
            let dv_part = force * (g.b_ratio_plus[j] * upper_v - g.b_ratio_minus[j] * lower_v);
            lower_v = upper_v;
            orow[j] = dx_part + dv_part;
        }
    });
}
