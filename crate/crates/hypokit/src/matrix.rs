//! Dense kernels for the small matrices that appear everywhere else: symmetric
//! eigendecomposition, PSD tests, matrix exponential, spectral norm, Kronecker
//! products and inverse square roots of SPD matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut, Mul};

use crate::error::{domain, invalid, Error, Result};
use crate::fmath::{abs, ceil, log2, sqrt};

/// Row-major dense real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid("row-major data length does not match shape"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// `self + s·I`.
    pub fn add_identity(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += s;
        }
        m
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "vector length differs from column count");
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.data.iter().map(|x| x * x).sum())
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| abs(self[(i, j)])).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(abs(*x)))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

/// Real symmetric matrix. Construction averages the input with its transpose,
/// so symmetry holds exactly afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid("symmetric matrix must be square"));
        }
        let n = m.rows;
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        Ok(SymMatrix(s))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::new(Matrix::from_fn(n, n, f)).expect("square by construction")
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn diag(d: &[f64]) -> Self {
        SymMatrix(Matrix::diag(d))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scaled(s))
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.sub(&other.0))
    }

    pub fn add_identity(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.add_identity(s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.0.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors stored as the
/// columns of `vectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Relative width used to group numerically repeated eigenvalues.
pub const CLUSTER_TOL: f64 = 1e-8;

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(abs(*x)))
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// Index ranges of eigenvalues that agree to within
    /// `CLUSTER_TOL · spectral radius` of their neighbours.
    pub fn clusters(&self) -> Vec<core::ops::Range<usize>> {
        let tol = CLUSTER_TOL * self.spectral_radius().max(f64::MIN_POSITIVE);
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.values.len() {
            if k == self.values.len() || self.values[k] - self.values[k - 1] > tol {
                out.push(start..k);
                start = k;
            }
        }
        out
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)]).sum()
        })
    }
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(invalid("matrix has non-finite entries"))
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The iteration order is fixed and eigenvector signs are normalized (largest
/// component positive), so identical inputs give bitwise identical output.
pub fn sym_eig(a: &SymMatrix) -> Result<Spectrum> {
    ensure_finite(a.as_matrix())?;
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let mut d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|p| ((p + 1)..n).map(move |q| (p, q))).map(|(p, q)| abs(m[(p, q)])).sum();
        if off == 0.0 {
            break;
        }
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = 100.0 * abs(apq);
                if sweep > 3 && abs(d[p]) + g == abs(d[p]) && abs(d[q]) + g == abs(d[q]) {
                    m[(p, q)] = 0.0;
                    continue;
                }
                if abs(apq) <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if abs(h) + g == abs(h) {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (abs(theta) + sqrt(1.0 + theta * theta));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[(p, q)] = 0.0;
                let rotate = |m: &mut Matrix, i: usize, j: usize, k: usize, l: usize| {
                    let g = m[(i, j)];
                    let h = m[(k, l)];
                    m[(i, j)] = g - s * (h + g * tau);
                    m[(k, l)] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rotate(&mut m, j, p, j, q);
                }
                for j in (p + 1)..q {
                    rotate(&mut m, p, j, j, q);
                }
                for j in (q + 1)..n {
                    rotate(&mut m, p, j, q, j);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut lead = 0;
        for i in 0..n {
            if abs(v[(i, k)]) > abs(v[(lead, k)]) {
                lead = i;
            }
        }
        let sign = if v[(lead, k)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[(i, k)];
        }
    }
    Ok(Spectrum { values, vectors })
}

/// Scale-aware PSD tolerance `1e-10 · max(1, ‖A‖_F)` used across the crate.
pub fn psd_tol(a: &SymMatrix) -> f64 {
    1e-10 * a.frobenius_norm().max(1.0)
}

/// Returns `(min_eig ≥ −tol, min_eig)`.
pub fn is_psd(a: &SymMatrix, tol: f64) -> Result<(bool, f64)> {
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(invalid("PSD tolerance must be a finite nonnegative number"));
    }
    let min = min_eigenvalue(a)?;
    Ok((min >= -tol, min))
}

/// [`is_psd`] with the default tolerance from [`psd_tol`].
pub fn is_psd_default(a: &SymMatrix) -> Result<(bool, f64)> {
    is_psd(a, psd_tol(a))
}

/// Smallest eigenvalue; closed form for 1×1 and 2×2, Jacobi otherwise.
pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    ensure_finite(a.as_matrix())?;
    match a.dim() {
        0 => Ok(0.0),
        1 => Ok(a[(0, 0)]),
        2 => {
            let (p, q, r) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
            let mean = 0.5 * (p + r);
            let rad = libm::hypot(0.5 * (p - r), q);
            let lo = mean - rad;
            // Recover the small root from the product when cancellation bites.
            let hi = mean + rad;
            let det = p * r - q * q;
            if lo.is_finite() && hi != 0.0 && abs(lo) < 1e-8 * abs(hi) {
                Ok(det / hi)
            } else {
                Ok(lo)
            }
        }
        _ => Ok(sym_eig(a)?.min()),
    }
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows != b.rows {
        return Err(invalid("solve needs a square system with matching right-hand side"));
    }
    let n = a.rows;
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if abs(lu[(i, k)]) > abs(lu[(piv, k)]) {
                piv = i;
            }
        }
        if lu[(piv, k)] == 0.0 {
            return Err(domain("singular matrix in linear solve"));
        }
        if piv != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            for j in 0..x.cols {
                let t = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
            for j in 0..x.cols {
                x[(i, j)] -= f * x[(k, j)];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..x.cols {
            let mut s = x[(k, j)];
            for i in (k + 1)..n {
                s -= lu[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = s / lu[(k, k)];
        }
    }
    Ok(x)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] =
    [1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1, 2.097847961257068, 5.371920351148152];

/// `exp(t·A)` by scaling and squaring with a diagonal Padé approximant
/// (degree 3 to 13 chosen from the 1-norm of `t·A`).
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(invalid("matrix exponential needs a square matrix"));
    }
    if !t.is_finite() {
        return Err(invalid("non-finite time in matrix exponential"));
    }
    ensure_finite(a)?;
    let n = a.rows;
    let x = a.scaled(t);
    let norm = x.norm1();
    let id = Matrix::identity(n);

    let small: [(&[f64], f64); 4] = [(&PADE3, THETA[0]), (&PADE5, THETA[1]), (&PADE7, THETA[2]), (&PADE9, THETA[3])];
    for (coef, theta) in small {
        if norm <= theta {
            let x2 = x.matmul(&x);
            let mut u = Matrix::zeros(n, n);
            let mut v = Matrix::zeros(n, n);
            let mut pow = id.clone();
            for k in 0..coef.len() / 2 {
                u = u.add(&pow.scaled(coef[2 * k + 1]));
                v = v.add(&pow.scaled(coef[2 * k]));
                pow = pow.matmul(&x2);
            }
            let u = x.matmul(&u);
            return finish_pade(&u, &v, 0);
        }
    }

    let s = if norm > THETA[4] { ceil(log2(norm / THETA[4])).max(0.0) } else { 0.0 };
    if s > 1000.0 {
        return Err(Error::Range("matrix exponential argument too large".into()));
    }
    let s = s as u32;
    let x = x.scaled(libm::ldexp(1.0, -(s as i32)));
    let b = &PADE13;
    let x2 = x.matmul(&x);
    let x4 = x2.matmul(&x2);
    let x6 = x4.matmul(&x2);
    let inner_u = x6.scaled(b[13]).add(&x4.scaled(b[11])).add(&x2.scaled(b[9]));
    let u = x6
        .matmul(&inner_u)
        .add(&x6.scaled(b[7]))
        .add(&x4.scaled(b[5]))
        .add(&x2.scaled(b[3]))
        .add(&id.scaled(b[1]));
    let u = x.matmul(&u);
    let inner_v = x6.scaled(b[12]).add(&x4.scaled(b[10])).add(&x2.scaled(b[8]));
    let v = x6
        .matmul(&inner_v)
        .add(&x6.scaled(b[6]))
        .add(&x4.scaled(b[4]))
        .add(&x2.scaled(b[2]))
        .add(&id.scaled(b[0]));
    finish_pade(&u, &v, s)
}

fn finish_pade(u: &Matrix, v: &Matrix, squarings: u32) -> Result<Matrix> {
    let mut r = solve(&v.sub(u), &v.add(u))?;
    for _ in 0..squarings {
        r = r.matmul(&r);
        if !r.is_finite() {
            return Err(Error::Range("matrix exponential overflowed".into()));
        }
    }
    if !r.is_finite() {
        return Err(Error::Range("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Largest singular value, from the top eigenvalue of `AᵀA`.
pub fn op_norm2(a: &Matrix) -> Result<f64> {
    ensure_finite(a)?;
    if a.rows == 0 || a.cols == 0 {
        return Ok(0.0);
    }
    let scale = a.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Normalizing first keeps AᵀA away from underflow for tiny propagators.
    let b = a.scaled(1.0 / scale);
    let gram = SymMatrix::new(b.transpose().matmul(&b))?;
    let top = sym_eig(&gram)?.max().max(0.0);
    Ok(scale * sqrt(top))
}

/// Kronecker product of general matrices.
pub fn kron_general(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// Kronecker product; symmetric inputs give a symmetric result.
pub fn kron(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
    SymMatrix(kron_general(a.as_matrix(), b.as_matrix()))
}

pub(crate) fn spd_spectrum_check(a: &SymMatrix) -> Result<Spectrum> {
    let spec = sym_eig(a)?;
    let scale = spec.spectral_radius();
    if a.dim() == 0 || !(spec.min() > 1e-12 * scale) {
        return Err(domain("matrix is not symmetric positive definite"));
    }
    Ok(spec)
}

fn spectral_map(spec: &Spectrum, f: impl Fn(f64) -> f64) -> SymMatrix {
    let n = spec.values.len();
    let fv: Vec<f64> = spec.values.iter().map(|&x| f(x)).collect();
    SymMatrix::from_fn(n, |i, j| (0..n).map(|k| spec.vectors[(i, k)] * fv[k] * spec.vectors[(j, k)]).sum())
}

/// `A^{-1/2}` for symmetric positive definite `A`.
pub fn spd_inv_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = spd_spectrum_check(a)?;
    Ok(spectral_map(&spec, |x| 1.0 / sqrt(x)))
}

/// `A^{1/2}` for symmetric positive definite `A`.
pub fn spd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = spd_spectrum_check(a)?;
    Ok(spectral_map(&spec, sqrt))
}

/// `A^{-1}` for symmetric positive definite `A`.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = spd_spectrum_check(a)?;
    Ok(spectral_map(&spec, |x| 1.0 / x))
}
