//! Small least-squares helpers for rate fitting.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fmath::sqrt;

/// Least-squares coefficients for `y ≈ Σ_k coef_k · columns[k]`, by
/// Householder QR on column-scaled data.
pub fn lstsq(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = columns.len();
    let m = y.len();
    if p == 0 || m < p || columns.iter().any(|c| c.len() != m) {
        return Err(invalid("least squares needs at least as many samples as unknowns"));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(invalid("least squares input has non-finite values"));
    }
    let scales: Vec<f64> = columns.iter().map(|c| sqrt(c.iter().map(|v| v * v).sum())).collect();
    if scales.iter().any(|&s| s == 0.0) {
        return Err(invalid("least squares column is identically zero"));
    }
    // a is m×p, column-major.
    let mut a: Vec<Vec<f64>> = columns.iter().zip(&scales).map(|(c, s)| c.iter().map(|v| v / s).collect()).collect();
    let mut b = y.to_vec();
    for k in 0..p {
        let norm = sqrt(a[k][k..].iter().map(|v| v * v).sum());
        if norm <= 1e-13 {
            return Err(invalid("least squares design is rank deficient"));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let dot: f64 = v.iter().zip(&col[k..]).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vnorm2;
                for (ci, vi) in col[k..].iter_mut().zip(&v) {
                    *ci -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[k..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (bi, vi) in b[k..].iter_mut().zip(&v) {
                *bi -= f * vi;
            }
        }
    }
    let mut coef = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in (k + 1)..p {
            s -= a[j][k] * coef[j];
        }
        coef[k] = s / a[k][k];
    }
    Ok(coef.iter().zip(&scales).map(|(c, s)| c / s).collect())
}

/// `(intercept, slope)` of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("linear fit needs at least two paired samples"));
    }
    let c = lstsq(&[vec![1.0; x.len()], x.to_vec()], y)?;
    Ok((c[0], c[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 - 0.5 * t).collect();
        let (a, b) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(a, 3.0, epsilon = 1e-12);
        assert_relative_eq!(b, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient() {
        assert!(lstsq(&[vec![1.0; 5], vec![2.0; 5]], &[1.0; 5]).is_err());
    }
}
