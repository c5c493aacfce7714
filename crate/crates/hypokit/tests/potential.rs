use hypokit::matrix::{min_eigenvalue, SymMatrix};
use hypokit::potential::{estimate_alpha0, Monomial, Polynomial, Potential, SampleBox};
use proptest::prelude::*;

fn perturbed_quartic() -> Potential {
    // |x|⁴ + x₀³ − 2x₀x₁ + 0.5x₁.
    let v0 = Polynomial {
        n: 2,
        terms: vec![
            Monomial { coef: 1.0, exps: vec![3, 0] },
            Monomial { coef: -2.0, exps: vec![1, 1] },
            Monomial { coef: 0.5, exps: vec![0, 1] },
        ],
    };
    Potential::radial_poly(2, 1.0, 2, v0).unwrap()
}

fn test_potentials() -> Vec<Potential> {
    vec![
        Potential::quadratic(SymMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(), vec![0.3, -1.0], 2.0).unwrap(),
        perturbed_quartic(),
        Potential::radial_poly(2, 0.5, 3, Polynomial::zero(2)).unwrap(),
        Potential::double_well(2, 1.0, 1.5).unwrap(),
    ]
}

fn fd_gradient(v: &Potential, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut p, mut m) = (x.to_vec(), x.to_vec());
            p[i] += h;
            m[i] -= h;
            (v.value(&p).unwrap() - v.value(&m).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian(v: &Potential, x: &[f64], h: f64) -> SymMatrix {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let (mut p, mut m) = (x.to_vec(), x.to_vec());
        p[i] += h;
        m[i] -= h;
        let gp = v.gradient(&p).unwrap();
        let gm = v.gradient(&m).unwrap();
        for j in 0..n {
            out[i * n + j] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    SymMatrix::from_fn(n, |i, j| 0.5 * (out[i * n + j] + out[j * n + i]))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

proptest! {
    #[test]
    fn analytic_derivatives_match_differences(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
        let x = [x0, x1];
        for v in test_potentials() {
            let jet = v.jet(&x).unwrap();
            let g = fd_gradient(&v, &x, 1e-5);
            for (a, b) in jet.gradient.iter().zip(&g) {
                prop_assert!(rel_close(*a, *b, 1e-6), "gradient {a} vs {b}");
            }
            let h = fd_hessian(&v, &x, 1e-5);
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!(rel_close(jet.hessian[(i, j)], h[(i, j)], 1e-5));
                }
            }
            // Third slices: differences of the analytic Hessian.
            for k in 0..2 {
                let hs = 1e-5;
                let (mut p, mut m) = (x.to_vec(), x.to_vec());
                p[k] += hs;
                m[k] -= hs;
                let hp = v.jet(&p).unwrap().hessian;
                let hm = v.jet(&m).unwrap().hessian;
                for i in 0..2 {
                    for j in 0..2 {
                        let fd = (hp[(i, j)] - hm[(i, j)]) / (2.0 * hs);
                        prop_assert!(rel_close(jet.third_slices[k][(i, j)], fd, 1e-5));
                    }
                }
            }
        }
    }

    #[test]
    fn tabulated_matches_closed_form(x in -1.5f64..1.5) {
        let dw = Potential::double_well(1, 1.0, 1.0).unwrap();
        let tab = Potential::tabulated(1, |y| y[0].powi(4) - y[0] * y[0]).unwrap();
        let a = dw.jet(&[x]).unwrap();
        let b = tab.jet(&[x]).unwrap();
        prop_assert!(rel_close(b.gradient[0], a.gradient[0], 1e-6));
        prop_assert!(rel_close(b.hessian[(0, 0)], a.hessian[(0, 0)], 1e-5));
        prop_assert!(rel_close(b.third_slices[0][(0, 0)], a.third_slices[0][(0, 0)], 1e-3));
    }

    #[test]
    fn radial_hessian_lower_bound(x0 in -4.0f64..4.0, x1 in -4.0f64..4.0) {
        let v = perturbed_quartic();
        let a = v.radial_lower_bound_constant().unwrap();
        let r = (x0 * x0 + x1 * x1).sqrt();
        let alpha = v.alpha(&[x0, x1]).unwrap();
        // 2kr|x|^{2k−2} − A|x|^{2k−3} − A with k = 2, r = 1.
        prop_assert!(alpha >= 4.0 * r * r - a * r - a - 1e-9);
    }
}

#[test]
fn spec_jet_examples() {
    let q = Potential::quadratic(SymMatrix::diag(&[2.0, 3.0]), vec![0.0, 0.0], 0.0).unwrap();
    let j = q.jet(&[1.0, 1.0]).unwrap();
    assert_eq!(j.value, 2.5);
    assert_eq!(j.gradient, vec![2.0, 3.0]);
    assert_eq!(j.hessian, SymMatrix::diag(&[2.0, 3.0]));

    let r = Potential::radial_poly(2, 1.0, 2, Polynomial::zero(2)).unwrap();
    let j = r.jet(&[1.0, 0.0]).unwrap();
    assert!((j.hessian[(0, 0)] - 12.0).abs() < 1e-12);
    assert!((j.hessian[(1, 1)] - 4.0).abs() < 1e-12);
    assert!(j.hessian[(0, 1)].abs() < 1e-12);
}

#[test]
fn estimate_matches_dense_scan() {
    let v = perturbed_quartic();
    let bx = SampleBox::cube(2, -2.0, 2.0, 21).unwrap();
    let (est, arg) = estimate_alpha0(&v, &bx).unwrap();
    let fine = SampleBox::cube(2, -2.0, 2.0, 401).unwrap();
    let dense = fine.points().map(|x| v.alpha(&x).unwrap()).fold(f64::INFINITY, f64::min);
    // The refined estimate can only improve on the grid and should land near
    // the dense minimum.
    assert!(est <= dense + 1e-9, "estimate {est} above dense scan {dense}");
    assert!(dense - est < 1e-3 * (1.0 + dense.abs()));
    assert!((v.alpha(&arg).unwrap() - est).abs() < 1e-12);
}

#[test]
fn alpha_dominates_alpha0() {
    let dw = Potential::double_well(2, 1.0, 1.0).unwrap();
    let a0 = dw.closed_form_alpha0().unwrap();
    assert_eq!(a0, -2.0);
    let bx = SampleBox::cube(2, -3.0, 3.0, 31).unwrap();
    for x in bx.points() {
        assert!(dw.alpha(&x).unwrap() >= a0 - 1e-12);
    }
    let q = Potential::quadratic(SymMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap(), vec![0.0, 0.0], 0.0).unwrap();
    assert!((q.closed_form_alpha0().unwrap() - 1.0).abs() < 1e-14);
    assert!((min_eigenvalue(&q.jet(&[0.3, 0.3]).unwrap().hessian).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn construction_errors() {
    assert!(Potential::quadratic(SymMatrix::diag(&[1.0, 0.0]), vec![0.0, 0.0], 0.0).is_err());
    assert!(Potential::quadratic(SymMatrix::diag(&[1.0]), vec![0.0, 0.0], 0.0).is_err());
    assert!(Potential::radial_poly(1, 1.0, 1, Polynomial::zero(1)).is_err());
    assert!(Potential::radial_poly(1, -1.0, 2, Polynomial::zero(1)).is_err());
    assert!(Potential::double_well(1, 0.0, 1.0).is_err());
    let v = Potential::harmonic(1.0).unwrap();
    assert!(v.value(&[1.0, 2.0]).is_err());
    assert!(SampleBox::new(vec![1.0], vec![0.0], vec![3]).is_err());
}
