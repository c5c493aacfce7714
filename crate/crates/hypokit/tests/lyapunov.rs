use hypokit::assumptions::{check_assumption, find_feasible, ConditionTag, Feasibility, HypoParams, SearchGrid};
use hypokit::lyapunov::{
    build_p, delta_residual, epsilon_sup, eta, hessnorm_over_box, hypoelliptic_certificate,
    hypoelliptic_certificate_with_epsilon, kronecker_traces, lyapunov_matrix, p_eigenvalues, p_from_hessian,
    sandwich_constants, sandwich_margins, select_from_s, select_gamma_delta, selection_for_report,
    trace_inequality_check, verify_lyapunov_inequality, verify_sandwich, LyapunovSelection,
};
use hypokit::matrix::{min_eigenvalue, sym_eig, Matrix, SymMatrix};
use hypokit::potential::{Potential, SampleBox};
use hypokit::rates::{decay_rate, RateCase};
use hypokit::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random SPD Hessian with smallest eigenvalue at least `alpha0`.
fn hessian_above(rng: &mut ChaCha8Rng, n: usize, alpha0: f64) -> SymMatrix {
    let b = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.5..1.5));
    let g = b.matmul(&b.transpose());
    SymMatrix::new(g).unwrap().add_identity(alpha0)
}

fn double_well_selection() -> (Potential, HypoParams, LyapunovSelection) {
    let dw = Potential::double_well(1, 1.0, 1.0).unwrap();
    let bx = SampleBox::cube(1, -5.0, 5.0, 201).unwrap();
    let grid = SearchGrid { c_points: 24, tau_points: 12, ..SearchGrid::default() };
    match find_feasible(&dw, &bx, 1.0, 1.0, 0.1, grid).unwrap() {
        Feasibility::Found { params, rate, .. } => {
            let sel = selection_for_report(&rate).unwrap();
            (dw, params, sel)
        }
        other => panic!("double well should be feasible: {other:?}"),
    }
}

#[test]
fn sandwich_on_random_hessians() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for trial in 0..1000 {
        let n = 1 + trial % 3;
        let nu = rng.gen_range(0.3..3.0);
        let alpha0 = rng.gen_range(-2.0..3.0);
        // a + α₀ > ν²/4 with some room.
        let a = (0.25f64 * nu * nu - alpha0).max(0.0) + rng.gen_range(0.01..2.0);
        let h = hessian_above(&mut rng, n, alpha0);
        let k = sandwich_constants(a, alpha0, nu).unwrap();
        let (upper, lower) = sandwich_margins(&h, a, alpha0, nu, &k).unwrap();
        assert!(upper >= -1e-10, "trial {trial}: c₂P − mid has eigenvalue {upper}");
        assert!(lower >= -1e-10, "trial {trial}: mid − c₁P has eigenvalue {lower}");
    }
}

#[test]
fn p_is_bounded_below_by_eta() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..500 {
        let n = 1 + trial % 3;
        let nu = rng.gen_range(0.3..3.0);
        let alpha0 = rng.gen_range(-1.0..2.0);
        let a = (0.25f64 * nu * nu - alpha0).max(0.0) + rng.gen_range(0.01..2.0);
        let h = hessian_above(&mut rng, n, alpha0);
        let p = p_from_hessian(&h, a, nu);
        let e = eta(a, alpha0, nu);
        assert!(e > 0.0);
        assert!(min_eigenvalue(&p).unwrap() >= e - 1e-10 * (1.0 + p.frobenius_norm()));
    }
}

#[test]
fn p_eigenvalues_match_closed_form() {
    let h = SymMatrix::diag(&[0.4, 1.3, 2.0]);
    let p = p_from_hessian(&h, 0.2, 1.1);
    let got = sym_eig(&p).unwrap().values;
    let mut want: Vec<f64> = [0.4, 1.3, 2.0]
        .iter()
        .flat_map(|&z| {
            let (lo, hi) = p_eigenvalues(z, 0.2, 1.1);
            [lo, hi]
        })
        .collect();
    want.sort_by(f64::total_cmp);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn delta_solves_its_quadratic(
        nu in 0.2f64..4.0, sigma in 0.1f64..5.0, alpha0 in -3.0f64..3.0, extra in 0.001f64..5.0, gamma in 0.0f64..50.0
    ) {
        let a = (0.25f64 * nu * nu - alpha0).max(0.0) + extra;
        let sel = select_gamma_delta(a, gamma, nu, sigma, alpha0).unwrap();
        prop_assert!(sel.delta >= 0.0);
        prop_assert!(delta_residual(&sel, nu, sigma).abs() <= 1e-12 * (4.0 * a * a).max(1.0));
    }

    #[test]
    fn delta_decreases_in_gamma(a in 0.1f64..3.0, g1 in 0.0f64..10.0, dg in 0.01f64..10.0) {
        let s1 = select_gamma_delta(a, g1, 1.0, 1.0, 0.5).unwrap();
        let s2 = select_gamma_delta(a, g1 + dg, 1.0, 1.0, 0.5).unwrap();
        prop_assert!(s2.delta < s1.delta);
    }

    #[test]
    fn s_and_gamma_entry_points_agree(a in 0.1f64..3.0, s in 0.0f64..10.0) {
        let from_s = select_from_s(a, s, 1.0, 2.0, 0.3).unwrap();
        let back = select_gamma_delta(a, from_s.gamma, 1.0, 2.0, 0.3).unwrap();
        prop_assert!((back.s - s).abs() <= 1e-12 * (1.0 + s));
        prop_assert!((back.delta - from_s.delta).abs() <= 1e-14 * (1.0 + back.delta));
    }
}

#[test]
fn case_a_identity_is_exact() {
    let h = SymMatrix::diag(&[1.0]);
    let sel = select_gamma_delta(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(sel.delta, 0.0);
    let m = lyapunov_matrix(&h, &sel, 1.0, 1.0);
    assert!(m.frobenius_norm() < 1e-14);
    // Same in 2D with a non-diagonal Hessian above ν²/4.
    let h = SymMatrix::from_rows(&[[1.5, 0.2], [0.2, 0.9]]).unwrap();
    let sel = select_gamma_delta(0.0, 0.0, 1.2, 1.0, min_eigenvalue(&h).unwrap()).unwrap();
    assert!(lyapunov_matrix(&h, &sel, 1.2, 1.0).frobenius_norm() < 1e-13);
}

#[test]
fn double_well_lyapunov_certificate() {
    let (dw, params, sel) = double_well_selection();
    let bx = SampleBox::cube(1, -5.0, 5.0, 10_000).unwrap();
    let cert = verify_lyapunov_inequality(&dw, &bx, &sel, &params).unwrap();
    assert_eq!(cert.points_checked, 10_000);
    assert!(cert.passed, "worst eigenvalue {} at {:?}", cert.worst_min_eig, cert.worst_point);
    let scale = cert.worst_tol.max(1e-300) / 1e-12;
    assert!(cert.worst_min_eig >= -1e-8 * scale.max(1.0));
}

#[test]
fn strengthened_rate_claim_is_rejected() {
    // Claiming the decay ν − δ + 0.5 (δ lowered by 0.5) must fail somewhere.
    let (dw, params, sel) = double_well_selection();
    let bx = SampleBox::cube(1, -5.0, 5.0, 2001).unwrap();
    let probe = LyapunovSelection { delta: sel.delta - 0.5, ..sel };
    assert!(!verify_lyapunov_inequality(&dw, &bx, &probe, &params).unwrap().passed);

    let q = Potential::harmonic(0.1875).unwrap();
    let p = HypoParams::new(1.0, 1.0, -0.1875, 0.0).unwrap();
    let r = decay_rate(&p, 0.1875, 0.1875, None).unwrap();
    assert_eq!(r.case_tag, RateCase::D);
    let sel = selection_for_report(&r).unwrap();
    let qbx = SampleBox::cube(1, -1.0, 1.0, 3).unwrap();
    assert!(verify_lyapunov_inequality(&q, &qbx, &sel, &p).unwrap().passed);
    let probe = LyapunovSelection { delta: sel.delta - 0.5, ..sel };
    assert!(!verify_lyapunov_inequality(&q, &qbx, &probe, &p).unwrap().passed);
}

#[test]
fn weakened_rate_claim_still_passes() {
    // Raising δ only weakens the inequality, so the certificate keeps passing.
    let (dw, params, sel) = double_well_selection();
    let bx = SampleBox::cube(1, -5.0, 5.0, 2001).unwrap();
    let probe = LyapunovSelection { delta: sel.delta + 0.5, ..sel };
    assert!(verify_lyapunov_inequality(&dw, &bx, &probe, &params).unwrap().passed);
}

#[test]
fn sandwich_verifier_over_a_box() {
    let dw = Potential::double_well(1, 1.0, 1.0).unwrap();
    let bx = SampleBox::cube(1, -5.0, 5.0, 1001).unwrap();
    let p = HypoParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
    let cert = verify_sandwich(&dw, &bx, 3.0, -2.0, &p).unwrap();
    assert!(cert.passed);
    assert_eq!(cert.checked_condition, ConditionTag::Sandwich);
    assert!(sandwich_constants(0.0, 0.2, 1.0).is_err());
    // Defective boundary with a = ε²/2.
    let eps: f64 = 0.1;
    let k = sandwich_constants(0.5 * eps * eps, 0.25, 1.0).unwrap();
    let z = 0.5 * eps * eps + 0.25;
    assert!((k.c2 - (z + 1.0 + ((z - 1.0).powi(2) + 1.0).sqrt()) / (2.0 * eps * eps)).abs() < 1e-12);
}

#[test]
fn trace_and_kronecker_routes() {
    let (dw, params, _) = double_well_selection();
    let bx = SampleBox::cube(1, -5.0, 5.0, 201).unwrap();
    assert!(check_assumption(&dw, &bx, &params, ConditionTag::BlockMatrix).unwrap().passed);
    assert!(params.tau > 0.0);
    let delta = (2.0 * params.sigma / params.tau).sqrt();
    for x in bx.points() {
        let jet = dw.jet(&x).unwrap();
        let scale = 1e-10 * (1.0 + jet.hessian.add_identity(params.c).frobenius_norm().powi(2));
        for t in kronecker_traces(&jet, &params, delta) {
            assert!(t >= -scale * (1.0 + delta * delta), "trace {t} at {x:?}");
        }
        assert!(trace_inequality_check(&dw, &x, &params).unwrap().ok, "trace inequality at {x:?}");
    }
    // Quadratic: right-hand sides vanish.
    let q = Potential::harmonic(2.0).unwrap();
    let p = HypoParams::new(1.0, 1.0, -2.0, 0.0).unwrap();
    let tc = trace_inequality_check(&q, &[0.5], &p).unwrap();
    assert!(tc.ok && tc.rhs.iter().all(|r| *r == 0.0));
    // τ = 0 with third derivatives present degenerates.
    let p0 = HypoParams::new(1.0, 1.0, 2.5, 0.0).unwrap();
    assert!(!trace_inequality_check(&dw, &[1.0], &p0).unwrap().ok);
}

#[test]
fn hypoelliptic_certificates() {
    let p = HypoParams::new(1.0, 1.0, -1.0, 0.0).unwrap();
    let cert = hypoelliptic_certificate(0.1, &p, 1, 0.0).unwrap();
    assert!(cert.feasible);
    assert!(cert.epsilon > 0.0 && cert.epsilon < cert.epsilon_sup);
    assert!(cert.worst_margin >= 0.0);

    let q = Potential::harmonic(1.0).unwrap();
    let bx = SampleBox::cube(1, -3.0, 3.0, 11).unwrap();
    let w = hessnorm_over_box(&q, &bx, 0.0).unwrap();
    assert_eq!(w, 1.0);
    let p = HypoParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
    let cert = hypoelliptic_certificate(1.0, &p, 1, w).unwrap();
    assert!(cert.feasible, "{cert:?}");
    assert!(cert.gamma1 <= 1e12 && cert.gamma2 <= 1e12);

    assert!(matches!(hypoelliptic_certificate_with_epsilon(1.0, &p, 1, w, 0.5), Err(Error::Domain(_))));
    assert!(epsilon_sup(1.0) < 0.25);
}

#[test]
fn p_rejects_small_shift() {
    let v = Potential::harmonic(0.1).unwrap();
    assert!(build_p(&v, &[0.0], 0.1, 0.1, 1.0).is_err());
    assert!(build_p(&v, &[0.0], 0.2, 0.1, 1.0).is_ok());
}
