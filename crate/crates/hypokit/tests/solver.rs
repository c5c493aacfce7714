use std::sync::Arc;

use hypokit::potential::Potential;
use hypokit::solver::{
    ds_dt_residual, evolve, fit_l2_rate, functionals, hypoelliptic_experiment, Bump, EvolveOptions, Field,
    FunctionalSpec, HypoOptions, InitialDatum, Limiter, PChoice, PhaseGrid, Stepper,
};
use hypokit::Error;

fn harmonic_grid(n: usize) -> Arc<PhaseGrid> {
    let v = Potential::harmonic(1.0).unwrap();
    Arc::new(PhaseGrid::new(&v, 1.0, 1.0, n, n, None, None).unwrap())
}

fn gaussian() -> InitialDatum {
    InitialDatum::GaussianShifted { mean: [1.0, 0.0], covariance: [[1.0, 0.0], [0.0, 1.0]] }
}

fn spec(alpha0: f64) -> FunctionalSpec {
    FunctionalSpec { p: PChoice::CaseMatrix { a: 0.0 }, gamma: 0.0, alpha0 }
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let g = harmonic_grid(64);
    let mut f = Field::equilibrium(g.clone());
    let dt = g.max_dt(0.8);
    let s = spec(1.0);
    let before = functionals(&f, &s);
    let mut st = Stepper::new(&g, Limiter::ThirdOrder, 0.5).unwrap();
    for _ in 0..10_000 {
        st.step(&mut f, dt).unwrap();
    }
    let after = functionals(&f, &s);
    assert!((after.mass - before.mass).abs() < 1e-10);
    for (a, b) in [(after.l2sq, before.l2sq), (after.gradx_sq, before.gradx_sq), (after.gradv_weighted, 0.0), (after.s, before.s)] {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert_eq!(before.l2sq, 0.0);
    assert!((before.mass - 1.0).abs() < 1e-14);
}

#[test]
fn mass_is_conserved_per_step() {
    let g = harmonic_grid(64);
    let mut f = Field::init(g.clone(), &gaussian()).unwrap();
    let dt = g.max_dt(0.8);
    for lim in [Limiter::Linear, Limiter::Minmod, Limiter::VanLeer, Limiter::ThirdOrder] {
        let mut st = Stepper::new(&g, lim, 0.5).unwrap();
        let mut m = f.mass();
        for _ in 0..100 {
            st.step(&mut f, dt).unwrap();
            let m1 = f.mass();
            assert!((m1 - m).abs() <= 1e-12, "{lim:?}: mass moved by {}", m1 - m);
            m = m1;
        }
    }
}

#[test]
fn ou_flow_damps_linear_velocity_profile() {
    // h = v solves the OU part with h(t) = e^{−νt} v.
    let g = harmonic_grid(128);
    let h: Vec<f64> = (0..g.len()).map(|k| g.v[k % g.nv]).collect();
    let mut f = Field::from_h(g.clone(), h).unwrap();
    let mut st = Stepper::new(&g, Limiter::Linear, 0.5).unwrap();
    let (dt, steps) = (0.01, 100);
    for _ in 0..steps {
        st.ou_only(&mut f, dt);
    }
    let decay = (-(steps as f64) * dt).exp();
    for j in 0..g.nv {
        if g.v[j].abs() < 4.0 {
            let got = f.h[g.idx(g.nx / 2, j)];
            let want = decay * g.v[j];
            assert!((got - want).abs() < 2e-3, "v = {}: {got} vs {want}", g.v[j]);
        }
    }
}

fn bumps() -> InitialDatum {
    InitialDatum::HPerturbation {
        bumps: vec![
            Bump { amplitude: 0.8, center: [0.5, -0.5], width: 0.7 },
            Bump { amplitude: -0.4, center: [-1.0, 1.0], width: 0.5 },
        ],
    }
}

#[test]
fn l2_distance_never_grows() {
    // Minmod keeps the weighted L² distance monotone step by step.
    let g = harmonic_grid(64);
    for datum in [gaussian(), bumps()] {
        let mut f = Field::init(g.clone(), &datum).unwrap();
        let dt = 2.0 / (2.0 / g.max_dt(0.8)).ceil();
        let opts = EvolveOptions { t_end: 2.0, dt, sample_every: 1, spec: spec(1.0), limiter: Limiter::Minmod, theta: 0.5 };
        let series = evolve(&mut f, &opts).unwrap();
        for w in series.samples.windows(2) {
            assert!(w[1].l2sq <= w[0].l2sq * (1.0 + 1e-12), "l2sq rose from {} to {}", w[0].l2sq, w[1].l2sq);
        }
        assert!(series.samples.last().unwrap().l2sq < series.samples[0].l2sq);
    }
}

#[test]
fn high_order_l2_excursions_vanish_under_refinement() {
    // Unlimited slopes can raise the L² distance by a discretization-sized
    // amount per step; the excess must shrink at least like dx².
    let worst_rise = |n: usize| {
        let g = harmonic_grid(n);
        let mut f = Field::init(g.clone(), &gaussian()).unwrap();
        let dt = 0.5 / (0.5 / g.max_dt(0.8)).ceil();
        let opts = EvolveOptions { t_end: 0.5, dt, sample_every: 1, spec: spec(1.0), limiter: Limiter::Linear, theta: 0.5 };
        let series = evolve(&mut f, &opts).unwrap();
        let rise = series.samples.windows(2).map(|w| (w[1].l2sq - w[0].l2sq) / w[0].l2sq).fold(0.0f64, f64::max);
        rise / dt
    };
    let (coarse, fine) = (worst_rise(64), worst_rise(128));
    assert!(fine <= 0.25 * coarse, "rise rates {coarse} and {fine}");
}

#[test]
fn functional_identities() {
    let g = harmonic_grid(64);
    let f = Field::init(g.clone(), &gaussian()).unwrap();
    let id = functionals(&f, &FunctionalSpec { p: PChoice::Identity, gamma: 2.0, alpha0: 1.0 });
    assert!((id.s - 2.0 * (id.gradx_sq + id.gradv_sq)).abs() <= 1e-12 * id.s);
    assert!((id.phi - (2.0 * id.l2sq + id.s)).abs() <= 1e-12 * id.phi);
    assert!((id.mass - 1.0).abs() < 1e-12);

    // With V'' = α₀ = 1 the weight V'' + 1 − α₀ is one, and the case matrix
    // [[2,1],[1,2]] sandwiches the identity: S/3 ≤ 2(gx + gv) ≤ S.
    let k = functionals(&f, &spec(1.0));
    let mid = 2.0 * (k.gradx_sq + k.gradv_weighted);
    assert!(k.s / 3.0 <= mid * (1.0 + 1e-12));
    assert!(mid <= k.s * (1.0 + 1e-12));
    assert!((k.gradv_weighted - k.gradv_sq).abs() < 1e-14);
}

#[test]
fn sandwich_holds_along_a_trajectory() {
    let g = harmonic_grid(64);
    let mut f = Field::init(g.clone(), &gaussian()).unwrap();
    let dt = 1.0 / (1.0 / g.max_dt(0.8)).ceil();
    let opts = EvolveOptions { t_end: 1.0, dt, sample_every: 5, spec: spec(1.0), limiter: Limiter::ThirdOrder, theta: 0.5 };
    for s in evolve(&mut f, &opts).unwrap().samples {
        let mid = 2.0 * (s.gradx_sq + s.gradv_weighted);
        assert!(s.s / 3.0 <= mid * (1.0 + 1e-12) && mid <= s.s * (1.0 + 1e-12), "t = {}", s.t);
    }
}

#[test]
fn rate_is_stable_under_refinement() {
    let rate = |n: usize| {
        let g = harmonic_grid(n);
        let mut f = Field::init(g.clone(), &gaussian()).unwrap();
        let dt = 10.0 / (10.0 / g.max_dt(0.85)).ceil();
        let opts = EvolveOptions { t_end: 10.0, dt, sample_every: 10, spec: spec(1.0), limiter: Limiter::ThirdOrder, theta: 0.5 };
        fit_l2_rate(&evolve(&mut f, &opts).unwrap()).unwrap()
    };
    let (r1, r2) = (rate(128), rate(256));
    assert!((r1 - r2).abs() < 0.01 * r2, "rates {r1} and {r2}");
    // Dominance: the fitted rate is at least 2λ − 5% with 2λ = 1.
    assert!(r2 >= 0.95);
}

#[test]
fn identity_weight_has_no_transport_term() {
    let g = harmonic_grid(64);
    let mut f = Field::init(g.clone(), &gaussian()).unwrap();
    let mut st = Stepper::new(&g, Limiter::ThirdOrder, 0.5).unwrap();
    for _ in 0..5 {
        st.step(&mut f, 1e-3).unwrap();
    }
    let r = ds_dt_residual(&f, 1e-3, PChoice::Identity, Limiter::ThirdOrder).unwrap();
    assert_eq!(r.terms[2], 0.0);
    let r = ds_dt_residual(&f, 1e-3, PChoice::CaseMatrix { a: 0.0 }, Limiter::ThirdOrder).unwrap();
    // V''' = 0 for the harmonic potential as well.
    assert_eq!(r.terms[2], 0.0);
    assert!(r.residual < 1e-2, "residual {}", r.residual);
}

#[test]
fn smooth_data_show_no_blow_up() {
    let g = harmonic_grid(128);
    // A pure x-shift of the Maxwellian gives a v-independent h, whose v-gradient
    // starts at zero and grows; shift in v as well.
    let datum = InitialDatum::GaussianShifted { mean: [1.0, 0.5], covariance: [[1.0, 0.0], [0.0, 1.0]] };
    let f = Field::init(g.clone(), &datum).unwrap();
    let r = hypoelliptic_experiment(&f, &HypoOptions::standard(1.0)).unwrap();
    assert!(r.slope_x.abs() < 0.1 && r.slope_v.abs() < 0.1, "slopes {} {}", r.slope_x, r.slope_v);
}

#[test]
fn rejections() {
    let g = harmonic_grid(64);
    let mut f = Field::init(g.clone(), &gaussian()).unwrap();
    let mut st = Stepper::new(&g, Limiter::Linear, 0.5).unwrap();
    assert!(matches!(st.step(&mut f, 10.0 * g.max_dt(0.9)), Err(Error::Cfl { .. })));
    assert!(Stepper::new(&g, Limiter::Linear, 0.2).is_err());

    let bad_cov = InitialDatum::GaussianShifted { mean: [0.0, 0.0], covariance: [[1.0, 2.0], [2.0, 1.0]] };
    assert!(matches!(Field::init(g.clone(), &bad_cov), Err(Error::Domain(_))));
    let bad_interval = InitialDatum::RoughIndicator { x_interval: [1.0, -1.0], smoothing: 0.0 };
    assert!(matches!(Field::init(g.clone(), &bad_interval), Err(Error::InvalidInput(_))));
    let outside = InitialDatum::RoughIndicator { x_interval: [100.0, 101.0], smoothing: 0.0 };
    assert!(matches!(Field::init(g.clone(), &outside), Err(Error::Domain(_))));

    let coarse = HypoOptions { dt: 1e-3, ..HypoOptions::standard(1.0) };
    assert!(matches!(hypoelliptic_experiment(&f, &coarse), Err(Error::Domain(_))));

    let v = Potential::harmonic(1.0).unwrap();
    assert!(PhaseGrid::new(&v, 1.0, 1.0, 32, 64, None, None).is_err());
    let v2 = Potential::double_well(2, 1.0, 1.0).unwrap();
    assert!(PhaseGrid::new(&v2, 1.0, 1.0, 64, 64, None, None).is_err());

    let opts = EvolveOptions { t_end: 1.0, dt: 0.3, sample_every: 1, spec: spec(1.0), limiter: Limiter::Linear, theta: 0.5 };
    assert!(evolve(&mut f, &opts).is_err());
}

#[test]
fn double_well_grid_and_run() {
    let v = Potential::double_well(1, 1.0, 1.0).unwrap();
    let g = Arc::new(PhaseGrid::new(&v, 1.0, 1.0, 64, 64, None, None).unwrap());
    assert!(g.lx > 2.0 && g.lx < 4.0, "Lx = {}", g.lx);
    assert!((g.w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    // The box is tight for the quartic tails, so the datum must vanish well
    // inside it; a Gaussian in f would leak through the walls.
    let mut f = Field::init(g.clone(), &bumps()).unwrap();
    let mut st = Stepper::new(&g, Limiter::VanLeer, 0.5).unwrap();
    let m0 = f.mass();
    let dt = g.max_dt(0.8);
    for _ in 0..200 {
        st.step(&mut f, dt).unwrap();
    }
    assert!((f.mass() - m0).abs() < 1e-12);
    assert!(f.h.iter().all(|h| h.is_finite()));
}
