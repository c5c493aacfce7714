//! Subcommands. Each one writes its artifacts and returns the JSON summary
//! that `report` aggregates.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use hypokit::assumptions::{
    alpha0_for, check_assumption, find_feasible, ConditionCertificate, ConditionTag, Feasibility, HypoParams,
};
use hypokit::lyapunov::{
    delta_residual, hessnorm_over_box, hypoelliptic_certificate, sandwich_constants, selection_for_report,
    verify_lyapunov_inequality, verify_sandwich, HypoellipticCertificate, LyapunovSelection, SandwichConstants,
};
use hypokit::potential::{Potential, SampleBox};
use hypokit::propagator::{build_ode, classify, default_times, default_window, fit_rate, norm_curve, Classification, RateFit};
use hypokit::rates::{decay_rate, optimize_rate, poincare_constant_quadratic, RateBranch, RateCase, RateReport};
use hypokit::solver::{
    evolve, fit_l2_rate, hypoelliptic_experiment, EvolveOptions, Field, FunctionalSeries, FunctionalSpec, HypoOptions,
    Limiter, PChoice, PhaseGrid,
};
use hypokit::matrix::SymMatrix;
use serde::Serialize;

use crate::config::{RunConfig, Section};
use crate::error::{CliError, Context};
use crate::io::{fmt_f64, read_snapshot, write_csv, write_json, write_records, write_snapshot, Snapshot};

/// Relative slack allowed when checking that Φ never increases.
pub const PHI_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Rate,
    Certify,
    Propagator,
    Simulate,
    Hypo,
    Report,
}

/// Everything a subcommand needs.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub potential: Potential,
    pub sample_box: SampleBox,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a RunConfig, out: &'a Path) -> Result<Self, CliError> {
        Ok(Run { cfg, out, potential: cfg.potential.build()?, sample_box: cfg.sample_box()? })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn nu(&self) -> f64 {
        self.cfg.model.nu
    }

    fn sigma(&self) -> f64 {
        self.cfg.model.sigma
    }

    fn alpha0(&self) -> Result<f64, CliError> {
        alpha0_for(&self.potential, &self.sample_box).context("α₀ estimate")
    }

    fn fixed_params(&self) -> Result<Option<HypoParams>, CliError> {
        match (self.cfg.assumptions.c, self.cfg.assumptions.tau) {
            (Some(c), Some(tau)) => HypoParams::new(self.nu(), self.sigma(), c, tau).context("assumptions").map(Some),
            _ => Ok(None),
        }
    }

    fn c_pi(&self, alpha0: f64) -> Result<f64, CliError> {
        match self.cfg.c_pi() {
            Some(c) => Ok(c),
            None if self.potential.is_quadratic() => {
                poincare_constant_quadratic(self.nu(), self.sigma(), alpha0).context("Poincaré constant")
            }
            None => Err(CliError::Config("rate.c_pi must be a number for non-quadratic potentials".into())),
        }
    }

    /// Writes the least violated certificate and reports infeasibility.
    fn infeasible(&self, name: &str, what: String, cert: Option<&ConditionCertificate>) -> CliError {
        let path = self.path(name);
        match cert.map(|c| write_json(&path, c)) {
            Some(Err(e)) => e,
            Some(Ok(())) => CliError::Infeasible { message: what, artifact: Some(path) },
            None => CliError::Infeasible { message: what, artifact: None },
        }
    }

    /// Rate report for the fixed constants, or the best certified one from the
    /// `(c, τ)` search.
    pub fn rate_report(&self) -> Result<RateReport, CliError> {
        let alpha0 = self.alpha0()?;
        let c_pi = self.c_pi(alpha0)?;
        if let Some(p) = self.fixed_params()? {
            let mut r = decay_rate(&p, alpha0, c_pi, self.cfg.rate.epsilon_b).context("decay rate")?;
            r.sharp = self.potential.is_quadratic()
                && matches!(r.case_tag, RateCase::A | RateCase::D)
                && (p.c + alpha0).abs() <= 1e-12 * alpha0.abs().max(1.0);
            return Ok(r);
        }
        let found = optimize_rate(&self.potential, &self.sample_box, self.nu(), self.sigma(), Some(c_pi), self.cfg.search_grid())
            .context("rate search")?;
        match found {
            Ok(opt) => {
                let mut r = opt.report;
                r.sharp = self.potential.is_quadratic() && matches!(r.case_tag, RateCase::A | RateCase::D);
                Ok(r)
            }
            Err(Feasibility::InfeasibleOnGrid { best_attempt, .. }) => Err(self.infeasible(
                "rate_certificate.json",
                "no (c, τ) pair on the search grid passes the condition matrix check".into(),
                best_attempt.as_ref(),
            )),
            Err(Feasibility::Found { .. }) => unreachable!("optimize_rate returns found pairs as Ok"),
        }
    }

    pub fn check(&self) -> Result<CheckJson, CliError> {
        let alpha0 = self.alpha0()?;
        let (params, block) = match self.fixed_params()? {
            Some(p) => {
                let cert = check_assumption(&self.potential, &self.sample_box, &p, ConditionTag::BlockMatrix)
                    .context("condition check")?;
                (p, cert)
            }
            None => {
                let c_pi = self.c_pi(alpha0)?;
                let grid = self.cfg.search_grid();
                match find_feasible(&self.potential, &self.sample_box, self.nu(), self.sigma(), c_pi, grid)
                    .context("condition search")?
                {
                    Feasibility::Found { params, certificate, .. } => (params, certificate),
                    Feasibility::InfeasibleOnGrid { best_attempt, .. } => {
                        return Err(self.infeasible(
                            "check.json",
                            "no (c, τ) pair on the search grid passes the condition matrix check".into(),
                            best_attempt.as_ref(),
                        ))
                    }
                }
            }
        };
        let slice = check_assumption(&self.potential, &self.sample_box, &params, ConditionTag::SliceBounds)
            .context("slice-bound check")?;
        let out = CheckJson { alpha0, block_matrix: block, slice_bounds: slice };
        write_json(&self.path("check.json"), &out)?;
        if !out.block_matrix.passed {
            let p = &out.block_matrix;
            return Err(CliError::Infeasible {
                message: format!(
                    "condition matrix fails at x = {:?} with min eigenvalue {:e}",
                    p.worst_point, p.worst_min_eig
                ),
                artifact: Some(self.path("check.json")),
            });
        }
        Ok(out)
    }

    pub fn rate(&self) -> Result<RateJson, CliError> {
        let r = RateJson::from(&self.rate_report()?);
        write_json(&self.path("rate.json"), &r)?;
        Ok(r)
    }

    pub fn certify(&self) -> Result<CertifyJson, CliError> {
        let report = self.rate_report()?;
        let p = report.params;
        let sel = selection_for_report(&report).context("Lyapunov selection")?;
        let lyapunov =
            verify_lyapunov_inequality(&self.potential, &self.sample_box, &sel, &p).context("Lyapunov check")?;
        let constants = sandwich_constants(sel.a, sel.alpha0, p.nu).context("sandwich constants")?;
        let sandwich =
            verify_sandwich(&self.potential, &self.sample_box, sel.a, sel.alpha0, &p).context("sandwich check")?;
        let hessnorm = hessnorm_over_box(&self.potential, &self.sample_box, p.c).context("Hessian norm")?;
        let hypoelliptic = hypoelliptic_certificate(self.cfg.hypo.t0, &p, self.potential.dim(), hessnorm)
            .context("short-time certificate")?;
        let out = CertifyJson {
            rate: RateJson::from(&report),
            delta_residual: delta_residual(&sel, p.nu, p.sigma),
            selection: sel,
            lyapunov,
            sandwich_constants: constants,
            sandwich,
            hypoelliptic,
        };
        write_json(&self.path("certify.json"), &out)?;
        for (name, cert) in [("Lyapunov inequality", &out.lyapunov), ("sandwich bounds", &out.sandwich)] {
            if !cert.passed {
                return Err(CliError::Infeasible {
                    message: format!("{name} fail at x = {:?} (min eigenvalue {:e})", cert.worst_point, cert.worst_min_eig),
                    artifact: Some(self.path("certify.json")),
                });
            }
        }
        Ok(out)
    }

    fn quadratic_m_inv(&self, what: &str) -> Result<SymMatrix, CliError> {
        self.cfg.potential.m_inv()?.ok_or_else(|| CliError::Config(format!("{what} needs a quadratic potential")))
    }

    pub fn propagator(&self) -> Result<PropagatorJson, CliError> {
        let m_inv = self.quadratic_m_inv("propagator")?;
        let out = propagator_summary(&m_inv, self.nu(), self.sigma(), self.cfg.propagator.window, Some(&self.path("propagator.csv")))?;
        write_json(&self.path("propagator.json"), &out)?;
        Ok(out)
    }

    pub fn simulate(&self) -> Result<SimulateJson, CliError> {
        let s = &self.cfg.solver;
        let grid = Arc::new(
            PhaseGrid::new(&self.potential, self.nu(), self.sigma(), s.nx, s.nv, s.lx, s.lv).context("phase grid")?,
        );
        let mut field = match &s.restart {
            Some(path) => {
                let snap = read_snapshot(path)?;
                if (snap.nx, snap.nv) != (grid.nx, grid.nv) || snap.lx != grid.lx || snap.lv != grid.lv {
                    return Err(CliError::Config(format!("{}: snapshot grid differs from the solver grid", path.display())));
                }
                Field::from_h(grid.clone(), snap.h).context("restart")?
            }
            None => Field::init(grid.clone(), &s.datum).context("initial datum")?,
        };
        let dt = match s.dt {
            Some(dt) => dt,
            None => s.t_end / (s.t_end / grid.max_dt(s.cfl)).ceil(),
        };
        // Weight of S from the certified rate when one is available.
        let (weight, predicted) = match self.rate_report() {
            Ok(r) => {
                let sel = selection_for_report(&r).context("Lyapunov selection")?;
                (FunctionalSpec { p: PChoice::from(&sel), gamma: sel.gamma, alpha0: r.alpha0 }, Some(r.two_lambda))
            }
            Err(CliError::Io { path, source }) => return Err(CliError::Io { path, source }),
            Err(_) => (FunctionalSpec { p: PChoice::Identity, gamma: 0.0, alpha0: self.alpha0()? }, None),
        };
        let opts = EvolveOptions { t_end: s.t_end, dt, sample_every: s.sample_every, spec: weight, limiter: s.limiter, theta: s.theta };
        let series = evolve(&mut field, &opts).context("time stepping")?;
        write_series(&self.path("series.csv"), &series)?;
        let snapshot = if self.cfg.output.snapshot {
            let snap = Snapshot { nx: grid.nx, nv: grid.nv, lx: grid.lx, lv: grid.lv, h: field.h.clone() };
            write_snapshot(&self.path("snapshot.bin"), &snap)?;
            Some("snapshot.bin".to_string())
        } else {
            None
        };
        let first = series.samples.first().expect("evolve samples t = 0");
        let last = series.samples.last().expect("evolve samples t = 0");
        let phi_monotone = series.samples.windows(2).all(|w| w[1].phi <= w[0].phi * (1.0 + PHI_SLACK));
        let out = SimulateJson {
            nx: grid.nx,
            nv: grid.nv,
            lx: grid.lx,
            lv: grid.lv,
            dt,
            steps: (s.t_end / dt).round() as usize,
            limiter: s.limiter,
            weight,
            fitted_l2_rate: fit_l2_rate(&series).ok(),
            predicted_two_lambda: predicted,
            mass_drift: last.mass - first.mass,
            phi_monotone,
            series: "series.csv".into(),
            snapshot,
        };
        write_json(&self.path("simulate.json"), &out)?;
        Ok(out)
    }

    pub fn hypo(&self) -> Result<HypoJson, CliError> {
        let h = &self.cfg.hypo;
        let grid = Arc::new(PhaseGrid::new(&self.potential, self.nu(), self.sigma(), h.nx, h.nv, None, None).context("phase grid")?);
        let field = Field::init(grid, &h.datum).context("initial datum")?;
        let opts = HypoOptions { t_lo: h.t_lo, t_hi: h.t_hi, dt: h.dt, alpha0: self.alpha0()?, limiter: h.limiter, theta: h.theta };
        let r = hypoelliptic_experiment(&field, &opts).context("short-time experiment")?;
        let rows = (0..r.times.len()).map(|k| [r.times[k], r.gradx_sq[k], r.gradv_weighted[k]]);
        write_csv(&self.path("hypo.csv"), &["t", "gradx_sq", "gradv_weighted"], rows)?;
        let out = HypoJson { slope_x: r.slope_x, slope_v: r.slope_v, expected: [-3.0, -1.0], samples: r.times.len(), series: "hypo.csv".into() };
        write_json(&self.path("hypo.json"), &out)?;
        Ok(out)
    }

    pub fn report(&self) -> Result<ReportBundle, CliError> {
        let mut b = ReportBundle {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: self.cfg.clone(),
            check: None,
            rate: None,
            certify: None,
            propagator: None,
            simulate: None,
            hypo: None,
            sweep: None,
            consistency: None,
            timings: Vec::new(),
        };
        for section in &self.cfg.report.include {
            let start = Instant::now();
            match section {
                Section::Check => b.check = Some(self.check()?),
                Section::Rate => b.rate = Some(self.rate()?),
                Section::Certify => b.certify = Some(self.certify()?),
                Section::Propagator => b.propagator = Some(self.propagator()?),
                Section::Simulate => b.simulate = Some(self.simulate()?),
                Section::Hypo => b.hypo = Some(self.hypo()?),
            }
            b.timings.push(Timing { section: *section, seconds: start.elapsed().as_secs_f64() });
        }
        if !self.cfg.report.sweep_alpha0.is_empty() {
            b.sweep = Some(self.sweep()?);
        }
        let lambda = b.rate.as_ref().map(|r| r.lambda).or(b.certify.as_ref().map(|c| c.rate.lambda));
        if let (Some(lambda), Some(p)) = (lambda, &b.propagator) {
            let fitted = p.fit.rate;
            b.consistency = Some(Consistency { rate_lambda: lambda, propagator_rate: fitted, relative_gap: (fitted - lambda) / fitted });
        }
        write_json(&self.path("report.json"), &b)?;
        Ok(b)
    }

    /// Rate and propagator fit for `α₀x²/2` over the configured grid of
    /// `(ν, α₀)`, with `c = −α₀`, `τ = 0` and the Gaussian C_PI.
    fn sweep(&self) -> Result<String, CliError> {
        let sigma = self.sigma();
        let mut rows = Vec::new();
        for &nu in &self.cfg.report.sweep_nu {
            for &alpha0 in &self.cfg.report.sweep_alpha0 {
                let p = HypoParams::new(nu, sigma, -alpha0, 0.0).context("sweep")?;
                let c_pi = poincare_constant_quadratic(nu, sigma, alpha0).context("sweep")?;
                let r = decay_rate(&p, alpha0, c_pi, self.cfg.rate.epsilon_b).context("sweep")?;
                let prop = propagator_summary(&SymMatrix::diag(&[alpha0]), nu, sigma, None, None)?;
                let mut row = vec![fmt_f64(nu), fmt_f64(alpha0), r.case_tag.tag().to_string()];
                row.extend([r.lambda, p.c, p.tau, r.a, r.big_a, r.big_b, r.s, r.c_pi, prop.fit.rate].map(fmt_f64));
                rows.push(row);
            }
        }
        let header = ["nu", "alpha0", "case", "lambda", "c", "tau", "a", "A", "B", "s", "c_pi", "propagator_rate"];
        write_records(&self.path("rate_sweep.csv"), &header, &rows)?;
        Ok("rate_sweep.csv".into())
    }
}

fn propagator_summary(
    m_inv: &SymMatrix,
    nu: f64,
    sigma: f64,
    window: Option<[f64; 2]>,
    csv: Option<&Path>,
) -> Result<PropagatorJson, CliError> {
    let sys = build_ode(m_inv, nu, sigma).context("propagator")?;
    let curve = norm_curve(&sys, &default_times(nu)).context("propagator")?;
    let window = window.map_or(default_window(nu), |[lo, hi]| (lo, hi));
    let fit = fit_rate(&curve, window).context("propagator fit")?;
    let jordan = classify(m_inv, nu).context("propagator")?;
    if let Some(path) = csv {
        let (ee, ep) = (curve.envelope_exp(), curve.envelope_poly());
        let rows = (0..curve.times.len()).map(|k| [curve.times[k], curve.norms[k], ee[k], ep[k]]);
        write_csv(path, &["t", "norm", "envelope_exp", "envelope_poly"], rows)?;
    }
    Ok(PropagatorJson {
        classification: jordan.classification,
        predicted_rate: jordan.classification.rate(nu),
        fit,
        jordan_block_size: jordan.jordan_block_size,
        alphas: jordan.alphas,
        positive_stable: sys.hypotheses.positive_stable,
        no_invariant_kerd_subspace: sys.hypotheses.no_invariant_kerd_subspace,
        window: [window.0, window.1],
        curve: csv.map(|_| "propagator.csv".to_string()),
    })
}

pub fn write_series(path: &Path, series: &FunctionalSeries) -> Result<(), CliError> {
    write_csv(path, &FunctionalSeries::HEADER, series.rows())
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckJson {
    pub alpha0: f64,
    pub block_matrix: ConditionCertificate,
    pub slice_bounds: ConditionCertificate,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateJson {
    pub case: &'static str,
    pub branch: RateBranch,
    pub lambda: f64,
    pub two_lambda: f64,
    pub nu: f64,
    pub sigma: f64,
    pub c: f64,
    pub tau: f64,
    pub alpha0: f64,
    pub a: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub s: f64,
    pub c_pi: f64,
    pub epsilon_b: Option<f64>,
    pub sharp: bool,
}

impl From<&RateReport> for RateJson {
    fn from(r: &RateReport) -> Self {
        RateJson {
            case: r.case_tag.tag(),
            branch: r.branch,
            lambda: r.lambda,
            two_lambda: r.two_lambda,
            nu: r.params.nu,
            sigma: r.params.sigma,
            c: r.params.c,
            tau: r.params.tau,
            alpha0: r.alpha0,
            a: r.a,
            big_a: r.big_a,
            big_b: r.big_b,
            s: r.s,
            c_pi: r.c_pi,
            epsilon_b: r.epsilon_b,
            sharp: r.sharp,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifyJson {
    pub rate: RateJson,
    pub selection: LyapunovSelection,
    pub delta_residual: f64,
    pub lyapunov: ConditionCertificate,
    pub sandwich_constants: SandwichConstants,
    pub sandwich: ConditionCertificate,
    pub hypoelliptic: HypoellipticCertificate,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropagatorJson {
    pub classification: Classification,
    pub predicted_rate: f64,
    pub fit: RateFit,
    pub jordan_block_size: usize,
    pub alphas: Vec<f64>,
    pub positive_stable: bool,
    pub no_invariant_kerd_subspace: bool,
    pub window: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateJson {
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
    pub dt: f64,
    pub steps: usize,
    pub limiter: Limiter,
    pub weight: FunctionalSpec,
    pub fitted_l2_rate: Option<f64>,
    pub predicted_two_lambda: Option<f64>,
    pub mass_drift: f64,
    pub phi_monotone: bool,
    pub series: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypoJson {
    pub slope_x: f64,
    pub slope_v: f64,
    pub expected: [f64; 2],
    pub samples: usize,
    pub series: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Consistency {
    pub rate_lambda: f64,
    pub propagator_rate: f64,
    /// `(fitted − λ)/fitted`; nonnegative when the rate is a valid lower bound.
    pub relative_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub section: Section,
    pub seconds: f64,
}

/// Everything `report` produced. Artifact paths are relative to the output
/// directory; `timings` is the only field that varies between identical runs.
#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propagator: Option<PropagatorJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypo: Option<HypoJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<Consistency>,
    pub timings: Vec<Timing>,
}

/// Runs one subcommand.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let r = Run::new(cfg, out)?;
    match cmd {
        Command::Check => r.check().map(drop),
        Command::Rate => r.rate().map(drop),
        Command::Certify => r.certify().map(drop),
        Command::Propagator => r.propagator().map(drop),
        Command::Simulate => r.simulate().map(drop),
        Command::Hypo => r.hypo().map(drop),
        Command::Report => r.report().map(drop),
    }
}
