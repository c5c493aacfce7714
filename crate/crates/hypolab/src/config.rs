//! Run configuration: one TOML file per experiment, every section validated
//! up front and unknown keys rejected.

use std::path::{Path, PathBuf};

use hypokit::assumptions::{HypoParams, SearchGrid};
use hypokit::matrix::SymMatrix;
use hypokit::potential::{Monomial, Polynomial, Potential, SampleBox};
use hypokit::solver::{InitialDatum, Limiter};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub assumptions: AssumptionConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub hypo: HypoConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coef: f64,
    pub exps: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `xᵀM⁻¹x/2 + p·x + q`, with `m_inv` flattened row-major.
    Quadratic {
        m_inv: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<Vec<f64>>,
        #[serde(default)]
        q: f64,
    },
    /// `r|x|^{2k} + V₀`. In one dimension `v0` lists coefficients from the
    /// constant term up; `v0_terms` gives monomials in any dimension.
    RadialPoly {
        #[serde(default = "one")]
        n: usize,
        r: f64,
        k: u32,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        v0: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        v0_terms: Vec<TermConfig>,
    },
    DoubleWell {
        #[serde(default = "one")]
        n: usize,
        r1: f64,
        r2: f64,
    },
}

fn one() -> usize {
    1
}

impl PotentialConfig {
    pub fn dim(&self) -> usize {
        match self {
            PotentialConfig::Quadratic { m_inv, .. } => (m_inv.len() as f64).sqrt().round() as usize,
            PotentialConfig::RadialPoly { n, .. } | PotentialConfig::DoubleWell { n, .. } => *n,
        }
    }

    /// `M⁻¹` of a quadratic potential.
    pub fn m_inv(&self) -> Result<Option<SymMatrix>, CliError> {
        let PotentialConfig::Quadratic { m_inv, .. } = self else {
            return Ok(None);
        };
        let n = self.dim();
        if n == 0 || n * n != m_inv.len() {
            return Err(CliError::Config(format!(
                "potential.m_inv needs a square number of entries, got {}",
                m_inv.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if m_inv[i * n + j] != m_inv[j * n + i] {
                    return Err(CliError::Config("potential.m_inv must be symmetric".into()));
                }
            }
        }
        Ok(Some(SymMatrix::from_fn(n, |i, j| m_inv[i * n + j])))
    }

    pub fn build(&self) -> Result<Potential, CliError> {
        let pot = match self {
            PotentialConfig::Quadratic { p, q, .. } => {
                let m = self.m_inv()?.expect("quadratic");
                let p = p.clone().unwrap_or_else(|| vec![0.0; m.dim()]);
                Potential::quadratic(m, p, *q)
            }
            PotentialConfig::RadialPoly { n, r, k, v0, v0_terms } => {
                if !v0.is_empty() && !v0_terms.is_empty() {
                    return Err(CliError::Config("give either potential.v0 or potential.v0_terms, not both".into()));
                }
                let poly = if !v0.is_empty() {
                    if *n != 1 {
                        return Err(CliError::Config("potential.v0 is one-dimensional; use v0_terms for n > 1".into()));
                    }
                    Polynomial::univariate(v0)
                } else {
                    let terms = v0_terms.iter().map(|t| Monomial { coef: t.coef, exps: t.exps.clone() }).collect();
                    Polynomial { n: *n, terms }
                };
                Potential::radial_poly(*n, *r, *k, poly)
            }
            PotentialConfig::DoubleWell { n, r1, r2 } => Potential::double_well(*n, *r1, *r2),
        };
        pot.map_err(|e| CliError::Config(format!("potential: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub nu: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionConfig {
    pub box_lo: f64,
    pub box_hi: f64,
    /// Samples per axis.
    pub points: usize,
    /// Fixed condition constants; both or neither. Without them the `(c, τ)`
    /// grid is searched.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub c_points: usize,
    pub tau_points: usize,
    pub c_span: f64,
    pub tau_max_frac: f64,
}

impl Default for AssumptionConfig {
    fn default() -> Self {
        let g = SearchGrid::default();
        AssumptionConfig {
            box_lo: -5.0,
            box_hi: 5.0,
            points: 1001,
            c: None,
            tau: None,
            c_points: g.c_points,
            tau_points: g.tau_points,
            c_span: g.c_span,
            tau_max_frac: g.tau_max_frac,
        }
    }
}

/// `c_pi = <number>` or `c_pi = "quadratic-auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CPi {
    Value(f64),
    Keyword(CPiKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CPiKeyword {
    QuadraticAuto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub c_pi: CPi,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_b: Option<f64>,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig { c_pi: CPi::Keyword(CPiKeyword::QuadraticAuto), epsilon_b: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    /// Fit window; defaults to `[20/ν, 50/ν]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub nx: usize,
    pub nv: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lv: Option<f64>,
    /// Time step; by default the largest one dividing `t_end` under `cfl`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub limiter: Limiter,
    pub theta: f64,
    pub datum: InitialDatum,
    /// Start from a binary snapshot instead of `datum`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nx: 128,
            nv: 128,
            lx: None,
            lv: None,
            dt: None,
            cfl: 0.8,
            t_end: 10.0,
            sample_every: 10,
            limiter: Limiter::ThirdOrder,
            theta: 0.5,
            datum: InitialDatum::GaussianShifted { mean: [1.0, 0.0], covariance: [[1.0, 0.0], [0.0, 1.0]] },
            restart: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypoConfig {
    pub nx: usize,
    pub nv: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub dt: f64,
    pub limiter: Limiter,
    pub theta: f64,
    pub datum: InitialDatum,
    /// Horizon of the short-time certificate emitted by `certify`.
    pub t0: f64,
}

impl Default for HypoConfig {
    fn default() -> Self {
        HypoConfig {
            nx: 256,
            nv: 256,
            t_lo: 2e-3,
            t_hi: 2e-2,
            dt: 1e-4,
            limiter: Limiter::VanLeer,
            theta: 0.5,
            datum: InitialDatum::RoughIndicator { x_interval: [-1.0, 1.0], smoothing: 0.0 },
            t0: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the final state of `simulate` as a binary snapshot.
    pub snapshot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), snapshot: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Check,
    Rate,
    Certify,
    Propagator,
    Simulate,
    Hypo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub include: Vec<Section>,
    /// Rate sweep over harmonic potentials `α₀x²/2` for every listed ν.
    pub sweep_alpha0: Vec<f64>,
    pub sweep_nu: Vec<f64>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            include: vec![Section::Check, Section::Rate, Section::Certify, Section::Propagator],
            sweep_alpha0: Vec::new(),
            sweep_nu: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Reads, applies `key=value` overrides and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        HypoParams::new(self.model.nu, self.model.sigma, 0.0, 0.0)
            .map_err(|_| CliError::Config("model.nu and model.sigma must be positive and finite".into()))?;
        self.potential.m_inv()?;
        let a = &self.assumptions;
        if a.c.is_some() != a.tau.is_some() {
            return bad("assumptions.c and assumptions.tau must be given together");
        }
        if !(a.box_lo < a.box_hi) || a.points == 0 || a.c_points == 0 || a.tau_points == 0 {
            return bad("assumptions: need box_lo < box_hi and positive point counts");
        }
        if let CPi::Value(c) = self.rate.c_pi {
            if !(c > 0.0) || !c.is_finite() {
                return bad("rate.c_pi must be positive");
            }
        }
        if let Some([lo, hi]) = self.propagator.window {
            if !(lo >= 1.0 && hi > lo) {
                return bad("propagator.window must satisfy 1 ≤ lo < hi");
            }
        }
        let s = &self.solver;
        if !(s.cfl > 0.0) || !(s.t_end > 0.0) || s.sample_every == 0 {
            return bad("solver: need cfl > 0, t_end > 0 and sample_every ≥ 1");
        }
        if self.report.sweep_alpha0.is_empty() != self.report.sweep_nu.is_empty() {
            return bad("report.sweep_alpha0 and report.sweep_nu must both be set or both be empty");
        }
        if self.report.sweep_alpha0.iter().chain(&self.report.sweep_nu).any(|v| !(*v > 0.0)) {
            return bad("report sweep values must be positive");
        }
        Ok(())
    }

    pub fn sample_box(&self) -> Result<SampleBox, CliError> {
        let a = &self.assumptions;
        SampleBox::cube(self.potential.dim(), a.box_lo, a.box_hi, a.points).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn search_grid(&self) -> SearchGrid {
        let a = &self.assumptions;
        SearchGrid { c_points: a.c_points, tau_points: a.tau_points, c_span: a.c_span, tau_max_frac: a.tau_max_frac }
    }

    /// Explicit C_PI, or `None` for the Gaussian value of quadratic potentials.
    pub fn c_pi(&self) -> Option<f64> {
        match self.rate.c_pi {
            CPi::Value(c) => Some(c),
            CPi::Keyword(CPiKeyword::QuadraticAuto) => None,
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a bare
/// string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
