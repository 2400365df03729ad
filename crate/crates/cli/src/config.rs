//! TOML run configuration.
//!
//! A config has a mandatory `[params]` table and optional `[data]`, `[scan]`,
//! `[policy]`, `[output]`, `[phase]` and `[crossval]` tables. Unknown keys are
//! rejected. Radial profiles use the schema
//! `{ kind = "builtin", family = "gaussian", a = .., sigma = .. }` or
//! `{ kind = "grid", r = [..], v = [..] }`.

use std::path::{Path, PathBuf};

use ep_core::linearization::{HorizonPolicy, LinearForm};
use ep_core::model::{self, Background, Family, InitialPoint, Params, RadialProfile};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSpec,
    #[serde(default)]
    pub data: DataSpec,
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub output: OutputSpec,
    pub phase: Option<PhaseSpec>,
    pub crossval: Option<CrossvalSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub d: u32,
    pub k: f64,
    #[serde(default)]
    pub c: CSpec,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub mu: f64,
}

/// Background density: a number or a radial profile.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CSpec {
    Const(f64),
    Profile(ProfileSpec),
}

impl Default for CSpec {
    fn default() -> Self {
        CSpec::Const(0.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Builtin(FamilySpec),
    Grid { r: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Constant { a: f64 },
    Gaussian { a: f64, sigma: f64 },
    Rational { a: f64, p: f64 },
    PolyGaussian { coeffs: Vec<f64>, sigma: f64 },
    Polynomial { coeffs: Vec<f64> },
}

impl ProfileSpec {
    pub fn build(&self, field: &str) -> Result<RadialProfile, ConfigError> {
        let r = match self {
            ProfileSpec::Builtin(f) => RadialProfile::builtin(match f.clone() {
                FamilySpec::Constant { a } => Family::Constant { a },
                FamilySpec::Gaussian { a, sigma } => Family::Gaussian { a, sigma },
                FamilySpec::Rational { a, p } => Family::Rational { a, p },
                FamilySpec::PolyGaussian { coeffs, sigma } => Family::PolyGaussian { coeffs, sigma },
                FamilySpec::Polynomial { coeffs } => Family::Polynomial { coeffs },
            }),
            ProfileSpec::Grid { r, v } => RadialProfile::grid(r.clone(), v.clone()),
        };
        r.map_err(|e| invalid(field, e.to_string()))
    }
}

/// Explicit seed of one characteristic.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct PointSpec {
    #[serde(default = "one")]
    pub r0: f64,
    #[serde(default)]
    pub F0: f64,
    #[serde(default)]
    pub G0: f64,
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub v0: f64,
}

fn one() -> f64 {
    1.0
}

impl From<PointSpec> for InitialPoint {
    fn from(s: PointSpec) -> InitialPoint {
        InitialPoint::new(s.r0, s.F0, s.G0, s.u0, s.v0)
    }
}

/// Uniform grid `start..=stop` with `n` nodes.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.start];
        }
        (0..self.n)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct DataSpec {
    pub point: Option<PointSpec>,
    pub F0: Option<ProfileSpec>,
    pub G0: Option<ProfileSpec>,
    /// Initial density; G0 is then the enclosed-mass field with the background
    /// subtracted.
    pub n0: Option<ProfileSpec>,
    pub r0: Option<f64>,
    pub r_grid: Option<RangeSpec>,
    pub r_values: Option<Vec<f64>>,
    /// Move the distinguished equilibrium to the origin first.
    #[serde(default)]
    pub shift: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Var {
    F0,
    G0,
    #[serde(rename = "u0")]
    U0,
    #[serde(rename = "v0")]
    V0,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::F0 => "F0",
            Var::G0 => "G0",
            Var::U0 => "u0",
            Var::V0 => "v0",
        }
    }

    pub fn set(self, ip: &mut InitialPoint, x: f64) {
        match self {
            Var::F0 => ip.F0 = x,
            Var::G0 => ip.G0 = x,
            Var::U0 => ip.u0 = x,
            Var::V0 => ip.v0 = x,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub var: Var,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    /// Values of the two remaining variables and r0 (default 0 and r0 = 1).
    #[serde(default = "default_fixed")]
    pub fixed: PointSpec,
    /// Bisection steps along each boundary edge.
    #[serde(default = "default_refine")]
    pub refine: u32,
}

fn default_fixed() -> PointSpec {
    PointSpec {
        r0: 1.0,
        F0: 0.0,
        G0: 0.0,
        u0: 0.0,
        v0: 0.0,
    }
}

fn default_refine() -> u32 {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormSpec {
    Consistent,
    AsPrinted,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
    pub escape_threshold: Option<f64>,
    pub center_periods: Option<f64>,
    pub saddle_node_time: Option<f64>,
    pub node_time: Option<f64>,
    pub non_analytic_time: Option<f64>,
    pub separatrix_margin: Option<f64>,
    pub form: Option<FormSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    /// (F0, G0) starting points; r0 = 1.
    #[serde(default)]
    pub seeds: Vec<[f64; 2]>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Output samples per trajectory.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_phase_tol")]
    pub tol: f64,
    /// [F_min, F_max, G_min, G_max] of the direction field.
    pub window: Option<[f64; 4]>,
    #[serde(default = "default_field_n")]
    pub field_n: usize,
}

impl Default for PhaseSpec {
    fn default() -> Self {
        PhaseSpec {
            seeds: Vec::new(),
            t_end: default_t_end(),
            samples: default_samples(),
            tol: default_phase_tol(),
            window: None,
            field_n: default_field_n(),
        }
    }
}

fn default_t_end() -> f64 {
    20.0
}

fn default_samples() -> usize {
    400
}

fn default_phase_tol() -> f64 {
    1e-10
}

fn default_field_n() -> usize {
    21
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalSpec {
    pub suite: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub horizon: Option<f64>,
}

impl RunConfig {
    pub fn from_str_named(text: &str, name: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        if p.d == 0 {
            return Err(invalid("params.d", "dimension must be at least 1"));
        }
        for (name, v) in [("params.k", p.k), ("params.m", p.m), ("params.mu", p.mu)] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if p.mu < 0.0 {
            return Err(invalid("params.mu", "must be non-negative"));
        }
        if let CSpec::Const(c) = p.c {
            if !(c.is_finite() && c >= 0.0) {
                return Err(invalid("params.c", "background density must be finite and non-negative"));
            }
        }
        let pol = &self.policy;
        for (name, v) in [
            ("policy.horizon", pol.horizon),
            ("policy.tol", pol.tol),
            ("policy.escape_threshold", pol.escape_threshold),
            ("policy.center_periods", pol.center_periods),
            ("policy.saddle_node_time", pol.saddle_node_time),
            ("policy.node_time", pol.node_time),
            ("policy.non_analytic_time", pol.non_analytic_time),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(name, "must be positive"));
                }
            }
        }
        if let Some(m) = pol.separatrix_margin {
            if !(m >= 0.0) {
                return Err(invalid("policy.separatrix_margin", "must be non-negative"));
            }
        }
        if let Some(s) = &self.scan {
            for (name, a) in [("scan.x", &s.x), ("scan.y", &s.y)] {
                if a.n < 2 {
                    return Err(invalid(&format!("{name}.n"), "resolution must be at least 2"));
                }
                if !(a.min < a.max) || !a.min.is_finite() || !a.max.is_finite() {
                    return Err(invalid(name, "need finite min < max"));
                }
            }
            if s.x.var == s.y.var {
                return Err(invalid("scan.y.var", "scan axes must be distinct"));
            }
        }
        if let Some(g) = &self.data.r_grid {
            if g.n < 1 || !(g.start >= 0.0) || !(g.stop >= g.start) {
                return Err(invalid("data.r_grid", "need 0 <= start <= stop and n >= 1"));
            }
        }
        if let Some(v) = &self.data.r_values {
            if v.iter().any(|r| !(*r >= 0.0)) {
                return Err(invalid("data.r_values", "radii must be non-negative"));
            }
        }
        if self.data.G0.is_some() && self.data.n0.is_some() {
            return Err(invalid("data.n0", "give either G0 or n0, not both"));
        }
        if let Some(ph) = &self.phase {
            if !(ph.t_end.is_finite() && ph.t_end != 0.0) {
                return Err(invalid("phase.t_end", "must be finite and non-zero"));
            }
            if ph.samples < 2 {
                return Err(invalid("phase.samples", "must be at least 2"));
            }
            if !(ph.tol > 0.0) {
                return Err(invalid("phase.tol", "must be positive"));
            }
            if ph.field_n < 2 {
                return Err(invalid("phase.field_n", "must be at least 2"));
            }
            if let Some([f0, f1, g0, g1]) = ph.window {
                if !(f0 < f1 && g0 < g1) {
                    return Err(invalid("phase.window", "need F_min < F_max and G_min < G_max"));
                }
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<Params, ConfigError> {
        let p = &self.params;
        let c = match &p.c {
            CSpec::Const(c) => Background::Constant(*c),
            CSpec::Profile(s) => Background::Profile(s.build("params.c")?),
        };
        Params::with_background(p.d, p.k, c, p.m, p.mu).map_err(|e| invalid("params", e.to_string()))
    }

    pub fn policy(&self, o: &Overrides) -> Result<HorizonPolicy, ConfigError> {
        for (name, v) in [("--tol", o.tol), ("--horizon", o.horizon)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(name, "must be positive"));
                }
            }
        }
        let s = &self.policy;
        let d = HorizonPolicy::default();
        Ok(HorizonPolicy {
            horizon: o.horizon.or(s.horizon),
            center_periods: s.center_periods.unwrap_or(d.center_periods),
            saddle_node_time: s.saddle_node_time.unwrap_or(d.saddle_node_time),
            node_time: s.node_time.unwrap_or(d.node_time),
            non_analytic_time: s.non_analytic_time.unwrap_or(d.non_analytic_time),
            tol: o.tol.or(s.tol).unwrap_or(d.tol),
            escape_threshold: s.escape_threshold.unwrap_or(d.escape_threshold),
            separatrix_margin: s.separatrix_margin.unwrap_or(d.separatrix_margin),
            form: match s.form {
                Some(FormSpec::AsPrinted) => LinearForm::AsPrinted,
                _ => LinearForm::Consistent,
            },
        })
    }

    /// F0 and G0 profiles, with G0 built from n0 when given.
    pub fn profiles(&self, p: &Params) -> Result<(RadialProfile, RadialProfile), ConfigError> {
        let d = &self.data;
        let f0 = d
            .F0
            .as_ref()
            .map(|s| s.build("data.F0"))
            .transpose()?
            .unwrap_or_else(|| RadialProfile::constant(0.0));
        let g0 = match (&d.G0, &d.n0) {
            (Some(s), _) => s.build("data.G0")?,
            (None, Some(s)) => {
                let n0 = s.build("data.n0")?;
                let c = p
                    .c_const()
                    .ok_or_else(|| invalid("data.n0", "needs a constant background c"))?;
                model::field_slope_from_density(&n0, p.d, c).map_err(|e| invalid("data.n0", e.to_string()))?
            }
            (None, None) => return Err(invalid("data", "profiles need G0 or n0")),
        };
        Ok((f0, g0))
    }

    /// The radii of an r-scan: the configured grid plus r0 = 0.
    pub fn r_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let mut r = match (&self.data.r_grid, &self.data.r_values) {
            (Some(g), None) => g.values(),
            (None, Some(v)) => v.clone(),
            (Some(_), Some(_)) => return Err(invalid("data.r_values", "give either r_grid or r_values")),
            (None, None) => return Err(invalid("data.r_grid", "scan-r needs r_grid or r_values")),
        };
        r.push(0.0);
        r.sort_by(f64::total_cmp);
        r.dedup();
        Ok(r)
    }
}
