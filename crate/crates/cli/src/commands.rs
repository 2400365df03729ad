//! The five subcommands. Each returns a [`Report`] holding CSV tables, a JSON
//! document and a short summary.

use ep_core::characteristics::{self, CharacteristicState};
use ep_core::linearization::{self, BlowupVerdict, HorizonPolicy};
use ep_core::mcriteria;
use ep_core::model::{self, InitialPoint, Params, RadialProfile, Shift};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, Overrides, PhaseSpec, RunConfig, Var};
use crate::output::{Cell, Report, Table};
use crate::scan::{self, Axis, Boundary};
use crate::CliError;

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn outcome_name(v: &BlowupVerdict) -> String {
    serde_json::to_value(v.outcome)
        .ok()
        .and_then(|x| x.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn mechanism_name(v: &BlowupVerdict) -> String {
    v.mechanism
        .and_then(|m| serde_json::to_value(m).ok())
        .and_then(|x| x.as_str().map(str::to_string))
        .unwrap_or_default()
}

const VERDICT_HEADER: [&str; 12] = ["r0", "F0", "G0", "u0", "v0", "outcome", "t_star", "mechanism", "q_min", "horizon", "tail_bound", "boundary"];

fn verdict_row(v: &BlowupVerdict) -> Vec<Cell> {
    vec![
        v.r0.into(),
        v.F0.into(),
        v.G0.into(),
        v.u0.into(),
        v.v0.into(),
        outcome_name(v).into(),
        v.t_star.into(),
        mechanism_name(v).into(),
        v.q_min.into(),
        v.horizon.into(),
        v.tail_bound.into(),
        v.boundary.into(),
    ]
}

/// Parameters after the optional equilibrium shift.
fn shifted_params(cfg: &RunConfig) -> Result<(Params, Option<Shift>), CliError> {
    let p = cfg.model_params()?;
    if !cfg.data.shift {
        return Ok((p, None));
    }
    let (q, s) = model::shift_params(&p).map_err(|e| ConfigError::Invalid {
        field: "data.shift".into(),
        message: e.to_string(),
    })?;
    Ok((q, Some(s)))
}

fn shifted_profiles(cfg: &RunConfig) -> Result<(Params, RadialProfile, RadialProfile), CliError> {
    let p = cfg.model_params()?;
    let (f0, g0) = cfg.profiles(&p)?;
    if !cfg.data.shift {
        return Ok((p, f0, g0));
    }
    let (q, g1, _) = model::shift_to_zero_equilibrium(&p, &g0).map_err(|e| ConfigError::Invalid {
        field: "data.shift".into(),
        message: e.to_string(),
    })?;
    Ok((q, f0, g1))
}

// ---------------------------------------------------------------- classify

/// One analytic criterion evaluated next to the detector.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionCheck {
    pub name: &'static str,
    pub value: Option<f64>,
    pub predicts_smooth: bool,
    pub boundary: bool,
    pub agrees: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub params: Params,
    pub point: InitialPoint,
    pub shift: Option<Shift>,
    pub verdict: BlowupVerdict,
    pub criteria: Vec<CriterionCheck>,
    pub all_agree: bool,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

/// Every closed-form criterion that applies to (p, ip).
pub fn analytic_checks(p: &Params, ip: &InitialPoint, v: &BlowupVerdict) -> Vec<CriterionCheck> {
    let smooth = v.is_smooth();
    let mut out = Vec::new();
    let mut push = |name, value: Option<f64>, predicts_smooth: bool, boundary: bool| {
        out.push(CriterionCheck {
            name,
            value,
            predicts_smooth,
            boundary,
            agrees: predicts_smooth == smooth,
        })
    };
    let c = match p.c_const() {
        Some(c) if p.analytic_regime() => c,
        _ => return out,
    };
    let zero_velocity = ip.F0 == 0.0 && ip.u0 == 0.0;

    if p.d == 1 && p.m == 0.0 {
        if let Ok(b) = linearization::d1_criterion(p, ip) {
            push("d1", None, b, false);
        }
    }
    if zero_velocity && c == 0.0 && p.m == 0.0 && p.k > 0.0 && p.d >= 3 {
        if let Ok(r) = mcriteria::criterion_c0_zero_velocity(p, ip.G0, ip.v0) {
            push("c0-zero-velocity", Some(r.value), r.smooth, r.boundary);
        }
    }
    if p.d == 4 && c == 0.0 && p.m == 0.0 && p.k == 1.0 && !zero_velocity && ip.G0 < 0.0 {
        if let Ok(r) = mcriteria::q_of_m_d4_general(2.0 * (-ip.G0).sqrt(), ip.F0, ip.u0, ip.v0) {
            push("d4-c0-general", Some(r.verdict.value), r.verdict.smooth, r.verdict.boundary);
        }
    }
    if p.d == 4 && c == 1.0 && p.k == -1.0 && p.m == 0.0 && zero_velocity && ip.G0 > 0.0 && ip.G0 < 0.25 {
        if let Ok(r) = mcriteria::criterion_d4_attractive((1.0 - 4.0 * ip.G0).sqrt(), ip.v0) {
            push("d4-attractive", Some(r.criterion.value), r.criterion.smooth, r.criterion.boundary);
        }
    }
    if p.k < 0.0 && c > 0.0 && p.m == 0.0 && p.d >= 2 && ip.G0 < c / p.df() {
        if let Ok(true) = characteristics::blows_up_by_separatrix(p, ip.F0, ip.G0, 0.0) {
            push("separatrix", None, false, false);
        }
    }
    if let Ok(eq) = model::classify_equilibria(p) {
        if let Some(node) = eq.stable_node() {
            if near(ip.F0, node.F) && near(ip.G0, node.G) {
                if let Ok(r) = linearization::equilibrium_criterion(p, ip.u0, ip.v0) {
                    push("equilibrium-data", Some(r.value), r.smooth, r.boundary);
                }
            }
        }
    }
    out
}

pub fn classify(cfg: &RunConfig, pol: &HorizonPolicy) -> Result<Report, CliError> {
    let (p, ip, shift) = if let Some(pt) = cfg.data.point {
        let (p, shift) = shifted_params(cfg)?;
        let ip = InitialPoint::from(pt);
        (p, shift.map(|s| s.apply(&ip)).unwrap_or(ip), shift)
    } else {
        let r0 = cfg.data.r0.ok_or_else(|| ConfigError::Invalid {
            field: "data".into(),
            message: "classify needs data.point or profiles with data.r0".into(),
        })?;
        let (p, f0, g0) = shifted_profiles(cfg)?;
        let ip = model::derive_point(&f0, &g0, r0).map_err(|e| ConfigError::Invalid {
            field: "data.r0".into(),
            message: e.to_string(),
        })?;
        let shift = if cfg.data.shift { Some(shifted_params(cfg)?.1.expect("shift")) } else { None };
        (p, ip, shift)
    };
    let verdict = linearization::classify_point(&p, &ip, pol).map_err(numeric)?;
    let criteria = analytic_checks(&p, &ip, &verdict);
    let all_agree = criteria.iter().all(|c| c.agrees);
    let rep = ClassifyReport {
        params: p,
        point: ip,
        shift,
        verdict,
        criteria,
        all_agree,
    };
    let mut out = Report::new("classify", &rep);
    let mut t = Table::new("classify", &VERDICT_HEADER);
    t.push(verdict_row(&verdict));
    out.tables.push(t);
    let mut t = Table::new("classify_criteria", &["criterion", "value", "predicts_smooth", "boundary", "agrees"]);
    for c in &rep.criteria {
        t.push(vec![c.name.into(), c.value.into(), c.predicts_smooth.into(), c.boundary.into(), c.agrees.into()]);
    }
    out.tables.push(t);
    out.summary.push(format!("outcome: {} {}", outcome_name(&verdict), mechanism_name(&verdict)));
    for c in &rep.criteria {
        out.summary.push(format!(
            "criterion {}: {} ({})",
            c.name,
            if c.predicts_smooth { "smooth" } else { "blow-up" },
            if c.agrees { "agrees" } else { "DISAGREES" }
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------- scan-r

#[derive(Debug, Clone, Serialize)]
pub struct ScanRReport {
    pub global_smooth: bool,
    /// Smallest r0 whose characteristic blows up.
    pub offending_r0: Option<f64>,
    pub density: model::DensityReport,
    pub rows: Vec<BlowupVerdict>,
}

pub fn scan_r(cfg: &RunConfig, pol: &HorizonPolicy) -> Result<Report, CliError> {
    let (p, f0, g0) = shifted_profiles(cfg)?;
    let radii = cfg.r_grid()?;
    let density = model::check_density_positivity(&f0, &g0, &p, &radii);
    if !density.ok {
        return Err(ConfigError::Invalid {
            field: "data".into(),
            message: format!(
                "initial density is negative at r = {} (min n = {:e})",
                density.first_violation.unwrap_or(f64::NAN),
                density.min_density
            ),
        }
        .into());
    }
    let rows: Vec<BlowupVerdict> = radii
        .par_iter()
        .map(|&r| {
            let ip = model::derive_point(&f0, &g0, r).map_err(numeric)?;
            linearization::classify_point(&p, &ip, pol).map_err(numeric)
        })
        .collect::<Result<_, _>>()?;
    let offending_r0 = rows.iter().find(|v| !v.is_smooth()).map(|v| v.r0);
    let rep = ScanRReport {
        global_smooth: offending_r0.is_none(),
        offending_r0,
        density,
        rows,
    };
    let mut out = Report::new("scan-r", &rep);
    let mut t = Table::new("scan_r", &VERDICT_HEADER);
    for v in &rep.rows {
        t.push(verdict_row(v));
    }
    out.tables.push(t);
    out.summary.push(match rep.offending_r0 {
        None => format!("global verdict: smooth ({} characteristics)", rep.rows.len()),
        Some(r) => format!("global verdict: blow-up, first at r0 = {r}"),
    });
    Ok(out)
}

// ---------------------------------------------------------------- scan-plane

/// Exact boundary at the stable node, for scans over (u0, v0).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExactLine {
    /// value(u0, v0) = a·u0 + b·v0 + c
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Largest distance of a crossing from the line, in units of the scanned
    /// range.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaneReport {
    pub x: (String, Axis),
    pub y: (String, Axis),
    pub base: InitialPoint,
    pub cells: Vec<BlowupVerdict>,
    pub boundary: Boundary,
    pub exact_line: Option<ExactLine>,
}

/// Plane scan without any file output.
pub fn run_plane(p: &Params, pol: &HorizonPolicy, xv: Var, x: Axis, yv: Var, y: Axis, base: InitialPoint, refine: u32) -> Result<PlaneReport, CliError> {
    let point = |a: f64, b: f64| {
        let mut ip = base;
        xv.set(&mut ip, a);
        yv.set(&mut ip, b);
        ip
    };
    let verdict = |a: f64, b: f64| linearization::classify_point(p, &point(a, b), pol).map_err(numeric);
    let cells = scan::classify_grid(x, y, &verdict)?;
    let smooth: Vec<bool> = cells.iter().map(BlowupVerdict::is_smooth).collect();
    let boundary = scan::extract_boundary(x, y, &smooth, &|a, b| verdict(a, b).map(|v| v.is_smooth()), refine)?;
    let exact_line = exact_node_line(p, xv, x, yv, y, &base, &boundary);
    Ok(PlaneReport {
        x: (xv.name().into(), x),
        y: (yv.name().into(), y),
        base,
        cells,
        boundary,
        exact_line,
    })
}

fn exact_node_line(p: &Params, xv: Var, x: Axis, yv: Var, y: Axis, base: &InitialPoint, b: &Boundary) -> Option<ExactLine> {
    let uv = matches!((xv, yv), (Var::U0, Var::V0) | (Var::V0, Var::U0));
    let node = model::classify_equilibria(p).ok()?.stable_node()?;
    if !(uv && near(base.F0, node.F) && near(base.G0, node.G)) {
        return None;
    }
    let f = |u: f64, v: f64| linearization::equilibrium_criterion(p, u, v).map(|r| r.value).ok();
    let c0 = f(0.0, 0.0)?;
    let a = f(1.0, 0.0)? - c0;
    let bb = f(0.0, 1.0)? - c0;
    let (ax, ay) = if xv == Var::U0 { (a, bb) } else { (bb, a) };
    // gradient in scaled coordinates
    let g = (ax * x.span()).hypot(ay * y.span());
    let max_deviation = b
        .crossings
        .iter()
        .map(|c| (ax * c.x + ay * c.y + c0).abs() / g)
        .fold(0.0, f64::max);
    Some(ExactLine { a, b: bb, c: c0, max_deviation })
}

pub fn scan_plane(cfg: &RunConfig, pol: &HorizonPolicy) -> Result<Report, CliError> {
    let s = cfg.scan.as_ref().ok_or_else(|| ConfigError::Invalid {
        field: "scan".into(),
        message: "scan-plane needs a [scan] table".into(),
    })?;
    let (p, shift) = shifted_params(cfg)?;
    let base = InitialPoint::from(s.fixed);
    let base = shift.map(|sh| sh.apply(&base)).unwrap_or(base);
    let ax = |a: &crate::config::AxisSpec| Axis { min: a.min, max: a.max, n: a.n };
    let rep = run_plane(&p, pol, s.x.var, ax(&s.x), s.y.var, ax(&s.y), base, s.refine)?;
    let mut out = Report::new("scan-plane", &rep);
    let mut t = Table::new("scan_plane", &["ix", "iy", "x", "y", "outcome", "mechanism", "t_star", "q_min"]);
    for (idx, v) in rep.cells.iter().enumerate() {
        let (i, j) = (idx % rep.x.1.n, idx / rep.x.1.n);
        t.push(vec![
            i.into(),
            j.into(),
            rep.x.1.at(i).into(),
            rep.y.1.at(j).into(),
            outcome_name(v).into(),
            mechanism_name(v).into(),
            v.t_star.into(),
            v.q_min.into(),
        ]);
    }
    out.tables.push(t);
    let mut t = Table::new("scan_plane_boundary", &["polyline", "order", "x", "y", "uncertainty"]);
    for (li, line) in rep.boundary.polylines.iter().enumerate() {
        for (k, &pi) in line.iter().enumerate() {
            let c = rep.boundary.crossings[pi];
            t.push(vec![li.into(), k.into(), c.x.into(), c.y.into(), c.uncertainty.into()]);
        }
    }
    out.tables.push(t);
    let mut t = Table::new(
        "scan_plane_fit",
        &["x_var", "y_var", "slope", "intercept", "max_residual", "max_residual_data", "points", "exact_max_deviation"],
    );
    if let Some(f) = rep.boundary.fit {
        t.push(vec![
            rep.x.0.clone().into(),
            rep.y.0.clone().into(),
            f.slope.into(),
            f.intercept.into(),
            f.max_residual.into(),
            f.max_residual_data.into(),
            f.points.into(),
            rep.exact_line.map(|e| e.max_deviation).into(),
        ]);
    }
    out.tables.push(t);
    let blow = rep.cells.iter().filter(|v| !v.is_smooth()).count();
    out.summary.push(format!("{} cells, {} blow-up, {} boundary points", rep.cells.len(), blow, rep.boundary.crossings.len()));
    if let Some(f) = rep.boundary.fit {
        out.summary.push(format!("line fit: slope {:.6e}, intercept {:.6e}, max residual {:.3e} of range", f.slope, f.intercept, f.max_residual));
    }
    if let Some(e) = rep.exact_line {
        out.summary.push(format!("exact node line: max deviation {:.3e} of range", e.max_deviation));
    }
    Ok(out)
}

// ---------------------------------------------------------------- phase-portrait

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct PhaseSample {
    pub t: f64,
    pub r: f64,
    pub F: f64,
    pub G: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseTrajectory {
    pub seed: [f64; 2],
    pub escape: Option<f64>,
    pub samples: Vec<PhaseSample>,
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct SeparatrixPoint {
    pub branch: &'static str,
    pub G: f64,
    pub F: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub trajectories: Vec<PhaseTrajectory>,
    pub separatrix: Vec<SeparatrixPoint>,
    pub equilibria: Vec<model::Equilibrium>,
    /// (F, G, dF/dt, dG/dt) at r = 1.
    pub field: Vec<[f64; 4]>,
}

fn default_seeds(p: &Params) -> Vec<[f64; 2]> {
    let c = p.c_at(1.0).0;
    let top = if c > 0.0 { 0.5 * c / p.df() } else { -0.1 };
    let mut s = Vec::new();
    for g in [-0.4, -0.2, top] {
        for f in [-0.6, -0.3, 0.3, 0.6] {
            s.push([f, g]);
        }
    }
    s
}

/// `--tol` and `--horizon` override `phase.tol` and `phase.t_end`.
pub fn phase_portrait(cfg: &RunConfig, ov: &Overrides) -> Result<Report, CliError> {
    let p = cfg.model_params()?;
    let mut spec = cfg.phase.clone().unwrap_or_default();
    spec.tol = ov.tol.unwrap_or(spec.tol);
    spec.t_end = ov.horizon.unwrap_or(spec.t_end);
    let rep = run_phase(&p, &spec)?;
    let mut out = Report::new("phase-portrait", &rep);
    let mut t = Table::new("phase_trajectories", &["seed", "F0", "G0", "t", "r", "F", "G"]);
    for (i, tr) in rep.trajectories.iter().enumerate() {
        for s in &tr.samples {
            t.push(vec![i.into(), tr.seed[0].into(), tr.seed[1].into(), s.t.into(), s.r.into(), s.F.into(), s.G.into()]);
        }
    }
    out.tables.push(t);
    let mut t = Table::new("phase_separatrix", &["branch", "G", "F"]);
    for s in &rep.separatrix {
        t.push(vec![s.branch.into(), s.G.into(), s.F.into()]);
    }
    out.tables.push(t);
    let mut t = Table::new("phase_equilibria", &["F", "G", "kind"]);
    for e in &rep.equilibria {
        let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        t.push(vec![e.F.into(), e.G.into(), kind.into()]);
    }
    out.tables.push(t);
    let mut t = Table::new("phase_field", &["F", "G", "dF", "dG"]);
    for f in &rep.field {
        t.push(f.iter().map(|&x| Cell::F(x)).collect());
    }
    out.tables.push(t);
    let escaped = rep.trajectories.iter().filter(|t| t.escape.is_some()).count();
    out.summary.push(format!(
        "{} trajectories ({} escape), {} separatrix points, {} equilibria",
        rep.trajectories.len(),
        escaped,
        rep.separatrix.len(),
        rep.equilibria.len()
    ));
    Ok(out)
}

pub fn run_phase(p: &Params, spec: &PhaseSpec) -> Result<PhaseReport, CliError> {
    let seeds = if spec.seeds.is_empty() { default_seeds(p) } else { spec.seeds.clone() };
    let trajectories: Vec<PhaseTrajectory> = seeds
        .par_iter()
        .map(|&[f0, g0]| {
            let tr = characteristics::integrate_characteristic(p, CharacteristicState::new(0.0, 1.0, f0, g0), spec.t_end, spec.tol).map_err(numeric)?;
            let t1 = tr.escape.unwrap_or_else(|| tr.t_final());
            let samples = (0..spec.samples)
                .map(|i| {
                    let t = t1 * i as f64 / (spec.samples - 1) as f64;
                    let s = tr.state(t);
                    PhaseSample { t, r: s.r, F: s.F, G: s.G }
                })
                .collect();
            Ok(PhaseTrajectory {
                seed: [f0, g0],
                escape: tr.escape,
                samples,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let equilibria = model::classify_equilibria(p).map(|e| e.equilibria).unwrap_or_default();
    let window = spec.window.unwrap_or_else(|| {
        let (mut f0, mut f1, mut g0, mut g1) = (-1.0f64, 1.0f64, -0.5f64, 0.5f64);
        for s in trajectories.iter().flat_map(|t| &t.samples) {
            f0 = f0.min(s.F.max(-3.0));
            f1 = f1.max(s.F.min(3.0));
            g0 = g0.min(s.G.max(-3.0));
            g1 = g1.max(s.G.min(3.0));
        }
        [f0, f1, g0, g1]
    });

    let mut separatrix = Vec::new();
    if let Some(c) = p.c_const() {
        if p.k < 0.0 && c > 0.0 && p.m == 0.0 && p.d >= 2 && p.analytic_regime() {
            let top = c / p.df();
            let n = 4 * spec.samples;
            for i in 0..=n {
                let g = window[2] + (top - window[2]) * i as f64 / n as f64;
                let f2 = if p.d == 2 { characteristics::separatrix_F2_d2(p, g) } else { characteristics::separatrix_F2(p, g) };
                if let Ok(f2) = f2 {
                    if f2 >= 0.0 {
                        let f = f2.sqrt();
                        let sg = if g > 0.0 { 1.0 } else { -1.0 };
                        separatrix.push(SeparatrixPoint { branch: "stable", G: g, F: -sg * f });
                        separatrix.push(SeparatrixPoint { branch: "unstable", G: g, F: sg * f });
                    }
                }
            }
        }
    }

    let n = spec.field_n;
    let mut field = Vec::with_capacity(n * n);
    for j in 0..n {
        let g = window[2] + (window[3] - window[2]) * j as f64 / (n - 1) as f64;
        for i in 0..n {
            let f = window[0] + (window[1] - window[0]) * i as f64 / (n - 1) as f64;
            let d = characteristics::rhs(p, &[1.0, f, g]);
            field.push([f, g, d[1], d[2]]);
        }
    }
    Ok(PhaseReport {
        trajectories,
        separatrix,
        equilibria,
        field,
    })
}
