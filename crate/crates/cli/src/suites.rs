//! Analytic-versus-detector cross-validation suites.
//!
//! Each suite has a sampling function returning raw records, so callers can
//! apply their own oracles, and a wrapper that reduces the records to metrics
//! with pass/fail limits.

use std::f64::consts::PI;
use std::time::Instant;

use ep_core::characteristics::{self, CharacteristicState};
use ep_core::linearization::{self, HorizonPolicy, LinearForm};
use ep_core::mcriteria::{self, AttractivePair, FundamentalPair};
use ep_core::model::{Background, Family, InitialPoint, Params, RadialProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{self, PlaneReport};
use crate::config::{ConfigError, Var};
use crate::output::{Report, Table};
use crate::scan::Axis;
use crate::CliError;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

pub const SUITES: [&str; 11] = [
    "radon",
    "conservation",
    "isochrony",
    "d4-c0",
    "hypergeom",
    "heun",
    "separatrix",
    "fig3",
    "d1",
    "third-order",
    "performance",
];

type Res<T> = Result<T, CliError>;

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn params(d: u32, k: f64, c: f64) -> Params {
    Params::new(d, k, c, 0.0, 0.0).expect("valid suite parameters")
}

fn classify_smooth(p: &Params, ip: &InitialPoint) -> Res<bool> {
    Ok(linearization::classify_point(p, ip, &HorizonPolicy::default()).map_err(numeric)?.is_smooth())
}

#[derive(Debug, Clone, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// "<" or ">" against `limit`.
    pub relation: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl Metric {
    fn below(name: &str, value: f64, limit: f64) -> Metric {
        Metric {
            name: name.into(),
            value,
            relation: "<",
            limit,
            pass: value < limit,
        }
    }

    fn above(name: &str, value: f64, limit: f64) -> Metric {
        Metric {
            name: name.into(),
            value,
            relation: ">",
            limit,
            pass: value > limit,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub pass: bool,
    pub metrics: Vec<Metric>,
    pub seconds: f64,
}

fn finish(suite: &str, start: Instant, metrics: Vec<Metric>) -> SuiteReport {
    SuiteReport {
        suite: suite.into(),
        pass: metrics.iter().all(|m| m.pass),
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    }
}

// ---------------------------------------------------------------- radon

#[derive(Debug, Clone, Serialize)]
pub struct RadonSample {
    pub regime: &'static str,
    pub point: InitialPoint,
    /// max |p1/q − u| and max |p2/q − v| while q ≥ 0.1.
    pub dev_u: f64,
    pub dev_v: f64,
    pub compared: usize,
}

const RADON_T_END: f64 = 20.0;

pub const RADON_REGIMES: [(&str, u32, f64, f64); 3] = [("center", 3, 1.0, 1.0), ("c0", 3, 1.0, 0.0), ("node", 3, -1.0, 1.0)];

/// Draw from `draw` until the characteristic stays bounded up to `t_end`.
fn bounded_draw(p: &Params, t_end: f64, mut draw: impl FnMut() -> InitialPoint) -> Res<InitialPoint> {
    for _ in 0..1000 {
        let ip = draw();
        let tr = characteristics::integrate_characteristic(p, CharacteristicState::new(0.0, ip.r0, ip.F0, ip.G0), t_end, 1e-8).map_err(numeric)?;
        if tr.escape.is_none() {
            return Ok(ip);
        }
    }
    Err(CliError::Numeric("no bounded sample found in 1000 draws".into()))
}

/// Linear-system quotient versus direct (u, v) integration on points whose
/// characteristics stay bounded over the comparison window.
pub fn radon_samples(seed: u64, per_regime: usize) -> Res<Vec<RadonSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for (name, d, k, c) in RADON_REGIMES {
        let p = params(d, k, c);
        let g_hi = if c > 0.0 { 0.3 } else { -0.05 };
        for _ in 0..per_regime {
            let ip = bounded_draw(&p, RADON_T_END, || {
                InitialPoint::new(1.0, rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..g_hi), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })?;
            jobs.push((name, p.clone(), ip));
        }
    }
    jobs.par_iter()
        .map(|(name, p, ip)| {
            let (dev_u, dev_v, compared) = radon_deviation(p, ip, RADON_T_END, 1e-11)?;
            Ok(RadonSample {
                regime: name,
                point: *ip,
                dev_u,
                dev_v,
                compared,
            })
        })
        .collect()
}

pub fn radon_deviation(p: &Params, ip: &InitialPoint, t_end: f64, tol: f64) -> Res<(f64, f64, usize)> {
    let tr = linearization::integrate_coupled(p, ip, t_end, tol, LinearForm::Consistent).map_err(numeric)?;
    let uv = linearization::direct_uv(p, ip, t_end, tol, LinearForm::Consistent, 1e8).map_err(numeric)?;
    let t_max = uv.sol.t_final().min(tr.sol.t_final());
    let mut times: Vec<f64> = Vec::new();
    for s in tr.sol.steps() {
        times.push(0.5 * (s.t0 + s.t1));
        times.push(s.t1);
    }
    let (mut du, mut dv, mut n) = (0.0f64, 0.0f64, 0usize);
    for t in times.into_iter().filter(|&t| t <= t_max) {
        let s = tr.linear_state(t);
        if s.q < 0.1 {
            break;
        }
        let y = uv.sol.eval(t);
        du = du.max((s.p1 / s.q - y[3]).abs());
        dv = dv.max((s.p2 / s.q - y[4]).abs());
        n += 1;
    }
    Ok((du, dv, n))
}

fn suite_radon(seed: u64) -> Res<SuiteReport> {
    let t = Instant::now();
    let s = radon_samples(seed, 100)?;
    let du = s.iter().map(|x| x.dev_u).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    Ok(finish("radon", t, vec![Metric::below("max_dev_u", du, 1e-6), Metric::below("seconds", secs, 30.0)]))
}

// ---------------------------------------------------------------- conservation

#[derive(Debug, Clone, Serialize)]
pub struct DriftSample {
    pub d: u32,
    pub start: [f64; 2],
    pub integral_drift: f64,
    pub mass_drift: f64,
}

pub const CONSERVATION_STARTS: [[f64; 2]; 4] = [[0.3, 0.0], [0.0, -0.4], [-0.5, 0.1], [0.6, -0.2]];

/// Relative drift of the first integral and of (c − dG) r^d over ten periods
/// at tolerance 1e-10 (k = c = 1, m = 0).
pub fn conservation_samples() -> Res<Vec<DriftSample>> {
    let mut jobs = Vec::new();
    for d in [2, 3, 4] {
        for s in CONSERVATION_STARTS {
            jobs.push((d, s));
        }
    }
    jobs.par_iter()
        .map(|&(d, [f0, g0])| {
            let p = params(d, 1.0, 1.0);
            let period = characteristics::period_of_orbit(&p, f0, g0, 1e-10).map_err(numeric)?;
            let tr = characteristics::integrate_characteristic(&p, CharacteristicState::new(0.0, 1.0, f0, g0), 10.0 * period, 1e-10).map_err(numeric)?;
            let c0 = characteristics::first_integral(&p, f0, g0).map_err(numeric)?.value;
            let m0 = characteristics::conserved_mass(&p, 1.0, g0).map_err(numeric)?;
            let (mut dc, mut dm) = (0.0f64, 0.0f64);
            for s in tr.nodes() {
                let c = characteristics::first_integral(&p, s.F, s.G).map_err(numeric)?.value;
                let m = characteristics::conserved_mass(&p, s.r, s.G).map_err(numeric)?;
                dc = dc.max((c - c0).abs() / c0.abs());
                dm = dm.max((m - m0).abs() / m0.abs());
            }
            Ok(DriftSample {
                d,
                start: [f0, g0],
                integral_drift: dc,
                mass_drift: dm,
            })
        })
        .collect()
}

fn suite_conservation() -> Res<SuiteReport> {
    let t = Instant::now();
    let s = conservation_samples()?;
    let dc = s.iter().map(|x| x.integral_drift).fold(0.0, f64::max);
    let dm = s.iter().map(|x| x.mass_drift).fold(0.0, f64::max);
    Ok(finish("conservation", t, vec![Metric::below("first_integral_drift", dc, 1e-8), Metric::below("mass_drift", dm, 1e-8)]))
}

// ---------------------------------------------------------------- isochrony

/// Amplitudes of the isochrony check: 20 values in [0.05, 0.6].
pub fn isochrony_amplitudes() -> Vec<f64> {
    (0..20).map(|i| 0.05 + 0.55 * i as f64 / 19.0).collect()
}

/// Periods of the orbits through (A, 0) for k = c = 1, m = 0.
pub fn isochrony_periods(d: u32) -> Res<Vec<f64>> {
    let p = params(d, 1.0, 1.0);
    isochrony_amplitudes()
        .par_iter()
        .map(|&a| characteristics::period_of_orbit(&p, a, 0.0, 1e-12).map_err(numeric))
        .collect()
}

pub fn relative_spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (hi - lo) / mean
}

fn suite_isochrony() -> Res<SuiteReport> {
    let t = Instant::now();
    let p4 = isochrony_periods(4)?;
    let p3 = isochrony_periods(3)?;
    let lin = 2.0 * PI;
    let dev = p4.iter().map(|t| (t - lin).abs() / lin).fold(0.0, f64::max);
    Ok(finish(
        "isochrony",
        t,
        vec![
            Metric::below("d4_spread", relative_spread(&p4), 1e-6),
            Metric::below("d4_vs_linear_period", dev, 1e-6),
            Metric::above("d3_spread", relative_spread(&p3), 1e-3),
        ],
    ))
}

// ---------------------------------------------------------------- criterion grids

/// One (M0, v0) node of a criterion-versus-detector grid.
#[derive(Debug, Clone, Copy, Serialize)]
#[allow(non_snake_case)]
pub struct GridSample {
    pub M0: f64,
    pub v0: f64,
    pub G0: f64,
    pub value: f64,
    pub predicts_smooth: bool,
    pub detector_smooth: bool,
}

/// Exclusion band around the criterion boundary.
pub const BAND: f64 = 0.01;

fn agreement(s: &[GridSample]) -> (f64, usize) {
    let off: Vec<&GridSample> = s.iter().filter(|g| g.value.abs() >= BAND).collect();
    let ok = off.iter().filter(|g| g.predicts_smooth == g.detector_smooth).count();
    (if off.is_empty() { 0.0 } else { ok as f64 / off.len() as f64 }, off.len())
}

fn lin(a: f64, b: f64, n: usize, i: usize) -> f64 {
    a + (b - a) * i as f64 / (n - 1) as f64
}

/// c = 0, k = 1 zero-velocity grid over (M0, v0) ∈ [0.5, 2] × [−3, 1].
pub fn c0_grid(d: u32, n: usize) -> Res<Vec<GridSample>> {
    let p = params(d, 1.0, 0.0);
    let nodes: Vec<(f64, f64)> = (0..n * n).map(|k| (lin(0.5, 2.0, n, k / n), lin(-3.0, 1.0, n, k % n))).collect();
    nodes
        .par_iter()
        .map(|&(m0, v0)| {
            let g0 = -m0.powf(d as f64 / 2.0) / d as f64;
            let r = mcriteria::criterion_c0_zero_velocity(&p, g0, v0).map_err(numeric)?;
            Ok(GridSample {
                M0: m0,
                v0,
                G0: g0,
                value: r.value,
                predicts_smooth: r.smooth,
                detector_smooth: classify_smooth(&p, &InitialPoint::new(1.0, 0.0, g0, 0.0, v0))?,
            })
        })
        .collect()
}

fn suite_d4_c0() -> Res<SuiteReport> {
    let t = Instant::now();
    let g = c0_grid(4, 20)?;
    let (a, n) = agreement(&g);
    let secs = t.elapsed().as_secs_f64();
    Ok(finish(
        "d4-c0",
        t,
        vec![Metric::above("agreement", a, 1.0 - 1e-12), Metric::above("points", n as f64, 0.0), Metric::below("seconds", secs, 120.0)],
    ))
}

/// Largest relative residual of the closed-form first solution in the
/// second-order M-equation (c = 0, k = 1, zero velocity).
pub fn y1_residual(d: u32) -> Res<f64> {
    let mut worst = 0.0f64;
    for &m0 in &[0.5, 1.0, 2.0] {
        let pair = mcriteria::hypergeom_fundamental(d, m0).map_err(numeric)?;
        let ch = *pair.chart();
        for i in 0..=40 {
            let m = m0 * (0.02 + 0.96 * i as f64 / 40.0);
            let (y, y1, y2) = mcriteria::y1_closed_form(d, m0, m);
            let (s1, s2) = mcriteria::ode_y_coeffs(&ch, m).map_err(numeric)?;
            let scale = y2.abs() + (s1 * y1).abs() + (s2 * y).abs();
            worst = worst.max((y2 + s1 * y1 + s2 * y).abs() / scale.max(1e-300));
        }
    }
    Ok(worst)
}

/// Path minimum of q for each grid node, paired with the detector verdict.
pub fn path_minima(d: u32, grid: &[GridSample]) -> Res<Vec<(f64, bool)>> {
    let p = params(d, 1.0, 0.0);
    grid.par_iter()
        .map(|g| {
            let (q, _) = mcriteria::c0_zero_velocity_path_minimum(&p, g.G0, g.v0).map_err(numeric)?;
            Ok((q, g.detector_smooth))
        })
        .collect()
}

fn suite_hypergeom() -> Res<SuiteReport> {
    let t = Instant::now();
    let mut m = Vec::new();
    for d in [3, 5] {
        let g = c0_grid(d, 10)?;
        let (a, _) = agreement(&g);
        m.push(Metric::above(&format!("d{d}_agreement"), a, 1.0 - 1e-12));
        let pm = path_minima(d, &g)?;
        let off: Vec<_> = pm.iter().filter(|x| x.0.abs() >= BAND).collect();
        let ok = off.iter().filter(|x| (x.0 > 0.0) == x.1).count();
        m.push(Metric::above(&format!("d{d}_path_minimum_agreement"), ok as f64 / off.len() as f64, 1.0 - 1e-12));
        m.push(Metric::below(&format!("d{d}_y1_residual"), y1_residual(d)?, 1e-9));
    }
    Ok(finish("hypergeom", t, m))
}

/// Attractive d = 4 grid: M0 ∈ (0.1, 0.9) (interior nodes), v0 ∈ [−3, 1].
/// Returns the samples and the worst route disagreement.
pub fn heun_grid(n: usize) -> Res<(Vec<GridSample>, f64)> {
    let p = params(4, -1.0, 1.0);
    let m0s: Vec<f64> = (0..n).map(|i| 0.1 + 0.8 * (i + 1) as f64 / (n + 1) as f64).collect();
    let pairs: Vec<AttractivePair> = m0s.par_iter().map(|&m| AttractivePair::new(m).map_err(numeric)).collect::<Res<_>>()?;
    let route = pairs
        .par_iter()
        .map(|pr| pr.route_agreement(41).map_err(numeric))
        .collect::<Res<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let nodes: Vec<(usize, f64)> = (0..n * n).map(|k| (k / n, lin(-3.0, 1.0, n, k % n))).collect();
    let s = nodes
        .par_iter()
        .map(|&(i, v0)| {
            let m0 = m0s[i];
            let g0 = (1.0 - m0 * m0) / 4.0;
            let r = mcriteria::criterion_d4_attractive_with(&pairs[i], v0).map_err(numeric)?;
            Ok(GridSample {
                M0: m0,
                v0,
                G0: g0,
                value: r.criterion.value,
                predicts_smooth: r.criterion.smooth,
                detector_smooth: classify_smooth(&p, &InitialPoint::new(1.0, 0.0, g0, 0.0, v0))?,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    Ok((s, route))
}

fn suite_heun() -> Res<SuiteReport> {
    let t = Instant::now();
    let (g, route) = heun_grid(10)?;
    let (a, _) = agreement(&g);
    Ok(finish("heun", t, vec![Metric::below("route_disagreement", route, 1e-7), Metric::above("agreement", a, 1.0 - 1e-12)]))
}

// ---------------------------------------------------------------- separatrix

#[derive(Debug, Clone, Copy, Serialize)]
#[allow(non_snake_case)]
pub struct SeparatrixSample {
    pub F0: f64,
    pub G0: f64,
    /// Separatrix F at G0.
    pub F_sep: f64,
    pub below: bool,
    pub escape: Option<f64>,
    /// Distance from the stable node at the final time.
    pub final_distance: f64,
}

pub const SEPARATRIX_MARGIN: f64 = 1e-3;
const SEPARATRIX_T_END: f64 = 200.0;

/// Separatrix F at G for d = 3, k = −1, c = 1: the stable branch through
/// the saddle.
pub fn separatrix_f(p: &Params, g: f64) -> Res<f64> {
    let f2 = characteristics::separatrix_F2(p, g).map_err(numeric)?;
    Ok(-g.signum() * f2.max(0.0).sqrt() * if g == 0.0 { 0.0 } else { 1.0 })
}

/// `n` points below and `n` above the separatrix (d = 3, k = −1, c = 1).
pub fn separatrix_samples(seed: u64, n: usize) -> Res<Vec<SeparatrixSample>> {
    let p = params(3, -1.0, 1.0);
    let (fs, gs) = (1.0 / 3f64.sqrt(), 1.0 / 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for below in [true, false] {
        for _ in 0..n {
            let g0: f64 = rng.gen_range(-1.0..0.33);
            let off: f64 = SEPARATRIX_MARGIN + rng.gen_range(0.0..1.0);
            jobs.push((below, g0, off));
        }
    }
    jobs.par_iter()
        .map(|&(below, g0, off)| {
            let f_sep = separatrix_f(&p, g0)?;
            let f0 = if below { f_sep - off } else { f_sep + off };
            let tr = characteristics::integrate_characteristic(&p, CharacteristicState::new(0.0, 1.0, f0, g0), SEPARATRIX_T_END, 1e-10).map_err(numeric)?;
            let end = tr.state(tr.t_final());
            Ok(SeparatrixSample {
                F0: f0,
                G0: g0,
                F_sep: f_sep,
                below,
                escape: tr.escape,
                final_distance: (end.F - fs).hypot(end.G - gs),
            })
        })
        .collect()
}

fn suite_separatrix(seed: u64) -> Res<SuiteReport> {
    let t = Instant::now();
    let s = separatrix_samples(seed, 50)?;
    let below: Vec<_> = s.iter().filter(|x| x.below).collect();
    let above: Vec<_> = s.iter().filter(|x| !x.below).collect();
    let escaped = below.iter().filter(|x| x.escape.is_some()).count() as f64 / below.len() as f64;
    let worst = above.iter().map(|x| if x.escape.is_some() { f64::INFINITY } else { x.final_distance }).fold(0.0, f64::max);
    Ok(finish(
        "separatrix",
        t,
        vec![Metric::above("below_escape_fraction", escaped, 1.0 - 1e-12), Metric::below("above_node_distance", worst, 1e-6)],
    ))
}

// ---------------------------------------------------------------- plane structure

/// One plane of the d = 3, k = −1, c = 1 boundary study.
#[derive(Debug, Clone, Copy)]
pub struct PlaneDef {
    pub name: &'static str,
    pub x: Var,
    pub x_range: (f64, f64),
    pub y: Var,
    pub y_range: (f64, f64),
    pub base: InitialPoint,
}

/// Default planes; ranges bracket a single boundary curve.
pub fn fig3_planes() -> [PlaneDef; 4] {
    let (fs, gs) = (1.0 / 3f64.sqrt(), 1.0 / 3.0);
    [
        PlaneDef {
            name: "zero-velocity",
            x: Var::G0,
            x_range: (0.02, 0.32),
            y: Var::V0,
            y_range: (-3.0, 1.0),
            base: InitialPoint::new(1.0, 0.0, 0.0, 0.0, 0.0),
        },
        PlaneDef {
            name: "zero-field",
            x: Var::F0,
            x_range: (0.02, 1.5),
            y: Var::U0,
            y_range: (-3.0, 1.0),
            base: InitialPoint::new(1.0, 0.0, 0.0, 0.0, 0.0),
        },
        PlaneDef {
            name: "derivatives",
            x: Var::U0,
            x_range: (-3.0, 1.0),
            y: Var::V0,
            y_range: (-3.0, 1.0),
            base: InitialPoint::new(1.0, 0.0, 0.2, 0.0, 0.0),
        },
        PlaneDef {
            name: "node-control",
            x: Var::U0,
            x_range: (-3.0, 1.0),
            y: Var::V0,
            y_range: (-3.0, 1.0),
            base: InitialPoint::new(1.0, fs, gs, 0.0, 0.0),
        },
    ]
}

pub fn run_plane_def(def: &PlaneDef, n: usize, pol: &HorizonPolicy) -> Res<PlaneReport> {
    let p = params(3, -1.0, 1.0);
    let ax = |r: (f64, f64)| Axis { min: r.0, max: r.1, n };
    commands::run_plane(&p, pol, def.x, ax(def.x_range), def.y, ax(def.y_range), def.base, 10)
}

fn suite_fig3() -> Res<SuiteReport> {
    let t = Instant::now();
    let mut m = Vec::new();
    for def in fig3_planes() {
        let r = run_plane_def(&def, 41, &HorizonPolicy::default())?;
        let fit = r.boundary.fit.map(|f| f.max_residual).unwrap_or(f64::INFINITY);
        m.push(Metric::below(&format!("{}_fit_residual", def.name), fit, 0.02));
        if let Some(e) = r.exact_line {
            // one bisection bracket on a 41-node axis
            m.push(Metric::below(&format!("{}_exact_deviation", def.name), e.max_deviation, 1.0 / 40.0 / 1024.0));
        }
    }
    Ok(finish("fig3", t, m))
}

// ---------------------------------------------------------------- d = 1

#[derive(Debug, Clone, Copy, Serialize)]
#[allow(non_snake_case)]
pub struct D1Sample {
    pub F0: f64,
    pub G0: f64,
    pub c: f64,
    pub detector_smooth: bool,
}

/// Random (F0, G0, c) with k = 1, m = 0, zero derivatives.
pub fn d1_samples(seed: u64, n: usize) -> Res<Vec<D1Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let c: f64 = rng.gen_range(0.1..2.0);
            (rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..c), c)
        })
        .collect();
    jobs.par_iter()
        .map(|&(f0, g0, c)| {
            Ok(D1Sample {
                F0: f0,
                G0: g0,
                c,
                detector_smooth: classify_smooth(&params(1, 1.0, c), &InitialPoint::new(1.0, f0, g0, 0.0, 0.0))?,
            })
        })
        .collect()
}

fn suite_d1(seed: u64) -> Res<SuiteReport> {
    let t = Instant::now();
    let s = d1_samples(seed, 100)?;
    let off: Vec<_> = s.iter().filter(|x| (x.F0 * x.F0 - (x.c - 2.0 * x.G0)).abs() > 1e-6).collect();
    let ok = off.iter().filter(|x| x.detector_smooth == (x.F0 * x.F0 < x.c - 2.0 * x.G0)).count();
    Ok(finish("d1", t, vec![Metric::above("agreement", ok as f64 / off.len() as f64, 1.0 - 1e-12)]))
}

// ---------------------------------------------------------------- third order

#[derive(Debug, Clone, Serialize)]
pub struct ResidualSample {
    pub d: u32,
    pub k: f64,
    pub mu: f64,
    pub variable_c: bool,
    pub point: InitialPoint,
    pub max_abs: f64,
    pub samples: usize,
}

/// Random bounded trajectories; every third has μ > 0, every other a
/// Gaussian c(r).
pub fn third_order_samples(seed: u64, n: usize) -> Res<Vec<ResidualSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n {
        if i > 1000 * n {
            return Err(CliError::Numeric("no bounded sample found".into()));
        }
        let d = rng.gen_range(1..=4u32);
        let k = if rng.gen_bool(0.5) { rng.gen_range(0.3..1.5) } else { -rng.gen_range(0.3..1.5) };
        let mu = if out.len() % 3 == 0 { rng.gen_range(0.05..0.5) } else { 0.0 };
        let variable = out.len() % 2 == 0;
        let c0: f64 = rng.gen_range(0.5..1.5);
        let ip = InitialPoint::new(rng.gen_range(0.3..2.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.1), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        i += 1;
        let bg = if variable {
            Background::Profile(RadialProfile::builtin(Family::Gaussian { a: c0, sigma: 1.5 }).map_err(numeric)?)
        } else {
            Background::Constant(c0)
        };
        let p = Params::with_background(d, k, bg, 0.0, mu).map_err(numeric)?;
        let tr = linearization::integrate_coupled(&p, &ip, 10.0, 1e-10, LinearForm::Consistent).map_err(numeric)?;
        if tr.escape.is_some() {
            continue;
        }
        let r = linearization::third_order_residual(&tr, &p);
        out.push(ResidualSample {
            d,
            k,
            mu,
            variable_c: variable,
            point: ip,
            max_abs: r.max_abs,
            samples: r.samples,
        });
    }
    Ok(out)
}

fn suite_third_order(seed: u64) -> Res<SuiteReport> {
    let t = Instant::now();
    let s = third_order_samples(seed, 20)?;
    let worst = s.iter().map(|x| x.max_abs).fold(0.0, f64::max);
    Ok(finish("third-order", t, vec![Metric::below("max_residual", worst, 1e-6)]))
}

// ---------------------------------------------------------------- performance

/// Wall time of a 100 × 100 plane scan with default tolerances.
pub fn performance_seconds() -> Res<f64> {
    let t = Instant::now();
    run_plane_def(&fig3_planes()[0], 100, &HorizonPolicy::default())?;
    Ok(t.elapsed().as_secs_f64())
}

fn suite_performance() -> Res<SuiteReport> {
    let t = Instant::now();
    let s = performance_seconds()?;
    Ok(finish("performance", t, vec![Metric::below("scan_100x100_seconds", s, 60.0)]))
}

// ---------------------------------------------------------------- driver

pub fn run_suite(name: &str, seed: u64) -> Res<SuiteReport> {
    match name {
        "radon" => suite_radon(seed),
        "conservation" => suite_conservation(),
        "isochrony" => suite_isochrony(),
        "d4-c0" => suite_d4_c0(),
        "hypergeom" => suite_hypergeom(),
        "heun" => suite_heun(),
        "separatrix" => suite_separatrix(seed),
        "fig3" => suite_fig3(),
        "d1" => suite_d1(seed),
        "third-order" => suite_third_order(seed),
        "performance" => suite_performance(),
        other => Err(ConfigError::Invalid {
            field: "suite".into(),
            message: format!("unknown suite {other:?}; known: all, {}", SUITES.join(", ")),
        }
        .into()),
    }
}

pub fn run_named(name: &str, seed: u64) -> Res<Vec<SuiteReport>> {
    if name == "all" {
        SUITES.iter().map(|s| run_suite(s, seed)).collect()
    } else {
        Ok(vec![run_suite(name, seed)?])
    }
}

pub fn crossval_report(reports: &[SuiteReport]) -> Report {
    let mut out = Report::new("crossval", &reports);
    let mut t = Table::new("crossval", &["suite", "metric", "value", "relation", "limit", "pass"]);
    for r in reports {
        for m in &r.metrics {
            t.push(vec![r.suite.clone().into(), m.name.clone().into(), m.value.into(), m.relation.into(), m.limit.into(), m.pass.into()]);
        }
        out.summary.push(format!("{} {} ({:.1} s)", if r.pass { "PASS" } else { "FAIL" }, r.suite, r.seconds));
    }
    out.tables.push(t);
    out
}
