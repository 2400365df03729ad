//! Coupled nonlinear and linear integration, q-zero detection and verdicts.
//!
//! Along a characteristic the derivative data (u, v) = (r F_r, r G_r) obey a
//! Riccati system. Writing u = p1/q, v = p2/q linearizes it:
//!
//! q̇ = p1, ṗ1 = −(2F + μ) p1 − k p2 + a q, ṗ2 = (c − dG) p1 − dF p2 + c'(r) r F q,
//!
//! with (q, p1, p2)(0) = (1, u0, v0). The solution stays smooth along the
//! characteristic exactly as long as q > 0.

use crate::characteristics::{self, CharError, ESCAPE_THRESHOLD, SEPARATRIX_MARGIN};
use crate::model::{InitialPoint, ModelError, Params, Regime};
use crate::ode::{self, Control, DenseSolution, Step};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinError {
    #[error(transparent)]
    Char(#[from] CharError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("degenerate criterion: {0}")]
    Degenerate(String),
    #[error("wrong regime: {0}")]
    Regime(String),
}

type Result<T> = std::result::Result<T, LinError>;

/// Coefficient a(t) of q in the ṗ1 equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearForm {
    /// a = 0, obtained by differentiating the F equation in r.
    #[default]
    Consistent,
    /// a = −d(m + μF).
    AsPrinted,
}

impl LinearForm {
    /// (a, ȧ) given F and Ḟ.
    #[allow(non_snake_case)]
    fn a(self, p: &Params, F: f64, Fdot: f64) -> (f64, f64) {
        match self {
            LinearForm::Consistent => (0.0, 0.0),
            LinearForm::AsPrinted => (-p.df() * (p.m + p.mu * F), -p.df() * p.mu * Fdot),
        }
    }
}

/// Root tolerance in time for q zeros.
pub const ROOT_TOL: f64 = 1e-10;
/// q_min below this without a sign change is reported as a boundary case.
pub const TOUCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearState {
    pub q: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Right-hand side for y = [r, F, G, q, p1, p2].
pub fn coupled_rhs(p: &Params, form: LinearForm, y: &[f64; 6]) -> [f64; 6] {
    let [r, f, g, q, p1, p2] = *y;
    let (c, dc) = p.c_at(r);
    let fdot = -f * f - p.m - p.k * g - p.mu * f;
    let (a, _) = form.a(p, f, fdot);
    [
        f * r,
        fdot,
        c * f - p.df() * f * g,
        p1,
        -(2.0 * f + p.mu) * p1 - p.k * p2 + a * q,
        (c - p.df() * g) * p1 - p.df() * f * p2 + dc * r * f * q,
    ]
}

fn initial_state(ip: &InitialPoint) -> [f64; 6] {
    [ip.r0, ip.F0, ip.G0, 1.0, ip.u0, ip.v0]
}

/// Dense trajectory of the coupled system.
#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    pub sol: DenseSolution<6>,
    pub escape: Option<f64>,
    pub form: LinearForm,
}

impl CoupledTrajectory {
    pub fn eval(&self, t: f64) -> [f64; 6] {
        self.sol.eval(t)
    }

    pub fn linear_state(&self, t: f64) -> LinearState {
        let y = self.sol.eval(t);
        LinearState {
            q: y[3],
            p1: y[4],
            p2: y[5],
        }
    }
}

fn escaped(y: &[f64; 6], threshold: f64) -> bool {
    y.iter().any(|v| !v.is_finite()) || y[1].abs() > threshold || y[2].abs() > threshold
}

fn escape_time(step: &Step<6>, threshold: f64) -> f64 {
    let level = |t: f64| {
        let y = step.eval(t);
        y[1].abs().max(y[2].abs()) - threshold
    };
    if level(step.t0) < 0.0 && level(step.t1) > 0.0 {
        ode::find_root(level, step.t0, step.t1, 1e-12)
    } else {
        step.t1
    }
}

/// Integrate characteristic and linear system together up to `horizon`,
/// stopping only on escape of (F, G).
pub fn integrate_coupled(p: &Params, ip: &InitialPoint, horizon: f64, tol: f64, form: LinearForm) -> Result<CoupledTrajectory> {
    if !(horizon > 0.0) {
        return Err(LinError::Degenerate("horizon must be positive".into()));
    }
    let y0 = initial_state(ip);
    let mut sol = DenseSolution::new(0.0, y0);
    let mut escape = None;
    ode::integrate(
        |_, y| coupled_rhs(p, form, y),
        0.0,
        y0,
        horizon,
        &characteristics::options_for(tol),
        |step| {
            sol.push(step);
            if escaped(&step.y1, ESCAPE_THRESHOLD) {
                escape = Some(escape_time(step, ESCAPE_THRESHOLD));
                return Control::Stop;
            }
            Control::Continue
        },
    )
    .map_err(CharError::from)?;
    Ok(CoupledTrajectory { sol, escape, form })
}

/// Result of scanning q for zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QZero {
    pub t_star: Option<f64>,
    pub q_min: f64,
    /// q came within [`TOUCH_TOL`] of zero without changing sign.
    pub boundary: bool,
}

const SUBSAMPLES: usize = 6;

/// Earliest sign change of q inside one step, plus the sampled minimum.
fn scan_step(step: &Step<6>) -> (Option<f64>, f64) {
    let mut t_prev = step.t0;
    let mut q_prev = step.y0[3];
    let mut q_min = q_prev.min(step.y1[3]);
    for i in 1..=SUBSAMPLES {
        let t = step.t0 + (step.t1 - step.t0) * i as f64 / SUBSAMPLES as f64;
        let q = if i == SUBSAMPLES { step.y1[3] } else { step.eval(t)[3] };
        q_min = q_min.min(q);
        if q_prev > 0.0 && q <= 0.0 {
            let root = ode::find_root(|s| step.eval(s)[3], t_prev, t, ROOT_TOL);
            return (Some(root), q_min);
        }
        t_prev = t;
        q_prev = q;
    }
    (None, q_min)
}

/// Earliest sign change of q, refined to [`ROOT_TOL`] in time.
pub fn detect_q_zero(traj: &CoupledTrajectory) -> QZero {
    let mut q_min = traj.sol.eval(traj.sol.t_start())[3];
    for step in traj.sol.steps() {
        let (root, m) = scan_step(step);
        q_min = q_min.min(m);
        if let Some(t) = root {
            return QZero {
                t_star: Some(t),
                q_min: q_min.min(0.0),
                boundary: false,
            };
        }
    }
    QZero {
        t_star: None,
        q_min,
        boundary: q_min < TOUCH_TOL,
    }
}

/// Direct integration of the Riccati system for (u, v).
#[derive(Debug, Clone)]
pub struct DirectUv {
    /// State [r, F, G, u, v].
    pub sol: DenseSolution<5>,
    /// Time bracket (last state below threshold, first above) if (u, v) escaped.
    pub escape: Option<(f64, f64)>,
}

/// Integrate (r, F, G, u, v) until `t_end` or until |u| or |v| exceeds
/// `threshold`.
pub fn direct_uv(p: &Params, ip: &InitialPoint, t_end: f64, tol: f64, form: LinearForm, threshold: f64) -> Result<DirectUv> {
    let f = |y: &[f64; 5]| -> [f64; 5] {
        let [r, fv, g, u, v] = *y;
        let (c, dc) = p.c_at(r);
        let fdot = -fv * fv - p.m - p.k * g - p.mu * fv;
        let (a, _) = form.a(p, fv, fdot);
        [
            fv * r,
            fdot,
            c * fv - p.df() * fv * g,
            -u * u - (2.0 * fv + p.mu) * u - p.k * v + a,
            -u * v + (c - p.df() * g) * u - p.df() * fv * v + dc * r * fv,
        ]
    };
    let y0 = [ip.r0, ip.F0, ip.G0, ip.u0, ip.v0];
    let mut sol = DenseSolution::new(0.0, y0);
    let mut escape = None;
    let res = ode::integrate(
        |_, y| f(y),
        0.0,
        y0,
        t_end,
        &characteristics::options_for(tol),
        |step| {
            let big = |y: &[f64; 5]| y.iter().any(|v| !v.is_finite()) || y[3].abs() > threshold || y[4].abs() > threshold;
            if big(&step.y1) {
                escape = Some((step.t0, step.t1));
                return Control::Stop;
            }
            sol.push(step);
            Control::Continue
        },
    );
    match res {
        Ok(_) => {}
        // Blow-up of u drives the step size to zero; report it as escape.
        Err(e) => match e.last_state() {
            Some((t, _)) if escape.is_none() => escape = Some((t, t)),
            _ => return Err(LinError::Char(e.into())),
        },
    }
    Ok(DirectUv { sol, escape })
}

/// Residual of the scalar third-order equation satisfied by q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub samples: usize,
}

/// Perturbation of q and its first two derivatives at time t, used for
/// negative controls.
pub type Perturbation<'a> = &'a dyn Fn(f64) -> [f64; 3];

/// Evaluate q⃛ + A2 q̈ + A1 q̇ + A0 q along the trajectory with q̇ = p1 and
/// q̈ = ṗ1 from the system, q⃛ by fourth-order central differences of ṗ1.
pub fn third_order_residual(traj: &CoupledTrajectory, p: &Params) -> ResidualReport {
    third_order_residual_with(traj, p, None)
}

pub fn third_order_residual_with(traj: &CoupledTrajectory, p: &Params, perturb: Option<Perturbation>) -> ResidualReport {
    let form = traj.form;
    let d = p.df();
    let t0 = traj.sol.t_start();
    let t1 = traj.sol.t_final();
    let h = 1e-2f64.min((t1 - t0).abs() / 10.0);
    let q2 = |t: f64| -> f64 {
        let y = traj.sol.eval(t);
        let base = coupled_rhs(p, form, &y)[4];
        base + perturb.map(|f| f(t)[2]).unwrap_or(0.0)
    };
    let mut max_abs: f64 = 0.0;
    let mut samples = 0;
    for step in traj.sol.steps() {
        let t = 0.5 * (step.t0 + step.t1);
        if t - 2.0 * h <= t0 || t + 2.0 * h >= t1 {
            continue;
        }
        let y = traj.sol.eval(t);
        let [r, f, g, q, p1, _] = y;
        let dy = coupled_rhs(p, form, &y);
        let (c, dc) = p.c_at(r);
        let fdot = dy[1];
        let (a, adot) = form.a(p, f, fdot);
        let pert = perturb.map(|pf| pf(t)).unwrap_or([0.0; 3]);
        let (q0, qd, qdd) = (q + pert[0], p1 + pert[1], dy[4] + pert[2]);
        let q3 = (-q2(t + 2.0 * h) + 8.0 * q2(t + h) - 8.0 * q2(t - h) + q2(t - 2.0 * h)) / (12.0 * h);
        let a2 = (2.0 + d) * f + p.mu;
        let a1 = 2.0 * fdot - a + p.k * (c - d * g) + d * f * (2.0 * f + p.mu);
        let a0 = -adot + p.k * dc * r * f - d * f * a;
        let res = q3 + a2 * qdd + a1 * qd + a0 * q0;
        max_abs = max_abs.max(res.abs());
        samples += 1;
    }
    ResidualReport { max_abs, samples }
}

/// How long to integrate before giving a smooth-to-horizon verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonPolicy {
    /// Overrides every regime default when set.
    pub horizon: Option<f64>,
    /// Center regime: number of linear periods 2π/√(ck + md).
    pub center_periods: f64,
    /// Saddle-node regime (algebraic convergence).
    pub saddle_node_time: f64,
    /// Node regime: limit on the search for a tail certificate.
    pub node_time: f64,
    /// μ > 0 or variable c.
    pub non_analytic_time: f64,
    pub tol: f64,
    pub escape_threshold: f64,
    pub separatrix_margin: f64,
    pub form: LinearForm,
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy {
            horizon: None,
            center_periods: 50.0,
            saddle_node_time: 1e4,
            node_time: 200.0,
            non_analytic_time: 100.0,
            tol: 1e-10,
            escape_threshold: ESCAPE_THRESHOLD,
            separatrix_margin: SEPARATRIX_MARGIN,
            form: LinearForm::Consistent,
        }
    }
}

impl HorizonPolicy {
    pub fn horizon_for(&self, p: &Params) -> f64 {
        if let Some(h) = self.horizon {
            return h;
        }
        match p.regime() {
            Some(Regime::Center) => self.center_periods * 2.0 * std::f64::consts::PI / p.discriminant().unwrap_or(1.0).sqrt(),
            Some(Regime::SaddleNode) => self.saddle_node_time,
            Some(Regime::Node) => self.node_time,
            None => self.non_analytic_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    SmoothCertified,
    SmoothToHorizon,
    BlowUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    QZero,
    TrajectoryEscape,
    SeparatrixCertificate,
    AnalyticCriterion,
    NodeTail,
}

/// Classification of one characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BlowupVerdict {
    pub r0: f64,
    pub F0: f64,
    pub G0: f64,
    pub u0: f64,
    pub v0: f64,
    pub outcome: Outcome,
    pub mechanism: Option<Mechanism>,
    pub t_star: Option<f64>,
    pub q_min: f64,
    pub horizon: f64,
    pub tail_bound: Option<f64>,
    pub boundary: bool,
}

impl BlowupVerdict {
    pub fn is_smooth(&self) -> bool {
        self.outcome != Outcome::BlowUp
    }
}

/// Stable-node data used by the tail certificate.
#[derive(Debug, Clone, Copy)]
struct NodeTail {
    f_star: f64,
    g_star: f64,
    w: f64,
}

const TAIL_THETA: f64 = 0.5;

impl NodeTail {
    fn for_params(p: &Params, form: LinearForm) -> Option<NodeTail> {
        if p.regime() != Some(Regime::Node) {
            return None;
        }
        if form == LinearForm::AsPrinted && p.m != 0.0 {
            return None;
        }
        let c = p.c_const()?;
        let f_star = (-p.m - p.k * c / p.df()).sqrt();
        Some(NodeTail {
            f_star,
            g_star: c / p.df(),
            w: p.k.abs() / (TAIL_THETA * f_star),
        })
    }

    /// Bound on |q(∞) − q(t)| if the state is inside the invariant box.
    fn tail(&self, p: &Params, y: &[f64; 6]) -> Option<f64> {
        let n = (y[1] - self.f_star).abs().max(self.w * (y[2] - self.g_star).abs());
        if n > self.f_star / 4.0 {
            return None;
        }
        let rho = ((2.0 - TAIL_THETA) * self.f_star - 2.0 * n).min(p.df() * (self.f_star - 2.0 * n));
        let pn = y[4].abs().max(self.w * y[5].abs());
        Some(2.0 * pn / rho)
    }
}

/// Full classification pipeline for one seed.
pub fn classify_point(p: &Params, ip: &InitialPoint, policy: &HorizonPolicy) -> Result<BlowupVerdict> {
    let horizon = policy.horizon_for(p);
    let mut verdict = BlowupVerdict {
        r0: ip.r0,
        F0: ip.F0,
        G0: ip.G0,
        u0: ip.u0,
        v0: ip.v0,
        outcome: Outcome::SmoothToHorizon,
        mechanism: None,
        t_star: None,
        q_min: 1.0,
        horizon,
        tail_bound: None,
        boundary: false,
    };

    let separatrix = p.analytic_regime()
        && p.k < 0.0
        && p.m == 0.0
        && p.d >= 3
        && p.c_const().map(|c| c > 0.0 && ip.G0 < c / p.df()).unwrap_or(false)
        && characteristics::blows_up_by_separatrix(p, ip.F0, ip.G0, policy.separatrix_margin)?;

    let node = NodeTail::for_params(p, policy.form);
    let y0 = initial_state(ip);
    let mut q_min = 1.0f64;
    let mut t_star = None;
    let mut escape = None;
    let mut tail = None;
    let mut certified = false;
    let threshold = policy.escape_threshold;
    let run = ode::integrate(
        |_, y| coupled_rhs(p, policy.form, y),
        0.0,
        y0,
        // escape below the separatrix happens in finite time
        if separatrix { horizon.max(1e3) } else { horizon },
        &characteristics::options_for(policy.tol),
        |step| {
            let (root, m) = scan_step(step);
            q_min = q_min.min(m);
            if let Some(t) = root {
                t_star = Some(t);
                return Control::Stop;
            }
            if escaped(&step.y1, threshold) {
                escape = Some(escape_time(step, threshold));
                return Control::Stop;
            }
            if let Some(nt) = &node {
                if let Some(b) = nt.tail(p, &step.y1) {
                    tail = Some(b);
                    if step.y1[3] - b > 0.0 && q_min > 0.0 {
                        certified = true;
                        return Control::Stop;
                    }
                }
            }
            Control::Continue
        },
    );
    if let Err(e) = run {
        // A collapsing step size right after a sign change of q or a fast
        // escape is reported through the last state.
        match e.last_state() {
            Some((t, y)) if y[1].abs() > 1e3 || y[2].abs() > 1e3 => escape = Some(t),
            _ => return Err(LinError::Char(e.into())),
        }
    }
    verdict.q_min = q_min;
    verdict.tail_bound = tail;
    if let Some(t) = t_star {
        verdict.outcome = Outcome::BlowUp;
        verdict.mechanism = Some(if separatrix { Mechanism::SeparatrixCertificate } else { Mechanism::QZero });
        verdict.t_star = Some(t);
        verdict.q_min = q_min.min(0.0);
    } else if let Some(t) = escape {
        verdict.outcome = Outcome::BlowUp;
        verdict.mechanism = Some(if separatrix { Mechanism::SeparatrixCertificate } else { Mechanism::TrajectoryEscape });
        verdict.t_star = Some(t);
    } else if separatrix {
        verdict.outcome = Outcome::BlowUp;
        verdict.mechanism = Some(Mechanism::SeparatrixCertificate);
    } else if certified {
        verdict.outcome = Outcome::SmoothCertified;
        verdict.mechanism = Some(Mechanism::NodeTail);
    } else {
        verdict.boundary = q_min < TOUCH_TOL;
    }
    Ok(verdict)
}

/// Value and verdict of an analytic criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub value: f64,
    pub smooth: bool,
    /// value == 0: counted as non-smooth and flagged.
    pub boundary: bool,
}

impl CriterionReport {
    pub fn from_value(value: f64) -> Self {
        CriterionReport {
            value,
            smooth: value > 0.0,
            boundary: value == 0.0,
        }
    }
}

/// q(∞) for data sitting at the stable node (F*, G*):
/// 1 + u0/(2F*) − k v0/(2 d F*²).
pub fn equilibrium_criterion(p: &Params, u0: f64, v0: f64) -> Result<CriterionReport> {
    let c = match p.c_const() {
        Some(c) if p.analytic_regime() => c,
        _ => return Err(LinError::Regime("needs mu = 0 and constant c".into())),
    };
    let f2 = -p.m - p.k * c / p.df();
    if !(f2 > 0.0) {
        return Err(LinError::Degenerate("no stable node (md + ck >= 0)".into()));
    }
    let fs = f2.sqrt();
    Ok(CriterionReport::from_value(1.0 + u0 / (2.0 * fs) - p.k * v0 / (2.0 * p.df() * f2)))
}

/// Closed-form d = 1 criterion: the orbits of (F, G) and of the divergence
/// pair (D, λ) = (u + F, v + G) must both stay bounded.
pub fn d1_criterion(p: &Params, ip: &InitialPoint) -> Result<bool> {
    let (dd, lambda) = ip.divergences(1);
    Ok(characteristics::bounded_d1(p, ip.F0, ip.G0)? && characteristics::bounded_d1(p, dd, lambda)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_criterion_arithmetic() {
        let p = Params::new(3, -1.0, 1.0, 0.0, 0.0).unwrap();
        let r = equilibrium_criterion(&p, 0.0, -2.0).unwrap();
        assert!(r.value.abs() < 1e-15);
        assert!(!r.smooth);
        let r = equilibrium_criterion(&p, -1.0, 0.0).unwrap();
        assert!((2.0 * r.value - (2.0 - 3f64.sqrt())).abs() < 1e-15);
        assert!(r.smooth);
        let centre = Params::new(3, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(equilibrium_criterion(&centre, 0.0, 0.0), Err(LinError::Degenerate(_))));
    }

    #[test]
    fn zero_data_keeps_q_one() {
        let p = Params::new(3, 1.0, 1.0, 0.0, 0.0).unwrap();
        let ip = InitialPoint::new(1.0, 0.3, 0.1, 0.0, 0.0);
        let tr = integrate_coupled(&p, &ip, 20.0, 1e-10, LinearForm::Consistent).unwrap();
        for s in tr.sol.steps() {
            assert_eq!(s.y1[3], 1.0);
        }
    }
}
