//! Dynamics of (r, F, G) along a single characteristic.
//!
//! The system is ṙ = F r, Ḟ = −F² − m − kG − μF, Ġ = c(r) F − d F G.
//! Besides raw integration this module provides the first integrals, the
//! saddle separatrix of the attractive case, and period/isochronicity tools
//! for the oscillatory case.

use crate::model::{ModelError, Params, Regime};
use crate::ode::{self, Control, DenseSolution, OdeError, Options};
use crate::quadrature;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// |F| or |G| beyond this value is treated as finite-time escape.
pub const ESCAPE_THRESHOLD: f64 = 1e6;

/// Default margin for separatrix comparisons.
pub const SEPARATRIX_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CharError {
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, state: Vec<f64>, reason: String },
    #[error("singular input: {0}")]
    Singular(String),
    #[error("wrong regime: {0}")]
    Regime(String),
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("orbit did not close within t = {t_max}")]
    NotPeriodic { t_max: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

impl<const N: usize> From<OdeError<N>> for CharError {
    fn from(e: OdeError<N>) -> Self {
        let (t, state) = e
            .last_state()
            .map(|(t, y)| (t, y.to_vec()))
            .unwrap_or((f64::NAN, Vec::new()));
        CharError::Integration {
            t,
            state,
            reason: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, CharError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CharacteristicState {
    pub t: f64,
    pub r: f64,
    pub F: f64,
    pub G: f64,
}

impl CharacteristicState {
    #[allow(non_snake_case)]
    pub fn new(t: f64, r: f64, F: f64, G: f64) -> Self {
        CharacteristicState { t, r, F, G }
    }

    fn to_array(self) -> [f64; 3] {
        [self.r, self.F, self.G]
    }
}

/// Right-hand side for y = [r, F, G].
pub fn rhs(p: &Params, y: &[f64; 3]) -> [f64; 3] {
    let [r, f, g] = *y;
    let (c, _) = p.c_at(r);
    [f * r, -f * f - p.m - p.k * g - p.mu * f, c * f - p.df() * f * g]
}

/// Integrator options for a user tolerance.
pub fn options_for(tol: f64) -> Options {
    Options::with_tol(tol, (tol * 1e-2).max(1e-15))
}

/// Dense trajectory of one characteristic.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sol: DenseSolution<3>,
    /// Time at which |F| or |G| crossed the escape threshold.
    pub escape: Option<f64>,
}

impl Trajectory {
    pub fn state(&self, t: f64) -> CharacteristicState {
        let [r, f, g] = self.sol.eval(t);
        CharacteristicState::new(t, r, f, g)
    }

    /// States at the start and at every accepted step.
    pub fn nodes(&self) -> Vec<CharacteristicState> {
        let mut out = Vec::with_capacity(self.sol.steps().len() + 1);
        let y0 = self.sol.eval(self.sol.t_start());
        out.push(CharacteristicState::new(self.sol.t_start(), y0[0], y0[1], y0[2]));
        for s in self.sol.steps() {
            out.push(CharacteristicState::new(s.t1, s.y1[0], s.y1[1], s.y1[2]));
        }
        out
    }

    pub fn t_final(&self) -> f64 {
        self.sol.t_final()
    }
}

fn escaped(y: &[f64]) -> bool {
    y.iter().any(|v| !v.is_finite()) || y[1].abs() > ESCAPE_THRESHOLD || y[2].abs() > ESCAPE_THRESHOLD
}

/// Integrate from `s0` to `t_end` (either direction), stopping early on escape.
pub fn integrate_characteristic(p: &Params, s0: CharacteristicState, t_end: f64, tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(CharError::Singular("tolerance must be positive".into()));
    }
    let opts = options_for(tol);
    let mut sol = DenseSolution::new(s0.t, s0.to_array());
    let mut escape = None;
    ode::integrate(|_, y| rhs(p, y), s0.t, s0.to_array(), t_end, &opts, |step| {
        sol.push(step);
        if escaped(&step.y1) {
            let level = |t: f64| {
                let y = step.eval(t);
                y[1].abs().max(y[2].abs()) - ESCAPE_THRESHOLD
            };
            escape = Some(if level(step.t0) < 0.0 && level(step.t1) > 0.0 {
                ode::find_root(level, step.t0, step.t1, 1e-12)
            } else {
                step.t1
            });
            return Control::Stop;
        }
        Control::Continue
    })?;
    Ok(Trajectory { sol, escape })
}

/// Which closed form a first-integral value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegralForm {
    D2Log,
    GeneralD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstIntegralConstant {
    pub value: f64,
    pub form: IntegralForm,
}

fn analytic_c(p: &Params, what: &str) -> Result<f64> {
    match p.c_const() {
        Some(c) if p.analytic_regime() => Ok(c),
        _ => Err(CharError::Regime(format!("{what} needs mu = 0 and constant c"))),
    }
}

/// First integral of the (F, G) system.
///
/// d = 2: (2F² + kc + 2m)/(2G − c) − k ln|2G − c|.
/// otherwise: ((F² + m)(d − 2) − k(2G − c)) / ((d − 2)|dG − c|^{2/d}).
#[allow(non_snake_case)]
pub fn first_integral(p: &Params, F: f64, G: f64) -> Result<FirstIntegralConstant> {
    let c = analytic_c(p, "first integral")?;
    let k = p.k;
    let d = p.df();
    if p.d == 2 {
        let s = 2.0 * G - c;
        if s == 0.0 {
            return Err(CharError::Singular("2G = c".into()));
        }
        let value = (2.0 * F * F + k * c + 2.0 * p.m) / s - k * s.abs().ln();
        return Ok(FirstIntegralConstant {
            value,
            form: IntegralForm::D2Log,
        });
    }
    let s = d * G - c;
    if s == 0.0 {
        return Err(CharError::Singular("dG = c".into()));
    }
    let value = ((F * F + p.m) * (d - 2.0) - k * (2.0 * G - c)) / ((d - 2.0) * s.abs().powf(2.0 / d));
    Ok(FirstIntegralConstant {
        value,
        form: IntegralForm::GeneralD,
    })
}

/// (c − dG) r^d, constant along characteristics for constant c.
#[allow(non_snake_case)]
pub fn conserved_mass(p: &Params, r: f64, G: f64) -> Result<f64> {
    let c = p
        .c_const()
        .ok_or_else(|| CharError::Regime("conserved mass needs constant c".into()))?;
    Ok((c - p.df() * G) * r.powi(p.d as i32))
}

fn separatrix_domain(p: &Params) -> Result<f64> {
    let c = analytic_c(p, "separatrix")?;
    if !(p.k < 0.0 && c > 0.0) {
        return Err(CharError::Regime("separatrix needs k < 0 and c > 0".into()));
    }
    if p.m != 0.0 {
        return Err(CharError::Regime("separatrix needs m = 0 (apply the equilibrium shift)".into()));
    }
    Ok(c)
}

/// F² along the separatrix through the saddle at the origin (d ≥ 3), for
/// G ≤ c/d. On the invariant line G = c/d it reaches the unstable node.
#[allow(non_snake_case)]
pub fn separatrix_F2(p: &Params, G: f64) -> Result<f64> {
    let c = separatrix_domain(p)?;
    if p.d == 2 {
        return Err(CharError::UnsupportedDimension(
            "d = 2 uses the logarithmic form, see separatrix_F2_d2".into(),
        ));
    }
    if p.d < 3 {
        return Err(CharError::UnsupportedDimension(format!("d = {} has no saddle separatrix", p.d)));
    }
    let d = p.df();
    if !(G <= c / d) {
        return Err(CharError::Singular("G must not exceed c/d".into()));
    }
    Ok(p.k * c / (d - 2.0) * ((1.0 - d * G / c).powf(2.0 / d) + 2.0 * G / c - 1.0))
}

/// d = 2 separatrix from the logarithmic first integral, selecting the level
/// through the origin.
#[allow(non_snake_case)]
pub fn separatrix_F2_d2(p: &Params, G: f64) -> Result<f64> {
    let c = separatrix_domain(p)?;
    if p.d != 2 {
        return Err(CharError::UnsupportedDimension("separatrix_F2_d2 is for d = 2".into()));
    }
    if !(G <= c / 2.0) {
        return Err(CharError::Singular("G must not exceed c/2".into()));
    }
    let k = p.k;
    let c0 = -k - k * c.ln();
    let s = 2.0 * G - c;
    if s == 0.0 {
        return Ok(-k * c / 2.0);
    }
    Ok(((c0 + k * s.abs().ln()) * s - k * c) / 2.0)
}

/// True iff F0 < −sign(G0) √(separatrix F²(G0)) − margin, i.e. the point lies
/// below the separatrix and escapes in finite time.
#[allow(non_snake_case)]
pub fn blows_up_by_separatrix(p: &Params, F0: f64, G0: f64, margin: f64) -> Result<bool> {
    let f2 = if p.d == 2 { separatrix_F2_d2(p, G0)? } else { separatrix_F2(p, G0)? };
    let sign = if G0 > 0.0 {
        1.0
    } else if G0 < 0.0 {
        -1.0
    } else {
        0.0
    };
    Ok(F0 < -sign * f2.max(0.0).sqrt() - margin)
}

fn require_center(p: &Params) -> Result<()> {
    match p.regime() {
        Some(Regime::Center) => Ok(()),
        Some(_) => Err(CharError::Regime("requires ck + md > 0 (center)".into())),
        None => Err(CharError::Regime("requires mu = 0 and constant c".into())),
    }
}

/// Liénard damping f(F) = (2 + d) F.
#[allow(non_snake_case)]
pub fn lienard_f(p: &Params, F: f64) -> f64 {
    (2.0 + p.df()) * F
}

/// Liénard restoring force g(F) = (ck + md) F + d F³.
#[allow(non_snake_case)]
pub fn lienard_g(p: &Params, F: f64) -> Result<f64> {
    let disc = p
        .discriminant()
        .ok_or_else(|| CharError::Regime("requires constant c".into()))?;
    Ok(disc * F + p.df() * F.powi(3))
}

/// τ(y) = (∫₀^y s f(s) ds)² − y³ (g(y) − g'(0) y), with the integral done by
/// quadrature; vanishes identically iff the center is isochronous.
pub fn tau(p: &Params, y: f64) -> Result<f64> {
    require_center(p)?;
    let disc = p.discriminant().unwrap_or(0.0);
    let int = quadrature::integrate(|s| s * lienard_f(p, s), 0.0, y, 1e-15, 1e-13, 200)
        .map_err(|e| CharError::Quadrature(e.to_string()))?
        .value;
    let g = lienard_g(p, y)?;
    Ok(int * int - y.powi(3) * (g - disc * y))
}

/// Isochronous center iff (2 + d)² = 9d, i.e. d ∈ {1, 4}.
pub fn is_isochronous(p: &Params) -> Result<bool> {
    require_center(p)?;
    let d = p.d as u64;
    Ok((2 + d) * (2 + d) == 9 * d)
}

/// Small-amplitude period 2π/√(ck + md).
pub fn linear_period(p: &Params) -> Result<f64> {
    require_center(p)?;
    Ok(2.0 * std::f64::consts::PI / p.discriminant().unwrap_or(f64::NAN).sqrt())
}

/// Return time of the orbit through (F0, G0) to the line through the start
/// point normal to the flow, located on dense output to 1e−12 in time.
#[allow(non_snake_case)]
pub fn period_of_orbit(p: &Params, F0: f64, G0: f64, tol: f64) -> Result<f64> {
    require_center(p)?;
    let t_lin = linear_period(p)?;
    let [_, df, dg] = rhs(p, &[1.0, F0, G0]);
    let speed2 = df * df + dg * dg;
    if speed2 == 0.0 {
        return Err(CharError::Singular("start point is an equilibrium".into()));
    }
    let section = |y: &[f64; 3]| df * (y[1] - F0) + dg * (y[2] - G0);
    let t_max = 200.0 * t_lin;
    let opts = options_for(tol.min(1e-10));
    let mut been_negative = false;
    let mut period = None;
    let res = ode::integrate(|_, y| rhs(p, y), 0.0, [1.0, F0, G0], t_max, &opts, |step| {
        if escaped(&step.y1) {
            return Control::Stop;
        }
        let s0 = section(&step.y0);
        let s1 = section(&step.y1);
        if s1 < 0.0 {
            been_negative = true;
        }
        if been_negative && s0 < 0.0 && s1 >= 0.0 {
            let t = ode::find_root(|t| section(&step.eval(t)), step.t0, step.t1, 1e-12);
            period = Some(t);
            return Control::Stop;
        }
        Control::Continue
    });
    res?;
    period.ok_or(CharError::NotPeriodic { t_max })
}

/// Bounded-orbit test for d = 1: F0² < k(c − 2G0); for c = 0 the conservative
/// reading "F0 ≥ 0 or F0² < −2G0" (k > 0).
#[allow(non_snake_case)]
pub fn bounded_d1(p: &Params, F0: f64, G0: f64) -> Result<bool> {
    let c = analytic_c(p, "d = 1 criterion")?;
    if p.d != 1 {
        return Err(CharError::UnsupportedDimension("criterion is for d = 1".into()));
    }
    if p.m != 0.0 {
        return Err(CharError::Regime("criterion needs m = 0 (apply the equilibrium shift)".into()));
    }
    let core = F0 * F0 < p.k * (c - 2.0 * G0);
    if c == 0.0 && p.k > 0.0 {
        return Ok(F0 >= 0.0 || core);
    }
    Ok(core)
}

/// Divergence data (D, λ, J) with D = u + dF, λ = v + dG and
/// 2J = 2(d − 1) D F − (d − 1) d F².
#[allow(non_snake_case)]
pub fn reconstruct_divergences(F: f64, G: f64, u: f64, v: f64, d: u32) -> (f64, f64, f64) {
    let df = d as f64;
    let big_d = u + df * F;
    let lambda = v + df * G;
    let j = (df - 1.0) * big_d * F - 0.5 * (df - 1.0) * df * F * F;
    (big_d, lambda, j)
}
