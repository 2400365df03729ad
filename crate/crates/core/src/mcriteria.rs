//! Smoothness criteria in the M-chart.
//!
//! With M = (c − dG)^{2/d} one has Ṁ = −2FM, and along the (F, G) orbit
//! F² is an explicit function of M. Eliminating time turns the linear
//! system for (q, p1, ṗ1) into
//!
//! dq/dM = −P/(2FM), dP/dM = −R/(2FM), dR/dM = (Q2 R + Q1 P)/(2FM),
//!
//! and P solves Y'' + S1 Y' + S2 Y = 0 with
//! S1 = (F²)'/(2F²) − d/(2M), S2 = Q1/(4F²M²). For zero initial velocity
//! the limit q(∞) = 1 + C2 ∫₀^{M0} Ȳ2/(2ξF) dξ decides smoothness, where Ȳ2
//! is the solution vanishing at M0 and C2 = k v0 / lim 2M0 F Ȳ2'.

use crate::characteristics::{self, CharError};
use crate::linearization::{self, CriterionReport, LinearForm};
use crate::model::{ModelError, Params};
use crate::ode::{self, Control, DenseSolution, Options};
use crate::quadrature;
use crate::special::{self, HeunEvaluator, HeunParams, Hyp2F1Params, SpecialError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MError {
    #[error("point is outside the half-plane G < c/d")]
    OutOfHalfPlane,
    #[error("wrong regime: {0}")]
    Regime(String),
    #[error("regular singular point at M = {0} (F² = 0)")]
    Singular(f64),
    #[error("limit extrapolation did not converge (last estimates {0}, {1})")]
    LimitFailure(f64, f64),
    #[error("fundamental solutions are numerically dependent (Wronskian {0:e})")]
    Degenerate(f64),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Char(#[from] CharError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid input: {0}")]
    Input(String),
}

type Result<T> = std::result::Result<T, MError>;

fn integ<const N: usize>(e: ode::OdeError<N>) -> MError {
    MError::Integration(e.to_string())
}

/// The M-chart of one (F, G) orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct MChart {
    pub d: u32,
    pub k: f64,
    pub c: f64,
    /// First-integral constant C_d.
    pub cd: f64,
    pub M0: f64,
    pub F0: f64,
}

/// Build the chart for constant c, μ = 0, m = 0 (shifted), d ≥ 3, G0 < c/d.
#[allow(non_snake_case)]
pub fn m_chart(p: &Params, F0: f64, G0: f64) -> Result<MChart> {
    let c = match p.c_const() {
        Some(c) if p.analytic_regime() => c,
        _ => return Err(MError::Regime("needs mu = 0 and constant c".into())),
    };
    if p.m != 0.0 {
        return Err(MError::Regime("needs m = 0 (apply the equilibrium shift)".into()));
    }
    if p.d < 3 {
        return Err(MError::Regime("the M-chart needs d >= 3".into()));
    }
    let d = p.df();
    if !(G0 < c / d) {
        return Err(MError::OutOfHalfPlane);
    }
    let M0 = (c - d * G0).powf(2.0 / d);
    let cd = characteristics::first_integral(p, F0, G0)?.value;
    Ok(MChart {
        d: p.d,
        k: p.k,
        c,
        cd,
        M0,
        F0,
    })
}

impl MChart {
    fn df(&self) -> f64 {
        self.d as f64
    }

    /// F² along the orbit as a function of M.
    pub fn f2(&self, m: f64) -> f64 {
        // the δ form avoids cancellation near M0 but loses M itself near 0
        if self.F0 == 0.0 && m > 0.5 * self.M0 {
            self.f2_delta(self.M0 - m)
        } else {
            let d = self.df();
            let a = 2.0 * self.k / (d * (d - 2.0));
            self.cd * m - a * m.powf(d / 2.0) - self.k * self.c / d
        }
    }

    /// F² at M = M0 − δ, accurate for small δ when F0 = 0.
    pub fn f2_delta(&self, delta: f64) -> f64 {
        let d = self.df();
        let m = self.M0 - delta;
        if self.F0 != 0.0 {
            return self.f2(m);
        }
        let a = 2.0 * self.k / (d * (d - 2.0));
        let beta = d / 2.0 - 1.0;
        // M0^β − M^β = −M0^β expm1(β ln(1 − δ/M0))
        let gap = -self.M0.powf(beta) * (beta * (-delta / self.M0).ln_1p()).exp_m1();
        a * m * gap - self.k * self.c / d * delta / self.M0
    }

    pub fn f2_prime(&self, m: f64) -> f64 {
        let d = self.df();
        let cd = if self.F0 == 0.0 {
            2.0 * self.k * self.M0.powf(d / 2.0 - 1.0) / (d * (d - 2.0)) + self.k * self.c / (d * self.M0)
        } else {
            self.cd
        };
        cd - self.k * m.powf(d / 2.0 - 1.0) / (d - 2.0)
    }

    /// F on the branch where M decreases (F ≥ 0).
    pub fn f(&self, m: f64) -> f64 {
        self.f2(m).max(0.0).sqrt()
    }

    /// G as a function of M.
    #[allow(non_snake_case)]
    pub fn G(&self, m: f64) -> f64 {
        (self.c - m.powf(self.df() / 2.0)) / self.df()
    }

    pub fn q1(&self, m: f64) -> f64 {
        let d = self.df();
        2.0 * (d - 1.0) * self.f2(m) - self.k * (d + 2.0) * self.G(m) + self.k * self.c
    }

    pub fn q2(&self, m: f64) -> f64 {
        (self.df() + 2.0) * self.f(m)
    }

    /// Zero of F² above M0 where a decreasing-F orbit turns, if any.
    pub fn turning_point(&self) -> Option<f64> {
        let mut hi = self.M0 * 2.0 + 1.0;
        if self.f2(self.M0) < 0.0 {
            return None;
        }
        for _ in 0..200 {
            if self.f2(hi) < 0.0 {
                let lo = if self.f2(self.M0) == 0.0 { self.M0 * (1.0 + 1e-12) } else { self.M0 };
                if self.f2(lo) <= 0.0 {
                    return Some(self.M0);
                }
                return Some(ode::find_root(|m| self.f2(m), lo, hi, 1e-15 * hi));
            }
            hi *= 2.0;
        }
        None
    }
}

/// Coefficients (S1, S2) of the second-order equation for Y = P.
pub fn ode_y_coeffs(chart: &MChart, m: f64) -> Result<(f64, f64)> {
    let f2 = chart.f2(m);
    if f2 == 0.0 || m == 0.0 {
        return Err(MError::Singular(m));
    }
    let s1 = chart.f2_prime(m) / (2.0 * f2) - chart.df() / (2.0 * m);
    let s2 = chart.q1(m) / (4.0 * f2 * m * m);
    Ok((s1, s2))
}

/// (S1, S2) at M = M0 − δ, avoiding cancellation in F² near M0.
pub fn ode_y_coeffs_delta(chart: &MChart, delta: f64) -> Result<(f64, f64)> {
    let m = chart.M0 - delta;
    let f2 = chart.f2_delta(delta);
    if f2 == 0.0 || m == 0.0 {
        return Err(MError::Singular(m));
    }
    let s1 = chart.f2_prime(m) / (2.0 * f2) - chart.df() / (2.0 * m);
    let q1 = 2.0 * (chart.df() - 1.0) * f2 - chart.k * (chart.df() + 2.0) * chart.G(m) + chart.k * chart.c;
    Ok((s1, q1 / (4.0 * f2 * m * m)))
}

/// A fundamental pair (Y1, Ȳ2) on (0, M0] with Ȳ2(M0) = 0.
pub trait FundamentalPair {
    fn chart(&self) -> &MChart;
    /// (Y1, Y1').
    fn y1(&self, m: f64) -> Result<(f64, f64)>;
    /// (Ȳ2, Ȳ2').
    fn ybar2(&self, m: f64) -> Result<(f64, f64)>;
    /// Coefficient B of Ȳ2 ≈ B √(M0 − M) near M0.
    fn ybar2_sqrt_coefficient(&self) -> f64;
}

/// Closed-form Y1 = (M/M0)(d (M/M0)^{(d−2)/2} − 2) with its two derivatives.
#[allow(non_snake_case)]
pub fn y1_closed_form(d: u32, M0: f64, m: f64) -> (f64, f64, f64) {
    let df = d as f64;
    let beta = (df - 2.0) / 2.0;
    let x = m / M0;
    let z = x.powf(beta);
    let v = x * (df * z - 2.0);
    let d1 = (df * (1.0 + beta) * z - 2.0) / M0;
    let d2 = df * beta * (1.0 + beta) * x.powf(beta - 1.0) / (M0 * M0);
    (v, d1, d2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HypKind {
    D3,
    General { ratio: f64 },
}

/// Hypergeometric pair for k = 1, c = 0, F0 = 0.
#[derive(Debug, Clone)]
pub struct HypergeomPair {
    chart: MChart,
    beta: f64,
    sigma: f64,
    kind: HypKind,
    /// √w coefficient of the unnormalized second solution at w = 0.
    raw_root: f64,
}

/// Parameters of the hypergeometric factor of the second solution.
fn y2_params(d: u32) -> (f64, f64, f64) {
    let df = d as f64;
    ((df - 4.0) / (2.0 * (df - 2.0)), 2.0, 2.0 - 1.0 / (df - 2.0))
}

#[allow(non_snake_case)]
pub fn hypergeom_fundamental(d: u32, M0: f64) -> Result<HypergeomPair> {
    if d < 3 {
        return Err(MError::Regime("the hypergeometric pair needs d >= 3".into()));
    }
    if !(M0 > 0.0 && M0.is_finite()) {
        return Err(MError::Input("M0 must be positive".into()));
    }
    let df = d as f64;
    let beta = (df - 2.0) / 2.0;
    let chart = MChart {
        d,
        k: 1.0,
        c: 0.0,
        cd: 2.0 * M0.powf(beta) / (df * (df - 2.0)),
        M0,
        F0: 0.0,
    };
    let (kind, raw_root) = if d == 3 {
        (HypKind::D3, M0 * M0.powf(0.25))
    } else {
        let (a, b, c) = y2_params(d);
        let s = special::gauss_2f1_split(a, b, c, 0.0)?;
        let pre = M0.powf((df - 1.0) / 2.0) * M0.powf(beta / 2.0);
        let y2_m0 = pre * s.singular;
        let ratio = y2_m0 / (df - 2.0);
        (HypKind::General { ratio }, pre * s.regular)
    };
    // Ȳ2 ≈ raw_root √w with √w ≈ √(β/M0) √(M0 − M); lim k 2M0 F Ȳ2' has the
    // sign of −raw_root, so σ makes that limit positive.
    let sigma = if raw_root > 0.0 { -1.0 } else { 1.0 };
    Ok(HypergeomPair {
        chart,
        beta,
        sigma,
        kind,
        raw_root,
    })
}

impl HypergeomPair {
    /// Unnormalized second solution before subtracting the Y1 component.
    fn raw(&self, m: f64) -> Result<(f64, f64)> {
        let d = self.chart.df();
        let m0 = self.chart.M0;
        let z = (m / m0).powf(self.beta);
        let w = 1.0 - z;
        let dw_dm = -self.beta * z / m;
        let sw = w.max(0.0).sqrt();
        match self.kind {
            HypKind::D3 => {
                let pre = m * m0.powf(0.25);
                let hp = Hyp2F1Params::new(-0.5, 2.0, 1.5, w);
                let h = special::gauss_2f1(hp)?;
                let hd = special::gauss_2f1_deriv(hp)?;
                let s = sw * h;
                let sd = if sw > 0.0 { h / (2.0 * sw) + sw * hd } else { f64::INFINITY };
                Ok((pre * s, m0.powf(0.25) * s + pre * sd * dw_dm))
            }
            HypKind::General { .. } => {
                let (a, b, c) = y2_params(self.chart.d);
                let pre = m.powf((d - 1.0) / 2.0) * m0.powf(self.beta / 2.0);
                let dpre = (d - 1.0) / (2.0 * m) * pre;
                let (s, sd) = if z <= 0.5 {
                    let hp = Hyp2F1Params::new(a, b, c, z);
                    let h = special::gauss_2f1(hp)?;
                    let hd = special::gauss_2f1_deriv(hp)?;
                    (sw * h, h / (2.0 * sw) - sw * hd)
                } else {
                    let sp = special::gauss_2f1_split(a, b, c, w)?;
                    let s = sw * sp.regular + sp.singular;
                    let sd = if sw > 0.0 {
                        sp.regular / (2.0 * sw) + sw * sp.regular_dw + sp.singular_dw
                    } else {
                        f64::INFINITY
                    };
                    (s, sd)
                };
                Ok((pre * s, dpre * s + pre * sd * dw_dm))
            }
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl FundamentalPair for HypergeomPair {
    fn chart(&self) -> &MChart {
        &self.chart
    }

    fn y1(&self, m: f64) -> Result<(f64, f64)> {
        let (v, d1, _) = y1_closed_form(self.chart.d, self.chart.M0, m);
        Ok((v, d1))
    }

    fn ybar2(&self, m: f64) -> Result<(f64, f64)> {
        let (r, rd) = self.raw(m)?;
        let (v, vd) = match self.kind {
            HypKind::D3 => (r, rd),
            HypKind::General { ratio } => {
                let (y, yd) = self.y1(m)?;
                (r - ratio * y, rd - ratio * yd)
            }
        };
        Ok((self.sigma * v, self.sigma * vd))
    }

    fn ybar2_sqrt_coefficient(&self) -> f64 {
        self.sigma * self.raw_root * (self.beta / self.chart.M0).sqrt()
    }
}

/// The criterion constant C2 = k v0 / lim 2 M0 F Ȳ2'.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionConstant {
    pub value: f64,
    /// lim_{M→M0} 2 M0 F(M) Ȳ2'(M).
    pub limit: f64,
    pub error: f64,
}

/// Relative agreement required between the last two orders of the final
/// Richardson row.
pub const C2_ACCEPT: f64 = 1e-8;

/// Richardson extrapolation of 2 M0 F Ȳ2' over M = M0 (1 − 2^{−j} ε0),
/// j = 0..6, eliminating powers δ^{1/2}, δ, δ^{3/2}, ...
pub fn compute_c2<P: FundamentalPair + ?Sized>(pair: &P, v0: f64) -> Result<CriterionConstant> {
    let chart = *pair.chart();
    let m0 = chart.M0;
    let eps0 = 1e-2;
    let levels = 7;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for j in 0..levels {
        let delta = eps0 * 0.5f64.powi(j as i32);
        let m = m0 * (1.0 - delta);
        let (_, d) = pair.ybar2(m)?;
        let g = 2.0 * m0 * chart.f(m) * d;
        let mut row = vec![g];
        for i in 1..=j {
            let fac = 2f64.powf(i as f64 / 2.0);
            let prev = &table[j - 1];
            let v = (fac * row[i - 1] - prev[i - 1]) / (fac - 1.0);
            row.push(v);
        }
        table.push(row);
    }
    let last = table[levels - 1][levels - 1];
    let before = table[levels - 1][levels - 2];
    let err = (last - before).abs();
    if !(err <= C2_ACCEPT * last.abs()) || !last.is_finite() {
        return Err(MError::LimitFailure(before, last));
    }
    Ok(CriterionConstant {
        value: if v0 == 0.0 { 0.0 } else { chart.k * v0 / last },
        limit: last,
        error: err * (chart.k * v0 / (last * last)).abs(),
    })
}

/// Analytic value of lim 2 M0 F Ȳ2' = −M0 B √(−(F²)'(M0)).
pub fn c2_limit_analytic<P: FundamentalPair + ?Sized>(pair: &P) -> f64 {
    let chart = pair.chart();
    -chart.M0 * pair.ybar2_sqrt_coefficient() * (-chart.f2_prime(chart.M0)).sqrt()
}

/// ∫₀^{M0} Ȳ2(ξ)/(2ξF(ξ)) dξ with ξ = s².
pub fn criterion_integral<P: FundamentalPair + ?Sized>(pair: &P) -> Result<(f64, f64)> {
    criterion_integral_from(pair, 0.0)
}

/// ∫_{M}^{M0} Ȳ2(ξ)/(2ξF(ξ)) dξ.
pub fn criterion_integral_from<P: FundamentalPair + ?Sized>(pair: &P, m: f64) -> Result<(f64, f64)> {
    let chart = *pair.chart();
    let top = chart.M0.sqrt();
    let failure = std::cell::RefCell::new(None);
    let res = quadrature::integrate(
        |s| {
            let xi = s * s;
            match pair.ybar2(xi) {
                Ok((y, _)) => y / (s * chart.f(xi)),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        m.max(0.0).sqrt(),
        top,
        1e-10,
        1e-12,
        2000,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let r = res.map_err(|e| MError::Quadrature(e.to_string()))?;
    Ok((r.value, r.error))
}

/// Smallest value of q(M) = 1 + C2 ∫_M^{M0} Ȳ2/(2ξF) dξ along the path
/// M0 → 0, with the M where it is attained.
///
/// The criterion tests only the endpoint M = 0; when Ȳ2 changes sign on
/// (0, M0) the path minimum can be lower. Sign changes are located on a
/// 400-point grid in √M.
pub fn path_minimum<P: FundamentalPair + ?Sized>(pair: &P, v0: f64) -> Result<(f64, f64)> {
    let c2 = compute_c2(pair, v0)?.value;
    let top = pair.chart().M0.sqrt();
    let y = |s: f64| pair.ybar2(s * s).map(|v| v.0);
    let n = 400;
    let mut candidates = vec![0.0];
    let mut prev = (top * 0.5 / n as f64, y(top * 0.5 / n as f64)?);
    for i in 1..n {
        let s = top * (i as f64 + 0.5) / n as f64;
        let cur = (s, y(s)?);
        if prev.1.signum() != cur.1.signum() {
            let root = ode::find_root(|s| pair.ybar2(s * s).map(|v| v.0).unwrap_or(f64::NAN), prev.0, cur.0, 1e-14);
            candidates.push(root * root);
        }
        prev = cur;
    }
    let mut best = (f64::INFINITY, 0.0);
    for m in candidates {
        let q = 1.0 + c2 * criterion_integral_from(pair, m)?.0;
        if q < best.0 {
            best = (q, m);
        }
    }
    Ok(best)
}

/// Report of an M-chart criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCriterionReport {
    pub value: f64,
    pub smooth: bool,
    pub boundary: bool,
    pub c2: f64,
    pub c2_error: f64,
    pub integral: f64,
    pub integral_error: f64,
}

/// 1 + C2 I for a prepared pair.
pub fn criterion_from_pair<P: FundamentalPair + ?Sized>(pair: &P, v0: f64) -> Result<MCriterionReport> {
    let c2 = compute_c2(pair, v0)?;
    let (integral, ierr) = criterion_integral(pair)?;
    let value = 1.0 + c2.value * integral;
    let r = CriterionReport::from_value(value);
    Ok(MCriterionReport {
        value,
        smooth: r.smooth,
        boundary: r.boundary,
        c2: c2.value,
        c2_error: c2.error,
        integral,
        integral_error: ierr + (c2.error * integral).abs(),
    })
}

/// Zero-velocity criterion for c = 0, k > 0, d ≥ 3.
///
/// The data are normalized to k = 1 (G → kG, v → kv). For d = 4 the
/// integrand reduces to the constant σ and the closed form is returned.
#[allow(non_snake_case)]
pub fn criterion_c0_zero_velocity(p: &Params, G0: f64, v0: f64) -> Result<MCriterionReport> {
    let (d, M0, v) = c0_normalize(p, G0, v0)?;
    if d == 4 {
        let r = criterion_d4_c0_zero_velocity(M0, v);
        return Ok(MCriterionReport {
            value: r.value,
            smooth: r.smooth,
            boundary: r.boundary,
            c2: 2.0 * v / M0.powi(3),
            c2_error: 0.0,
            integral: -M0,
            integral_error: 0.0,
        });
    }
    criterion_from_pair(&hypergeom_fundamental(d, M0)?, v)
}

/// Same as [`criterion_c0_zero_velocity`] but always through the
/// hypergeometric pair and quadrature, including d = 4.
#[allow(non_snake_case)]
pub fn criterion_c0_zero_velocity_numeric(p: &Params, G0: f64, v0: f64) -> Result<MCriterionReport> {
    let (d, M0, v) = c0_normalize(p, G0, v0)?;
    criterion_from_pair(&hypergeom_fundamental(d, M0)?, v)
}

#[allow(non_snake_case)]
fn c0_normalize(p: &Params, G0: f64, v0: f64) -> Result<(u32, f64, f64)> {
    if !(p.analytic_regime() && p.c_const() == Some(0.0) && p.m == 0.0 && p.k > 0.0) {
        return Err(MError::Regime("needs c = 0, m = 0, mu = 0 and k > 0".into()));
    }
    if p.d < 3 {
        return Err(MError::Regime("needs d >= 3".into()));
    }
    let g = p.k * G0;
    if !(g < 0.0) {
        return Err(MError::OutOfHalfPlane);
    }
    let d = p.df();
    Ok((p.d, (-d * g).powf(2.0 / d), p.k * v0))
}

/// [`path_minimum`] for the c = 0 zero-velocity problem.
#[allow(non_snake_case)]
pub fn c0_zero_velocity_path_minimum(p: &Params, G0: f64, v0: f64) -> Result<(f64, f64)> {
    let (d, M0, v) = c0_normalize(p, G0, v0)?;
    path_minimum(&hypergeom_fundamental(d, M0)?, v)
}

/// Closed form for d = 4, k = 1, c = 0, zero velocity: 1 − 2 v0/M0².
#[allow(non_snake_case)]
pub fn criterion_d4_c0_zero_velocity(M0: f64, v0: f64) -> CriterionReport {
    CriterionReport::from_value(1.0 - 2.0 * v0 / (M0 * M0))
}

/// Integrate (q, P, R) in s = √M from `s_from` down to `s_to` on a branch
/// with F > 0.
fn integrate_q_in_s(chart: &MChart, s_from: f64, s_to: f64, y0: [f64; 3], opts: &Options) -> Result<DenseSolution<3>> {
    let rhs = |s: f64, y: &[f64; 3]| -> [f64; 3] {
        let m = s * s;
        let f = chart.f(m);
        let fs = f * s;
        let [_, pp, r] = *y;
        [-pp / fs, -r / fs, (chart.q2(m) * r + chart.q1(m) * pp) / fs]
    };
    ode::solve_dense(rhs, s_from, y0, s_to, opts).map_err(integ)
}

/// Integrate (q, P, R) in M between two points of a branch with F > 0.
pub fn integrate_q_in_m(chart: &MChart, m_from: f64, m_to: f64, y0: [f64; 3], tol: f64) -> Result<DenseSolution<3>> {
    let rhs = |m: f64, y: &[f64; 3]| -> [f64; 3] {
        let f = chart.f(m);
        let den = 2.0 * f * m;
        let [_, pp, r] = *y;
        [-pp / den, -r / den, (chart.q2(m) * r + chart.q1(m) * pp) / den]
    };
    ode::solve_dense(rhs, m_from, y0, m_to, &characteristics::options_for(tol)).map_err(integ)
}

/// One monotone-in-M piece of the q(M) curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QBranch {
    pub m: Vec<f64>,
    pub q: Vec<f64>,
    /// Sign of the second divided differences, if constant.
    pub convexity: Option<i8>,
}

/// q as a function of M for d = 4, k = 1, c = 0.
#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct QOfM {
    pub M0: f64,
    pub M_plus: Option<f64>,
    pub branches: Vec<QBranch>,
    /// q extrapolated to M → 0 (t → ∞).
    pub q_limit: f64,
    pub q_min: f64,
    pub verdict: CriterionReport,
    pub convexity_preserved: bool,
}

fn convexity_sign(m: &[f64], q: &[f64]) -> Option<i8> {
    let scale = q.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut sign = 0i8;
    for i in 1..m.len().saturating_sub(1) {
        let (h0, h1) = (m[i] - m[i - 1], m[i + 1] - m[i]);
        if h0.abs() < 1e-9 * scale || h1.abs() < 1e-9 * scale {
            continue;
        }
        let dd = ((q[i + 1] - q[i]) / h1 - (q[i] - q[i - 1]) / h0) / (m[i + 1] - m[i - 1]);
        // second differences below the integration noise carry no sign
        let noise = 1e-7 * scale / (h0.abs().min(h1.abs()) * (m[i + 1] - m[i - 1]).abs());
        if dd.abs() <= noise {
            continue;
        }
        let s = if dd > 0.0 { 1 } else { -1 };
        if sign == 0 {
            sign = s;
        } else if sign != s {
            return None;
        }
    }
    Some(sign)
}

/// Build q(M) for d = 4, k = 1, c = 0 with data (M0, F0, u0, v0).
///
/// The part of the orbit near a turning point of M (F = 0) is followed in
/// time with the coupled system; once M has dropped below 0.9 of its largest
/// value the remaining descent to M = 0 is integrated in s = √M.
#[allow(non_snake_case)]
pub fn q_of_m_d4_general(M0: f64, F0: f64, u0: f64, v0: f64) -> Result<QOfM> {
    if !(M0 > 0.0) {
        return Err(MError::Input("M0 must be positive".into()));
    }
    let p = Params::new(4, 1.0, 0.0, 0.0, 0.0)?;
    let G0 = -M0 * M0 / 4.0;
    let chart = m_chart(&p, F0, G0)?;
    let m_plus = if F0 < 0.0 { Some((4.0 * F0 * F0 + M0 * M0) / M0) } else { None };
    let m_top = m_plus.unwrap_or(M0);
    let m_switch = 0.9 * m_top;
    let tol = 1e-12;

    // Time phase until the orbit descends below m_switch with F > 0.
    let y0 = [1.0, F0, G0, 1.0, u0, v0];
    let mut rising: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut falling: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    if F0 < 0.0 {
        rising = (vec![M0], vec![1.0]);
    } else {
        falling = (vec![M0], vec![1.0]);
    }
    let mut handoff: Option<[f64; 6]> = None;
    let m_of = |y: &[f64; 6]| (-4.0 * y[2]).max(0.0).sqrt();
    let opts = characteristics::options_for(tol);
    let needs_time = F0 <= 0.0 || M0 > m_switch;
    if needs_time {
        ode::integrate(
            |_, y| linearization::coupled_rhs(&p, LinearForm::Consistent, y),
            0.0,
            y0,
            1e6,
            &opts,
            |step| {
                let y = step.y1;
                let m = m_of(&y);
                if y[1] < 0.0 {
                    rising.0.push(m);
                    rising.1.push(y[3]);
                } else {
                    falling.0.push(m);
                    falling.1.push(y[3]);
                }
                if y[1] > 0.0 && m <= m_switch {
                    handoff = Some(y);
                    return Control::Stop;
                }
                Control::Continue
            },
        )
        .map_err(integ)?;
    } else {
        handoff = Some(y0);
    }
    let h = handoff.ok_or_else(|| MError::Integration("orbit did not reach the descending branch".into()))?;
    let m_h = m_of(&h);
    let rhs_h = linearization::coupled_rhs(&p, LinearForm::Consistent, &h);
    let start = [h[3], h[4], rhs_h[4]];
    let s_h = m_h.sqrt();
    let s_min = 1e-4 * m_top.sqrt();
    let sopts = Options::with_tol(1e-12, 1e-14);
    let sol = integrate_q_in_s(&chart, s_h, s_min, start, &sopts)?;
    for st in sol.steps() {
        falling.0.push(st.t1 * st.t1);
        falling.1.push(st.y1[0]);
    }
    let yl = sol.y_final();
    let ml = s_min * s_min;
    let dq_ds = -yl[1] / (chart.f(ml) * s_min);
    let q_limit = yl[0] - s_min * dq_ds;

    let mut branches = Vec::new();
    if rising.0.len() > 1 {
        let conv = convexity_sign(&rising.0, &rising.1);
        branches.push(QBranch {
            m: rising.0,
            q: rising.1,
            convexity: conv,
        });
    }
    let conv = convexity_sign(&falling.0, &falling.1);
    branches.push(QBranch {
        m: falling.0,
        q: falling.1,
        convexity: conv,
    });
    let q_min = branches
        .iter()
        .flat_map(|b| b.q.iter().copied())
        .fold(q_limit, f64::min);
    let verdict = CriterionReport::from_value(q_min.min(q_limit));
    let convexity_preserved = branches.iter().all(|b| b.convexity.is_some());
    Ok(QOfM {
        M0,
        M_plus: m_plus,
        branches,
        q_limit,
        q_min,
        verdict,
        convexity_preserved,
    })
}

/// Attractive d = 4 case (k = −1, c = 1): F² = (M − M0)(M − 1/M0)/4.
///
/// Route (a): with x = 1 − M/M0 and a = 1/M0²,
/// Y1 = M² Hl(1 − a, −(1 + a)/2; 0, 2, 1/2, 2; x) and
/// Ȳ2 = M² x^{1/2} Hl(1 − a, 3/4 − 3a/2; 1/2, 5/2, 3/2, 2; x).
/// Route (b): Frobenius solutions at M = 0 (exponents 1 and 2), continued
/// towards M0 in s = √(M0 − M).
#[derive(Debug, Clone)]
pub struct AttractivePair {
    chart: MChart,
    heun1: HeunEvaluator,
    heun2: HeunEvaluator,
    frob: FrobeniusPair,
    route: Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Heun,
    Frobenius,
}

/// Largest x = 1 − M/M0 served by the Heun route; below M = 0.02 M0 the
/// Frobenius series takes over.
const HEUN_X_MAX: f64 = 0.98;
const FROB_START: f64 = 0.02;
const FROB_TERMS: usize = 30;

#[derive(Debug, Clone)]
struct FrobeniusPair {
    m0: f64,
    /// series coefficients for exponents 1 and 2
    series: [Vec<f64>; 2],
    /// continuation in s = √(M0 − M): state (Y, Y_s)
    dense: [DenseSolution<2>; 2],
    s_min: f64,
    /// values and s-slopes at s = 0 for each solution
    at_m0: [(f64, f64); 2],
    /// combination coefficients for Y1 and Ȳ2
    y1_comb: (f64, f64),
    y2_comb: (f64, f64),
}

fn series_eval(c: &[f64], rho: f64, m: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    let mut mp = m.powf(rho);
    for (n, cn) in c.iter().enumerate() {
        let e = n as f64 + rho;
        v += cn * mp;
        d += cn * e * mp / m;
        mp *= m;
    }
    (v, d)
}

impl FrobeniusPair {
    fn new(chart: &MChart) -> Result<Self> {
        let m0 = chart.M0;
        let b = m0 + 1.0 / m0;
        // 1/f with f = 1 − bM + M²
        let n = FROB_TERMS + 2;
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e[1] = b;
        for i in 2..n {
            e[i] = b * e[i - 1] - e[i - 2];
        }
        // p(M) = M S1 = M(2M − b)/(2f) − 2, r(M) = M² S2 = (2 − 1.5 b M)/f
        let mut pc = vec![0.0; n];
        let mut rc = vec![0.0; n];
        for i in 0..n {
            let mut pv = 0.0;
            if i >= 1 {
                pv += -b / 2.0 * e[i - 1];
            }
            if i >= 2 {
                pv += e[i - 2];
            }
            pc[i] = pv;
            let mut rv = 2.0 * e[i];
            if i >= 1 {
                rv -= 1.5 * b * e[i - 1];
            }
            rc[i] = rv;
        }
        pc[0] -= 2.0;
        let c1 = special::frobenius_coefficients(&pc, &rc, 1.0, FROB_TERMS, 1e-10)?;
        let c2 = special::frobenius_coefficients(&pc, &rc, 2.0, FROB_TERMS, 1e-10)?;
        let m_a = FROB_START * m0;
        let s_a = (m0 - m_a).sqrt();
        let s_min = 1e-5 * m0.sqrt();
        let chart = *chart;
        let rhs = move |s: f64, y: &[f64; 2]| -> [f64; 2] {
            let (s1, s2) = ode_y_coeffs_delta(&chart, s * s).unwrap_or((f64::NAN, f64::NAN));
            [y[1], (1.0 / s + 2.0 * s * s1) * y[1] - 4.0 * s * s * s2 * y[0]]
        };
        let opts = Options::with_tol(1e-13, 1e-15);
        let mut dense = Vec::with_capacity(2);
        let mut at_m0 = Vec::with_capacity(2);
        for (c, rho) in [(&c1, 1.0), (&c2, 2.0)] {
            let (v, dm) = series_eval(c, rho, m_a);
            let sol = ode::solve_dense(rhs, s_a, [v, -2.0 * s_a * dm], s_min, &opts).map_err(integ)?;
            let [y, ys] = sol.y_final();
            let yss = rhs(s_min, &[y, ys])[1];
            at_m0.push((y - s_min * ys + 0.5 * s_min * s_min * yss, ys - s_min * yss));
            dense.push(sol);
        }
        let at_m0 = [at_m0[0], at_m0[1]];
        // Y1 has no √(M0 − M) term and Y1(M0) = M0²; Ȳ2 vanishes at M0 with
        // Ȳ2 ≈ M0^{3/2} √(M0 − M).
        let ((va, sa), (vb, sb)) = (at_m0[0], at_m0[1]);
        let y1_raw = (sb, -sa);
        let y1_val = y1_raw.0 * va + y1_raw.1 * vb;
        let y1_comb = (y1_raw.0 * m0 * m0 / y1_val, y1_raw.1 * m0 * m0 / y1_val);
        let y2_raw = (vb, -va);
        let y2_slope = y2_raw.0 * sa + y2_raw.1 * sb;
        let target = m0.powf(1.5);
        let y2_comb = (y2_raw.0 * target / y2_slope, y2_raw.1 * target / y2_slope);
        let mut dense = dense.into_iter();
        let d0 = dense.next().ok_or_else(|| MError::Integration("missing solution".into()))?;
        let d1 = dense.next().ok_or_else(|| MError::Integration("missing solution".into()))?;
        Ok(FrobeniusPair {
            m0,
            series: [c1, c2],
            dense: [d0, d1],
            s_min,
            at_m0,
            y1_comb,
            y2_comb,
        })
    }

    /// (Y, Y') of the two basis solutions at M.
    fn basis(&self, m: f64) -> [(f64, f64); 2] {
        let mut out = [(0.0, 0.0); 2];
        for i in 0..2 {
            let rho = (i + 1) as f64;
            out[i] = if m <= FROB_START * self.m0 {
                series_eval(&self.series[i], rho, m)
            } else {
                let s = (self.m0 - m).max(0.0).sqrt();
                let (y, ys) = if s < self.s_min {
                    let (v, sl) = self.at_m0[i];
                    let [_, ys1] = self.dense[i].eval(self.s_min);
                    let curv = (ys1 - sl) / self.s_min;
                    (v + sl * s + 0.5 * curv * s * s, sl + curv * s)
                } else {
                    let y = self.dense[i].eval(s);
                    (y[0], y[1])
                };
                (y, if s > 0.0 { -ys / (2.0 * s) } else { f64::NEG_INFINITY * ys.signum() })
            };
        }
        out
    }

    fn combine(&self, comb: (f64, f64), m: f64) -> (f64, f64) {
        let [a, b] = self.basis(m);
        (comb.0 * a.0 + comb.1 * b.0, comb.0 * a.1 + comb.1 * b.1)
    }
}

impl AttractivePair {
    #[allow(non_snake_case)]
    pub fn new(M0: f64) -> Result<Self> {
        if !(M0 > 0.0 && M0 < 1.0) {
            return Err(MError::Input("M0 must lie in (0, 1)".into()));
        }
        let p = Params::new(4, -1.0, 1.0, 0.0, 0.0)?;
        let chart = m_chart(&p, 0.0, (1.0 - M0 * M0) / 4.0)?;
        let a = 1.0 / (M0 * M0);
        let h1 = HeunParams {
            a: 1.0 - a,
            q: -(1.0 + a) / 2.0,
            alpha: 0.0,
            beta: 2.0,
            gamma: 0.5,
            delta: 2.0,
        };
        let h2 = HeunParams {
            a: 1.0 - a,
            q: 0.75 - 1.5 * a,
            alpha: 0.5,
            beta: 2.5,
            gamma: 1.5,
            delta: 2.0,
        };
        let heun1 = HeunEvaluator::new(h1, HEUN_X_MAX)?;
        let heun2 = HeunEvaluator::new(h2, HEUN_X_MAX)?;
        let frob = FrobeniusPair::new(&chart)?;
        Ok(AttractivePair {
            chart,
            heun1,
            heun2,
            frob,
            route: Route::Heun,
        })
    }

    /// Select the route used for (Y1, Ȳ2) on the Heun-served interval.
    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn heun_y1(&self, m: f64) -> Result<(f64, f64)> {
        let m0 = self.chart.M0;
        let x = 1.0 - m / m0;
        let (w, wd) = self.heun1.eval(x)?;
        // dY/dM = 2M w − (M²/M0) w'
        Ok((m * m * w, 2.0 * m * w - m * m / m0 * wd))
    }

    pub fn heun_ybar2(&self, m: f64) -> Result<(f64, f64)> {
        let m0 = self.chart.M0;
        let x = (1.0 - m / m0).max(0.0);
        let (h, hd) = self.heun2.eval(x)?;
        let sx = x.sqrt();
        let val = m * m * sx * h;
        let dx = if sx > 0.0 {
            -2.0 * m * m0 * sx * h + m * m * (h / (2.0 * sx) + sx * hd)
        } else {
            f64::INFINITY
        };
        Ok((val, -dx / m0))
    }

    pub fn frobenius_y1(&self, m: f64) -> (f64, f64) {
        self.frob.combine(self.frob.y1_comb, m)
    }

    pub fn frobenius_ybar2(&self, m: f64) -> (f64, f64) {
        self.frob.combine(self.frob.y2_comb, m)
    }

    /// Largest relative difference between the routes for (Y1, Ȳ2) on
    /// (0.05, 0.95)·M0.
    pub fn route_agreement(&self, samples: usize) -> Result<f64> {
        let m0 = self.chart.M0;
        let mut worst: f64 = 0.0;
        for i in 0..samples {
            let m = m0 * (0.05 + 0.9 * i as f64 / (samples - 1) as f64);
            let (h1, _) = self.heun_y1(m)?;
            let (h2, _) = self.heun_ybar2(m)?;
            let (f1, _) = self.frobenius_y1(m);
            let (f2, _) = self.frobenius_ybar2(m);
            worst = worst.max((h1 - f1).abs() / h1.abs().max(m0 * m0 * 1e-3));
            worst = worst.max((h2 - f2).abs() / h2.abs().max(m0 * m0 * 1e-3));
        }
        Ok(worst)
    }

    /// Y1 Ȳ2' − Y1' Ȳ2 at M.
    pub fn wronskian(&self, m: f64) -> Result<f64> {
        let (a, ad) = self.y1(m)?;
        let (b, bd) = self.ybar2(m)?;
        Ok(a * bd - ad * b)
    }
}

impl FundamentalPair for AttractivePair {
    fn chart(&self) -> &MChart {
        &self.chart
    }

    fn y1(&self, m: f64) -> Result<(f64, f64)> {
        if self.route == Route::Frobenius || m < FROB_START * self.chart.M0 {
            return Ok(self.frobenius_y1(m));
        }
        self.heun_y1(m)
    }

    fn ybar2(&self, m: f64) -> Result<(f64, f64)> {
        if self.route == Route::Frobenius || m < FROB_START * self.chart.M0 {
            return Ok(self.frobenius_ybar2(m));
        }
        self.heun_ybar2(m)
    }

    fn ybar2_sqrt_coefficient(&self) -> f64 {
        self.chart.M0.powf(1.5)
    }
}

/// Report for the attractive d = 4 criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttractiveReport {
    pub criterion: MCriterionReport,
    pub route_agreement: f64,
    pub wronskian: f64,
}

/// Attractive d = 4 (k = −1, c = 1) zero-velocity criterion.
#[allow(non_snake_case)]
pub fn criterion_d4_attractive(M0: f64, v0: f64) -> Result<AttractiveReport> {
    let pair = AttractivePair::new(M0)?;
    criterion_d4_attractive_with(&pair, v0)
}

pub fn criterion_d4_attractive_with(pair: &AttractivePair, v0: f64) -> Result<AttractiveReport> {
    let m0 = pair.chart.M0;
    let w = pair.wronskian(0.5 * m0)?;
    if w.abs() < 1e-10 {
        return Err(MError::Degenerate(w));
    }
    let criterion = criterion_from_pair(pair, v0)?;
    Ok(AttractiveReport {
        criterion,
        route_agreement: pair.route_agreement(21)?,
        wronskian: w,
    })
}
