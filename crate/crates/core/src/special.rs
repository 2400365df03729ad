//! Real special-function kernels: Gauss 2F1 on the real line left of 1,
//! Heun local solutions with numeric continuation, and a Frobenius series
//! builder for second-order equations with a regular singular point at 0.

use crate::ode::{self, Control, DenseSolution, Options};
use serde::Serialize;
use statrs::function::gamma::{digamma, gamma};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpecialError {
    #[error("2F1({a}, {b}; {c}; {z}): {reason}")]
    Hyp2F1 {
        a: f64,
        b: f64,
        c: f64,
        z: f64,
        reason: &'static str,
    },
    #[error("Heun series at z = {z} needs continuation (radius {radius})")]
    ContinuationNeeded { z: f64, radius: f64 },
    #[error("Heun series did not converge at z = {z}")]
    HeunNotConverged { z: f64 },
    #[error("continuation path from {from} to {to} meets singular point {singular}")]
    PathHitsSingularity { from: f64, to: f64, singular: f64 },
    #[error("Heun parameters invalid: {0}")]
    BadHeunParams(&'static str),
    #[error("numerical integration failed: {0}")]
    Integration(String),
    #[error("Frobenius recursion hits a resonance with nonzero obstruction {obstruction:e} (logarithmic case)")]
    Logarithmic { obstruction: f64 },
}

const SERIES_EPS: f64 = 1e-17;
const SERIES_MAX: usize = 20_000;

fn is_nonpos_int(x: f64) -> bool {
    x <= 0.0 && (x - x.round()).abs() < 1e-12
}

/// 1/Γ(x), exactly zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpos_int(x) {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// Parameters of a Gauss hypergeometric evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyp2F1Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

impl Hyp2F1Params {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Self {
        Hyp2F1Params { a, b, c, z }
    }

    fn err(&self, reason: &'static str) -> SpecialError {
        SpecialError::Hyp2F1 {
            a: self.a,
            b: self.b,
            c: self.c,
            z: self.z,
            reason,
        }
    }
}

/// Direct Maclaurin summation; converges for |z| < 1 (any z if terminating).
fn series(a: f64, b: f64, c: f64, z: f64) -> Option<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0;
    for n in 0..SERIES_MAX {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term == 0.0 {
            return Some(sum);
        }
        if term.abs() <= SERIES_EPS * sum.abs() {
            small += 1;
            if small >= 3 {
                return Some(sum);
            }
        } else {
            small = 0;
        }
    }
    None
}

/// Decomposition F(a,b;c;1-w) = regular(w) + w^exponent · singular(w) for
/// non-integer `exponent = c - a - b`, with derivatives in w.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub exponent: f64,
    pub regular: f64,
    pub regular_dw: f64,
    pub singular: f64,
    pub singular_dw: f64,
}

impl Split {
    pub fn value(&self, w: f64) -> f64 {
        self.regular + w.powf(self.exponent) * self.singular
    }
}

/// Connection of 2F1 at z = 1 for non-integer c - a - b, in terms of w = 1 - z
/// with 0 <= w < 1.
pub fn gauss_2f1_split(a: f64, b: f64, c: f64, w: f64) -> Result<Split, SpecialError> {
    let p = Hyp2F1Params::new(a, b, c, 1.0 - w);
    if is_nonpos_int(c) {
        return Err(p.err("c is a nonpositive integer"));
    }
    let m = c - a - b;
    if (m - m.round()).abs() < 1e-9 {
        return Err(p.err("integer c-a-b has no power split"));
    }
    if !(0.0..1.0).contains(&w) {
        return Err(p.err("split requires 0 <= 1-z < 1"));
    }
    let ga = gamma(c) * gamma(m) * rgamma(c - a) * rgamma(c - b);
    let gb = gamma(c) * gamma(-m) * rgamma(a) * rgamma(b);
    let c1 = a + b - c + 1.0;
    let c2 = m + 1.0;
    let (r, rd) = if ga == 0.0 {
        (0.0, 0.0)
    } else {
        let v = series(a, b, c1, w).ok_or_else(|| p.err("series budget exceeded"))?;
        let d = series(a + 1.0, b + 1.0, c1 + 1.0, w).ok_or_else(|| p.err("series budget exceeded"))?;
        (ga * v, ga * a * b / c1 * d)
    };
    let (s, sd) = if gb == 0.0 {
        (0.0, 0.0)
    } else {
        let (aa, bb) = (c - a, c - b);
        let v = series(aa, bb, c2, w).ok_or_else(|| p.err("series budget exceeded"))?;
        let d = series(aa + 1.0, bb + 1.0, c2 + 1.0, w).ok_or_else(|| p.err("series budget exceeded"))?;
        (gb * v, gb * aa * bb / c2 * d)
    };
    Ok(Split {
        exponent: m,
        regular: r,
        regular_dw: rd,
        singular: s,
        singular_dw: sd,
    })
}

fn poch(x: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, k| acc * (x + k as f64))
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Logarithmic connection formulas for integer c - a - b = m, w = 1 - z.
fn log_case(a: f64, b: f64, m: i64, w: f64, p: &Hyp2F1Params) -> Result<f64, SpecialError> {
    let lw = w.ln();
    let mut tail = 0.0;
    let mut small = 0;
    let mut converged = false;
    let ma = m.unsigned_abs() as usize;
    // Shared infinite series: sum (A)_n (B)_n / (n! (n+|m|)!) w^n [ln w - psi(n+1) - psi(n+|m|+1) + psi(A+n) + psi(B+n)]
    let (sa, sb) = if m >= 0 { (a + m as f64, b + m as f64) } else { (a, b) };
    let mut coef = 1.0 / factorial(ma);
    let mut wn = 1.0;
    for n in 0..SERIES_MAX {
        let nf = n as f64;
        if n > 0 {
            coef *= (sa + nf - 1.0) * (sb + nf - 1.0) / (nf * (nf + ma as f64));
            wn *= w;
        }
        let bracket = lw - digamma(nf + 1.0) - digamma(nf + ma as f64 + 1.0) + digamma(sa + nf) + digamma(sb + nf);
        let term = coef * wn * bracket;
        tail += term;
        if term.abs() <= SERIES_EPS * tail.abs().max(1e-300) || (coef * wn) == 0.0 {
            small += 1;
            if small >= 3 {
                converged = true;
                break;
            }
        } else {
            small = 0;
        }
    }
    if !converged {
        return Err(p.err("logarithmic series budget exceeded"));
    }
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => {
            // A&S 15.3.10: F = Γ(a+b)/(Γ(a)Γ(b)) Σ (a)_n(b)_n/(n!)^2 [2ψ(n+1) - ψ(a+n) - ψ(b+n) - ln w] w^n
            Ok(-gamma(a + b) * rgamma(a) * rgamma(b) * tail)
        }
        std::cmp::Ordering::Greater => {
            // A&S 15.3.11
            let mut finite = 0.0;
            for n in 0..ma {
                finite += poch(a, n) * poch(b, n) / (factorial(n) * poch(1.0 - m as f64, n)) * w.powi(n as i32);
            }
            let g = gamma(a + b + m as f64);
            let head = gamma(m as f64) * g * rgamma(a + m as f64) * rgamma(b + m as f64) * finite;
            let sign_zm1 = if ma % 2 == 0 { 1.0 } else { -1.0 };
            Ok(head - sign_zm1 * w.powi(ma as i32) * g * rgamma(a) * rgamma(b) * tail)
        }
        std::cmp::Ordering::Less => {
            // A&S 15.3.12 with c = a + b - |m|
            let mf = ma as f64;
            let mut finite = 0.0;
            for n in 0..ma {
                finite += poch(a - mf, n) * poch(b - mf, n) / (factorial(n) * poch(1.0 - mf, n)) * w.powi(n as i32);
            }
            let g = gamma(a + b - mf);
            let head = gamma(mf) * g * rgamma(a) * rgamma(b) * w.powi(-(ma as i32)) * finite;
            let sign = if ma % 2 == 0 { 1.0 } else { -1.0 };
            Ok(head - sign * g * rgamma(a - mf) * rgamma(b - mf) * tail)
        }
    }
}

/// Gauss hypergeometric function 2F1(a, b; c; z) for real z < 1.
///
/// Direct series for |z| <= 1/2, connection at z = 1 for 1/2 < z < 1
/// (power split or logarithmic case), Pfaff transformation for z < -1/2.
pub fn gauss_2f1(p: Hyp2F1Params) -> Result<f64, SpecialError> {
    let Hyp2F1Params { a, b, c, z } = p;
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(p.err("non-finite input"));
    }
    if is_nonpos_int(c) {
        return Err(p.err("c is a nonpositive integer"));
    }
    if z >= 1.0 {
        return Err(p.err("argument must be below 1"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let terminating = is_nonpos_int(a) || is_nonpos_int(b);
    if terminating || z.abs() <= 0.5 {
        return series(a, b, c, z).ok_or_else(|| p.err("series budget exceeded"));
    }
    if z < -0.5 {
        // Pfaff: F(a,b;c;z) = (1-z)^{-a} F(a, c-b; c; z/(z-1)), z/(z-1) in (1/3, 1).
        let zz = z / (z - 1.0);
        let inner = gauss_2f1(Hyp2F1Params::new(a, c - b, c, zz))?;
        return Ok((1.0 - z).powf(-a) * inner);
    }
    let w = 1.0 - z;
    let m = c - a - b;
    let near = (m - m.round()).abs();
    if near < 1e-9 {
        log_case(a, b, m.round() as i64, w, &p)
    } else if near < 1e-2 && z <= 0.95 {
        // the connection coefficients cancel like 1/near; the direct series
        // still converges geometrically here
        series(a, b, c, z).ok_or_else(|| p.err("series budget exceeded"))
    } else {
        Ok(gauss_2f1_split(a, b, c, w)?.value(w))
    }
}

/// d/dz 2F1(a, b; c; z) = (ab/c) 2F1(a+1, b+1; c+1; z).
pub fn gauss_2f1_deriv(p: Hyp2F1Params) -> Result<f64, SpecialError> {
    let Hyp2F1Params { a, b, c, z } = p;
    Ok(a * b / c * gauss_2f1(Hyp2F1Params::new(a + 1.0, b + 1.0, c + 1.0, z))?)
}

/// Heun equation data. The fifth exponent follows from the Fuchs relation
/// ε = α + β − γ − δ + 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeunParams {
    pub a: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl HeunParams {
    pub fn epsilon(&self) -> f64 {
        self.alpha + self.beta - self.gamma - self.delta + 1.0
    }

    fn validate(&self) -> Result<(), SpecialError> {
        if self.a == 0.0 || self.a == 1.0 {
            return Err(SpecialError::BadHeunParams("a must differ from 0 and 1"));
        }
        if is_nonpos_int(self.gamma) {
            return Err(SpecialError::BadHeunParams("gamma is a nonpositive integer"));
        }
        Ok(())
    }

    /// Radius of convergence of the local series at 0.
    pub fn radius(&self) -> f64 {
        self.a.abs().min(1.0)
    }

    /// Right-hand side of the Heun equation as a first-order system in (w, w').
    pub fn rhs(&self, z: f64, y: &[f64; 2]) -> [f64; 2] {
        let eps = self.epsilon();
        let p = self.gamma / z + self.delta / (z - 1.0) + eps / (z - self.a);
        let r = (self.alpha * self.beta * z - self.q) / (z * (z - 1.0) * (z - self.a));
        [y[1], -p * y[1] - r * y[0]]
    }

    /// Power-series coefficients of the local solution normalised by w(0) = 1.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        let eps = self.epsilon();
        let mut c = Vec::with_capacity(n.max(2));
        c.push(1.0);
        if n <= 1 {
            return c;
        }
        c.push(self.q / (self.gamma * self.a));
        for j in 1..n - 1 {
            let jf = j as f64;
            let r = self.a * (jf + 1.0) * (jf + self.gamma);
            let qj = jf * ((jf - 1.0 + self.gamma) * (1.0 + self.a) + self.a * self.delta + eps);
            let pj = (jf - 1.0 + self.alpha) * (jf - 1.0 + self.beta);
            let next = ((qj + self.q) * c[j] - pj * c[j - 1]) / r;
            c.push(next);
        }
        c
    }
}

/// Value, derivative and a truncation estimate of a local Heun solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeunValue {
    pub value: f64,
    pub derivative: f64,
    pub error: f64,
}

/// Fraction of the convergence radius beyond which the series is refused.
pub const HEUN_SERIES_GUARD: f64 = 0.6;

/// Local Heun solution at 0 with w(0) = 1, w'(0) = q/(γa), by power series.
pub fn heun_local(p: &HeunParams, z: f64) -> Result<HeunValue, SpecialError> {
    p.validate()?;
    let radius = p.radius();
    if z.abs() > HEUN_SERIES_GUARD * radius {
        return Err(SpecialError::ContinuationNeeded { z, radius });
    }
    if z == 0.0 {
        return Ok(HeunValue {
            value: 1.0,
            derivative: p.q / (p.gamma * p.a),
            error: 0.0,
        });
    }
    let eps = p.epsilon();
    let (mut cm1, mut c0) = (1.0, p.q / (p.gamma * p.a));
    let mut value = 1.0 + c0 * z;
    let mut deriv = c0;
    let mut zj = z; // z^j for the current c0 = c_j
    let mut small = 0;
    for j in 1..5000usize {
        let jf = j as f64;
        let r = p.a * (jf + 1.0) * (jf + p.gamma);
        let qj = jf * ((jf - 1.0 + p.gamma) * (1.0 + p.a) + p.a * p.delta + eps);
        let pj = (jf - 1.0 + p.alpha) * (jf - 1.0 + p.beta);
        let c1 = ((qj + p.q) * c0 - pj * cm1) / r;
        let dterm = (jf + 1.0) * c1 * zj;
        zj *= z;
        let term = c1 * zj;
        value += term;
        deriv += dterm;
        cm1 = c0;
        c0 = c1;
        if term.abs() <= 1e-17 * value.abs() && dterm.abs() <= 1e-17 * deriv.abs().max(1e-300) {
            small += 1;
            if small >= 4 {
                return Ok(HeunValue {
                    value,
                    derivative: deriv,
                    error: 4.0 * term.abs() + f64::EPSILON * value.abs(),
                });
            }
        } else {
            small = 0;
        }
    }
    Err(SpecialError::HeunNotConverged { z })
}

fn check_path(p: &HeunParams, from: f64, to: f64) -> Result<(), SpecialError> {
    let (lo, hi) = if from <= to { (from, to) } else { (to, from) };
    for s in [0.0, 1.0, p.a] {
        if s >= lo && s <= hi {
            return Err(SpecialError::PathHitsSingularity {
                from,
                to,
                singular: s,
            });
        }
    }
    Ok(())
}

fn heun_opts() -> Options {
    Options::with_tol(1e-13, 1e-15)
}

/// Continue a Heun solution from `seed = (value, derivative, z_seed)` to
/// `z_target` by integrating the Heun equation.
pub fn heun_continue(p: &HeunParams, z_target: f64, seed: (f64, f64, f64)) -> Result<HeunValue, SpecialError> {
    p.validate()?;
    let (v, d, zs) = seed;
    if z_target == zs {
        return Ok(HeunValue {
            value: v,
            derivative: d,
            error: 0.0,
        });
    }
    check_path(p, zs, z_target)?;
    let out = ode::integrate(|z, y: &[f64; 2]| p.rhs(z, y), zs, [v, d], z_target, &heun_opts(), |_| Control::Continue)
        .map_err(|e| SpecialError::Integration(e.to_string()))?;
    Ok(HeunValue {
        value: out.y[0],
        derivative: out.y[1],
        error: 1e-12 * out.y[0].abs().max(1.0),
    })
}

/// Local Heun solution at 0 made evaluable on `[0, z_max]` (z_max < radius
/// is not required): series inside the guard radius, dense continuation
/// beyond it. Built once, evaluated many times.
#[derive(Debug, Clone)]
pub struct HeunEvaluator {
    params: HeunParams,
    z_seed: f64,
    dense: Option<DenseSolution<2>>,
}

impl HeunEvaluator {
    pub fn new(params: HeunParams, z_max: f64) -> Result<Self, SpecialError> {
        params.validate()?;
        let z_seed = 0.5 * HEUN_SERIES_GUARD * params.radius() * z_max.signum();
        let dense = if z_max.abs() > z_seed.abs() {
            check_path(&params, z_seed, z_max)?;
            let s = heun_local(&params, z_seed)?;
            let sol = ode::solve_dense(|z, y: &[f64; 2]| params.rhs(z, y), z_seed, [s.value, s.derivative], z_max, &heun_opts())
                .map_err(|e| SpecialError::Integration(e.to_string()))?;
            Some(sol)
        } else {
            None
        };
        Ok(HeunEvaluator { params, z_seed, dense })
    }

    pub fn params(&self) -> &HeunParams {
        &self.params
    }

    /// (w, w') at z.
    pub fn eval(&self, z: f64) -> Result<(f64, f64), SpecialError> {
        if z.abs() <= self.z_seed.abs() || self.dense.is_none() {
            let v = heun_local(&self.params, z)?;
            return Ok((v.value, v.derivative));
        }
        let y = self.dense.as_ref().map(|d| d.eval(z)).unwrap_or([f64::NAN; 2]);
        Ok((y[0], y[1]))
    }
}

/// Frobenius solution of x² y'' + x p(x) y' + r(x) y = 0 at the regular
/// singular point 0, with p, r given by Taylor coefficients. Returns the
/// coefficients c_n of y = x^ρ Σ c_n x^n with c_0 = 1. At a resonance
/// (indicial polynomial vanishing at ρ + n) the free coefficient is set to
/// zero if the obstruction vanishes to `resonance_tol`, else the log case is
/// reported.
pub fn frobenius_coefficients(p: &[f64], r: &[f64], rho: f64, n_terms: usize, resonance_tol: f64) -> Result<Vec<f64>, SpecialError> {
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let indicial = |s: f64| s * (s - 1.0) + get(p, 0) * s + get(r, 0);
    let mut c = vec![1.0];
    for n in 1..n_terms {
        let mut rhs = 0.0;
        for j in 1..=n {
            let s = rho + (n - j) as f64;
            rhs -= c[n - j] * (get(p, j) * s + get(r, j));
        }
        let den = indicial(rho + n as f64);
        let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if den.abs() < 1e-12 * (1.0 + (rho + n as f64).powi(2)) {
            if rhs.abs() > resonance_tol * scale {
                return Err(SpecialError::Logarithmic { obstruction: rhs });
            }
            c.push(0.0);
        } else {
            c.push(rhs / den);
        }
    }
    Ok(c)
}
