//! Domain types: model constants, radial profiles, characteristic seeds,
//! equilibria, and data ingestion helpers.

use crate::quadrature;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

type Result<T> = std::result::Result<T, ModelError>;

/// Background density: a constant or a radial profile c(r) >= 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Background {
    Constant(f64),
    Profile(RadialProfile),
}

/// Model constants of the pressureless system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub d: u32,
    pub k: f64,
    pub c: Background,
    pub m: f64,
    pub mu: f64,
}

/// Dynamical regime of the characteristic system (analytic regime only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// md + ck > 0
    Center,
    /// md + ck = 0
    SaddleNode,
    /// md + ck < 0
    Node,
}

impl Params {
    pub fn new(d: u32, k: f64, c: f64, m: f64, mu: f64) -> Result<Params> {
        Self::with_background(d, k, Background::Constant(c), m, mu)
    }

    pub fn with_background(d: u32, k: f64, c: Background, m: f64, mu: f64) -> Result<Params> {
        if d < 1 {
            return Err(ModelError::InvalidParams("d must be at least 1".into()));
        }
        if k == 0.0 || !k.is_finite() {
            return Err(ModelError::InvalidParams("k must be finite and nonzero".into()));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(ModelError::InvalidParams("mu must be finite and >= 0".into()));
        }
        if !m.is_finite() {
            return Err(ModelError::InvalidParams("m must be finite".into()));
        }
        if let Background::Constant(c) = c {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(ModelError::InvalidParams("constant c must be finite and >= 0".into()));
            }
        }
        Ok(Params { d, k, c, m, mu })
    }

    /// Signed-background constructor used internally after the sign flip,
    /// where the reduced system can carry c < 0 transiently.
    pub(crate) fn raw(d: u32, k: f64, c: f64, m: f64, mu: f64) -> Params {
        Params {
            d,
            k,
            c: Background::Constant(c),
            m,
            mu,
        }
    }

    pub fn df(&self) -> f64 {
        self.d as f64
    }

    pub fn c_const(&self) -> Option<f64> {
        match self.c {
            Background::Constant(c) => Some(c),
            Background::Profile(_) => None,
        }
    }

    /// (c(r), c'(r)).
    pub fn c_at(&self, r: f64) -> (f64, f64) {
        match &self.c {
            Background::Constant(c) => (*c, 0.0),
            Background::Profile(p) => {
                let (v, dv, _) = p.eval(r);
                (v, dv)
            }
        }
    }

    /// μ = 0 and constant background.
    pub fn analytic_regime(&self) -> bool {
        self.mu == 0.0 && self.c_const().is_some()
    }

    /// md + ck for constant c.
    pub fn discriminant(&self) -> Option<f64> {
        self.c_const().map(|c| self.m * self.df() + c * self.k)
    }

    pub fn regime(&self) -> Option<Regime> {
        if !self.analytic_regime() {
            return None;
        }
        let disc = self.discriminant()?;
        Some(if disc > 0.0 {
            Regime::Center
        } else if disc == 0.0 {
            Regime::SaddleNode
        } else {
            Regime::Node
        })
    }

    fn require_analytic(&self, what: &str) -> Result<f64> {
        match (self.analytic_regime(), self.c_const()) {
            (true, Some(c)) => Ok(c),
            _ => Err(ModelError::InvalidParams(format!("{what} needs mu = 0 and constant c"))),
        }
    }
}

/// Built-in analytic profile families.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// a
    Constant { a: f64 },
    /// a·exp(−r²/σ²)
    Gaussian { a: f64, sigma: f64 },
    /// a/(1 + r²)^p
    Rational { a: f64, p: f64 },
    /// (Σ cᵢ rⁱ)·exp(−r²/σ²)
    PolyGaussian { coeffs: Vec<f64>, sigma: f64 },
    /// Σ cᵢ rⁱ (unbounded unless constant; kept for derivative checks)
    Polynomial { coeffs: Vec<f64> },
}

/// Natural cubic spline on knots starting at r = 0, continued by the last
/// value beyond the last knot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spline {
    r: Vec<f64>,
    v: Vec<f64>,
    m2: Vec<f64>,
}

impl Spline {
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Spline> {
        if r.len() != v.len() || r.len() < 2 {
            return Err(ModelError::InvalidProfile("grid needs at least two (r, v) pairs of equal length".into()));
        }
        if r[0] != 0.0 {
            return Err(ModelError::InvalidProfile("grid must start at r = 0".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ModelError::InvalidProfile("grid radii must be strictly increasing".into()));
        }
        if r.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidProfile("grid contains non-finite values".into()));
        }
        let n = r.len();
        let mut m2 = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (natural ends).
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = r[i] - r[i - 1];
                let h1 = r[i + 1] - r[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((v[i + 1] - v[i]) / h1 - (v[i] - v[i - 1]) / h0);
            }
            for i in 2..n - 1 {
                let h0 = r[i] - r[i - 1];
                let w = h0 / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                let next = if i + 1 < n - 1 { m2[i + 1] } else { 0.0 };
                m2[i] = (rhs[i] - upper[i] * next) / diag[i];
            }
        }
        Ok(Spline { r, v, m2 })
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.r.len();
        if x >= self.r[n - 1] {
            return (self.v[n - 1], 0.0, 0.0);
        }
        let x = x.max(0.0);
        let i = self.r.partition_point(|&ri| ri <= x).saturating_sub(1).min(n - 2);
        let h = self.r[i + 1] - self.r[i];
        let a = (self.r[i + 1] - x) / h;
        let b = (x - self.r[i]) / h;
        let (m0, m1) = (self.m2[i], self.m2[i + 1]);
        let (y0, y1) = (self.v[i], self.v[i + 1]);
        let val = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let der = (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let sec = a * m0 + b * m1;
        (val, der, sec)
    }

    /// Exact supremum of |s(r)| over [0, ∞).
    pub fn sup_abs(&self) -> f64 {
        let mut best = self.v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..self.r.len() - 1 {
            // s'(x) is quadratic on each interval; check its real roots.
            let h = self.r[i + 1] - self.r[i];
            let (m0, m1) = (self.m2[i], self.m2[i + 1]);
            let slope = (self.v[i + 1] - self.v[i]) / h;
            // In terms of b in [0,1], a = 1 - b:
            // s' = slope + h/6 * (-(3(1-b)^2 - 1) m0 + (3b^2 - 1) m1)
            let qa = 0.5 * h * (m1 - m0);
            let qb = h * m0;
            let qc = slope + h / 6.0 * (-2.0 * m0 - m1);
            let mut roots = Vec::new();
            if qa.abs() < 1e-300 {
                if qb != 0.0 {
                    roots.push(-qc / qb);
                }
            } else {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    roots.push((-qb + s) / (2.0 * qa));
                    roots.push((-qb - s) / (2.0 * qa));
                }
            }
            for b in roots {
                if b > 0.0 && b < 1.0 {
                    best = best.max(self.eval(self.r[i] + b * h).0.abs());
                }
            }
        }
        best
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.r, &self.v)
    }
}

/// Representation of a radial profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    Builtin(Family),
    Grid(Spline),
    /// r^{-d} ∫₀^r n(s) s^{d-1} ds for a density profile n.
    FromDensity { density: Box<RadialProfile>, d: u32 },
    /// alpha + beta·inner
    Affine { alpha: f64, beta: f64, inner: Box<RadialProfile> },
}

/// A C² scalar function of radius with derivative access and a declared bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub kind: ProfileKind,
    /// Supremum of |value| on [0, ∞) (infinite for unbounded families).
    pub bound: f64,
}

const TAYLOR_RADIUS: f64 = 1e-4;

impl RadialProfile {
    pub fn builtin(f: Family) -> Result<RadialProfile> {
        let bound = match &f {
            Family::Constant { a } => a.abs(),
            Family::Gaussian { a, sigma } => {
                if !(*sigma > 0.0) {
                    return Err(ModelError::InvalidProfile("gaussian sigma must be > 0".into()));
                }
                a.abs()
            }
            Family::Rational { a, p } => {
                if !(*p >= 0.0) {
                    return Err(ModelError::InvalidProfile("rational exponent p must be >= 0".into()));
                }
                a.abs()
            }
            Family::PolyGaussian { coeffs, sigma } => {
                if !(*sigma > 0.0) {
                    return Err(ModelError::InvalidProfile("sigma must be > 0".into()));
                }
                // |c_i| r^i e^{-r²/σ²} peaks at r = σ sqrt(i/2)
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == 0 {
                            c.abs()
                        } else {
                            let x = sigma * (i as f64 / 2.0).sqrt();
                            c.abs() * x.powi(i as i32) * (-(i as f64) / 2.0).exp()
                        }
                    })
                    .sum()
            }
            Family::Polynomial { coeffs } => {
                if coeffs.iter().skip(1).all(|c| *c == 0.0) {
                    coeffs.first().map(|c| c.abs()).unwrap_or(0.0)
                } else {
                    f64::INFINITY
                }
            }
        };
        let p = RadialProfile {
            kind: ProfileKind::Builtin(f),
            bound,
        };
        p.check_finite_at_origin()?;
        Ok(p)
    }

    pub fn constant(a: f64) -> RadialProfile {
        RadialProfile {
            kind: ProfileKind::Builtin(Family::Constant { a }),
            bound: a.abs(),
        }
    }

    pub fn grid(r: Vec<f64>, v: Vec<f64>) -> Result<RadialProfile> {
        let s = Spline::new(r, v)?;
        let bound = s.sup_abs();
        Ok(RadialProfile {
            kind: ProfileKind::Grid(s),
            bound,
        })
    }

    pub fn affine(alpha: f64, beta: f64, inner: RadialProfile) -> RadialProfile {
        let bound = alpha.abs() + beta.abs() * inner.bound;
        RadialProfile {
            kind: ProfileKind::Affine {
                alpha,
                beta,
                inner: Box::new(inner),
            },
            bound,
        }
    }

    fn check_finite_at_origin(&self) -> Result<()> {
        let (v, dv, _) = self.eval(0.0);
        if !(v.is_finite() && dv.is_finite()) {
            return Err(ModelError::InvalidProfile("value or derivative not finite at r = 0".into()));
        }
        Ok(())
    }

    /// (value, first derivative, second derivative) at r >= 0.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match &self.kind {
            ProfileKind::Builtin(f) => eval_family(f, r),
            ProfileKind::Grid(s) => s.eval(r),
            ProfileKind::Affine { alpha, beta, inner } => {
                let (v, d1, d2) = inner.eval(r);
                (alpha + beta * v, beta * d1, beta * d2)
            }
            ProfileKind::FromDensity { density, d } => eval_enclosed(density, *d, r),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

fn poly(coeffs: &[f64], r: f64) -> (f64, f64, f64) {
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for c in coeffs.iter().rev() {
        d2 = d2 * r + 2.0 * d1;
        d1 = d1 * r + v;
        v = v * r + c;
    }
    (v, d1, d2)
}

fn eval_family(f: &Family, r: f64) -> (f64, f64, f64) {
    match f {
        Family::Constant { a } => (*a, 0.0, 0.0),
        Family::Gaussian { a, sigma } => {
            let s2 = sigma * sigma;
            let e = a * (-r * r / s2).exp();
            let d1 = -2.0 * r / s2 * e;
            let d2 = (4.0 * r * r / (s2 * s2) - 2.0 / s2) * e;
            (e, d1, d2)
        }
        Family::Rational { a, p } => {
            let u = 1.0 + r * r;
            let v = a * u.powf(-p);
            let d1 = -2.0 * p * r * a * u.powf(-p - 1.0);
            let d2 = a * (-2.0 * p * u.powf(-p - 1.0) + 4.0 * p * (p + 1.0) * r * r * u.powf(-p - 2.0));
            (v, d1, d2)
        }
        Family::PolyGaussian { coeffs, sigma } => {
            let s2 = sigma * sigma;
            let (pv, p1, p2) = poly(coeffs, r);
            let g = (-r * r / s2).exp();
            let g1 = -2.0 * r / s2 * g;
            let g2 = (4.0 * r * r / (s2 * s2) - 2.0 / s2) * g;
            (pv * g, p1 * g + pv * g1, p2 * g + 2.0 * p1 * g1 + pv * g2)
        }
        Family::Polynomial { coeffs } => poly(coeffs, r),
    }
}

fn eval_enclosed(n: &RadialProfile, d: u32, r: f64) -> (f64, f64, f64) {
    let df = d as f64;
    if r < TAYLOR_RADIUS {
        // H = n0/d + n1 r/(d+1) + n2 r²/(2(d+2)) + ...
        let (n0, n1, n2) = n.eval(0.0);
        let v = n0 / df + n1 * r / (df + 1.0) + n2 * r * r / (2.0 * (df + 2.0));
        let d1 = n1 / (df + 1.0) + n2 * r / (df + 2.0);
        let d2 = n2 / (df + 2.0);
        return (v, d1, d2);
    }
    let integrand = |s: f64| n.value(s) * s.powi(d as i32 - 1);
    let q = quadrature::integrate(integrand, 0.0, r, 1e-14 * r.powi(d as i32).max(1e-300), 1e-13, 2000)
        .map(|q| q.value)
        .unwrap_or(f64::NAN);
    let h = q / r.powi(d as i32);
    let (nv, n1, _) = n.eval(r);
    let h1 = (nv - df * h) / r;
    let h2 = (n1 - (df + 1.0) * h1) / r;
    (h, h1, h2)
}

/// Seed data for one characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct InitialPoint {
    pub r0: f64,
    pub F0: f64,
    pub G0: f64,
    pub u0: f64,
    pub v0: f64,
}

impl InitialPoint {
    #[allow(non_snake_case)]
    pub fn new(r0: f64, F0: f64, G0: f64, u0: f64, v0: f64) -> InitialPoint {
        InitialPoint { r0, F0, G0, u0, v0 }
    }

    /// Divergences D = u + dF and λ = v + dG.
    pub fn divergences(&self, d: u32) -> (f64, f64) {
        (self.u0 + d as f64 * self.F0, self.v0 + d as f64 * self.G0)
    }
}

/// Evaluate profiles at r0 and form (u0, v0) = (r0 F0'(r0), r0 G0'(r0)).
#[allow(non_snake_case)]
pub fn derive_point(F0: &RadialProfile, G0: &RadialProfile, r0: f64) -> Result<InitialPoint> {
    if !(r0 >= 0.0 && r0.is_finite()) {
        return Err(ModelError::InvalidInput(format!("radius must be finite and >= 0, got {r0}")));
    }
    let (f, fd, _) = F0.eval(r0);
    let (g, gd, _) = G0.eval(r0);
    if !(f.is_finite() && fd.is_finite() && g.is_finite() && gd.is_finite()) {
        return Err(ModelError::InvalidProfile(format!("non-finite value or derivative at r = {r0}")));
    }
    let (u0, v0) = if r0 == 0.0 { (0.0, 0.0) } else { (r0 * fd, r0 * gd) };
    Ok(InitialPoint::new(r0, f, g, u0, v0))
}

/// Enclosed-mass field H(r) = r^{-d} ∫₀^r n0(s) s^{d-1} ds, so that
/// r H' + d H = n0. In the system's sign convention (n = c − div E) the
/// field slope is G0 = c/d − H; see [`field_slope_from_density`].
pub fn radial_field_from_density(n0: &RadialProfile, d: u32) -> Result<RadialProfile> {
    if d < 2 {
        return Err(ModelError::InvalidInput("density ingestion needs d >= 2".into()));
    }
    let r_max = match &n0.kind {
        ProfileKind::Grid(s) => s.knots().0.last().copied().unwrap_or(1.0) * 1.5,
        _ => 50.0,
    };
    let samples = 2000;
    for i in 0..=samples {
        let r = r_max * i as f64 / samples as f64;
        let v = n0.value(r);
        if !v.is_finite() || v < 0.0 {
            return Err(ModelError::InvalidInput(format!("negative or non-finite density {v} at r = {r}")));
        }
    }
    let bound = if n0.bound.is_finite() { n0.bound / d as f64 } else { f64::INFINITY };
    Ok(RadialProfile {
        kind: ProfileKind::FromDensity {
            density: Box::new(n0.clone()),
            d,
        },
        bound,
    })
}

/// Field slope G0 for a given density with constant background c:
/// G0 = c/d − H, where H is [`radial_field_from_density`].
pub fn field_slope_from_density(n0: &RadialProfile, d: u32, c: f64) -> Result<RadialProfile> {
    let h = radial_field_from_density(n0, d)?;
    Ok(RadialProfile::affine(c / d as f64, -1.0, h))
}

/// Record of the equilibrium shift and optional sign flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shift {
    /// Added to G before the flip (m/k).
    pub offset: f64,
    /// True when (G, k, c) → (−G, −k, −c) was applied.
    pub flipped: bool,
}

impl Shift {
    /// Transform a seed into the shifted variables.
    pub fn apply(&self, ip: &InitialPoint) -> InitialPoint {
        let s = if self.flipped { -1.0 } else { 1.0 };
        InitialPoint::new(ip.r0, ip.F0, s * (ip.G0 + self.offset), ip.u0, s * ip.v0)
    }
}

/// Move the distinguished equilibrium to the origin: m' = 0, c' = c + dm/k,
/// G1 = G0 + m/k; if c' < 0, flip (G1, k, c') → (−G1, −k, −c').
#[allow(non_snake_case)]
pub fn shift_to_zero_equilibrium(p: &Params, G0: &RadialProfile) -> Result<(Params, RadialProfile, Shift)> {
    let c = p.require_analytic("equilibrium shift")?;
    let offset = p.m / p.k;
    let c1 = c + p.df() * offset;
    let flipped = c1 < 0.0;
    let s = if flipped { -1.0 } else { 1.0 };
    let params = Params::raw(p.d, s * p.k, s * c1, 0.0, p.mu);
    let g1 = if offset == 0.0 && !flipped {
        G0.clone()
    } else {
        RadialProfile::affine(s * offset, s, G0.clone())
    };
    Ok((params, g1, Shift { offset, flipped }))
}

/// Shift applied to parameters only.
pub fn shift_params(p: &Params) -> Result<(Params, Shift)> {
    let (q, _, s) = shift_to_zero_equilibrium(p, &RadialProfile::constant(0.0))?;
    Ok((q, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Center,
    SaddleNode,
    Saddle,
    StableNode,
    UnstableNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct Equilibrium {
    pub F: f64,
    pub G: f64,
    pub kind: EquilibriumKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriaReport {
    /// md + ck
    pub discriminant: f64,
    pub equilibria: Vec<Equilibrium>,
}

impl EquilibriaReport {
    pub fn stable_node(&self) -> Option<Equilibrium> {
        self.equilibria.iter().copied().find(|e| e.kind == EquilibriumKind::StableNode)
    }
}

/// Equilibria of the (F, G) system for constant c and μ = 0.
pub fn classify_equilibria(p: &Params) -> Result<EquilibriaReport> {
    let c = p.require_analytic("equilibrium classification")?;
    let disc = p.m * p.df() + c * p.k;
    let g0 = -p.m / p.k;
    let mut equilibria = Vec::new();
    if disc > 0.0 {
        equilibria.push(Equilibrium {
            F: 0.0,
            G: g0,
            kind: EquilibriumKind::Center,
        });
    } else if disc == 0.0 {
        equilibria.push(Equilibrium {
            F: 0.0,
            G: g0,
            kind: EquilibriumKind::SaddleNode,
        });
    } else {
        let fs = (-p.m - p.k * c / p.df()).sqrt();
        let gs = c / p.df();
        equilibria.push(Equilibrium {
            F: 0.0,
            G: g0,
            kind: EquilibriumKind::Saddle,
        });
        equilibria.push(Equilibrium {
            F: fs,
            G: gs,
            kind: EquilibriumKind::StableNode,
        });
        equilibria.push(Equilibrium {
            F: -fs,
            G: gs,
            kind: EquilibriumKind::UnstableNode,
        });
    }
    Ok(EquilibriaReport {
        discriminant: disc,
        equilibria,
    })
}

/// Outcome of a density-positivity scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub ok: bool,
    /// Strict check (n > 0 everywhere) result.
    pub strictly_positive: bool,
    pub first_violation: Option<f64>,
    /// min over the grid of n(r) = c(r) − (r G0' + d G0).
    pub min_density: f64,
}

/// Tolerance for the non-strict check n >= 0.
pub const DENSITY_TOL: f64 = 1e-12;

/// Check r G0'(r) + d G0(r) <= c(r) on the grid (non-strict, tolerance
/// [`DENSITY_TOL`]); the strict variant is reported alongside.
#[allow(non_snake_case)]
pub fn check_density_positivity(_F0: &RadialProfile, G0: &RadialProfile, p: &Params, r_grid: &[f64]) -> DensityReport {
    let mut first_violation = None;
    let mut min_density = f64::INFINITY;
    let mut strict = true;
    for &r in r_grid {
        let (g, gd, _) = G0.eval(r);
        let (c, _) = p.c_at(r);
        let n = c - (r * gd + p.df() * g);
        min_density = min_density.min(n);
        if n <= 0.0 {
            strict = false;
        }
        if n < -DENSITY_TOL && first_violation.is_none() {
            first_violation = Some(r);
        }
    }
    DensityReport {
        ok: first_violation.is_none(),
        strictly_positive: strict,
        first_violation,
        min_density,
    }
}

/// Density n = c − (v + dG) at a seed.
pub fn point_density(p: &Params, ip: &InitialPoint) -> f64 {
    let (c, _) = p.c_at(ip.r0);
    c - (ip.v0 + p.df() * ip.G0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubic_interior_and_is_c2() {
        let r: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = r.iter().map(|x| x.sin()).collect();
        let s = Spline::new(r, v).unwrap();
        for &x in &[0.55, 1.23, 2.9] {
            let (val, der, _) = s.eval(x);
            assert!((val - x.sin()).abs() < 1e-4);
            assert!((der - x.cos()).abs() < 1e-3);
        }
        // continuity of the second derivative at a knot
        let a = s.eval(1.0 - 1e-12).2;
        let b = s.eval(1.0 + 1e-12).2;
        assert!((a - b).abs() < 1e-8);
        // constant continuation beyond the last knot
        assert_eq!(s.eval(10.0), (4f64.sin(), 0.0, 0.0));
    }

    #[test]
    fn spline_bound_catches_overshoot() {
        let s = Spline::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let mut brute: f64 = 0.0;
        for i in 0..=30000 {
            brute = brute.max(s.eval(3.0 * i as f64 / 30000.0).0.abs());
        }
        assert!(s.sup_abs() >= brute - 1e-12);
        assert!(s.sup_abs() <= brute + 1e-8);
        assert!(s.sup_abs() > 1.0);
    }

    #[test]
    fn family_derivatives_match_finite_differences() {
        let fams = vec![
            Family::Gaussian { a: 0.7, sigma: 1.3 },
            Family::Rational { a: -0.4, p: 1.5 },
            Family::PolyGaussian {
                coeffs: vec![0.2, -0.5, 0.3],
                sigma: 0.9,
            },
            Family::Polynomial { coeffs: vec![1.0, 2.0, -1.0, 0.5] },
        ];
        for f in fams {
            let p = RadialProfile::builtin(f).unwrap();
            for &r in &[0.1, 0.8, 2.0] {
                let h = 1e-5;
                let (v, d1, d2) = p.eval(r);
                let fd1 = (p.value(r + h) - p.value(r - h)) / (2.0 * h);
                let fd2 = (p.value(r + h) - 2.0 * v + p.value(r - h)) / (h * h);
                assert!((d1 - fd1).abs() < 1e-8, "{:?} d1", p.kind);
                assert!((d2 - fd2).abs() < 1e-4, "{:?} d2", p.kind);
            }
        }
    }

    #[test]
    fn polygaussian_bound_holds() {
        let p = RadialProfile::builtin(Family::PolyGaussian {
            coeffs: vec![0.5, -1.0, 2.0],
            sigma: 1.5,
        })
        .unwrap();
        for i in 0..2000 {
            let r = i as f64 * 0.01;
            assert!(p.value(r).abs() <= p.bound);
        }
    }

    #[test]
    fn grid_rejects_bad_knots() {
        assert!(RadialProfile::grid(vec![0.1, 0.2], vec![1.0, 2.0]).is_err());
        assert!(RadialProfile::grid(vec![0.0, 0.2, 0.2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(RadialProfile::grid(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn equilibrium_counts() {
        let c = classify_equilibria(&Params::new(3, 1.0, 1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(c.equilibria.len(), 1);
        let n = classify_equilibria(&Params::new(3, -1.0, 1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(n.equilibria.len(), 3);
    }
}
