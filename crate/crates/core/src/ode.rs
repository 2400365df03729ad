//! Dormand-Prince 5(4) integrator with continuous (dense) output.
//!
//! The state is a fixed-size array so the hot loop stays on the stack. After
//! every accepted step a monitor sees the step together with its interpolant
//! and may stop the integration; event location (zeros of q, section
//! crossings, escape) is built on top of that hook.

use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrator settings.
#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    /// Largest allowed step magnitude.
    pub h_max: f64,
    /// Smallest allowed step magnitude relative to |t| + 1.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            h_max: f64::INFINITY,
            h_min_rel: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

impl Options {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Options {
            rtol,
            atol,
            ..Options::default()
        }
    }
}

/// What the monitor asks the driver to do after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Error)]
pub enum OdeError<const N: usize> {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64, y: [f64; N] },
    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    TooManySteps { t: f64, steps: usize, y: [f64; N] },
    #[error("non-finite initial state")]
    BadInitialState,
}

impl<const N: usize> OdeError<N> {
    /// Last accepted state carried by the error, if any.
    pub fn last_state(&self) -> Option<(f64, [f64; N])> {
        match self {
            OdeError::StepUnderflow { t, y, .. } => Some((*t, *y)),
            OdeError::TooManySteps { t, y, .. } => Some((*t, *y)),
            OdeError::BadInitialState => None,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Interpolated state at `t` (meant for t between t0 and t1).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let th = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let th1 = 1.0 - th;
        let r = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        out
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t0 <= self.t1 {
            (self.t0, self.t1)
        } else {
            (self.t1, self.t0)
        };
        t >= lo && t <= hi
    }
}

/// Result of a driver run.
#[derive(Debug, Clone, Copy)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// True when the monitor requested the stop.
    pub stopped: bool,
    pub steps: usize,
    pub rejected: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

fn all_finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn initial_step<const N: usize, F>(f: &F, t0: f64, y0: &[f64; N], f0: &[f64; N], dir: f64, o: &Options) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = o.atol + o.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(o.h_max);
    let y1 = axpy(y0, dir * h, &[(1.0, f0)]);
    let f1 = f(t0 + dir * h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = o.atol + o.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    let h = (100.0 * h).min(h1).min(o.h_max);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6
    }
}

/// Integrate `y' = f(t, y)` from `t0` towards `t_end` (either direction),
/// calling `monitor` after every accepted step.
pub fn integrate<const N: usize, F, Mon>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &Options,
    mut monitor: Mon,
) -> Result<Outcome<N>, OdeError<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    Mon: FnMut(&Step<N>) -> Control,
{
    if !all_finite(&y0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(OdeError::BadInitialState);
    }
    let mut t = t0;
    let mut y = y0;
    if t_end == t0 {
        return Ok(Outcome {
            t,
            y,
            stopped: false,
            steps: 0,
            rejected: 0,
        });
    }
    let dir = if t_end > t0 { 1.0 } else { -1.0 };
    let mut k1 = f(t, &y);
    let mut h = match opts.h0 {
        Some(h) => h.abs().min(opts.h_max),
        None => initial_step(&f, t, &y, &k1, dir, opts),
    };
    let mut facold: f64 = 1e-4;
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe: f64 = 0.9;
    let (facc1, facc2): (f64, f64) = (1.0 / 0.2, 1.0 / 10.0);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    loop {
        if steps + rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps {
                t,
                steps: steps + rejected,
                y,
            });
        }
        let remaining = (t_end - t) * dir;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let h_min = opts.h_min_rel * (t.abs() + 1.0);
        if h < h_min && !last {
            return Err(OdeError::StepUnderflow { t, h, y });
        }
        let hs = dir * h;

        let y2 = axpy(&y, hs, &[(A21, &k1)]);
        let k2 = f(t + C2 * hs, &y2);
        let y3 = axpy(&y, hs, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * hs, &y3);
        let y4 = axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * hs, &y4);
        let y5 = axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * hs, &y5);
        let y6 = axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + hs, &y6);
        let ynew = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + hs, &ynew);

        let mut err = 0.0;
        let mut finite = all_finite(&ynew) && all_finite(&k7);
        for i in 0..N {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk).powi(2);
        }
        err = (err / N as f64).sqrt();
        if !err.is_finite() {
            finite = false;
        }

        if !finite {
            rejected += 1;
            last_rejected = true;
            h *= 0.1;
            if h < h_min {
                return Err(OdeError::StepUnderflow { t, h, y });
            }
            continue;
        }

        let fac11 = err.powf(expo1);
        let mut fac = fac11 / facold.powf(beta);
        fac = (facc2).max(facc1.min(fac / safe));
        let mut hnew = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            steps += 1;
            let mut rcont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = ynew[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - hs * k7[i] - bspl;
                rcont[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { t_end } else { t + hs };
            let step = Step {
                t0: t,
                t1: t_new,
                y0: y,
                y1: ynew,
                rcont,
            };
            k1 = k7;
            y = ynew;
            t = t_new;
            if monitor(&step) == Control::Stop {
                return Ok(Outcome {
                    t,
                    y,
                    stopped: true,
                    steps,
                    rejected,
                });
            }
            if last {
                return Ok(Outcome {
                    t,
                    y,
                    stopped: false,
                    steps,
                    rejected,
                });
            }
            if hnew.abs() > opts.h_max {
                hnew = opts.h_max;
            }
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew;
        } else {
            hnew = h / (facc1.min(fac11 / safe));
            rejected += 1;
            last_rejected = true;
            h = hnew;
        }
    }
}

/// All accepted steps of a run, evaluable anywhere in the covered interval.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    steps: Vec<Step<N>>,
    t0: f64,
    y0: [f64; N],
}

impl<const N: usize> DenseSolution<N> {
    pub fn new(t0: f64, y0: [f64; N]) -> Self {
        DenseSolution {
            steps: Vec::new(),
            t0,
            y0,
        }
    }

    pub fn push(&mut self, s: &Step<N>) {
        self.steps.push(*s);
    }

    pub fn steps(&self) -> &[Step<N>] {
        &self.steps
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_final(&self) -> f64 {
        self.steps.last().map(|s| s.t1).unwrap_or(self.t0)
    }

    pub fn y_final(&self) -> [f64; N] {
        self.steps.last().map(|s| s.y1).unwrap_or(self.y0)
    }

    /// Interpolated state; clamps to the covered interval.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if self.steps.is_empty() {
            return self.y0;
        }
        let forward = self.t_final() >= self.t0;
        // Steps are ordered along the integration direction.
        let idx = self.steps.partition_point(|s| {
            if forward {
                s.t1 < t
            } else {
                s.t1 > t
            }
        });
        let idx = idx.min(self.steps.len() - 1);
        let s = &self.steps[idx];
        let tc = if forward {
            t.clamp(s.t0, s.t1)
        } else {
            t.clamp(s.t1, s.t0)
        };
        s.eval(tc)
    }
}

/// Integrate and keep the whole dense trajectory.
pub fn solve_dense<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &Options,
) -> Result<DenseSolution<N>, OdeError<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut sol = DenseSolution::new(t0, y0);
    integrate(f, t0, y0, t_end, opts, |s| {
        sol.push(s);
        Control::Continue
    })?;
    Ok(sol)
}

/// Locate a root of `g` in `[a, b]` given a sign change, by a safeguarded
/// secant/bisection iteration (Illinois variant). Returns the root estimate.
pub fn find_root<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i32;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = g(c);
        if fc == 0.0 {
            return c;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        // Guard against stagnation of one endpoint.
        if (b - a).abs() > tol {
            let m = 0.5 * (a + b);
            let fm = g(m);
            if fm == 0.0 {
                return m;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let opts = Options::with_tol(1e-10, 1e-12);
        let out = integrate(|_t, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 5.0, &opts, |_| Control::Continue).unwrap();
        assert!((out.y[0] - (-5.0f64).exp()).abs() < 1e-10);
        assert_eq!(out.t, 5.0);
    }

    #[test]
    fn backward_integration_recovers_start() {
        let opts = Options::with_tol(1e-11, 1e-13);
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let fwd = integrate(f, 0.0, [1.0, 0.0], 3.0, &opts, |_| Control::Continue).unwrap();
        let back = integrate(f, 3.0, fwd.y, 0.0, &opts, |_| Control::Continue).unwrap();
        assert!((back.y[0] - 1.0).abs() < 1e-9);
        assert!(back.y[1].abs() < 1e-9);
    }

    #[test]
    fn dense_output_matches_exact_solution_between_steps() {
        let opts = Options::with_tol(1e-10, 1e-12);
        let sol = solve_dense(|_t, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, &opts).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=1000 {
            let t = 10.0 * i as f64 / 1000.0;
            let y = sol.eval(t);
            worst = worst.max((y[0] - t.sin()).abs()).max((y[1] - t.cos()).abs());
        }
        assert!(worst < 1e-8, "dense error {worst}");
    }

    #[test]
    fn monitor_can_stop_early() {
        let opts = Options::default();
        let out = integrate(|_t, _y: &[f64; 1]| [1.0], 0.0, [0.0], 100.0, &opts, |s| {
            if s.y1[0] > 1.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.t < 100.0);
    }

    #[test]
    fn blow_up_reports_underflow_with_last_state() {
        // y' = y^2 from y(0) = 1 blows up at t = 1.
        let opts = Options::default();
        let err = integrate(|_t, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, &opts, |_| Control::Continue).unwrap_err();
        let (t, y) = err.last_state().unwrap();
        assert!(t < 1.0 && t > 0.99);
        assert!(y[0] > 1e3);
    }

    #[test]
    fn find_root_cosine() {
        let r = find_root(|t| t.cos(), 1.0, 2.0, 1e-14);
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }
}
