use approx::assert_relative_eq;
use ep_core::mcriteria::y1_closed_form;
use ep_core::ode::{self, Options};
use ep_core::special::*;
use proptest::prelude::*;

fn f(a: f64, b: f64, c: f64, z: f64) -> f64 {
    gauss_2f1(Hyp2F1Params::new(a, b, c, z)).unwrap()
}

#[test]
fn classical_values() {
    assert_eq!(f(0.3, -1.7, 2.2, 0.0), 1.0);
    assert_relative_eq!(f(1.0, 1.0, 2.0, 0.5), 2.0 * 2f64.ln(), epsilon = 1e-14);
    assert_relative_eq!(f(1.0, 1.0, 2.0, 0.9), -(0.1f64).ln() / 0.9, max_relative = 1e-12);
    // (1 − z)^{−a}
    assert_relative_eq!(f(0.7, 1.3, 1.3, 0.8), 0.2f64.powf(-0.7), max_relative = 1e-12);
    // arcsin z / z = 2F1(1/2, 1/2; 3/2; z²)
    assert_relative_eq!(f(0.5, 0.5, 1.5, 0.81), 0.9f64.asin() / 0.9, max_relative = 1e-12);
}

#[test]
fn assembled_y1_is_a_multiple_of_the_simplified_form() {
    for d in 3..=6u32 {
        let df = d as f64;
        let beta = (df - 2.0) / 2.0;
        for &m0 in &[0.7f64, 1.3] {
            let k = -m0.powf(1.0 + beta / 2.0) / 2.0;
            for i in 0..20 {
                let m = m0 * (0.05 + 0.9 * i as f64 / 19.0);
                let z = (m / m0).powf(beta);
                let assembled = m * (m0.powf(beta) - m.powf(beta)).sqrt() * f(-0.5, (df - 1.0) / (df - 2.0), 1.0 / (df - 2.0), z);
                let simple = y1_closed_form(d, m0, m).0;
                assert!((assembled - k * simple).abs() < 1e-10 * (1.0 + assembled.abs()), "d={d} M={m}: {assembled} {}", k * simple);
            }
        }
    }
}

#[test]
fn heun_initial_data_and_degenerate_case() {
    let p = HeunParams {
        a: 2.5,
        q: 0.7,
        alpha: 1.2,
        beta: -0.4,
        gamma: 1.5,
        delta: 0.3,
    };
    let v = heun_local(&p, 0.0).unwrap();
    assert_eq!((v.value, v.derivative), (1.0, 0.7 / (1.5 * 2.5)));
    let triv = HeunParams { q: 0.0, alpha: 0.0, ..p };
    let v = heun_local(&triv, 0.4).unwrap();
    assert_eq!((v.value, v.derivative), (1.0, 0.0));
}

#[test]
fn heun_series_matches_direct_integration() {
    // the attractive-case parameter set at M0 = 0.8
    let a = 1.0 - 1.0 / 0.64;
    let p = HeunParams {
        a,
        q: 0.75 - 1.5 / 0.64,
        alpha: 0.5,
        beta: 2.5,
        gamma: 1.5,
        delta: 2.0,
    };
    let z = 0.3;
    let series = heun_local(&p, z).unwrap();
    // start off the singular point from a three-term expansion
    let c = p.coefficients(4);
    let z0 = 1e-4;
    let w0 = c[0] + c[1] * z0 + c[2] * z0 * z0 + c[3] * z0.powi(3);
    let d0 = c[1] + 2.0 * c[2] * z0 + 3.0 * c[3] * z0 * z0;
    let sol = ode::solve_dense(|t, y: &[f64; 2]| p.rhs(t, y), z0, [w0, d0], z, &Options::with_tol(1e-13, 1e-15)).unwrap();
    let y = sol.y_final();
    assert_relative_eq!(series.value, y[0], max_relative = 1e-8);
    assert_relative_eq!(series.derivative, y[1], max_relative = 1e-8);
}

#[test]
fn heun_continuation_round_trip() {
    let p = HeunParams {
        a: -2.0,
        q: 0.4,
        alpha: 0.5,
        beta: 1.5,
        gamma: 1.2,
        delta: 0.8,
    };
    let s = heun_local(&p, 0.3).unwrap();
    let same = heun_continue(&p, 0.3, (s.value, s.derivative, 0.3)).unwrap();
    assert_eq!((same.value, same.derivative), (s.value, s.derivative));
    let there = heun_continue(&p, 0.9, (s.value, s.derivative, 0.3)).unwrap();
    let back = heun_continue(&p, 0.3, (there.value, there.derivative, 0.9)).unwrap();
    assert!((back.value - s.value).abs() < 1e-9 && (back.derivative - s.derivative).abs() < 1e-9);
    // inside the series radius the two agree
    let s2 = heun_local(&p, 0.55).unwrap();
    let c2 = heun_continue(&p, 0.55, (s.value, s.derivative, 0.3)).unwrap();
    assert!((s2.value - c2.value).abs() < 1e-10);
    assert!(matches!(heun_continue(&p, 1.5, (s.value, s.derivative, 0.3)), Err(SpecialError::PathHitsSingularity { .. })));
    assert!(matches!(heun_local(&p, 0.95), Err(SpecialError::ContinuationNeeded { .. })));
}

/// Exact check of the three-term recurrence with rational arithmetic.
#[test]
fn heun_recurrence_exact_rationals() {
    use num_rational::Ratio;
    type Q = Ratio<i64>;
    let (a, q, al, be, ga, de) = (Q::new(3, 1), Q::new(1, 2), Q::new(1, 1), Q::new(2, 1), Q::new(3, 2), Q::new(1, 2));
    let ep = al + be - ga - de + Q::from_integer(1);
    let mut c = vec![Q::from_integer(1), q / (ga * a)];
    for j in 1..6i64 {
        let jf = Q::from_integer(j);
        let one = Q::from_integer(1);
        let r = a * (jf + one) * (jf + ga);
        let qj = jf * ((jf - one + ga) * (one + a) + a * de + ep);
        let pj = (jf - one + al) * (jf - one + be);
        let next = ((qj + q) * c[j as usize] - pj * c[j as usize - 1]) / r;
        c.push(next);
    }
    let p = HeunParams {
        a: 3.0,
        q: 0.5,
        alpha: 1.0,
        beta: 2.0,
        gamma: 1.5,
        delta: 0.5,
    };
    let fl = p.coefficients(7);
    for (exact, approx) in c.iter().zip(&fl) {
        let e = *exact.numer() as f64 / *exact.denom() as f64;
        assert_relative_eq!(e, *approx, max_relative = 1e-14);
    }
}

#[test]
fn near_integer_c_minus_a_minus_b() {
    // reference values from 30-digit arbitrary-precision evaluation
    let cases = [
        ((1.5209255692560992, -1.129069594950384, 0.3916061502441317, 0.79), -1.8944516763268675),
        ((1.5209255692560992, -1.129069594950384, 0.3916061502441317, 0.95), -1.9443240290702241),
        ((0.3, 0.7, 1.003, 0.93), 1.6137405986504283),
        ((0.3, 0.7, 1.02, 0.93), 1.5943875584904505),
        ((-1.7, 1.2, 0.505, 0.6), -0.60237935603957755),
    ];
    for ((a, b, c, z), want) in cases {
        assert_relative_eq!(f(a, b, c, z), want, max_relative = 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contiguous_relation(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.3f64..3.0, z in 0.0f64..0.95) {
        let lhs = (c - a) * f(a - 1.0, b, c, z) + (2.0 * a - c + (b - a) * z) * f(a, b, c, z) + a * (z - 1.0) * f(a + 1.0, b, c, z);
        let scale = 1.0 + ((c - a) * f(a - 1.0, b, c, z)).abs() + (a * (z - 1.0) * f(a + 1.0, b, c, z)).abs();
        prop_assert!(lhs.abs() < 1e-9 * scale, "{lhs:e}");
    }

    #[test]
    fn hypergeometric_ode_residual(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.3f64..3.0, z in 0.05f64..0.9) {
        let h = 1e-5;
        let w = f(a, b, c, z);
        let wp = (f(a, b, c, z + h) - f(a, b, c, z - h)) / (2.0 * h);
        let wpp = (f(a, b, c, z + h) - 2.0 * w + f(a, b, c, z - h)) / (h * h);
        let res = z * (1.0 - z) * wpp + (c - (a + b + 1.0) * z) * wp - a * b * w;
        let scale = 1.0 + (z * (1.0 - z) * wpp).abs() + ((c - (a + b + 1.0) * z) * wp).abs() + (a * b * w).abs();
        prop_assert!(res.abs() < 1e-4 * scale, "{res:e}");
        // the analytic derivative matches the difference quotient
        let d = gauss_2f1_deriv(Hyp2F1Params::new(a, b, c, z)).unwrap();
        prop_assert!((d - wp).abs() < 1e-6 * (1.0 + d.abs()));
    }

    #[test]
    fn heun_ode_residual(a in prop_oneof![-3.0f64..-1.2, 1.5f64..3.0], q in -1.0f64..1.0,
                         alpha in 0.0f64..2.0, beta in 0.0f64..2.0, gamma in 0.5f64..2.5, delta in 0.2f64..2.0,
                         z in 0.05f64..0.9) {
        let p = HeunParams { a, q, alpha, beta, gamma, delta };
        let ev = HeunEvaluator::new(p, 0.95).unwrap();
        let h = 1e-5;
        let (w, wd) = ev.eval(z).unwrap();
        let wdd = (ev.eval(z + h).unwrap().1 - ev.eval(z - h).unwrap().1) / (2.0 * h);
        let rhs = p.rhs(z, &[w, wd]);
        prop_assert!((wdd - rhs[1]).abs() < 1e-6 * (1.0 + wdd.abs() + rhs[1].abs()));
        let wnum = (ev.eval(z + h).unwrap().0 - ev.eval(z - h).unwrap().0) / (2.0 * h);
        prop_assert!((wnum - wd).abs() < 1e-6 * (1.0 + wd.abs()));
    }
}
