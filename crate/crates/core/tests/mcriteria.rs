use approx::assert_relative_eq;
use ep_core::linearization::{classify_point, integrate_coupled, HorizonPolicy, LinearForm};
use ep_core::mcriteria::*;
use ep_core::model::{InitialPoint, Params};
use ep_core::ode;
use proptest::prelude::*;

fn params(d: u32, k: f64, c: f64) -> Params {
    Params::new(d, k, c, 0.0, 0.0).unwrap()
}

#[test]
fn chart_examples() {
    let p = params(4, 1.0, 0.0);
    let ch = m_chart(&p, 0.0, -0.25).unwrap();
    assert_relative_eq!(ch.M0, 1.0, epsilon = 1e-15);
    assert_eq!(ch.f2(ch.M0), 0.0);
    let p3 = params(3, -1.0, 1.0);
    let ch = m_chart(&p3, 0.0, -0.4).unwrap();
    assert!(ch.f2(ch.M0).abs() < 1e-15);
    assert!(matches!(m_chart(&p3, 0.0, 1.0 / 3.0), Err(MError::OutOfHalfPlane)));
    assert!(matches!(m_chart(&params(2, 1.0, 1.0), 0.0, 0.0), Err(MError::Regime(_))));
    assert!(m_chart(&Params::new(3, 1.0, 1.0, 0.2, 0.0).unwrap(), 0.0, 0.0).is_err());
}

#[test]
fn chart_f2_matches_the_orbit() {
    for &(d, k, c, f0, g0) in &[(3, 1.0, 0.0, 0.4, -0.3), (4, -1.0, 1.0, 0.2, 0.1), (5, 1.0, 1.0, -0.3, -0.2), (6, 1.0, 0.5, 0.0, -0.5)] {
        let p = params(d, k, c);
        let ch = m_chart(&p, f0, g0).unwrap();
        let tr = ep_core::characteristics::integrate_characteristic(
            &p,
            ep_core::characteristics::CharacteristicState::new(0.0, 1.0, f0, g0),
            3.0,
            1e-11,
        )
        .unwrap();
        for s in tr.nodes() {
            let m = (c - d as f64 * s.G).powf(2.0 / d as f64);
            assert!((ch.f2(m) - s.F * s.F).abs() < 1e-9, "d={d} M={m}");
            assert_relative_eq!(ch.G(m), s.G, epsilon = 1e-12);
        }
    }
}

#[test]
fn coefficients_are_singular_where_f_vanishes() {
    let ch = m_chart(&params(4, 1.0, 0.0), 0.0, -0.25).unwrap();
    assert!(matches!(ode_y_coeffs(&ch, ch.M0), Err(MError::Singular(_))));
    assert!(ode_y_coeffs(&ch, 0.5).is_ok());
}

/// Residual of P'' + S1 P' + S2 P along a time-domain run, with P = p1 and
/// M-derivatives obtained from the chain rule dM/dt = −2FM.
fn time_domain_elimination_residual(d: u32, k: f64, c: f64, f0: f64, g0: f64, u0: f64, v0: f64) -> f64 {
    let p = params(d, k, c);
    let ch = m_chart(&p, f0, g0).unwrap();
    let ip = InitialPoint::new(1.0, f0, g0, u0, v0);
    let tr = integrate_coupled(&p, &ip, 2.0, 1e-12, LinearForm::Consistent).unwrap();
    let df = d as f64;
    let state = |t: f64| {
        let y = tr.eval(t);
        let m = (c - df * y[2]).powf(2.0 / df);
        let mdot = -2.0 * y[1] * m;
        let p1dot = ep_core::linearization::coupled_rhs(&p, LinearForm::Consistent, &y)[4];
        (m, mdot, y[4], p1dot / mdot)
    };
    let mut worst = 0.0f64;
    for i in 1..10 {
        let t = 0.2 * i as f64;
        let (m, mdot, pv, pm) = state(t);
        if (state(t).1).abs() < 1e-3 {
            continue;
        }
        let h = 1e-4;
        let dpm_dt = (state(t + h).3 - state(t - h).3) / (2.0 * h);
        let pmm = dpm_dt / mdot;
        let (s1, s2) = ode_y_coeffs(&ch, m).unwrap();
        let scale = pmm.abs() + (s1 * pm).abs() + (s2 * pv).abs();
        worst = worst.max((pmm + s1 * pm + s2 * pv).abs() / scale);
    }
    worst
}

#[test]
fn eliminated_coefficients_match_the_time_domain_system() {
    let cases = [
        (4, 1.0, 0.0, 0.3, -0.25, 0.4, -0.3),
        (4, -1.0, 1.0, 0.5, 0.1, -0.2, 0.7),
        (3, 1.0, 0.0, 0.2, -0.4, 0.1, 0.2),
        (5, 1.0, 1.0, 0.4, -0.1, 0.3, -0.6),
        (6, -1.0, 1.0, 0.6, 0.05, 0.5, 0.5),
    ];
    for (d, k, c, f0, g0, u0, v0) in cases {
        let r = time_domain_elimination_residual(d, k, c, f0, g0, u0, v0);
        assert!(r < 1e-6, "d={d} k={k}: {r:e}");
    }
}

#[test]
fn q_in_m_agrees_with_time_domain_q() {
    for &(d, k, c, f0, g0, u0, v0) in &[(4, 1.0, 0.0, 0.3, -0.25, 0.4, -0.3), (3, -1.0, 1.0, 0.5, 0.1, -0.2, 0.7)] {
        let p = params(d, k, c);
        let ch = m_chart(&p, f0, g0).unwrap();
        let ip = InitialPoint::new(1.0, f0, g0, u0, v0);
        let tr = integrate_coupled(&p, &ip, 1.5, 1e-12, LinearForm::Consistent).unwrap();
        let r0 = -2.0 * f0 * u0 - k * v0;
        let df = d as f64;
        let m_of = |t: f64| (c - df * tr.eval(t)[2]).powf(2.0 / df);
        let m_end = m_of(1.5);
        let sol = integrate_q_in_m(&ch, ch.M0, m_end, [1.0, u0, r0], 1e-12).unwrap();
        for i in 1..=10 {
            let t = 0.15 * i as f64;
            let m = m_of(t);
            assert!((sol.eval(m)[0] - tr.eval(t)[3]).abs() < 1e-7, "d={d} t={t}");
        }
    }
}

#[test]
fn closed_form_y1_solves_the_equation() {
    for d in 3..=6 {
        for &m0 in &[0.5, 1.0, 2.0] {
            let pair = hypergeom_fundamental(d, m0).unwrap();
            let ch = *pair.chart();
            for i in 0..=30 {
                let m = m0 * (0.05 + 0.9 * i as f64 / 30.0);
                let (y, y1, y2) = y1_closed_form(d, m0, m);
                let (s1, s2) = ode_y_coeffs(&ch, m).unwrap();
                let res = y2 + s1 * y1 + s2 * y;
                let scale = y2.abs() + (s1 * y1).abs() + (s2 * y).abs();
                assert!(res.abs() < 1e-9 * scale.max(1.0), "d={d} M={m}: {res:e}");
            }
        }
    }
}

#[test]
fn hypergeometric_second_solution_solves_the_equation() {
    for d in 3..=6 {
        let pair = hypergeom_fundamental(d, 1.3).unwrap();
        let ch = *pair.chart();
        for i in 0..=20 {
            let m = 1.3 * (0.05 + 0.9 * i as f64 / 20.0);
            let h = 1e-5 * m;
            let (y, yd) = pair.ybar2(m).unwrap();
            let ydd = (pair.ybar2(m + h).unwrap().1 - pair.ybar2(m - h).unwrap().1) / (2.0 * h);
            let (s1, s2) = ode_y_coeffs(&ch, m).unwrap();
            let scale = ydd.abs() + (s1 * yd).abs() + (s2 * y).abs();
            assert!((ydd + s1 * yd + s2 * y).abs() < 1e-6 * scale, "d={d} M={m}");
        }
    }
}

#[test]
fn hypergeometric_pair_normalization() {
    for d in 3..=6 {
        let m0 = 0.8;
        let pair = hypergeom_fundamental(d, m0).unwrap();
        assert_relative_eq!(pair.y1(m0).unwrap().0, d as f64 - 2.0, epsilon = 1e-14);
        assert!(pair.ybar2(m0).unwrap().0.abs() < 1e-12);
        assert!(pair.y1(1e-12).unwrap().0.abs() < 1e-10);
        assert!(pair.ybar2(1e-12).unwrap().0.abs() < 1e-8);
        // Y1 root where (M/M0)^{(d-2)/2} = 2/d
        let root = m0 * (2.0 / d as f64).powf(2.0 / (d as f64 - 2.0));
        assert!(pair.y1(root).unwrap().0.abs() < 1e-13);
        // the Wronskian keeps one sign
        let w: Vec<f64> = (1..40)
            .map(|i| {
                let m = m0 * i as f64 / 40.0;
                let (a, ad) = pair.y1(m).unwrap();
                let (b, bd) = pair.ybar2(m).unwrap();
                a * bd - ad * b
            })
            .collect();
        assert!(w.iter().all(|x| *x > 0.0) || w.iter().all(|x| *x < 0.0), "d={d}");
    }
    assert_eq!(y1_closed_form(4, 2.0, 1.0).0, 0.0);
}

#[test]
fn d4_second_solution_is_elementary() {
    for &m0 in &[0.5, 1.0, 1.9] {
        let pair = hypergeom_fundamental(4, m0).unwrap();
        let ch = *pair.chart();
        for i in 1..20 {
            let m = m0 * i as f64 / 20.0;
            let (y, _) = pair.ybar2(m).unwrap();
            let elementary = m.powf(1.5) * (m0 - m).sqrt();
            assert_relative_eq!(y.abs(), elementary, max_relative = 1e-10);
            // Ȳ2 / (2 M F) has unit magnitude
            assert_relative_eq!((y / (2.0 * m * ch.f(m))).abs(), 1.0, max_relative = 1e-9);
        }
    }
}

#[test]
fn criterion_constant() {
    let pair = hypergeom_fundamental(4, 1.5).unwrap();
    assert_eq!(compute_c2(&pair, 0.0).unwrap().value, 0.0);
    for &m0 in &[0.6, 1.0, 2.0] {
        let pair = hypergeom_fundamental(4, m0).unwrap();
        let c2 = compute_c2(&pair, 0.7).unwrap();
        assert_relative_eq!(c2.value, 2.0 * 0.7 / m0.powi(3), max_relative = 1e-8);
    }
    for d in [3, 5, 6] {
        for &m0 in &[0.5, 1.0, 1.8] {
            let pair = hypergeom_fundamental(d, m0).unwrap();
            let c2 = compute_c2(&pair, 1.0).unwrap();
            assert_relative_eq!(c2.limit, c2_limit_analytic(&pair), max_relative = 1e-8);
        }
    }
}

#[test]
fn zero_velocity_criterion_d4_matches_closed_form() {
    let p = params(4, 1.0, 0.0);
    for i in 0..10 {
        for j in 0..10 {
            let m0 = 0.5 + 1.5 * i as f64 / 9.0;
            let v0 = -3.0 + 4.0 * j as f64 / 9.0;
            let g0 = -m0 * m0 / 4.0;
            let closed = criterion_d4_c0_zero_velocity(m0, v0);
            let r = criterion_c0_zero_velocity(&p, g0, v0).unwrap();
            assert_eq!(r.smooth, closed.smooth);
            assert_eq!(r.value, closed.value);
            let n = criterion_c0_zero_velocity_numeric(&p, g0, v0).unwrap();
            assert!((n.value - closed.value).abs() < 1e-8, "M0={m0} v0={v0}: {} vs {}", n.value, closed.value);
        }
    }
}

#[test]
fn zero_velocity_criterion_examples() {
    let p = params(3, 1.0, 0.0);
    assert_eq!(criterion_c0_zero_velocity(&p, -0.3, 0.0).unwrap().value, 1.0);
    assert!(criterion_d4_c0_zero_velocity(1.0, -0.4).smooth);
    assert!(criterion_d4_c0_zero_velocity(1.0, -0.5).smooth);
    let b = criterion_d4_c0_zero_velocity(1.0, 0.5);
    assert!(b.boundary && !b.smooth);
    assert!(!criterion_d4_c0_zero_velocity(1.0, 0.6).smooth);
    // k normalization: (k, G0, v0) and (1, kG0, kv0) give the same value
    let a = criterion_c0_zero_velocity(&params(5, 2.0, 0.0), -0.1, 0.3).unwrap();
    let b = criterion_c0_zero_velocity(&params(5, 1.0, 0.0), -0.2, 0.6).unwrap();
    assert_relative_eq!(a.value, b.value, epsilon = 1e-12);
    assert!(criterion_c0_zero_velocity(&params(3, -1.0, 0.0), -0.3, 0.1).is_err());
    assert!(matches!(criterion_c0_zero_velocity(&p, 0.1, 0.1), Err(MError::OutOfHalfPlane)));
}

#[test]
fn zero_velocity_criterion_agrees_with_detector_d3() {
    let p = params(3, 1.0, 0.0);
    let pol = HorizonPolicy {
        horizon: Some(1e4),
        ..HorizonPolicy::default()
    };
    for &(m0, v0) in &[(1.0f64, -2.0), (1.0, 0.2), (1.0, 1.5), (0.6, 0.5), (1.8, 1.0)] {
        let g0 = -m0.powf(1.5) / 3.0;
        let r = criterion_c0_zero_velocity(&p, g0, v0).unwrap();
        if r.value.abs() < 0.01 {
            continue;
        }
        let v = classify_point(&p, &InitialPoint::new(1.0, 0.0, g0, 0.0, v0), &pol).unwrap();
        assert_eq!(v.is_smooth(), r.smooth, "M0={m0} v0={v0}: {}", r.value);
    }
}

#[test]
fn q_of_m_trivial_data() {
    let r = q_of_m_d4_general(1.2, 0.4, 0.0, 0.0).unwrap();
    assert!(r.branches.iter().all(|b| b.q.iter().all(|q| (q - 1.0).abs() < 1e-12)));
    assert!(r.verdict.smooth);
    let r = q_of_m_d4_general(1.2, -0.4, 0.0, 0.0).unwrap();
    assert_relative_eq!(r.M_plus.unwrap(), (4.0 * 0.16 + 1.44) / 1.2, epsilon = 1e-15);
    assert!((r.q_min - 1.0).abs() < 1e-12);
}

#[test]
fn q_of_m_zero_velocity_reproduces_closed_form() {
    for i in 0..20 {
        let m0 = 0.5 + 1.5 * (i % 5) as f64 / 4.0;
        let v0 = -3.0 + 4.0 * (i / 5) as f64 / 3.0 + 0.05;
        let closed = criterion_d4_c0_zero_velocity(m0, v0);
        let r = q_of_m_d4_general(m0, 0.0, 0.0, v0).unwrap();
        assert_eq!(r.verdict.smooth, closed.smooth, "M0={m0} v0={v0}");
        assert!((r.q_limit - closed.value).abs() < 1e-6, "M0={m0} v0={v0}: {} {}", r.q_limit, closed.value);
    }
}

#[test]
fn q_of_m_matches_detector_and_keeps_convexity() {
    let p = params(4, 1.0, 0.0);
    let pol = HorizonPolicy {
        horizon: Some(1e4),
        ..HorizonPolicy::default()
    };
    for &(m0, f0, u0, v0) in &[(1.0, 0.5, 0.3, 0.2), (1.0, -0.5, 0.3, 0.2), (1.5, -1.0, -0.5, 0.4), (0.7, 0.8, -0.9, 0.1), (2.0, 0.3, 1.0, -1.0)] {
        let r = q_of_m_d4_general(m0, f0, u0, v0).unwrap();
        assert!(r.convexity_preserved, "{m0} {f0} {u0} {v0}");
        let v = classify_point(&p, &InitialPoint::new(1.0, f0, -m0 * m0 / 4.0, u0, v0), &pol).unwrap();
        assert_eq!(v.is_smooth(), r.verdict.smooth, "{m0} {f0} {u0} {v0}");
    }
}

fn attractive_closed_form(m0: f64, v0: f64) -> f64 {
    1.0 + 2.0 * v0 / (1.0 - m0 * m0)
}

#[test]
fn attractive_pair_properties() {
    for &m0 in &[0.15, 0.5, 0.85] {
        let pair = AttractivePair::new(m0).unwrap();
        assert!(pair.y1(1e-10).unwrap().0.abs() < 1e-9);
        assert!(pair.ybar2(1e-10).unwrap().0.abs() < 1e-9);
        assert!(pair.y1(m0).unwrap().0.abs() > 1e-3);
        assert!(pair.ybar2(m0).unwrap().0.abs() < 1e-12);
        assert!(pair.route_agreement(41).unwrap() < 1e-7);
        // elementary oracle for the second solution
        let lam = m0.sqrt() / (1.0 - m0 * m0).sqrt();
        for i in 1..20 {
            let m = m0 * i as f64 / 20.0;
            let want = lam * m * ((m0 - m) * (1.0 - m0 * m)).sqrt();
            assert_relative_eq!(pair.ybar2(m).unwrap().0, want, max_relative = 1e-7);
        }
        let ch = *pair.chart();
        for i in 1..20 {
            let m = m0 * (0.05 + 0.9 * i as f64 / 20.0);
            let (y, yd) = pair.y1(m).unwrap();
            let h = 1e-5 * m;
            let ydd = (pair.y1(m + h).unwrap().1 - pair.y1(m - h).unwrap().1) / (2.0 * h);
            let (s1, s2) = ode_y_coeffs(&ch, m).unwrap();
            let scale = ydd.abs() + (s1 * yd).abs() + (s2 * y).abs();
            assert!((ydd + s1 * yd + s2 * y).abs() < 1e-6 * scale);
        }
    }
}

#[test]
fn attractive_criterion_values() {
    assert_eq!(criterion_d4_attractive(0.5, 0.0).unwrap().criterion.value, 1.0);
    for &m0 in &[0.2, 0.5, 0.8] {
        let pair = AttractivePair::new(m0).unwrap();
        let frob = AttractivePair::new(m0).unwrap().with_route(Route::Frobenius);
        for &v0 in &[-3.0, -0.7, 0.4, 1.0] {
            let r = criterion_d4_attractive_with(&pair, v0).unwrap();
            assert!((r.criterion.value - attractive_closed_form(m0, v0)).abs() < 1e-7, "M0={m0} v0={v0}");
            assert!(r.wronskian.abs() > 1e-10);
            let f = criterion_from_pair(&frob, v0).unwrap();
            assert!((f.value - r.criterion.value).abs() < 1e-7);
        }
    }
    assert!(AttractivePair::new(1.2).is_err());
}

#[test]
fn attractive_criterion_agrees_with_detector() {
    let p = params(4, -1.0, 1.0);
    for &(m0, v0) in &[(0.3, -0.3), (0.3, -0.6), (0.7, -0.1), (0.7, -0.4), (0.5, 1.0)] {
        let r = criterion_d4_attractive(m0, v0).unwrap().criterion;
        let g0 = (1.0 - m0 * m0) / 4.0;
        let v = classify_point(&p, &InitialPoint::new(1.0, 0.0, g0, 0.0, v0), &HorizonPolicy::default()).unwrap();
        assert_eq!(v.is_smooth(), r.smooth, "M0={m0} v0={v0}: {}", r.value);
    }
}

#[test]
fn turning_point_of_a_rising_orbit() {
    let ch = m_chart(&params(4, 1.0, 0.0), -0.5, -0.25).unwrap();
    let m_plus = ch.turning_point().unwrap();
    assert_relative_eq!(m_plus, (4.0 * 0.25 + 1.0) / 1.0, max_relative = 1e-12);
    assert!(ode::find_root(|m| ch.f2(m), 1.5, 2.5, 1e-14) - 2.0 < 1e-12);
}

#[test]
fn d3_path_minimum_matches_detector_q_min() {
    // q(M) and q(t) are the same function along the characteristic, so the
    // detector's running minimum is an independent oracle.
    let p = params(3, 1.0, 0.0);
    let m0: f64 = 4.0 / 3.0;
    let g0 = -m0.powf(1.5) / 3.0;
    for v0 in [0.9, 0.95] {
        let (qmin, at) = c0_zero_velocity_path_minimum(&p, g0, v0).unwrap();
        let verdict = classify_point(&p, &InitialPoint::new(1.0, 0.0, g0, 0.0, v0), &HorizonPolicy::default()).unwrap();
        assert!(at > 0.0 && at < m0);
        assert!((qmin - verdict.q_min).abs() < 1e-6, "{qmin} vs {}", verdict.q_min);
    }
    // endpoint positive, interior dip negative, detector sees the zero
    let end = criterion_c0_zero_velocity(&p, g0, 1.0).unwrap();
    let (qmin, _) = c0_zero_velocity_path_minimum(&p, g0, 1.0).unwrap();
    let verdict = classify_point(&p, &InitialPoint::new(1.0, 0.0, g0, 0.0, 1.0), &HorizonPolicy::default()).unwrap();
    assert!(end.value > 0.01 && qmin < 0.0 && !verdict.is_smooth());
}

#[test]
fn d4_path_minimum_is_endpoint() {
    let p = params(4, 1.0, 0.0);
    for &(m0, v0) in &[(1.0, 0.3), (1.5, -1.0), (0.7, 0.2)] {
        let g0 = -m0 * m0 / 4.0;
        let (qmin, at) = c0_zero_velocity_path_minimum(&p, g0, v0).unwrap();
        assert_eq!(at, 0.0);
        assert_relative_eq!(qmin, 1.0 - 2.0 * v0 / (m0 * m0), epsilon = 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn c2_sign_follows_v0(d in prop_oneof![Just(3u32), Just(5), Just(6)], m0 in 0.3f64..2.5, v0 in -3.0f64..3.0) {
        prop_assume!(v0.abs() > 1e-6);
        let pair = hypergeom_fundamental(d, m0).unwrap();
        let c2 = compute_c2(&pair, v0).unwrap();
        prop_assert_eq!(c2.value > 0.0, v0 > 0.0);
    }

    #[test]
    fn d4_numeric_and_closed_verdicts_agree(m0 in 0.3f64..3.0, v0 in -3.0f64..3.0) {
        let p = params(4, 1.0, 0.0);
        let g0 = -m0 * m0 / 4.0;
        let a = criterion_c0_zero_velocity(&p, g0, v0).unwrap();
        let b = criterion_d4_c0_zero_velocity(m0, v0);
        prop_assert_eq!(a.smooth, b.smooth);
        prop_assert_eq!(a.boundary, b.boundary);
    }

    #[test]
    fn q_of_m_convexity(m0 in 0.5f64..2.0, f0 in -1.0f64..1.0, u0 in -1.0f64..1.0, v0 in -1.0f64..1.0) {
        let r = q_of_m_d4_general(m0, f0, u0, v0).unwrap();
        prop_assert!(r.convexity_preserved);
    }
}
