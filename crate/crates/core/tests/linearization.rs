use approx::assert_relative_eq;
use ep_core::linearization::*;
use ep_core::model::{classify_equilibria, Background, Family, InitialPoint, Params, RadialProfile};
use proptest::prelude::*;

fn params(d: u32, k: f64, c: f64) -> Params {
    Params::new(d, k, c, 0.0, 0.0).unwrap()
}

fn policy_with_horizon(h: f64) -> HorizonPolicy {
    HorizonPolicy {
        horizon: Some(h),
        ..HorizonPolicy::default()
    }
}

#[test]
fn zero_gradient_data_keep_q_at_one() {
    let p = params(3, 1.0, 1.0);
    for ip in [InitialPoint::new(0.0, 0.4, -0.3, 0.0, 0.0), InitialPoint::new(2.0, -0.1, 0.2, 0.0, 0.0)] {
        let tr = integrate_coupled(&p, &ip, 30.0, 1e-10, LinearForm::Consistent).unwrap();
        for s in tr.sol.steps() {
            assert_eq!((s.y1[3], s.y1[4], s.y1[5]), (1.0, 0.0, 0.0));
        }
        assert!(detect_q_zero(&tr).t_star.is_none());
    }
}

#[test]
fn initial_linear_state() {
    let p = params(3, -1.0, 1.0);
    let ip = InitialPoint::new(1.0, 0.2, 0.1, -0.7, 0.4);
    let tr = integrate_coupled(&p, &ip, 1.0, 1e-10, LinearForm::Consistent).unwrap();
    let s = tr.linear_state(0.0);
    assert_eq!((s.q, s.p1, s.p2), (1.0, -0.7, 0.4));
    // q̇(0) = u0 by finite differences on the dense output
    let h = 1e-5;
    let dq = (tr.linear_state(h).q - tr.linear_state(0.0).q) / h;
    assert!((dq + 0.7).abs() < 1e-4);
}

#[test]
fn d4_zero_velocity_detector_examples() {
    // M0 = 1 means G0 = -1/4; the implemented closed form is 1 - 2 v0/M0²
    let p = params(4, 1.0, 0.0);
    let zero = |v0: f64| {
        let ip = InitialPoint::new(1.0, 0.0, -0.25, 0.0, v0);
        let tr = integrate_coupled(&p, &ip, 1e3, 1e-10, LinearForm::Consistent).unwrap();
        detect_q_zero(&tr)
    };
    assert!(zero(0.6).t_star.is_some());
    let none = zero(0.4);
    assert!(none.t_star.is_none() && none.q_min > 0.15);
    assert!(zero(-0.6).t_star.is_none());
}

#[test]
fn detected_root_is_a_sign_change() {
    let p = params(3, 1.0, 1.0);
    let ip = InitialPoint::new(1.0, 0.2, 0.0, -2.0, 0.5);
    let tr = integrate_coupled(&p, &ip, 20.0, 1e-10, LinearForm::Consistent).unwrap();
    let z = detect_q_zero(&tr);
    let t = z.t_star.unwrap();
    assert!(tr.linear_state(t).q.abs() < 1e-8);
    assert!(tr.linear_state(t - 1e-4).q > 0.0 && tr.linear_state(t + 1e-4).q < 0.0);
}

#[test]
fn t_star_is_stable_under_tolerance_halving() {
    let p = params(3, 1.0, 1.0);
    for ip in [InitialPoint::new(1.0, 0.2, 0.0, -2.0, 0.5), InitialPoint::new(1.0, -0.3, 0.1, 0.5, 3.0)] {
        let t = |tol: f64| {
            let tr = integrate_coupled(&p, &ip, 50.0, tol, LinearForm::Consistent).unwrap();
            detect_q_zero(&tr).t_star.unwrap()
        };
        let (a, b) = (t(1e-10), t(5e-11));
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }
}

fn max_radon_deviation(p: &Params, ip: &InitialPoint, t_end: f64) -> f64 {
    let tr = integrate_coupled(p, ip, t_end, 1e-11, LinearForm::Consistent).unwrap();
    let uv = direct_uv(p, ip, t_end, 1e-11, LinearForm::Consistent, 1e8).unwrap();
    let t_max = uv.sol.t_final().min(tr.sol.t_final());
    let mut worst = 0.0f64;
    for i in 0..=400 {
        let t = t_max * i as f64 / 400.0;
        let s = tr.linear_state(t);
        if s.q < 0.1 {
            break;
        }
        let y = uv.sol.eval(t);
        let du = (s.p1 / s.q - y[3]).abs() / (1.0 + y[3].abs());
        let dv = (s.p2 / s.q - y[4]).abs() / (1.0 + y[4].abs());
        worst = worst.max(du).max(dv);
    }
    worst
}

#[test]
fn radon_equivalence_samples() {
    let cases = [
        (params(3, 1.0, 1.0), InitialPoint::new(1.0, 0.3, -0.2, 0.5, -0.4)),
        (params(4, 1.0, 0.0), InitialPoint::new(1.0, 0.0, -0.3, 0.2, 0.3)),
        (params(3, -1.0, 1.0), InitialPoint::new(1.0, 0.5, 0.2, -0.3, 0.6)),
        (Params::new(2, 1.0, 1.0, 0.3, 0.2).unwrap(), InitialPoint::new(1.0, 0.1, 0.1, 0.4, -0.2)),
    ];
    for (p, ip) in cases {
        assert!(max_radon_deviation(&p, &ip, 20.0) < 1e-6);
    }
}

#[test]
fn direct_uv_blows_up_where_q_vanishes() {
    let p = params(3, 1.0, 1.0);
    let ip = InitialPoint::new(1.0, 0.2, 0.0, -2.0, 0.5);
    let tr = integrate_coupled(&p, &ip, 20.0, 1e-11, LinearForm::Consistent).unwrap();
    let t_star = detect_q_zero(&tr).t_star.unwrap();
    let uv = direct_uv(&p, &ip, 20.0, 1e-11, LinearForm::Consistent, 1e8).unwrap();
    let (a, b) = uv.escape.unwrap();
    assert!(a <= t_star + 1e-6 && (b - t_star).abs() < 1e-4, "{a} {b} {t_star}");
    // |u| ~ 1/q close to the zero
    for &eps in &[1e-2, 1e-3] {
        let t = ep_core::ode::find_root(|t| tr.linear_state(t).q - eps, 0.0, t_star, 1e-13);
        let u = uv.sol.eval(t)[3];
        assert!(u.abs() > 0.5 / eps, "eps={eps}: u={u}");
    }
}

#[test]
fn direct_uv_at_rest_stays_at_rest() {
    let p = params(3, -1.0, 1.0);
    let node = classify_equilibria(&p).unwrap().stable_node().unwrap();
    let ip = InitialPoint::new(1.0, node.F, node.G, 0.0, 0.0);
    let uv = direct_uv(&p, &ip, 10.0, 1e-10, LinearForm::Consistent, 1e8).unwrap();
    let y = uv.sol.y_final();
    assert!(y[3].abs() < 1e-14 && y[4].abs() < 1e-14);
}

#[test]
fn third_order_residual_cases() {
    let p = params(3, 1.0, 1.0);
    let ip = InitialPoint::new(1.0, 0.0, 0.0, 0.0, 0.0);
    let tr = integrate_coupled(&p, &ip, 10.0, 1e-10, LinearForm::Consistent).unwrap();
    assert_eq!(third_order_residual(&tr, &p).max_abs, 0.0);

    let ip = InitialPoint::new(1.0, 0.3, -0.1, 0.4, -0.2);
    let tr = integrate_coupled(&p, &ip, 30.0, 1e-10, LinearForm::Consistent).unwrap();
    let r = third_order_residual(&tr, &p);
    assert!(r.samples > 50 && r.max_abs < 1e-6, "{r:?}");

    let bump = |t: f64| [0.05 * t.sin(), 0.05 * t.cos(), -0.05 * t.sin()];
    let bad = third_order_residual_with(&tr, &p, Some(&bump));
    assert!(bad.max_abs > 1e-3, "{bad:?}");
}

#[test]
fn third_order_residual_general_coefficients() {
    let prof = RadialProfile::builtin(Family::Gaussian { a: 0.5, sigma: 1.5 }).unwrap();
    let cases = [
        Params::new(3, 1.0, 1.0, 0.2, 0.3).unwrap(),
        Params::with_background(3, 1.0, Background::Profile(prof.clone()), 0.1, 0.0).unwrap(),
        Params::with_background(2, -0.5, Background::Profile(prof), 0.0, 0.2).unwrap(),
    ];
    let ip = InitialPoint::new(0.8, 0.2, -0.1, 0.3, 0.2);
    for p in cases {
        for form in [LinearForm::Consistent, LinearForm::AsPrinted] {
            let tr = integrate_coupled(&p, &ip, 15.0, 1e-10, form).unwrap();
            let r = third_order_residual(&tr, &p);
            assert!(r.max_abs < 1e-6, "{form:?}: {r:?}");
        }
    }
}

#[test]
fn equilibrium_data_classification() {
    let p = params(3, -1.0, 1.0);
    let node = classify_equilibria(&p).unwrap().stable_node().unwrap();
    let pol = HorizonPolicy::default();
    let v = classify_point(&p, &InitialPoint::new(1.0, node.F, node.G, 0.0, 0.0), &pol).unwrap();
    assert_eq!(v.outcome, Outcome::SmoothCertified);
    assert_eq!(v.mechanism, Some(Mechanism::NodeTail));

    let s3 = 3f64.sqrt();
    for &(u0, v0) in &[(-1.0, 0.0), (0.5, -2.5), (-1.5, 0.2), (0.0, -2.2), (1.0, -3.9)] {
        let want = 2.0 + s3 * u0 + v0 > 0.0;
        let crit = equilibrium_criterion(&p, u0, v0).unwrap();
        assert_relative_eq!(crit.value, (2.0 + s3 * u0 + v0) / 2.0, epsilon = 1e-14);
        let got = classify_point(&p, &InitialPoint::new(1.0, node.F, node.G, u0, v0), &pol).unwrap();
        assert_eq!(got.is_smooth(), want, "({u0},{v0}): {got:?}");
        assert_eq!(crit.smooth, want);
    }
}

#[test]
fn d1_closed_form_example() {
    let p = params(1, 1.0, 1.0);
    // for d = 1 the divergence pair obeys the same system, so u0 = v0 = 0 is consistent
    let ip = InitialPoint::new(1.0, 0.5, 0.3, 0.0, 0.0);
    assert!(d1_criterion(&p, &ip).unwrap());
    let v = classify_point(&p, &ip, &HorizonPolicy::default()).unwrap();
    assert!(v.is_smooth());
    let ip = InitialPoint::new(1.0, 0.5, 0.3, -1.5, 0.0);
    assert!(!d1_criterion(&p, &ip).unwrap());
    let v = classify_point(&p, &ip, &HorizonPolicy::default()).unwrap();
    assert_eq!(v.outcome, Outcome::BlowUp);
}

#[test]
fn separatrix_certificate_in_pipeline() {
    let p = params(3, -1.0, 1.0);
    for &(u0, v0) in &[(0.0, 0.0), (3.0, -1.0), (-2.0, 5.0)] {
        let v = classify_point(&p, &InitialPoint::new(1.0, 0.0, -1.0, u0, v0), &HorizonPolicy::default()).unwrap();
        assert_eq!(v.outcome, Outcome::BlowUp);
        assert_eq!(v.mechanism, Some(Mechanism::SeparatrixCertificate));
        assert!(v.t_star.unwrap() > 0.0);
    }
}

#[test]
fn non_analytic_regimes_report_to_horizon() {
    let p = Params::new(3, 1.0, 1.0, 0.0, 0.5).unwrap();
    let v = classify_point(&p, &InitialPoint::new(1.0, 0.1, 0.0, 0.1, 0.1), &policy_with_horizon(40.0)).unwrap();
    assert_eq!(v.outcome, Outcome::SmoothToHorizon);
    assert_eq!(v.horizon, 40.0);
    let v = classify_point(&p, &InitialPoint::new(1.0, 0.1, 0.0, -5.0, 0.1), &policy_with_horizon(40.0)).unwrap();
    assert_eq!(v.outcome, Outcome::BlowUp);
    assert_eq!(v.mechanism, Some(Mechanism::QZero));
}

#[test]
fn verdict_serializes_with_expected_fields() {
    let p = params(3, 1.0, 1.0);
    let v = classify_point(&p, &InitialPoint::new(1.0, 0.1, 0.0, 0.0, 0.0), &policy_with_horizon(10.0)).unwrap();
    let j = serde_json::to_value(v).unwrap();
    for key in ["r0", "F0", "G0", "u0", "v0", "outcome", "mechanism", "t_star", "q_min", "horizon"] {
        assert!(j.get(key).is_some(), "{key}");
    }
    assert_eq!(j["outcome"], "smooth-to-horizon");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_gradients_never_give_a_q_zero(
        d in 1u32..6, k in prop_oneof![-1.5f64..-0.2, 0.2f64..1.5], c in 0.0f64..2.0,
        f0 in -1.0f64..1.0, g0 in -1.0f64..0.3
    ) {
        let p = params(d, k, c);
        let v = classify_point(&p, &InitialPoint::new(1.0, f0, g0, 0.0, 0.0), &policy_with_horizon(30.0)).unwrap();
        prop_assert_ne!(v.mechanism, Some(Mechanism::QZero));
        prop_assert_eq!(v.q_min, 1.0);
    }

    #[test]
    fn radon_equivalence(
        d in 1u32..6, k in prop_oneof![-1.5f64..-0.2, 0.2f64..1.5], c in 0.0f64..2.0,
        f0 in -0.5f64..0.5, g0 in -0.5f64..0.2, u0 in -1.0f64..1.0, v0 in -1.0f64..1.0
    ) {
        let p = params(d, k, c);
        let ip = InitialPoint::new(1.0, f0, g0, u0, v0);
        // bounded characteristics only; at an escape both sides are singular
        prop_assume!(integrate_coupled(&p, &ip, 10.0, 1e-8, LinearForm::Consistent).unwrap().escape.is_none());
        prop_assert!(max_radon_deviation(&p, &ip, 10.0) < 1e-6);
    }

    #[test]
    fn node_certificate_is_stable_under_longer_runs(
        f0 in 0.2f64..1.2, g0 in -0.3f64..0.3, u0 in -1.0f64..1.0, v0 in -1.0f64..1.0
    ) {
        let p = params(3, -1.0, 1.0);
        let a = classify_point(&p, &InitialPoint::new(1.0, f0, g0, u0, v0), &HorizonPolicy::default()).unwrap();
        let longer = HorizonPolicy { node_time: 400.0, ..HorizonPolicy::default() };
        let b = classify_point(&p, &InitialPoint::new(1.0, f0, g0, u0, v0), &longer).unwrap();
        prop_assert_eq!(a.outcome, b.outcome);
        if a.outcome == Outcome::SmoothCertified {
            prop_assert!(a.q_min > 0.0);
        }
    }
}
