use approx::assert_relative_eq;
use ep_core::model::*;
use ep_core::quadrature;
use proptest::prelude::*;

fn gaussian(a: f64, sigma: f64) -> RadialProfile {
    RadialProfile::builtin(Family::Gaussian { a, sigma }).unwrap()
}

#[test]
fn derive_point_constant_profiles_have_zero_gradients() {
    let f = RadialProfile::constant(0.7);
    let g = RadialProfile::constant(-0.2);
    for &r0 in &[0.0, 0.3, 2.0, 40.0] {
        let ip = derive_point(&f, &g, r0).unwrap();
        assert_eq!((ip.F0, ip.G0, ip.u0, ip.v0), (0.7, -0.2, 0.0, 0.0));
    }
}

#[test]
fn derive_point_quadratic_family() {
    let f = RadialProfile::builtin(Family::Polynomial { coeffs: vec![0.0, 0.0, 1.0] }).unwrap();
    let ip = derive_point(&f, &RadialProfile::constant(0.0), 1.0).unwrap();
    assert_relative_eq!(ip.u0, 2.0, epsilon = 1e-15);
    assert_relative_eq!(ip.F0, 1.0, epsilon = 1e-15);
}

#[test]
fn derive_point_uses_grid_interpolant_derivative() {
    let r: Vec<f64> = (0..=200).map(|i| i as f64 * 0.02).collect();
    let v: Vec<f64> = r.iter().map(|x| (-x * x).exp()).collect();
    let f = RadialProfile::grid(r, v).unwrap();
    let ip = derive_point(&f, &RadialProfile::constant(0.0), 1.0).unwrap();
    assert_relative_eq!(ip.u0, -2.0 * (-1.0f64).exp(), epsilon = 1e-4);
}

#[test]
fn derive_point_rejects_negative_radius() {
    let f = RadialProfile::constant(0.0);
    assert!(derive_point(&f, &f, -1.0).is_err());
}

#[test]
fn uniform_density_gives_constant_field() {
    let h = radial_field_from_density(&RadialProfile::constant(1.0), 3).unwrap();
    for &r in &[0.0, 1e-6, 0.5, 3.0, 20.0] {
        assert_relative_eq!(h.value(r), 1.0 / 3.0, epsilon = 1e-12);
    }
    let z = radial_field_from_density(&RadialProfile::constant(0.0), 3).unwrap();
    assert_eq!(z.value(1.3), 0.0);
}

#[test]
fn gaussian_density_field_matches_independent_quadrature() {
    let h = radial_field_from_density(&gaussian(1.0, 1.0), 3).unwrap();
    // composite Simpson with 2000 panels as an independent oracle
    let n = 2000;
    let f = |s: f64| s * s * (-s * s).exp();
    let hstep = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * hstep);
    }
    let simpson = acc * hstep / 3.0;
    assert_relative_eq!(h.value(1.0), simpson, max_relative = 1e-11);
}

#[test]
fn density_ingestion_rejects_negative_density() {
    let n0 = gaussian(-1.0, 1.0);
    assert!(matches!(radial_field_from_density(&n0, 3), Err(ModelError::InvalidInput(_))));
    assert!(radial_field_from_density(&RadialProfile::constant(1.0), 1).is_err());
}

fn reproduces_density(n0: &RadialProfile, d: u32) {
    let h = radial_field_from_density(n0, d).unwrap();
    for i in 0..40 {
        let r = 0.05 + i as f64 * 0.1;
        let (v, dv, _) = h.eval(r);
        let n = r * dv + d as f64 * v;
        let want = n0.value(r);
        assert!((n - want).abs() <= 1e-8 * want.abs().max(1e-3), "d={d} r={r}: {n} vs {want}");
    }
}

#[test]
fn density_round_trip_on_families() {
    for d in 2..=5 {
        reproduces_density(&gaussian(1.3, 0.8), d);
        reproduces_density(&RadialProfile::builtin(Family::Rational { a: 2.0, p: 1.5 }).unwrap(), d);
        reproduces_density(
            &RadialProfile::builtin(Family::PolyGaussian {
                coeffs: vec![0.5, 0.0, 1.0],
                sigma: 1.2,
            })
            .unwrap(),
            d,
        );
    }
}

#[test]
fn density_field_small_radius_branch_is_continuous() {
    let n0 = gaussian(1.0, 1.0);
    let h = radial_field_from_density(&n0, 4).unwrap();
    assert_relative_eq!(h.value(0.0), 0.25, epsilon = 1e-15);
    let below = h.value(0.99e-4);
    let above = h.value(1.01e-4);
    assert!((below - above).abs() < 1e-9);
}

#[test]
fn shift_examples() {
    let g0 = gaussian(0.1, 1.0);
    let p = Params::new(4, 1.0, 1.0, 0.0, 0.0).unwrap();
    let (q, g1, s) = shift_to_zero_equilibrium(&p, &g0).unwrap();
    assert_eq!((q.k, q.c_const(), q.m), (1.0, Some(1.0), 0.0));
    assert!(!s.flipped);
    assert_eq!(g1.value(0.7), g0.value(0.7));

    let p = Params::new(4, 1.0, 0.0, 1.0, 0.0).unwrap();
    let (q, g1, s) = shift_to_zero_equilibrium(&p, &g0).unwrap();
    assert_eq!(q.c_const(), Some(4.0));
    assert_eq!(q.m, 0.0);
    assert!(!s.flipped);
    assert_relative_eq!(g1.value(0.7), g0.value(0.7) + 1.0, epsilon = 1e-15);

    let p = Params::new(4, 1.0, 0.0, -1.0, 0.0).unwrap();
    let (q, g1, s) = shift_to_zero_equilibrium(&p, &g0).unwrap();
    assert!(s.flipped);
    assert_eq!((q.k, q.c_const()), (-1.0, Some(4.0)));
    assert_relative_eq!(g1.value(0.7), -(g0.value(0.7) - 1.0), epsilon = 1e-15);
    let (gv, gd, _) = g1.eval(0.7);
    let (hv, hd, _) = g0.eval(0.7);
    assert_relative_eq!(gv, 1.0 - hv, epsilon = 1e-15);
    assert_relative_eq!(gd, -hd, epsilon = 1e-15);
}

#[test]
fn equilibria_examples() {
    let r = classify_equilibria(&Params::new(3, 1.0, 1.0, 0.0, 0.0).unwrap()).unwrap();
    assert_eq!(r.equilibria.len(), 1);
    assert_eq!(r.equilibria[0].kind, EquilibriumKind::Center);
    assert_eq!((r.equilibria[0].F, r.equilibria[0].G), (0.0, 0.0));

    let r = classify_equilibria(&Params::new(3, -1.0, 1.0, 0.0, 0.0).unwrap()).unwrap();
    assert_eq!(r.equilibria.len(), 3);
    let kinds: Vec<_> = r.equilibria.iter().map(|e| e.kind).collect();
    assert!(kinds.contains(&EquilibriumKind::Saddle));
    let s = r.stable_node().unwrap();
    assert_relative_eq!(s.F, (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    assert_relative_eq!(s.G, 1.0 / 3.0, epsilon = 1e-15);
    let u = r.equilibria.iter().find(|e| e.kind == EquilibriumKind::UnstableNode).unwrap();
    assert_relative_eq!(u.F, -(1.0f64 / 3.0).sqrt(), epsilon = 1e-15);

    let r = classify_equilibria(&Params::new(2, 1.0, 2.0, -1.0, 0.0).unwrap()).unwrap();
    assert_eq!(r.discriminant, 0.0);
    assert_eq!(r.equilibria.len(), 1);
    assert_eq!(r.equilibria[0].kind, EquilibriumKind::SaddleNode);
    assert_eq!((r.equilibria[0].F, r.equilibria[0].G), (0.0, 1.0));
}

#[test]
fn equilibria_are_fixed_points_of_the_vector_field() {
    let p = Params::new(3, -1.0, 1.0, 0.2, 0.0).unwrap();
    for e in classify_equilibria(&p).unwrap().equilibria {
        let f = ep_core::characteristics::rhs(&p, &[1.0, e.F, e.G]);
        assert!(f[1].abs() < 1e-14 && f[2].abs() < 1e-14, "{e:?}");
    }
}

#[test]
fn density_checks() {
    let zero = RadialProfile::constant(0.0);
    let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let p = Params::new(3, 1.0, 1.0, 0.0, 0.0).unwrap();
    let rep = check_density_positivity(&zero, &zero, &p, &grid);
    assert!(rep.ok && rep.strictly_positive);

    let g = RadialProfile::constant(1.0 / 3.0 + 0.1);
    let rep = check_density_positivity(&zero, &g, &p, &grid);
    assert!(!rep.ok);
    assert_eq!(rep.first_violation, Some(0.0));
    assert_relative_eq!(rep.min_density, -0.3, epsilon = 1e-14);

    // equality: non-strict check passes, strict check fails
    let g = RadialProfile::constant(1.0 / 3.0);
    let rep = check_density_positivity(&zero, &g, &p, &grid);
    assert!(rep.ok);
    assert!(!rep.strictly_positive);
}

#[test]
fn ingested_density_passes_the_positivity_check() {
    let n0 = gaussian(2.0, 1.0);
    let c = 0.0;
    let g0 = field_slope_from_density(&n0, 4, c).unwrap();
    let p = Params::new(4, 1.0, c, 0.0, 0.0).unwrap();
    let grid: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
    let zero = RadialProfile::constant(0.0);
    let rep = check_density_positivity(&zero, &g0, &p, &grid);
    assert!(rep.ok);
    // n(r) reconstructed by the check equals n0
    for &r in &grid[1..] {
        let ip = derive_point(&zero, &g0, r).unwrap();
        assert_relative_eq!(point_density(&p, &ip), n0.value(r), epsilon = 1e-9);
    }
    // raising G0 by a constant pushes n below zero
    let bad = RadialProfile::affine(0.5, 1.0, g0.clone());
    assert!(!check_density_positivity(&zero, &bad, &p, &grid).ok);
}

#[test]
fn params_validation() {
    assert!(Params::new(0, 1.0, 1.0, 0.0, 0.0).is_err());
    assert!(Params::new(3, 0.0, 1.0, 0.0, 0.0).is_err());
    assert!(Params::new(3, 1.0, -1.0, 0.0, 0.0).is_err());
    assert!(Params::new(3, 1.0, 1.0, 0.0, -0.1).is_err());
    assert!(Params::new(3, 1.0, 1.0, 0.0, 0.0).unwrap().analytic_regime());
    assert!(!Params::new(3, 1.0, 1.0, 0.0, 0.1).unwrap().analytic_regime());
    let prof = gaussian(1.0, 1.0);
    let p = Params::with_background(3, 1.0, Background::Profile(prof), 0.0, 0.0).unwrap();
    assert!(!p.analytic_regime());
    assert!(p.c_const().is_none());
}

#[test]
fn quadrature_sanity() {
    let r = quadrature::integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-14, 1e-14, 100).unwrap();
    assert_relative_eq!(r.value, std::f64::consts::E - 1.0, epsilon = 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derive_point_at_origin_has_zero_gradients(a in -3.0f64..3.0, s in 0.2f64..3.0, b in -2.0f64..2.0) {
        let ip = derive_point(&gaussian(a, s), &RadialProfile::builtin(Family::Rational { a: b, p: 1.0 }).unwrap(), 0.0).unwrap();
        prop_assert_eq!(ip.u0, 0.0);
        prop_assert_eq!(ip.v0, 0.0);
    }

    #[test]
    fn shift_moves_distinguished_equilibrium_to_origin(
        d in 1u32..7, k in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0], c in 0.0f64..2.0, m in -1.0f64..1.0
    ) {
        let p = Params::new(d, k, c, m, 0.0).unwrap();
        let (q, s) = shift_params(&p).unwrap();
        prop_assert_eq!(q.m, 0.0);
        let rep = classify_equilibria(&q).unwrap();
        let e = rep.equilibria.iter().find(|e| e.F == 0.0).unwrap();
        prop_assert!(e.G.abs() < 1e-15);
        // the shifted seed of the original equilibrium lands on the origin
        let orig = classify_equilibria(&p).unwrap();
        let e0 = orig.equilibria.iter().find(|e| e.F == 0.0).unwrap();
        let moved = s.apply(&InitialPoint::new(1.0, 0.0, e0.G, 0.0, 0.0));
        prop_assert!(moved.G0.abs() < 1e-14);
        // discriminant sign is preserved
        prop_assert_eq!(rep.equilibria.len(), orig.equilibria.len());
    }

    #[test]
    fn equilibria_count_matches_discriminant(
        d in 1u32..7, k in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0], c in 0.0f64..2.0, m in -1.0f64..1.0
    ) {
        let rep = classify_equilibria(&Params::new(d, k, c, m, 0.0).unwrap()).unwrap();
        let want = if rep.discriminant >= 0.0 { 1 } else { 3 };
        prop_assert_eq!(rep.equilibria.len(), want);
    }
}
