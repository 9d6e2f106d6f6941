use std::sync::OnceLock;

use isoq_core::auxpde::{Grid2D, SolveOptions};
use isoq_core::expansion::*;
use isoq_core::specfun::{rat, theta_ball};
use proptest::prelude::*;

/// Small grid shared by every test here; the default grid is exercised by
/// the acceptance suite.
fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        Pipeline::new(NumericsConfig {
            grid: Grid2D::new(20.0, 20.0, 256, 256).unwrap(),
            solve: SolveOptions::default(),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lambda2_is_linear_in_h2(n in 8u32..=14, scale in 0.01f64..100.0) {
        let unit = pipeline().lambda2_coefficient(n, &CurvatureInputs::default()).unwrap();
        let c = CurvatureInputs { h2: scale, ..CurvatureInputs::default() };
        let scaled = pipeline().lambda2_coefficient(n, &c).unwrap();
        prop_assert!((scaled.0.k.value() - scale * unit.0.k.value()).abs() <= 1e-14 * scaled.0.k.value().abs());
        prop_assert!((scaled.0.k.error() - scale * unit.0.k.error()).abs() <= 1e-14 * scaled.0.k.error());
        prop_assert_eq!(scaled.1.positive, unit.1.positive);
    }

    #[test]
    fn lambda4_is_linear_in_curvature(n in 8u32..=14, x in 0.0f64..10.0, y in 0.0f64..10.0, t in 0.01f64..100.0) {
        prop_assume!(x + y > 0.0);
        let c = CurvatureInputs { rninj2: x, wbar2: y, ..CurvatureInputs::default() };
        let (u, cert) = pipeline().lambda4_coefficients(n, &c).unwrap();
        let want = x * u.a_n.value() + y * u.b_n.to_f64();
        prop_assert!((u.total.value() - want).abs() <= 1e-13 * want.abs());
        let ct = CurvatureInputs { rninj2: t * x, wbar2: t * y, ..CurvatureInputs::default() };
        let (ut, certt) = pipeline().lambda4_coefficients(n, &ct).unwrap();
        prop_assert!((ut.total.value() - t * u.total.value()).abs() <= 1e-13 * ut.total.value().abs());
        prop_assert_eq!(cert.positive, certt.positive);
    }

    #[test]
    fn rnn_input_never_changes_the_total(n in 8u32..=12, rnn in -10.0f64..10.0) {
        let base = pipeline().lambda4_coefficients(n, &CurvatureInputs::default()).unwrap().0;
        let c = CurvatureInputs { rnn2: rnn, ..CurvatureInputs::default() };
        let moved = pipeline().lambda4_coefficients(n, &c).unwrap().0;
        prop_assert_eq!(base.total.value(), moved.total.value());
        prop_assert!(base.rnn_coeff.is_zero());
    }

    #[test]
    fn step1_matches_stated_form(n in 6u32..=64) {
        let a1 = nonumbilic_step1_closed(n).unwrap();
        let ni = i64::from(n);
        prop_assert_eq!(a1.coeff(), &(nonumbilic_step1_stated(n) * rat(1, 2 * ni)));
        prop_assert_eq!(a1.signum(), (ni - 12).signum() as i32);
    }
}

#[test]
fn field_coefficients_are_positive() {
    let c = CurvatureInputs::default();
    for n in 8..=16 {
        let (k, _) = pipeline().lambda2_coefficient(n, &c).unwrap();
        assert!(k.a2.value() > 0.0 && k.a3.value() > 0.0, "n={n}");
        let (u, _) = pipeline().lambda4_coefficients(n, &c).unwrap();
        assert!(u.step2.value() > 0.0 && u.step3.value() > 0.0, "n={n}");
        assert!(u.b_n.signum() > 0);
    }
}

#[test]
fn cache_reuses_solutions() {
    let p = Pipeline::new(NumericsConfig {
        grid: Grid2D::new(20.0, 20.0, 128, 128).unwrap(),
        solve: SolveOptions::default(),
    });
    let c = CurvatureInputs::default();
    let first = p.lambda2_coefficient(12, &c).unwrap().0.k;
    assert_eq!(p.cache().len(), 3);
    let second = p.lambda2_coefficient(12, &c).unwrap().0.k;
    assert_eq!(p.cache().len(), 3);
    assert_eq!(first, second);
}

#[test]
fn zero_curvature_is_never_certified() {
    let zero = CurvatureInputs {
        h2: 0.0,
        rninj2: 0.0,
        wbar2: 0.0,
        rnn2: 0.0,
    };
    assert!(
        !pipeline()
            .lambda2_coefficient(14, &zero)
            .unwrap()
            .1
            .positive
    );
    assert!(
        !pipeline()
            .lambda4_coefficients(14, &zero)
            .unwrap()
            .1
            .positive
    );
}

#[test]
fn quotient_table_from_a_certified_coefficient() {
    let (k, cert) = pipeline()
        .lambda2_coefficient(14, &CurvatureInputs::default())
        .unwrap();
    assert!(cert.positive);
    let rows = quotient_expansion(14, Case::Nonumbilic, k.k.value(), &[0.0, 1e-3, 1e-2]);
    assert_eq!(rows[0].quotient, theta_ball(14));
    assert!(rows[1].excess > 0.0 && rows[2].excess > rows[1].excess);
    assert!(rows[2].quotient > theta_ball(14));
}
