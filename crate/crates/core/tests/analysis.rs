use burgers_stab::analysis::{compare_rate, fit_series, inequality_ensemble, DEFAULT_FLOOR};
use burgers_stab::{GridSpec, InequalityConstants};
use proptest::prelude::*;

// numpy.polyfit on the same data (oracles/rate_fit.py)
const NOISY_RATE: f64 = 0.9999908464762285;
const NOISY_SAMPLES: usize = 2764;

#[test]
fn floor_truncated_fit_matches_reference_regression() {
    let t: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
    let y: Vec<f64> = (0..4000)
        .map(|i| (-t[i]).exp() + 1e-13 * (12.9898 * i as f64).cos())
        .collect();
    let f = fit_series(&t, &y, 0.0, DEFAULT_FLOOR).unwrap();
    assert!(f.floor_hit);
    assert_eq!(f.samples, NOISY_SAMPLES);
    assert!((f.window.1 - 27.63).abs() < 1e-9);
    assert!((f.rate - NOISY_RATE).abs() < 1e-9, "{}", f.rate);
    assert!((f.rate - 1.0).abs() < 1e-3);
}

#[test]
fn ensemble_fixture_has_no_violations() {
    let g = GridSpec::new(512).unwrap();
    let r = inequality_ensemble(42, 1000, 20, &InequalityConstants::default(), g).unwrap();
    assert!(r.passed(), "{}", r.text());
    assert_eq!(r.count, 1000);
}

#[test]
fn ensemble_is_deterministic() {
    let g = GridSpec::new(128).unwrap();
    let a = inequality_ensemble(7, 1, 20, &InequalityConstants::default(), g).unwrap();
    let b = inequality_ensemble(7, 1, 20, &InequalityConstants::default(), g).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.text(), b.text());
}

#[test]
fn invalid_constant_is_caught() {
    let g = GridSpec::new(128).unwrap();
    let k = InequalityConstants {
        beta4: 0.1,
        ..Default::default()
    };
    let r = inequality_ensemble(1, 20, 20, &k, g).unwrap();
    assert!(!r.passed());
    assert!(r.violations.iter().all(|v| v.inequality == "gn-l4"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_scale_and_shift_equivariant(
        rate in 0.01f64..5.0, c in 1e-6f64..1e6, shift in -50.0f64..50.0,
        wiggle in proptest::collection::vec(-0.05f64..0.05, 40),
    ) {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().zip(&wiggle).map(|(t, w)| (-rate * t + w).exp()).collect();
        let base = fit_series(&t, &y, 0.0, 0.0).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let s = fit_series(&t, &scaled, 0.0, 0.0).unwrap();
        prop_assert!((s.rate - base.rate).abs() < 1e-9);
        prop_assert!((s.intercept - base.intercept - c.ln()).abs() < 1e-9);
        let ts: Vec<f64> = t.iter().map(|t| t + shift).collect();
        let sh = fit_series(&ts, &y, shift, 0.0).unwrap();
        prop_assert!((sh.rate - base.rate).abs() < 1e-9);
    }

    #[test]
    fn larger_tolerance_never_fails_a_pass(fitted in 0.0f64..3.0, cert in 0.0f64..3.0, t1 in 0.0f64..0.9, dt in 0.0f64..0.1) {
        if compare_rate(fitted, cert, t1).pass {
            prop_assert!(compare_rate(fitted, cert, t1 + dt).pass);
        }
    }
}
