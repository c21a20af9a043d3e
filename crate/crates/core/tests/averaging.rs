use std::sync::Arc;

use proptest::prelude::*;
use slowfast::averaging::{invariant_measure, reduce, strong_error, EmpiricalOptions, MeasureKind, MeasureMethod};
use slowfast::simulate::{example1, example2, FastDynamics, SlowFastSystem};
use statrs::distribution::{ContinuousCDF, Normal};

fn quadratic_in_y(a: f64, b: f64, c: f64, rate: f64, intensity: f64) -> SlowFastSystem<f64> {
    SlowFastSystem::new(
        "quadratic",
        1,
        1,
        0,
        Arc::new(move |x: &[f64], y: &[f64], _: &[f64], out: &mut [f64]| {
            out[0] = a * x[0] + b * x[0].sin() * y[0] + c * y[0] * y[0]
        }),
        FastDynamics::Linear { rate, intensity },
        0.01,
    )
    .unwrap()
}

fn ks(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut ys = samples.to_vec();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ys.len() as f64;
    ys.iter()
        .enumerate()
        .map(|(i, y)| {
            let f = cdf(*y);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn empirical_samples(sys: &SlowFastSystem<f64>) -> Vec<f64> {
    let opts = EmpiricalOptions {
        chains: 64,
        thin: 3.0,
        ..Default::default()
    };
    match invariant_measure(sys, &[0.0], MeasureMethod::Empirical(opts)).unwrap().kind {
        MeasureKind::Empirical { samples, .. } => samples.into_iter().take(10_000).collect(),
        other => panic!("expected samples, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quadratic_drift_averages_to_gaussian_moments(
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
        rate in 0.2f64..5.0, intensity in 0.1f64..3.0, x in -3.0f64..3.0,
    ) {
        let reduced = reduce(&quadratic_in_y(a, b, c, rate, intensity)).unwrap();
        let variance = intensity * intensity / (2.0 * rate);
        let exact = a * x + c * variance;
        let got = reduced.drift(&[x], &[]).unwrap()[0];
        prop_assert!((got - exact).abs() <= 1e-8 * (1.0 + exact.abs()), "{got} vs {exact}");
    }
}

#[test]
fn example2_empirical_fast_law_is_normal_with_variance_two() {
    let samples = empirical_samples(&example2(1.5, 0.01).unwrap());
    let normal = Normal::new(0.0, 2f64.sqrt()).unwrap();
    let d = ks(&samples, |y| normal.cdf(y));
    assert!(d < 0.02, "KS distance {d}");
}

#[test]
fn example1_empirical_fast_law_matches_analytic_measure() {
    let sys = example1(1.7, 0.01).unwrap();
    let samples = empirical_samples(&sys);
    let analytic = invariant_measure(&sys, &[0.0], MeasureMethod::Analytic).unwrap();
    let MeasureKind::StableCf { c, alpha } = analytic.kind else {
        panic!("expected a stable law");
    };
    assert!((alpha - 1.7).abs() < 1e-12 && (c - 1.0 / 1.7).abs() < 1e-12);
    // Reference draws from the closed-form law through its own sampler.
    let mut g = slowfast::rng::stream(4, 0, slowfast::rng::Channel::Auxiliary);
    let mut reference: Vec<f64> = (0..200_000)
        .map(|_| c.powf(1.0 / alpha) * slowfast::rng::standard_stable(alpha, &mut g))
        .collect();
    reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdf = |y: f64| reference.partition_point(|r| *r <= y) as f64 / reference.len() as f64;
    let d = ks(&samples, cdf);
    assert!(d < 0.02, "KS distance {d}");
}

#[test]
fn reduced_example2_keeps_the_slow_noise() {
    let r = reduce(&example2(1.5, 0.01).unwrap()).unwrap();
    let spec = r.slow_noise.unwrap();
    assert_eq!(spec.alpha, 1.5);
    assert!((spec.scale - 0.01f64.powf(1.0 / 1.5)).abs() < 1e-15);
    assert!(r.sensor.is_some());
}

#[test]
fn strong_error_decreases_with_epsilon() {
    let sys = example1(1.9, 0.1).unwrap();
    let rows = strong_error(&sys, &[9.0], &[1.0], &[0.1, 0.03, 0.01], 500, 1.5, 1.0, 2e-4, 77).unwrap();
    assert!(rows.windows(2).all(|w| w[1].moment < w[0].moment), "{rows:?}");
}
