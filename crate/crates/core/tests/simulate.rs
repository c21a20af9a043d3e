use std::sync::Arc;

use slowfast::simulate::{catalog, example1, integrate, FastDynamics, IntegrateOptions, ModelParams, SlowFastSystem};

fn ou(g: f64) -> SlowFastSystem<f64> {
    SlowFastSystem::new(
        "ou",
        1,
        0,
        0,
        Arc::new(|x: &[f64], _: &[f64], _: &[f64], out: &mut [f64]| out[0] = -x[0]),
        FastDynamics::Linear {
            rate: 1.0,
            intensity: 0.0,
        },
        1.0,
    )
    .unwrap()
    .with_slow_diffusion(Arc::new(move |_: &[f64], _: &[f64], out: &mut [f64]| out[0] = g))
}

#[test]
fn gaussian_ou_moments_match_closed_form() {
    let (g, x0, t) = (0.8, 1.5, 1.0);
    let n = 10_000;
    let ens = integrate(&ou(g), &[], &[x0], &[], &IntegrateOptions::new(0.001, t, n, 3).record_every(1000)).unwrap();
    let end: Vec<f64> = (0..n).map(|j| ens.slow[[j, 1, 0]]).collect();
    let mean = end.iter().sum::<f64>() / n as f64;
    let var = end.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let exact_mean = x0 * (-t).exp();
    let exact_var = g * g * (1.0 - (-2.0 * t).exp()) / 2.0;
    let se_mean = (exact_var / n as f64).sqrt();
    let se_var = exact_var * (2.0 / (n - 1) as f64).sqrt();
    assert!((mean - exact_mean).abs() < 3.0 * se_mean, "mean {mean} vs {exact_mean}");
    assert!((var - exact_var).abs() < 3.0 * se_var, "variance {var} vs {exact_var}");
}

#[test]
fn distinct_paths_are_uncorrelated() {
    let n_steps = 4000;
    let ens = integrate(&ou(1.0), &[], &[0.0], &[], &IntegrateOptions::new(0.001, 4.0, 6, 8)).unwrap();
    let incs: Vec<Vec<f64>> = (0..6)
        .map(|j| {
            let s = ens.slow_series(j, 0);
            (0..n_steps).map(|i| s[i + 1] - s[i] * (1.0 - 0.001)).collect()
        })
        .collect();
    let corr = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        dot / (na * nb).sqrt()
    };
    let bound = 3.0 / (n_steps as f64).sqrt();
    for a in 0..6 {
        for b in a + 1..6 {
            let c = corr(&incs[a], &incs[b]);
            assert!(c.abs() < bound, "paths {a}, {b}: correlation {c}");
        }
    }
}

#[test]
fn example1_ensemble_shape() {
    let sys = example1(1.9f64, 0.01).unwrap();
    let ens = integrate(&sys, &[9.0], &[1.0], &[0.0], &IntegrateOptions::new(0.001, 1.0, 1000, 1).record_every(10)).unwrap();
    assert_eq!(ens.slow.dim(), (1000, 101, 1));
    assert_eq!(ens.theta, vec![9.0]);
    assert!(ens.obs_increments.is_none());
    let dt = ens.record_dt();
    assert!(ens.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() < 1e-12));
    assert!(ens.slow.iter().all(|x| x.is_finite()));
}

#[test]
fn example2_has_an_observation_channel() {
    let sys = catalog("example2", &ModelParams { alpha: 1.5, epsilon: 0.01 }).unwrap();
    let ens = integrate(&sys, &[], &[1.0], &[0.0], &IntegrateOptions::new(0.0005, 0.1, 3, 2).record_every(4)).unwrap();
    assert_eq!(ens.obs_increments.as_ref().unwrap().dim(), (3, 50, 1));
}

#[test]
fn same_seed_same_paths_other_seed_other_paths() {
    let sys = example1(1.5, 0.05).unwrap();
    let opts = IntegrateOptions::new(0.001, 0.5, 4, 21);
    let a = integrate(&sys, &[2.0], &[1.0], &[0.0], &opts).unwrap();
    let b = integrate(&sys, &[2.0], &[1.0], &[0.0], &opts).unwrap();
    assert_eq!(a, b);
    let c = integrate(&sys, &[2.0], &[1.0], &[0.0], &IntegrateOptions { seed: 22, ..opts }).unwrap();
    assert_ne!(a.slow, c.slow);
}
