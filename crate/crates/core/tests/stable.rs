use proptest::prelude::*;
use slowfast::grid::Grid1;
use slowfast::rng::{self, Channel};
use slowfast::stable::stable_density;

fn ecf(xs: &[f64], xi: f64) -> f64 {
    xs.iter().map(|x| (xi * x).cos()).sum::<f64>() / xs.len() as f64
}

fn draws(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut g = rng::stream(seed, 0, Channel::Auxiliary);
    (0..n).map(|_| rng::standard_stable(alpha, &mut g)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sampler_matches_characteristic_function(alpha in 1.01f64..1.99, seed in any::<u64>()) {
        let xs = draws(alpha, 100_000, seed);
        for xi in [0.5, 1.0, 2.0] {
            let d = (ecf(&xs, xi) - (-f64::powf(xi, alpha)).exp()).abs();
            prop_assert!(d <= 0.02, "alpha {alpha}, xi {xi}: deviation {d}");
        }
    }

    #[test]
    fn scaled_samples_have_scaled_exponent(alpha in 1.1f64..1.95, s in 0.3f64..3.0, seed in any::<u64>()) {
        let xs: Vec<f64> = draws(alpha, 100_000, seed).into_iter().map(|x| s * x).collect();
        for xi in [0.25, 0.5, 1.0] {
            let d = (ecf(&xs, xi) - (-(s * xi).powf(alpha)).exp()).abs();
            prop_assert!(d <= 0.02, "deviation {d}");
        }
    }

    #[test]
    fn inverted_density_is_nonnegative_and_normalized(alpha in 1.3f64..2.0, c in 0.5f64..2.0) {
        let grid = Grid1::symmetric(40.0, 1 << 12).unwrap();
        let d = stable_density(alpha, c, grid).unwrap();
        prop_assert!((0..grid.n).all(|j| d.raw(j) >= -1e-8));
        prop_assert!(d.density.values.iter().all(|v| *v >= 0.0));
        prop_assert!((d.density.mass() - 1.0).abs() <= 1e-4);
        prop_assert!(d.captured_mass > 0.99);
        for j in 1..grid.n {
            prop_assert!((d.density.values[j] - d.density.values[grid.n - j]).abs() <= 1e-12);
        }
    }
}

#[test]
fn wide_window_captures_the_mass() {
    let grid = Grid1::symmetric(30.0, 1 << 13).unwrap();
    let d = stable_density(1.9f64, 1.0 / 1.9, grid).unwrap();
    assert!((d.captured_mass - 1.0).abs() <= 1e-4, "captured {}", d.captured_mass);
}
