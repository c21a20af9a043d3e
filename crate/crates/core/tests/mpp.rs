use std::sync::Arc;

use proptest::prelude::*;
use slowfast::grid::{Grid1, GridDensity};
use slowfast::mpp::{compare_mpp, compare_mpp_system, most_probable_path, MppOptions};
use slowfast::simulate::{FastDynamics, Sensor, SlowFastSystem};
use slowfast::stable::StableSpec;

fn decoupled(epsilon: f64) -> SlowFastSystem<f64> {
    SlowFastSystem::new(
        "decoupled",
        1,
        1,
        0,
        Arc::new(|x: &[f64], _: &[f64], _: &[f64], out: &mut [f64]| out[0] = 0.2 * (x[0] - x[0].powi(3))),
        FastDynamics::Linear {
            rate: 1.0,
            intensity: 2.0,
        },
        epsilon,
    )
    .unwrap()
    .with_slow_noise(StableSpec::new(1.5, 0.01f64.powf(1.0 / 1.5), 1).unwrap())
    .unwrap()
    .with_sensor(Sensor::identity(0.2f64.sqrt()).unwrap())
}

#[test]
fn decoupled_models_share_their_most_probable_path() {
    let opts = MppOptions::default();
    let c = compare_mpp_system(&decoupled(0.01), 1.0, 4, &opts).unwrap();
    assert!(c.sup_distance < 2.0 * opts.marginal_grid.dx, "sup distance {}", c.sup_distance);
}

#[test]
fn example2_paths_stay_near_the_stable_point() {
    let c = compare_mpp("example2", 0.01f64, 1.5, 2.0, 0, &MppOptions::default()).unwrap();
    for path in [&c.full, &c.reduced] {
        assert!(path.states.iter().all(|x| (x - 1.0).abs() < 0.5), "{:?}", path.states);
        assert!(path.density_peak.iter().all(|p| *p > 0.0));
    }
}

#[test]
fn sup_distance_shrinks_with_epsilon_on_average() {
    let opts = MppOptions::default();
    let mean: Vec<f64> = [0.1, 0.03, 0.01]
        .iter()
        .map(|&eps| (0..4).map(|s| compare_mpp("example2", eps, 1.5, 1.0, s, &opts).unwrap().sup_distance).sum::<f64>() / 4.0)
        .collect();
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "{mean:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rescaling_leaves_the_path_unchanged(
        means in prop::collection::vec(-2.0f64..2.0, 1..6), sd in 0.05f64..1.0, c in 1e-3f64..1e3, refine in any::<bool>(),
    ) {
        let grid = Grid1::new(-4.0, 4.0, 400).unwrap();
        let ds: Vec<GridDensity<f64>> = means.iter().map(|m| GridDensity::gaussian(grid, *m, sd).unwrap()).collect();
        let scaled: Vec<GridDensity<f64>> = ds
            .iter()
            .map(|d| GridDensity::new(grid, d.values.iter().map(|v| c * v).collect(), d.time).unwrap())
            .collect();
        let a = most_probable_path(&ds, refine).unwrap();
        let b = most_probable_path(&scaled, refine).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn doubling_resolution_moves_the_mode_by_at_most_one_cell(m in -2.0f64..2.0, sd in 0.05f64..1.0, n in 50usize..400) {
        let coarse = Grid1::new(-4.0, 4.0, n).unwrap();
        let fine = Grid1::new(-4.0, 4.0, 2 * n).unwrap();
        let a = most_probable_path(&[GridDensity::gaussian(coarse, m, sd).unwrap()], false).unwrap();
        let b = most_probable_path(&[GridDensity::gaussian(fine, m, sd).unwrap()], false).unwrap();
        prop_assert!((a.states[0] - b.states[0]).abs() <= coarse.dx * (1.0 + 1e-9));
    }
}
