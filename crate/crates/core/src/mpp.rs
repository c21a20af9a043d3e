//! Most probable paths: the per-time mode of filtered densities.

use log::warn;

use crate::averaging::reduce;
use crate::error::{domain, Error, Result};
use crate::grid::{Grid1, GridDensity};
use crate::rng;
use crate::scalar::Real;
use crate::simulate::{catalog, integrate, IntegrateOptions, ModelParams, SlowFastSystem};
use crate::zakai::{run_filter, FilterInit, FilterModel, FilterOptions, ParticleCloud};

/// Values within this relative distance of the maximum count as ties.
const TIE: f64 = 1e-12;
const FLAT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MostProbablePath<T> {
    pub times: Vec<T>,
    pub states: Vec<T>,
    /// Normalized density value at the mode.
    pub density_peak: Vec<T>,
}

impl<T: Real> MostProbablePath<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Mode of `values`: the smallest index whose value is within [`TIE`] of the maximum.
fn argmax<T: Real>(values: &[T]) -> usize {
    let max = values.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
    let cut = max - max.abs() * T::lit(TIE);
    values.iter().position(|v| *v >= cut).unwrap_or(0)
}

/// Per-time argmax of each density. With `refine`, the mode is moved to the
/// vertex of the parabola through the argmax and its two neighbours.
pub fn most_probable_path<T: Real>(densities: &[GridDensity<T>], refine: bool) -> Result<MostProbablePath<T>> {
    if densities.is_empty() {
        return Err(domain("densities", "need at least one density"));
    }
    let mut path = MostProbablePath {
        times: Vec::with_capacity(densities.len()),
        states: Vec::with_capacity(densities.len()),
        density_peak: Vec::with_capacity(densities.len()),
    };
    let mut warned = false;
    for (i, d) in densities.iter().enumerate() {
        let mass = d.mass();
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::Degeneracy { step: i });
        }
        let v = &d.values;
        let j = argmax(v);
        let min = v.iter().fold(T::infinity(), |m, x| m.min(*x));
        if !warned && v[j] < min * T::lit(1.0 + FLAT) {
            warn!("density at t = {} is flat; mode is not informative", d.time);
            warned = true;
        }
        let (mut x, mut peak) = (d.grid.x(j), v[j]);
        if refine && j > 0 && j + 1 < v.len() {
            let (l, c, r) = (v[j - 1], v[j], v[j + 1]);
            let curv = l - T::lit(2.0) * c + r;
            if curv < T::zero() {
                let off = T::lit(0.5) * (l - r) / curv;
                x += off * d.grid.dx;
                peak = c - T::lit(0.25) * (l - r) * off;
            }
        }
        path.times.push(d.time);
        path.states.push(x);
        path.density_peak.push(peak / mass);
    }
    Ok(path)
}

/// Largest `|a − b|` over the times `t ≥ from` shared by both paths.
pub fn sup_distance<T: Real>(a: &MostProbablePath<T>, b: &MostProbablePath<T>, from: T) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("paths have {} and {} times", a.len(), b.len())));
    }
    Ok(a.times
        .iter()
        .zip(a.states.iter().zip(&b.states))
        .filter(|(t, _)| **t >= from)
        .fold(T::zero(), |m, (_, (x, y))| m.max((*x - *y).abs())))
}

#[derive(Debug, Clone)]
pub struct MppOptions<T> {
    /// True initial slow state and prior mean for both filters.
    pub x0: T,
    pub prior_sd: T,
    pub obs_dt: T,
    /// Upper bound on the signal simulation step.
    pub sim_dt: T,
    /// Simulation and particle steps are limited to `epsilon / fast_resolution`.
    pub fast_resolution: usize,
    /// Grid of the reduced filter.
    pub grid: Grid1<T>,
    /// Grid on which the particle x-marginal is histogrammed.
    pub marginal_grid: Grid1<T>,
    /// Gaussian kernel bandwidth for the particle marginal.
    pub bandwidth: Option<T>,
    pub particles: usize,
    /// Comparison skips `t < burn_fraction * horizon`.
    pub burn_fraction: T,
    pub refine: bool,
    pub theta: Vec<T>,
}

impl<T: Real> Default for MppOptions<T> {
    fn default() -> Self {
        Self {
            x0: T::one(),
            prior_sd: T::lit(0.1),
            obs_dt: T::lit(0.0025),
            sim_dt: T::lit(0.001),
            fast_resolution: 20,
            grid: Grid1::new(T::lit(-3.0), T::lit(3.0), 300).expect("valid grid"),
            marginal_grid: Grid1::new(T::lit(-3.0), T::lit(3.0), 120).expect("valid grid"),
            bandwidth: Some(T::lit(0.05)),
            particles: 2000,
            burn_fraction: T::lit(0.1),
            refine: false,
            theta: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MppComparison<T> {
    pub full: MostProbablePath<T>,
    pub reduced: MostProbablePath<T>,
    /// Sup-norm distance over `[burn_in, horizon]`.
    pub sup_distance: T,
    pub burn_in: T,
    /// Simulated slow state at the record times.
    pub signal: Vec<T>,
}

/// Simulates one observation record of `system`, filters it with the joint
/// particle filter and the reduced grid filter, and compares their modes.
pub fn compare_mpp_system<T: Real>(
    system: &SlowFastSystem<T>,
    horizon: T,
    seed: u64,
    opts: &MppOptions<T>,
) -> Result<MppComparison<T>> {
    if system.sensor.is_none() {
        return Err(domain("sensor", "most probable paths need an observed system"));
    }
    if system.slow_dim != 1 {
        return Err(Error::Dimension("most probable paths need a scalar slow component".into()));
    }
    let steps = (horizon / opts.obs_dt).round().to_usize().unwrap_or(0);
    if steps == 0 {
        return Err(domain("horizon", "horizon must cover at least one observation"));
    }
    let theta = opts.theta.as_slice();
    let limit = opts
        .sim_dt
        .min(system.epsilon / T::from_usize_lossy(opts.fast_resolution.max(10)));
    let every = ((opts.obs_dt / limit).as_f64() - 1e-9).ceil().max(1.0) as usize;
    let sim_dt = opts.obs_dt / T::from_usize_lossy(every);
    let horizon = opts.obs_dt * T::from_usize_lossy(steps);
    let int = IntegrateOptions::new(sim_dt, horizon, 1, seed).record_every(every);
    let y0 = vec![T::zero(); system.fast_dim];
    let ens = integrate(system, theta, &[opts.x0], &y0, &int)?;
    let obs = ens.observations(0).expect("observed system");

    let reduced = reduce(system)?.with_theta(theta.to_vec())?;
    let fopts = FilterOptions::new(opts.obs_dt)
        .seed(rng::mix(seed, 1))
        .max_substep(sim_dt);
    let red = run_filter(
        FilterModel::Reduced(&reduced),
        &obs,
        FilterInit::Grid(GridDensity::gaussian(opts.grid, opts.x0, opts.prior_sd)?),
        &fopts.clone().keep_densities(None, None),
    )?;
    let cloud = ParticleCloud::joint_prior(system, &[opts.x0], opts.prior_sd, opts.particles, rng::mix(seed, 2))?;
    let full = run_filter(
        FilterModel::Full { system, theta },
        &obs,
        FilterInit::Particles(cloud),
        &fopts.keep_densities(Some(opts.marginal_grid), opts.bandwidth),
    )?;
    let full = most_probable_path(&full.densities, opts.refine)?;
    let reduced = most_probable_path(&red.densities, opts.refine)?;
    let burn_in = opts.burn_fraction * horizon;
    Ok(MppComparison {
        sup_distance: sup_distance(&full, &reduced, burn_in)?,
        full,
        reduced,
        burn_in,
        signal: ens.slow_series(0, 0).to_vec(),
    })
}

/// [`compare_mpp_system`] for a catalog model built at `(epsilon, alpha)`.
pub fn compare_mpp<T: Real>(
    model: &str,
    epsilon: T,
    alpha: T,
    horizon: T,
    seed: u64,
    opts: &MppOptions<T>,
) -> Result<MppComparison<T>> {
    let system = catalog(model, &ModelParams { alpha, epsilon })?;
    compare_mpp_system(&system, horizon, seed, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1<f64> {
        Grid1::new(-3.0, 3.0, 600).unwrap()
    }

    #[test]
    fn static_gaussian_gives_constant_path() {
        let ds: Vec<_> = (0..5)
            .map(|i| {
                let mut d = GridDensity::gaussian(grid(), 0.7, 0.1).unwrap();
                d.time = i as f64 * 0.1;
                d
            })
            .collect();
        let p = most_probable_path(&ds, false).unwrap();
        assert!(p.states.iter().all(|x| (x - 0.7).abs() <= grid().dx));
        let peak = 1.0 / (0.1 * std::f64::consts::TAU.sqrt());
        assert!(p.density_peak.iter().all(|v| (v / peak - 1.0).abs() < 1e-2));
        assert_eq!(p.times, vec![0.0, 0.1, 0.2, 0.30000000000000004, 0.4]);
    }

    #[test]
    fn ties_go_to_the_smallest_coordinate() {
        let d = GridDensity::from_fn(grid(), 0.0, |x: f64| (-(x - 1.0).powi(2) / 0.02).exp() + (-(x + 1.0).powi(2) / 0.02).exp())
            .unwrap();
        let p = most_probable_path(&[d], false).unwrap();
        assert!((p.states[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rescaling_does_not_move_the_mode() {
        let d = GridDensity::gaussian(grid(), -0.33, 0.4).unwrap();
        let mut e = d.clone();
        e.values.iter_mut().for_each(|v| *v *= 37.5);
        let a = most_probable_path(&[d], true).unwrap();
        let b = most_probable_path(&[e], true).unwrap();
        assert_eq!(a.states, b.states);
        assert!((a.density_peak[0] - b.density_peak[0]).abs() < 1e-12);
    }

    #[test]
    fn parabola_refinement_recovers_off_grid_mode() {
        let d = GridDensity::gaussian(grid(), 0.123, 0.3).unwrap();
        let p = most_probable_path(&[d], true).unwrap();
        assert!((p.states[0] - 0.123).abs() < 1e-4, "{}", p.states[0]);
    }

    #[test]
    fn empty_and_degenerate_inputs() {
        assert!(most_probable_path::<f64>(&[], false).is_err());
        let z = GridDensity::new(grid(), vec![0.0; 600], 0.0);
        if let Ok(z) = z {
            assert!(most_probable_path(&[z], false).is_err());
        }
    }

    #[test]
    fn sup_distance_respects_burn_in() {
        let a = MostProbablePath {
            times: vec![0.0f64, 0.5, 1.0],
            states: vec![5.0, 1.0, 1.0],
            density_peak: vec![1.0; 3],
        };
        let b = MostProbablePath {
            states: vec![0.0, 1.2, 0.9],
            ..a.clone()
        };
        assert!((sup_distance(&a, &b, 0.1).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(sup_distance(&a, &b, 0.0).unwrap(), 5.0);
    }
}
