//! Euler-Maruyama integration of slow-fast systems and synthetic observations.
//!
//! Stable increments over a step `dt` are drawn as `dt^{1/alpha} S` with `S`
//! standard symmetric stable (exact self-similarity). Large jumps are never
//! truncated, so sample moments of order `>= alpha` do not exist.

mod catalog;
mod system;

pub use catalog::{catalog, example1, example2, Catalog, ModelCtor, ModelParams};
pub use system::{FastDynamics, Sensor, SensorMap, SlowDrift, SlowFastSystem, StateMap};

use ndarray::{Array3, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::rng::{self, Channel};
use crate::scalar::Real;

use system::matvec_add;

/// Source of the Gaussian and stable draws consumed by one Euler step.
pub trait NoiseSource<T> {
    fn normal(&mut self, channel: Channel) -> T;
    fn stable(&mut self, alpha: T, channel: Channel) -> T;
}

/// One independent stream per channel, addressed by `(seed, path)`.
pub struct ChannelNoise {
    streams: Vec<ChaCha8Rng>,
}

impl ChannelNoise {
    pub fn new(seed: u64, unit: u64) -> Self {
        let streams = [
            Channel::SlowBrownian,
            Channel::SlowStable,
            Channel::FastBrownian,
            Channel::FastStable,
            Channel::Observation,
        ]
        .into_iter()
        .map(|c| rng::stream(seed, unit, c))
        .collect();
        Self { streams }
    }

    fn rng(&mut self, channel: Channel) -> &mut ChaCha8Rng {
        let idx = (channel as usize).min(self.streams.len() - 1);
        &mut self.streams[idx]
    }
}

impl<T: Real> NoiseSource<T> for ChannelNoise {
    fn normal(&mut self, channel: Channel) -> T {
        rng::normal(self.rng(channel))
    }

    fn stable(&mut self, alpha: T, channel: Channel) -> T {
        rng::standard_stable(alpha, self.rng(channel))
    }
}

/// A single generator shared by all channels.
pub struct SharedNoise<'a, R>(pub &'a mut R);

impl<T: Real, R: Rng> NoiseSource<T> for SharedNoise<'_, R> {
    fn normal(&mut self, _channel: Channel) -> T {
        rng::normal(self.0)
    }

    fn stable(&mut self, alpha: T, _channel: Channel) -> T {
        rng::standard_stable(alpha, self.0)
    }
}

/// Step-size dependent factors of the Euler-Maruyama update.
#[derive(Debug, Clone, Copy)]
struct Factors<T> {
    dt: T,
    sqrt_dt: T,
    slow_stable: Option<(T, T)>,
    fast_rate: T,
    fast_sqrt: T,
    fast_stable: Option<(T, T)>,
}

/// Reusable Euler-Maruyama stepper for one system and step size.
pub struct Stepper<'s, T> {
    system: &'s SlowFastSystem<T>,
    f: Factors<T>,
    drift_x: Vec<T>,
    drift_y: Vec<T>,
    noise: Vec<T>,
    matrix: Vec<T>,
    dx: Vec<T>,
}

impl<'s, T: Real> Stepper<'s, T> {
    pub fn new(system: &'s SlowFastSystem<T>, dt: T) -> Self {
        let (n, m) = (system.slow_dim, system.fast_dim);
        let ratio = dt / system.epsilon;
        let f = Factors {
            dt,
            sqrt_dt: dt.sqrt(),
            slow_stable: system
                .slow_noise
                .filter(|s| s.scale > T::zero())
                .map(|s| (s.alpha, s.scale * dt.powf(s.alpha.recip()))),
            fast_rate: ratio,
            fast_sqrt: ratio.sqrt(),
            fast_stable: system
                .fast_noise
                .filter(|s| s.scale > T::zero())
                .map(|s| (s.alpha, s.scale * ratio.powf(s.alpha.recip()))),
        };
        let k = n.max(m);
        Self {
            system,
            f,
            drift_x: vec![T::zero(); n],
            drift_y: vec![T::zero(); m],
            noise: vec![T::zero(); k],
            matrix: vec![T::zero(); k * k],
            dx: vec![T::zero(); n],
        }
    }

    pub fn dt(&self) -> T {
        self.f.dt
    }

    /// Advances `(x, y)` by one step; both updates use the state at the start.
    pub fn step<N: NoiseSource<T>>(&mut self, x: &mut [T], y: &mut [T], theta: &[T], noise: &mut N) {
        let sys = self.system;
        let (n, m) = (sys.slow_dim, sys.fast_dim);
        let f = self.f;

        (sys.slow_drift)(x, y, theta, &mut self.drift_x);
        for i in 0..n {
            self.dx[i] = self.drift_x[i] * f.dt;
        }
        if let Some(g1) = &sys.slow_diffusion {
            for z in self.noise[..n].iter_mut() {
                *z = noise.normal(Channel::SlowBrownian) * f.sqrt_dt;
            }
            g1(x, y, &mut self.matrix[..n * n]);
            matvec_add(&self.matrix[..n * n], &self.noise[..n], &mut self.dx);
        }
        if let Some((alpha, scale)) = f.slow_stable {
            for d in self.dx.iter_mut() {
                *d += scale * noise.stable(alpha, Channel::SlowStable);
            }
        }

        if m > 0 {
            sys.fast_drift_at(x, y, &mut self.drift_y);
            for v in self.drift_y.iter_mut() {
                *v *= f.fast_rate;
            }
            if sys.has_fast_diffusion() {
                for z in self.noise[..m].iter_mut() {
                    *z = noise.normal(Channel::FastBrownian) * f.fast_sqrt;
                }
                let (head, _) = self.noise.split_at(m);
                sys.apply_fast_diffusion(x, y, head, &mut self.drift_y, &mut self.matrix[..m * m]);
            }
            if let Some((alpha, scale)) = f.fast_stable {
                for v in self.drift_y.iter_mut() {
                    *v += scale * noise.stable(alpha, Channel::FastStable);
                }
            }
            for (v, d) in y.iter_mut().zip(&self.drift_y) {
                *v += *d;
            }
        }
        for (v, d) in x.iter_mut().zip(&self.dx) {
            *v += *d;
        }
    }
}

/// Controls for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions<T> {
    pub dt: T,
    pub horizon: T,
    pub paths: usize,
    pub seed: u64,
    /// Record the state every this many steps.
    pub record_every: usize,
    pub keep_fast: bool,
}

impl<T: Real> IntegrateOptions<T> {
    pub fn new(dt: T, horizon: T, paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            paths,
            seed,
            record_every: 1,
            keep_fast: false,
        }
    }

    pub fn record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    pub fn keep_fast(mut self, keep: bool) -> Self {
        self.keep_fast = keep;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }
}

/// Sampled trajectories on a uniform record grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    pub times: Vec<T>,
    /// `M x (N+1) x n`.
    pub slow: Array3<T>,
    /// `M x (N+1) x m`.
    pub fast: Option<Array3<T>>,
    /// `M x N x d`, increments of `Z` over each record interval.
    pub obs_increments: Option<Array3<T>>,
    pub seed: u64,
    pub theta: Vec<T>,
}

impl<T: Real> PathEnsemble<T> {
    pub fn paths(&self) -> usize {
        self.slow.dim().0
    }

    /// Number of recorded times `N + 1`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn record_dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    /// Component `k` of the slow state along path `j`.
    pub fn slow_series(&self, j: usize, k: usize) -> ArrayView1<'_, T> {
        self.slow.slice(ndarray::s![j, .., k])
    }

    /// Observation increments of path `j` as `N` vectors of length `d`.
    pub fn observations(&self, j: usize) -> Option<Vec<Vec<T>>> {
        self.obs_increments.as_ref().map(|a| {
            a.slice(ndarray::s![j, .., ..])
                .outer_iter()
                .map(|r| r.to_vec())
                .collect()
        })
    }
}

/// One simulated path, flattened row-major per record time.
#[derive(Debug, Clone)]
pub struct PathRecord<T> {
    pub slow: Vec<T>,
    pub fast: Vec<T>,
    pub obs: Vec<T>,
}

fn check_inputs<T: Real>(
    system: &SlowFastSystem<T>,
    theta: &[T],
    x0: &[T],
    y0: &[T],
    opts: &IntegrateOptions<T>,
) -> Result<usize> {
    system.validate()?;
    if !(opts.dt > T::zero()) {
        return Err(domain("dt", "step must be positive"));
    }
    let limit = system.epsilon / T::lit(10.0);
    // Slack for rounding in `epsilon / 10`.
    if opts.dt > limit * (T::one() + T::lit(16.0) * T::epsilon()) {
        return Err(Error::Stability {
            dt: opts.dt.as_f64(),
            limit: limit.as_f64(),
        });
    }
    if !(opts.horizon >= opts.dt) {
        return Err(domain("horizon", "horizon must be at least one step"));
    }
    if x0.len() != system.slow_dim || y0.len() != system.fast_dim {
        return Err(Error::Dimension(format!(
            "initial state ({}, {}) does not match system ({}, {})",
            x0.len(),
            y0.len(),
            system.slow_dim,
            system.fast_dim
        )));
    }
    if theta.len() != system.theta_dim {
        return Err(Error::Dimension(format!(
            "theta has {} components, system expects {}",
            theta.len(),
            system.theta_dim
        )));
    }
    let steps = opts.steps();
    if opts.record_every == 0 || !steps.is_multiple_of(opts.record_every) {
        return Err(domain(
            "record_every",
            format!("{} steps are not a multiple of the record stride {}", steps, opts.record_every),
        ));
    }
    if opts.paths == 0 {
        return Err(domain("paths", "need at least one path"));
    }
    Ok(steps)
}

/// Simulates path `index` of the ensemble described by `opts`.
pub fn simulate_path<T: Real>(
    system: &SlowFastSystem<T>,
    theta: &[T],
    x0: &[T],
    y0: &[T],
    opts: &IntegrateOptions<T>,
    index: usize,
) -> Result<PathRecord<T>> {
    let steps = check_inputs(system, theta, x0, y0, opts)?;
    run_path(system, theta, x0, y0, opts, steps, index)
}

fn run_path<T: Real>(
    system: &SlowFastSystem<T>,
    theta: &[T],
    x0: &[T],
    y0: &[T],
    opts: &IntegrateOptions<T>,
    steps: usize,
    index: usize,
) -> Result<PathRecord<T>> {
    let (n, m) = (system.slow_dim, system.fast_dim);
    let records = steps / opts.record_every;
    let mut noise = ChannelNoise::new(opts.seed, index as u64);
    let mut stepper = Stepper::new(system, opts.dt);
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut rec = PathRecord {
        slow: Vec::with_capacity((records + 1) * n),
        fast: Vec::new(),
        obs: Vec::new(),
    };
    rec.slow.extend_from_slice(&x);
    if opts.keep_fast {
        rec.fast.reserve((records + 1) * m);
        rec.fast.extend_from_slice(&y);
    }
    let sensor = system.sensor.as_ref();
    let mut h = vec![T::zero(); sensor.map_or(0, |s| s.dim)];
    let mut dz = h.clone();
    let sqrt_dt = opts.dt.sqrt();
    for step in 0..steps {
        if let Some(s) = sensor {
            (s.h)(&x, &mut h);
            for (acc, hv) in dz.iter_mut().zip(&h) {
                let w: T = noise.normal(Channel::Observation);
                *acc += *hv * opts.dt + s.noise_scale * sqrt_dt * w;
            }
        }
        stepper.step(&mut x, &mut y, theta, &mut noise);
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { path: index, step });
        }
        if (step + 1) % opts.record_every == 0 {
            rec.slow.extend_from_slice(&x);
            if opts.keep_fast {
                rec.fast.extend_from_slice(&y);
            }
            if sensor.is_some() {
                rec.obs.extend_from_slice(&dz);
                dz.iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }
    Ok(rec)
}

/// Integrates `opts.paths` independent trajectories in parallel.
///
/// Path `j` draws from streams keyed by `(opts.seed, j)`, so the result does
/// not depend on scheduling and two calls with equal inputs are bit-identical.
pub fn integrate<T: Real>(
    system: &SlowFastSystem<T>,
    theta: &[T],
    x0: &[T],
    y0: &[T],
    opts: &IntegrateOptions<T>,
) -> Result<PathEnsemble<T>> {
    let steps = check_inputs(system, theta, x0, y0, opts)?;
    let records = steps / opts.record_every;
    let recs: Vec<PathRecord<T>> = (0..opts.paths)
        .into_par_iter()
        .map(|j| run_path(system, theta, x0, y0, opts, steps, j))
        .collect::<Result<_>>()?;

    let (n, m) = (system.slow_dim, system.fast_dim);
    let paths = opts.paths;
    let stack = |dim: usize, len: usize, pick: &dyn Fn(&PathRecord<T>) -> &Vec<T>| {
        let mut flat = Vec::with_capacity(paths * len * dim);
        for r in &recs {
            flat.extend_from_slice(pick(r));
        }
        Array3::from_shape_vec((paths, len, dim), flat).expect("record lengths are consistent")
    };
    let slow = stack(n, records + 1, &|r| &r.slow);
    let fast = opts.keep_fast.then(|| stack(m, records + 1, &|r| &r.fast));
    let obs = system
        .sensor
        .as_ref()
        .map(|s| stack(s.dim, records, &|r| &r.obs));
    let rdt = opts.dt * T::from_usize_lossy(opts.record_every);
    Ok(PathEnsemble {
        times: (0..=records).map(|i| rdt * T::from_usize_lossy(i)).collect(),
        slow,
        fast,
        obs_increments: obs,
        seed: opts.seed,
        theta: theta.to_vec(),
    })
}
