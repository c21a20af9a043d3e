//! Filtering of the slow component from noisy observations of it.
//!
//! The grid backend discretizes the reduced Zakai equation by first-order
//! splitting: upwind advection by the averaged drift, an exact Fourier step
//! for the Brownian and fractional parts on a periodic domain, then a
//! pointwise likelihood update. The particle backend runs on either the
//! reduced or the joint slow-fast model.

use std::sync::Arc;

use log::{debug, warn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::averaging::{invariant_measure, reduce, MeasureMethod, ReducedSystem};
use crate::error::{domain, Error, Result};
pub use crate::grid::{Grid1, GridDensity};
use crate::linalg::psd_sqrt;
use crate::rng::{self, Channel};
use crate::scalar::Real;
use crate::simulate::{
    integrate, FastDynamics, IntegrateOptions, Sensor, SharedNoise, SlowFastSystem, Stepper,
};

/// Likelihood exponents are clipped to this magnitude.
pub const LOG_CLIP: f64 = 700.0;
/// Advection substeps keep the Courant number at or below this value, which
/// keeps the upwind update positive for spatially varying drifts.
const MAX_COURANT: f64 = 0.5;

/// One prediction step of the reduced forward equation on a fixed grid.
///
/// Drift and diffusion do not depend on time, so they are evaluated once.
pub struct Predictor<T: Real> {
    grid: Grid1<T>,
    dt: T,
    /// Drift at the cell faces `x_j + dx/2`; the face joining the two ends is closed.
    velocity: Vec<T>,
    advect_substeps: usize,
    multiplier: Option<Vec<T>>,
    /// Node values of a non-constant `Ḡ` with its explicit substep count.
    variable_diffusion: Option<(Vec<T>, usize)>,
    fft: Option<(Arc<dyn Fft<T>>, Arc<dyn Fft<T>>)>,
}

impl<T: Real> std::fmt::Debug for Predictor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Predictor")
            .field("grid", &self.grid)
            .field("dt", &self.dt)
            .field("advect_substeps", &self.advect_substeps)
            .field("spectral", &self.multiplier.is_some())
            .finish()
    }
}

impl<T: Real> Predictor<T> {
    pub fn new(model: &ReducedSystem<T>, grid: Grid1<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(domain("dt", "filter step must be positive"));
        }
        if model.dim() != 1 {
            return Err(Error::Dimension(format!(
                "grid filter is one-dimensional, model has {} slow components",
                model.dim()
            )));
        }
        let (n, dx) = (grid.n, grid.dx);
        let half = dx / T::lit(2.0);
        let mut velocity = vec![T::zero(); n];
        for (j, u) in velocity.iter_mut().enumerate().take(n - 1) {
            *u = model.drift(&[grid.x(j) + half], &model.theta)?[0];
        }
        let umax = velocity.iter().fold(T::zero(), |m, u| m.max(u.abs()));
        if umax * dt > dx {
            return Err(Error::Cfl {
                courant: (umax * dt).as_f64(),
                dx: dx.as_f64(),
            });
        }
        let advect_substeps = ((umax * dt / dx).as_f64() / MAX_COURANT).ceil().max(1.0) as usize;

        let gbar: Vec<T> = if model.system().slow_diffusion.is_some() {
            (0..n)
                .map(|j| model.diffusion(&[grid.x(j)]).map(|g| g[0]))
                .collect::<Result<_>>()?
        } else {
            vec![T::zero(); n]
        };
        let gmax = gbar.iter().fold(T::zero(), |m, g| m.max(*g));
        let gmin = gbar.iter().fold(gmax, |m, g| m.min(*g));
        let constant = gmax - gmin <= T::lit(1e-12) * gmax.max(T::one());
        let stable = model
            .slow_noise
            .filter(|s| s.scale > T::zero())
            .map(|s| (s.exponent_coefficient(), s.alpha));

        let spectral_g = if constant { gmax } else { T::zero() };
        let multiplier = (spectral_g > T::zero() || stable.is_some()).then(|| {
            let length = grid.length();
            (0..n)
                .map(|k| {
                    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                    let xi = T::TAU() * T::lit(signed) / length;
                    let mut rate = T::lit(0.5) * spectral_g * xi * xi;
                    if let Some((c, alpha)) = stable {
                        rate += c * xi.abs().powf(alpha);
                    }
                    (-rate * dt).exp()
                })
                .collect()
        });
        let variable_diffusion = (!constant).then(|| {
            let number = (dt * gmax / (dx * dx)).as_f64() / MAX_COURANT;
            (gbar, number.ceil().max(1.0) as usize)
        });
        let fft = multiplier.as_ref().map(|_| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        });
        Ok(Self {
            grid,
            dt,
            velocity,
            advect_substeps,
            multiplier,
            variable_diffusion,
            fft,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn grid(&self) -> Grid1<T> {
        self.grid
    }

    /// Advances the density by `dt`. Total mass is preserved.
    pub fn step(&self, density: &GridDensity<T>) -> Result<GridDensity<T>> {
        if density.grid != self.grid {
            return Err(domain("density", "density grid differs from the predictor grid"));
        }
        let mut p = density.values.clone();
        let mass: T = p.iter().copied().sum();
        let n = p.len();

        let lambda = self.dt / T::from_usize_lossy(self.advect_substeps) / self.grid.dx;
        let mut flux = vec![T::zero(); n];
        for _ in 0..self.advect_substeps {
            for j in 0..n - 1 {
                let u = self.velocity[j];
                flux[j] = if u > T::zero() { u * p[j] } else { u * p[j + 1] };
            }
            let mut left = T::zero();
            for j in 0..n {
                let right = flux[j];
                p[j] -= lambda * (right - left);
                left = right;
            }
        }

        if let Some((g, substeps)) = &self.variable_diffusion {
            let mu = self.dt / T::from_usize_lossy(*substeps) / (self.grid.dx * self.grid.dx)
                * T::lit(0.5);
            let mut q = vec![T::zero(); n];
            for _ in 0..*substeps {
                for j in 0..n {
                    q[j] = g[j] * p[j];
                }
                for j in 0..n {
                    let (l, r) = ((j + n - 1) % n, (j + 1) % n);
                    p[j] += mu * (q[l] - T::lit(2.0) * q[j] + q[r]);
                }
            }
        }

        if let (Some(mult), Some((forward, inverse))) = (&self.multiplier, &self.fft) {
            let mut buf: Vec<Complex<T>> = p.iter().map(|&v| Complex::new(v, T::zero())).collect();
            forward.process(&mut buf);
            for (b, m) in buf.iter_mut().zip(mult) {
                *b *= *m;
            }
            inverse.process(&mut buf);
            let inv = T::from_usize_lossy(n).recip();
            for (v, b) in p.iter_mut().zip(&buf) {
                *v = b.re * inv;
            }
        }

        // Round-off and the discrete kernel can leave tiny negative values.
        for v in p.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let after: T = p.iter().copied().sum();
        if after > T::zero() {
            let s = mass / after;
            for v in p.iter_mut() {
                *v *= s;
            }
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { path: 0, step: 0 });
        }
        Ok(GridDensity {
            grid: self.grid,
            values: p,
            time: density.time + self.dt,
            normalized: density.normalized,
        })
    }
}

/// One prediction step; see [`Predictor`] for repeated use.
pub fn predict<T: Real>(
    density: &GridDensity<T>,
    model: &ReducedSystem<T>,
    dt: T,
) -> Result<GridDensity<T>> {
    let boundary = density.boundary_mass();
    if boundary > T::lit(1e-6) {
        warn!("density has relative mass {boundary} at the grid boundary; widen the grid");
    }
    Predictor::new(model, density.grid, dt)?.step(density)
}

fn sensor_on_grid<T: Real>(sensor: &Sensor<T>, grid: &Grid1<T>) -> Vec<Vec<T>> {
    (0..grid.n).map(|j| sensor.eval(&[grid.x(j)])).collect()
}

/// `(h·dz − ½|h|² dt) / r²`, clipped to `±LOG_CLIP`; second value flags clipping.
fn log_likelihood<T: Real>(h: &[T], dz: &[T], dt: T, r2: T) -> (T, bool) {
    let mut dot = T::zero();
    let mut sq = T::zero();
    for (a, b) in h.iter().zip(dz) {
        dot += *a * *b;
        sq += *a * *a;
    }
    let e = (dot - T::lit(0.5) * sq * dt) / r2;
    let clip = T::lit(LOG_CLIP);
    if e > clip {
        (clip, true)
    } else if e < -clip {
        (-clip, true)
    } else {
        (e, false)
    }
}

fn apply_likelihood<T: Real>(
    density: &mut GridDensity<T>,
    h: &[Vec<T>],
    dz: &[T],
    dt: T,
    r2: T,
) {
    let mut clipped = 0usize;
    for (v, hj) in density.values.iter_mut().zip(h) {
        let (e, c) = log_likelihood(hj, dz, dt, r2);
        clipped += c as usize;
        *v *= e.exp();
    }
    if clipped > 0 {
        warn!("likelihood exponent clipped at +-{LOG_CLIP} on {clipped} nodes");
    }
    density.normalized = false;
}

/// Correction step: multiplies by the likelihood of the increment `dz`
/// observed over `dt` through `sensor`. The result is unnormalized.
pub fn correct<T: Real>(
    density: &GridDensity<T>,
    sensor: &Sensor<T>,
    dz: &[T],
    dt: T,
) -> Result<GridDensity<T>> {
    if !(dt > T::zero()) {
        return Err(domain("dt", "filter step must be positive"));
    }
    if dz.len() != sensor.dim {
        return Err(Error::Dimension(format!(
            "observation has {} components, sensor has {}",
            dz.len(),
            sensor.dim
        )));
    }
    if density.values.iter().any(|v| !v.is_finite()) {
        return Err(domain("density", "density must be finite"));
    }
    let h = sensor_on_grid(sensor, &density.grid);
    let mut out = density.clone();
    let before = out.mass();
    apply_likelihood(&mut out, &h, dz, dt, sensor.noise_scale * sensor.noise_scale);
    debug!("correction changed mass by factor {}", out.mass() / before);
    Ok(out)
}

/// Weighted particle approximation of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<T> {
    /// `K x dim`, row-major.
    pub positions: Vec<T>,
    pub dim: usize,
    pub weights: Vec<T>,
    pub ess: T,
}

impl<T: Real> ParticleCloud<T> {
    /// Equally weighted cloud.
    pub fn new(positions: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(domain("positions", "need a nonempty whole number of particles"));
        }
        let k = positions.len() / dim;
        let w = T::from_usize_lossy(k).recip();
        Ok(Self {
            positions,
            dim,
            weights: vec![w; k],
            ess: T::from_usize_lossy(k),
        })
    }

    /// `K` draws of `N(mean, sd²)` per component.
    pub fn gaussian(k: usize, mean: &[T], sd: T, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, 0, Channel::Auxiliary);
        let mut pos = Vec::with_capacity(k * mean.len());
        for _ in 0..k {
            for &m in mean {
                pos.push(m + sd * rng::normal::<T, _>(&mut rng));
            }
        }
        Self::new(pos, mean.len())
    }

    /// Joint prior for the slow-fast model: slow part `N(mean, sd²)`, fast
    /// part drawn from the invariant measure frozen at `mean`.
    pub fn joint_prior(
        system: &SlowFastSystem<T>,
        mean: &[T],
        sd: T,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = system.slow_dim;
        if mean.len() != n {
            return Err(Error::Dimension(format!("prior mean has {} components, need {n}", mean.len())));
        }
        let m = system.fast_dim;
        let mu = if m == 0 {
            None
        } else {
            let method = match system.fast {
                FastDynamics::Linear { .. } if m == 1 => MeasureMethod::Analytic,
                _ => MeasureMethod::Empirical(Default::default()),
            };
            Some(invariant_measure(system, mean, method)?)
        };
        let mut rng = rng::stream(seed, 0, Channel::Auxiliary);
        let mut pos = Vec::with_capacity(k * (n + m));
        for _ in 0..k {
            for &c in mean {
                pos.push(c + sd * rng::normal::<T, _>(&mut rng));
            }
            if let Some(mu) = &mu {
                pos.extend(mu.sample(&mut rng)?);
            }
        }
        Self::new(pos, n + m)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[T] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Weighted mean of `phi` applied to one component.
    pub fn expect(&self, component: usize, phi: impl Fn(T) -> T) -> T {
        let mut acc = T::zero();
        for (i, &w) in self.weights.iter().enumerate() {
            if w > T::zero() {
                acc += w * phi(self.positions[i * self.dim + component]);
            }
        }
        acc
    }

    pub fn mean(&self, component: usize) -> T {
        self.expect(component, |x| x)
    }

    pub fn variance(&self, component: usize) -> T {
        let m = self.mean(component);
        self.expect(component, |x| (x - m) * (x - m))
    }

    fn update_ess(&mut self) {
        let s: T = self.weights.iter().map(|w| *w * *w).sum();
        self.ess = s.recip();
    }

    /// Systematic resampling with offset `u ∈ [0, 1)`; weights become uniform.
    pub fn resample_systematic(&mut self, u: T) {
        let k = self.len();
        let kf = T::from_usize_lossy(k);
        let mut out = Vec::with_capacity(self.positions.len());
        let mut cum = self.weights[0];
        let mut i = 0;
        for j in 0..k {
            let target = (u + T::from_usize_lossy(j)) / kf;
            while cum < target && i < k - 1 {
                i += 1;
                cum += self.weights[i];
            }
            // Never copy a dead particle when round-off leaves us on one.
            let mut src = i;
            while self.weights[src] == T::zero() && src > 0 {
                src -= 1;
            }
            out.extend_from_slice(self.particle(src));
        }
        self.positions = out;
        self.weights = vec![kf.recip(); k];
        self.ess = kf;
    }

    /// Weighted histogram of one component on `grid`, optionally smoothed
    /// with a Gaussian kernel of the given bandwidth, normalized.
    pub fn marginal_density(&self, component: usize, grid: &Grid1<T>, bandwidth: Option<T>) -> Result<GridDensity<T>> {
        let mut hist = vec![T::zero(); grid.n];
        let half = grid.dx / T::lit(2.0);
        for (i, &w) in self.weights.iter().enumerate() {
            let x = self.positions[i * self.dim + component];
            if w > T::zero() && x >= grid.xmin - half && x < grid.xmax() - half {
                hist[grid.nearest(x)] += w;
            }
        }
        let values = match bandwidth.filter(|h| *h > T::zero()) {
            None => hist,
            Some(h) => {
                let reach = ((T::lit(5.0) * h / grid.dx).ceil()).to_usize().unwrap_or(0);
                let kernel: Vec<T> = (0..=reach)
                    .map(|d| {
                        let z = T::from_usize_lossy(d) * grid.dx / h;
                        (-z * z / T::lit(2.0)).exp()
                    })
                    .collect();
                let n = grid.n;
                (0..n)
                    .map(|j| {
                        let lo = j.saturating_sub(reach);
                        let hi = (j + reach).min(n - 1);
                        (lo..=hi).map(|i| hist[i] * kernel[i.abs_diff(j)]).sum()
                    })
                    .collect()
            }
        };
        let mut d = GridDensity::new(*grid, values, T::zero())?;
        d.normalize().map_err(|_| domain("grid", "no particle mass falls inside the grid"))?;
        Ok(d)
    }
}

/// Test functional applied to the first slow component.
#[derive(Clone)]
pub enum Functional<T> {
    Identity,
    /// Identity clipped to `[lo, hi]`.
    Clipped { lo: T, hi: T },
    Indicator { lo: T, hi: T },
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: std::fmt::Debug> std::fmt::Debug for Functional<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Identity => write!(f, "Identity"),
            Self::Clipped { lo, hi } => write!(f, "Clipped({lo:?}, {hi:?})"),
            Self::Indicator { lo, hi } => write!(f, "Indicator({lo:?}, {hi:?})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Real> Functional<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Identity => x,
            Self::Clipped { lo, hi } => x.max(*lo).min(*hi),
            Self::Indicator { lo, hi } => {
                if x >= *lo && x < *hi {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::Custom(f) => f(x),
        }
    }
}

/// Model driving a filter.
#[derive(Clone, Copy)]
pub enum FilterModel<'a, T> {
    /// Joint slow-fast state; particle backend only.
    Full {
        system: &'a SlowFastSystem<T>,
        theta: &'a [T],
    },
    Reduced(&'a ReducedSystem<T>),
}

impl<T: Real> std::fmt::Debug for FilterModel<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Full { system, theta } => write!(f, "Full({}, theta = {theta:?})", system.name),
            Self::Reduced(r) => write!(f, "Reduced({:?})", r),
        }
    }
}

impl<T: Real> FilterModel<'_, T> {
    fn sensor(&self) -> Option<&Sensor<T>> {
        match self {
            Self::Full { system, .. } => system.sensor.as_ref(),
            Self::Reduced(r) => r.sensor.as_ref(),
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            Self::Full { system, .. } => system.slow_dim + system.fast_dim,
            Self::Reduced(r) => r.dim(),
        }
    }

    fn slow_dim(&self) -> usize {
        match self {
            Self::Full { system, .. } => system.slow_dim,
            Self::Reduced(r) => r.dim(),
        }
    }
}

/// Initial filter state; its variant selects the backend.
#[derive(Debug, Clone)]
pub enum FilterInit<T> {
    Grid(GridDensity<T>),
    Particles(ParticleCloud<T>),
}

#[derive(Debug, Clone)]
pub struct FilterOptions<T> {
    /// Observation interval and filter step.
    pub dt: T,
    pub functionals: Vec<Functional<T>>,
    /// Keep the normalized density at every record time.
    pub keep_densities: bool,
    /// Grid for particle marginals when densities are kept.
    pub marginal_grid: Option<Grid1<T>>,
    pub bandwidth: Option<T>,
    /// Upper bound on the particle propagation step; the joint model is
    /// further limited to `epsilon / 10`.
    pub max_substep: Option<T>,
    pub seed: u64,
    /// Resample when `ess < resample_fraction * K`.
    pub resample_fraction: T,
}

impl<T: Real> FilterOptions<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            functionals: Vec::new(),
            keep_densities: false,
            marginal_grid: None,
            bandwidth: None,
            max_substep: None,
            seed: 0,
            resample_fraction: T::lit(0.5),
        }
    }

    pub fn functionals(mut self, phi: Vec<Functional<T>>) -> Self {
        self.functionals = phi;
        self
    }

    pub fn keep_densities(mut self, grid: Option<Grid1<T>>, bandwidth: Option<T>) -> Self {
        self.keep_densities = true;
        self.marginal_grid = grid;
        self.bandwidth = bandwidth;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_substep(mut self, h: T) -> Self {
        self.max_substep = Some(h);
        self
    }
}

/// Filter output at times `0, dt, ..., N dt`.
#[derive(Debug, Clone)]
pub struct FilterRun<T> {
    pub times: Vec<T>,
    /// Posterior mean and variance of the first slow component.
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    /// `functionals[i][k]` is the k-th functional at time `i`.
    pub functionals: Vec<Vec<T>>,
    /// Cumulative log of the unnormalized mass.
    pub log_mass: Vec<T>,
    pub densities: Vec<GridDensity<T>>,
    /// Effective sample size after each correction (particle backend).
    pub ess: Vec<T>,
    pub resamples: usize,
    pub final_cloud: Option<ParticleCloud<T>>,
}

impl<T: Real> FilterRun<T> {
    fn with_capacity(steps: usize) -> Self {
        Self {
            times: Vec::with_capacity(steps + 1),
            mean: Vec::with_capacity(steps + 1),
            variance: Vec::with_capacity(steps + 1),
            functionals: Vec::with_capacity(steps + 1),
            log_mass: Vec::with_capacity(steps + 1),
            densities: Vec::new(),
            ess: Vec::new(),
            resamples: 0,
            final_cloud: None,
        }
    }
}

/// Runs the filter over the increments `obs` (one per step `opts.dt`). An
/// empty increment skips the correction for that step.
pub fn run_filter<T: Real>(
    model: FilterModel<'_, T>,
    obs: &[Vec<T>],
    init: FilterInit<T>,
    opts: &FilterOptions<T>,
) -> Result<FilterRun<T>> {
    if !(opts.dt > T::zero()) {
        return Err(domain("dt", "filter step must be positive"));
    }
    if obs.iter().any(|dz| !dz.is_empty()) {
        let d = model
            .sensor()
            .ok_or_else(|| domain("sensor", "observations given but the model has no sensor"))?
            .dim;
        if let Some(bad) = obs.iter().find(|dz| !dz.is_empty() && dz.len() != d) {
            return Err(Error::Dimension(format!(
                "observation increment has {} components, sensor has {d}",
                bad.len()
            )));
        }
    }
    match (model, init) {
        (FilterModel::Reduced(r), FilterInit::Grid(d)) => run_grid(r, obs, d, opts),
        (FilterModel::Full { .. }, FilterInit::Grid(_)) => Err(Error::Dimension(
            "the joint slow-fast filter runs on particles; pass a ParticleCloud".into(),
        )),
        (model, FilterInit::Particles(c)) => run_particles(model, obs, c, opts),
    }
}

fn run_grid<T: Real>(
    model: &ReducedSystem<T>,
    obs: &[Vec<T>],
    mut p: GridDensity<T>,
    opts: &FilterOptions<T>,
) -> Result<FilterRun<T>> {
    let predictor = Predictor::new(model, p.grid, opts.dt)?;
    let sensor = model.sensor.as_ref();
    let h = sensor.map(|s| sensor_on_grid(s, &p.grid));
    let r2 = sensor.map_or(T::one(), |s| s.noise_scale * s.noise_scale);
    let mut log_mass = p.normalize()?.ln();
    let mut run = FilterRun::with_capacity(obs.len());
    let mut warned = false;
    let record = |run: &mut FilterRun<T>, p: &GridDensity<T>, log_mass: T| {
        run.times.push(p.time);
        let mean = p.mean();
        run.mean.push(mean);
        run.variance.push(p.expect(|x| (x - mean) * (x - mean)));
        run.functionals
            .push(opts.functionals.iter().map(|phi| p.expect(|x| phi.eval(x))).collect());
        run.log_mass.push(log_mass);
        if opts.keep_densities {
            run.densities.push(p.clone());
        }
    };
    record(&mut run, &p, log_mass);
    for (step, dz) in obs.iter().enumerate() {
        p = predictor.step(&p)?;
        if !dz.is_empty() {
            apply_likelihood(&mut p, h.as_deref().unwrap_or(&[]), dz, opts.dt, r2);
            let mass = p.normalize().map_err(|_| Error::Degeneracy { step })?;
            log_mass += mass.ln();
        }
        if !warned && p.boundary_mass() > T::lit(1e-6) {
            warn!("filter density reaches the grid boundary at t = {}", p.time);
            warned = true;
        }
        record(&mut run, &p, log_mass);
    }
    Ok(run)
}

fn run_particles<T: Real>(
    model: FilterModel<'_, T>,
    obs: &[Vec<T>],
    mut cloud: ParticleCloud<T>,
    opts: &FilterOptions<T>,
) -> Result<FilterRun<T>> {
    let dim = model.state_dim();
    if cloud.dim != dim {
        return Err(Error::Dimension(format!(
            "particles live in R^{}, model state in R^{dim}",
            cloud.dim
        )));
    }
    let n = model.slow_dim();
    let k = cloud.len();
    let mut limit = opts.max_substep.unwrap_or(opts.dt).min(opts.dt);
    if let FilterModel::Full { system, .. } = model {
        limit = limit.min(system.epsilon / T::lit(10.0));
    }
    let substeps = ((opts.dt / limit).as_f64() - 1e-9).ceil().max(1.0) as usize;
    let h = opts.dt / T::from_usize_lossy(substeps);

    let mut rngs: Vec<ChaCha8Rng> = (0..k as u64)
        .map(|i| rng::stream(opts.seed, i, Channel::Filter))
        .collect();
    let mut resampler = rng::stream(rng::mix(opts.seed, 0x7e5a), 0, Channel::Auxiliary);
    let sensor = model.sensor();
    let r2 = sensor.map_or(T::one(), |s| s.noise_scale * s.noise_scale);

    let mut run = FilterRun::with_capacity(obs.len());
    let mut log_mass = T::zero();
    let mut time = T::zero();
    let record = |run: &mut FilterRun<T>, c: &ParticleCloud<T>, t: T, log_mass: T| -> Result<()> {
        run.times.push(t);
        run.mean.push(c.mean(0));
        run.variance.push(c.variance(0));
        run.functionals
            .push(opts.functionals.iter().map(|phi| c.expect(0, |x| phi.eval(x))).collect());
        run.log_mass.push(log_mass);
        if opts.keep_densities {
            if let Some(g) = &opts.marginal_grid {
                let mut d = c.marginal_density(0, g, opts.bandwidth)?;
                d.time = t;
                run.densities.push(d);
            }
        }
        Ok(())
    };
    record(&mut run, &cloud, time, log_mass)?;

    let mut logw = vec![T::zero(); k];
    for (step, dz) in obs.iter().enumerate() {
        propagate(model, &mut cloud, &mut rngs, h, substeps)?;
        time += opts.dt;

        let mut dead = 0usize;
        let mut clipped = 0usize;
        let mut hbuf = vec![T::zero(); sensor.map_or(0, |s| s.dim)];
        for i in 0..k {
            let x = &cloud.positions[i * dim..i * dim + n];
            let w = cloud.weights[i];
            if w == T::zero() || x.iter().any(|v| !v.is_finite()) {
                logw[i] = T::neg_infinity();
                dead += 1;
                continue;
            }
            let ll = match sensor {
                Some(s) if !dz.is_empty() => {
                    (s.h)(x, &mut hbuf);
                    let (e, c) = log_likelihood(&hbuf, dz, opts.dt, r2);
                    clipped += c as usize;
                    e
                }
                _ => T::zero(),
            };
            logw[i] = w.ln() + ll;
        }
        if clipped > 0 {
            warn!("likelihood exponent clipped at +-{LOG_CLIP} for {clipped} particles");
        }
        if dead > 0 {
            debug!("{dead} particles carry zero weight at step {step}");
        }
        let top = logw.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        if !top.is_finite() {
            return Err(Error::Degeneracy { step });
        }
        let total: T = logw.iter().map(|v| (*v - top).exp()).sum();
        let lse = top + total.ln();
        for (w, lw) in cloud.weights.iter_mut().zip(&logw) {
            *w = (*lw - lse).exp();
        }
        log_mass += lse;
        cloud.update_ess();
        run.ess.push(cloud.ess);
        record(&mut run, &cloud, time, log_mass)?;
        if cloud.ess < opts.resample_fraction * T::from_usize_lossy(k) {
            let u = T::lit(resampler.random::<f64>());
            cloud.resample_systematic(u);
            run.resamples += 1;
        }
    }
    run.final_cloud = Some(cloud);
    Ok(run)
}

fn propagate<T: Real>(
    model: FilterModel<'_, T>,
    cloud: &mut ParticleCloud<T>,
    rngs: &mut [ChaCha8Rng],
    h: T,
    substeps: usize,
) -> Result<()> {
    let dim = cloud.dim;
    match model {
        FilterModel::Full { system, theta } => {
            let n = system.slow_dim;
            cloud
                .positions
                .par_chunks_mut(dim)
                .zip(rngs.par_iter_mut())
                .for_each_init(
                    || Stepper::new(system, h),
                    |stepper, (state, rng)| {
                        let (x, y) = state.split_at_mut(n);
                        let mut noise = SharedNoise(rng);
                        for _ in 0..substeps {
                            if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
                                break;
                            }
                            stepper.step(x, y, theta, &mut noise);
                        }
                    },
                );
            Ok(())
        }
        FilterModel::Reduced(r) => {
            let n = r.dim();
            let stable = r
                .slow_noise
                .filter(|s| s.scale > T::zero())
                .map(|s| (s.alpha, s.scale * h.powf(s.alpha.recip())));
            let diffusive = r.system().slow_diffusion.is_some();
            let sqrt_h = h.sqrt();
            cloud
                .positions
                .par_chunks_mut(dim)
                .zip(rngs.par_iter_mut())
                .try_for_each(|(x, rng)| -> Result<()> {
                    for _ in 0..substeps {
                        if x.iter().any(|v| !v.is_finite()) {
                            break;
                        }
                        let f = r.drift(x, &r.theta)?;
                        let mut dx: Vec<T> = f.iter().map(|v| *v * h).collect();
                        if diffusive {
                            let root = psd_sqrt(&r.diffusion(x)?, n);
                            let z: Vec<T> = (0..n).map(|_| rng::normal::<T, _>(rng) * sqrt_h).collect();
                            for i in 0..n {
                                dx[i] += (0..n).map(|l| root[i * n + l] * z[l]).sum::<T>();
                            }
                        }
                        if let Some((alpha, scale)) = stable {
                            for d in dx.iter_mut() {
                                *d += scale * rng::standard_stable(alpha, rng);
                            }
                        }
                        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += *b);
                    }
                    Ok(())
                })
        }
    }
}

/// Setup shared by the filter comparison experiments.
#[derive(Debug, Clone)]
pub struct CompareOptions<T> {
    /// True initial slow state and prior mean.
    pub x0: T,
    pub prior_sd: T,
    pub horizon: T,
    /// Observation interval and reduced filter step.
    pub obs_dt: T,
    /// Upper bound on the signal simulation step.
    pub sim_dt: T,
    /// The simulation step is further limited to `epsilon / fast_resolution`
    /// (at least 10). Explicit Euler biases the stationary law of the fast
    /// component by a relative `O(dt / epsilon)`, which otherwise floors the
    /// comparison at small epsilon.
    pub fast_resolution: usize,
    pub grid: Grid1<T>,
    pub particles: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow<T> {
    pub epsilon: T,
    /// Monte Carlo estimate of `E|ρ_T(φ) − ρ̄_T(φ)|^p`.
    pub moment: T,
    pub std_error: T,
}

/// Least-squares slope of `log moment` against `log epsilon`.
pub fn loglog_slope<T: Real>(rows: &[MomentRow<T>]) -> T {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.epsilon.as_f64().ln(), r.moment.as_f64().ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    T::lit(sxy / sxx)
}

/// For each epsilon, simulates signal and observations from the full system,
/// runs the joint particle filter and the reduced grid filter on the same
/// observations, and returns the p-th moment of the difference of the
/// normalized filters applied to `phi` at the final time.
pub fn compare_filters<T: Real>(
    system: &SlowFastSystem<T>,
    theta: &[T],
    epsilons: &[T],
    phi: &Functional<T>,
    p: T,
    trials: usize,
    opts: &CompareOptions<T>,
) -> Result<Vec<MomentRow<T>>> {
    let upper = system.slow_noise.map_or(T::infinity(), |s| s.alpha);
    if !(p > T::one() && p < upper) {
        return Err(domain("p", format!("moment exponent {p} must lie in (1, {upper})")));
    }
    if trials < 100 {
        return Err(domain("trials", format!("{trials} trials, need at least 100")));
    }
    if system.sensor.is_none() {
        return Err(domain("sensor", "filter comparison needs an observed system"));
    }
    let steps = (opts.horizon / opts.obs_dt).round().to_usize().unwrap_or(0);
    if steps == 0 {
        return Err(domain("horizon", "horizon must cover at least one observation"));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let sys = system.with_epsilon(eps)?;
        let reduced = reduce(&sys)?.with_theta(theta.to_vec())?;
        let horizon = opts.obs_dt * T::from_usize_lossy(steps);
        let limit = opts
            .sim_dt
            .min(eps / T::from_usize_lossy(opts.fast_resolution.max(10)));
        let every = (opts.obs_dt / limit).as_f64().ceil().max(1.0) as usize;
        let sim_dt = opts.obs_dt / T::from_usize_lossy(every);
        let int = IntegrateOptions::new(sim_dt, horizon, trials, opts.seed).record_every(every);
        let y0 = vec![T::zero(); sys.fast_dim];
        let ens = integrate(&sys, theta, &[opts.x0], &y0, &int)?;
        let prior = GridDensity::gaussian(opts.grid, opts.x0, opts.prior_sd)?;
        let diffs: Vec<T> = (0..trials)
            .into_par_iter()
            .map(|j| -> Result<T> {
                let obs = ens.observations(j).expect("observed system");
                let fopts = FilterOptions::new(opts.obs_dt)
                    .functionals(vec![phi.clone()])
                    .seed(rng::mix(opts.seed, j as u64))
                    .max_substep(sim_dt);
                let cloud = ParticleCloud::joint_prior(
                    &sys,
                    &[opts.x0],
                    opts.prior_sd,
                    opts.particles,
                    rng::mix(opts.seed ^ 0x9e37, j as u64),
                )?;
                let full = run_filter(FilterModel::Full { system: &sys, theta }, &obs, FilterInit::Particles(cloud), &fopts)?;
                let red = run_filter(FilterModel::Reduced(&reduced), &obs, FilterInit::Grid(prior.clone()), &fopts)?;
                let a = full.functionals.last().expect("recorded")[0];
                let b = red.functionals.last().expect("recorded")[0];
                Ok((a - b).abs().powf(p))
            })
            .collect::<Result<_>>()?;
        let count = T::from_usize_lossy(trials);
        let moment = diffs.iter().copied().sum::<T>() / count;
        let var = diffs.iter().map(|d| (*d - moment) * (*d - moment)).sum::<T>()
            / T::from_usize_lossy(trials - 1);
        rows.push(MomentRow {
            epsilon: eps,
            moment,
            std_error: (var / count).sqrt(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::reduce;
    use crate::simulate::{example2, FastDynamics};
    use crate::stable::StableSpec;

    fn brownian_model(drift: f64, g: f64, sensor: Option<f64>) -> ReducedSystem<f64> {
        let mut s = SlowFastSystem::new(
            "ou",
            1,
            0,
            0,
            Arc::new(move |x: &[f64], _: &[f64], _: &[f64], out: &mut [f64]| out[0] = -drift * x[0]),
            FastDynamics::Linear {
                rate: 1.0,
                intensity: 0.0,
            },
            1.0,
        )
        .unwrap()
        .with_slow_diffusion(Arc::new(move |_: &[f64], _: &[f64], out: &mut [f64]| out[0] = g));
        if let Some(r) = sensor {
            s = s.with_sensor(Sensor::identity(r).unwrap());
        }
        reduce(&s).unwrap()
    }

    #[test]
    fn zero_dynamics_leave_density_unchanged() {
        let r = brownian_model(0.0, 0.0, None);
        let g = Grid1::new(-5.0, 5.0, 256).unwrap();
        let d = GridDensity::gaussian(g, 0.3, 0.6).unwrap();
        let out = predict(&d, &r, 0.01).unwrap();
        for (a, b) in out.values.iter().zip(&d.values) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((out.time - 0.01).abs() < 1e-15);
    }

    #[test]
    fn heat_step_matches_convolved_gaussian() {
        // Ḡ = 2D with D = 0.5: variance grows by 2D dt.
        let d_coef: f64 = 0.5;
        let r = brownian_model(0.0, (2.0 * d_coef).sqrt(), None);
        let g = Grid1::new(-8.0, 8.0, 1024).unwrap();
        let s = 0.4;
        let dt = 0.05;
        let d = GridDensity::gaussian(g, 0.0, s).unwrap();
        let out = predict(&d, &r, dt).unwrap();
        let v = s * s + 2.0 * d_coef * dt;
        let sup = (0..g.n)
            .map(|j| {
                let x = g.x(j);
                let exact = (-x * x / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt();
                (out.values[j] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(sup < 1e-4, "sup error {sup}");
        assert!((out.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let r = brownian_model(10.0, 0.0, None);
        let g = Grid1::new(-5.0, 5.0, 100).unwrap();
        let d = GridDensity::gaussian(g, 0.0, 1.0).unwrap();
        assert!(matches!(predict(&d, &r, 0.05), Err(Error::Cfl { .. })));
        assert!(predict(&d, &r, 0.001).is_ok());
    }

    #[test]
    fn advection_moves_mass_along_the_drift() {
        let r = brownian_model(1.0, 0.0, None);
        let g = Grid1::new(-6.0, 6.0, 1200).unwrap();
        let mut d = GridDensity::gaussian(g, 2.0, 0.3).unwrap();
        let pred = Predictor::new(&r, g, 0.001).unwrap();
        for _ in 0..500 {
            d = pred.step(&d).unwrap();
        }
        // Mean follows dx/dt = -x.
        assert!((d.mean() - 2.0 * (-0.5f64).exp()).abs() < 5e-3, "{}", d.mean());
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variable_diffusion_uses_conservative_scheme() {
        let mut s = SlowFastSystem::new(
            "mult",
            1,
            0,
            0,
            Arc::new(|_: &[f64], _: &[f64], _: &[f64], out: &mut [f64]| out[0] = 0.0),
            FastDynamics::Linear {
                rate: 1.0,
                intensity: 0.0,
            },
            1.0,
        )
        .unwrap();
        s = s.with_slow_diffusion(Arc::new(|x: &[f64], _: &[f64], out: &mut [f64]| {
            out[0] = 0.5 + 0.2 * x[0].sin()
        }));
        let r = reduce(&s).unwrap();
        let g = Grid1::new(-6.0, 6.0, 400).unwrap();
        let mut d = GridDensity::gaussian(g, 0.0, 0.5).unwrap();
        let pred = Predictor::new(&r, g, 0.01).unwrap();
        for _ in 0..50 {
            d = pred.step(&d).unwrap();
        }
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!(d.values.iter().all(|v| *v >= 0.0));
        assert!(d.variance() > 0.25);
    }

    #[test]
    fn correction_cases() {
        let g = Grid1::new(-6.0, 6.0, 1200).unwrap();
        let prior = GridDensity::gaussian(g, 0.4, 0.5).unwrap();

        let zero = Sensor::new(1, 1.0, Arc::new(|_: &[f64], out: &mut [f64]| out[0] = 0.0)).unwrap();
        let out = correct(&prior, &zero, &[0.3], 0.01).unwrap();
        assert_eq!(out.values, prior.values);

        let constant = Sensor::new(1, 1.0, Arc::new(|_: &[f64], out: &mut [f64]| out[0] = 2.0)).unwrap();
        let mut out = correct(&prior, &constant, &[0.7], 0.01).unwrap();
        let ratio = out.values[600] / prior.values[600];
        assert!(out.values.iter().zip(&prior.values).all(|(a, b)| (a - ratio * b).abs() < 1e-12));
        out.normalize().unwrap();
        assert!(out.values.iter().zip(&prior.values).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn correction_is_the_kalman_update() {
        let g = Grid1::<f64>::new(-6.0, 6.0, 2400).unwrap();
        let (mu, s, r, dt, dz): (f64, f64, f64, f64, f64) = (0.4, 0.5, 0.3, 0.01, 0.02);
        let prior = GridDensity::gaussian(g, mu, s).unwrap();
        let sensor = Sensor::identity(r).unwrap();
        let post = correct(&prior, &sensor, &[dz], dt).unwrap();
        let precision = 1.0 / (s * s) + dt / (r * r);
        let mean = (mu / (s * s) + dz / (r * r)) / precision;
        assert!((post.mean() - mean).abs() < 1e-8);
        assert!((post.variance() - 1.0 / precision).abs() < 1e-6);
    }

    #[test]
    fn likelihood_clipping() {
        let g = Grid1::new(-1.0, 1.0, 10).unwrap();
        let prior = GridDensity::gaussian(g, 0.0, 1.0).unwrap();
        let big = Sensor::new(1, 1e-3, Arc::new(|x: &[f64], out: &mut [f64]| out[0] = 1e3 * x[0])).unwrap();
        let out = correct(&prior, &big, &[1.0], 0.1).unwrap();
        assert!(out.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn kalman_bucy_tracking() {
        let (q, r): (f64, f64) = (1.0, 0.5);
        let model = brownian_model(1.0, q, Some(r));
        let dt: f64 = 0.001;
        let steps = 1000;
        // Observations of a simulated signal.
        let mut rng = rng::stream(3, 0, Channel::Auxiliary);
        let mut x = 1.0;
        let mut obs = Vec::with_capacity(steps);
        for _ in 0..steps {
            let dz = x * dt + r * dt.sqrt() * rng::normal::<f64, _>(&mut rng);
            obs.push(vec![dz]);
            x += -x * dt + q * dt.sqrt() * rng::normal::<f64, _>(&mut rng);
        }
        let g = Grid1::new(-4.0, 4.0, 1600).unwrap();
        let (m0, s0) = (1.0, 0.5);
        let init = GridDensity::gaussian(g, m0, s0).unwrap();
        let run = run_filter(FilterModel::Reduced(&model), &obs, FilterInit::Grid(init), &FilterOptions::new(dt)).unwrap();
        let (mut m, mut p) = (m0, s0 * s0);
        for (i, dz) in obs.iter().enumerate() {
            // Same splitting as the filter: predict, then update.
            m += -m * dt;
            p += (-2.0 * p + q * q) * dt;
            let precision = 1.0 / p + dt / (r * r);
            m = (m / p + dz[0] / (r * r)) / precision;
            p = 1.0 / precision;
            let scale = m.abs().max(p.sqrt());
            assert!((run.mean[i + 1] - m).abs() < 0.02 * scale, "t={} {} vs {m}", i, run.mean[i + 1]);
            assert!((run.variance[i + 1] - p).abs() < 0.02 * p, "t={} {} vs {p}", i, run.variance[i + 1]);
        }
    }

    #[test]
    fn particle_cloud_basics() {
        let mut c = ParticleCloud::<f64>::new(vec![0.0, 1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(c.len(), 4);
        assert!((c.mean(0) - 1.5).abs() < 1e-15);
        c.weights = vec![0.0, 0.0, 0.5, 0.5];
        c.update_ess();
        assert!((c.ess - 2.0).abs() < 1e-12);
        c.resample_systematic(0.3);
        assert_eq!(c.positions, vec![2.0, 2.0, 3.0, 3.0]);
        assert!(ParticleCloud::<f64>::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn marginal_histogram_and_kernel() {
        let c = ParticleCloud::<f64>::gaussian(20_000, &[0.5], 0.3, 7).unwrap();
        let g = Grid1::new(-2.0, 3.0, 100).unwrap();
        let d = c.marginal_density(0, &g, None).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!((d.mean() - 0.5).abs() < 0.01);
        let k = c.marginal_density(0, &g, Some(0.1)).unwrap();
        assert!((k.variance() - (0.09 + 0.01)).abs() < 0.01);
    }

    #[test]
    fn particle_filter_without_observations_follows_dynamics() {
        let model = brownian_model(1.0, 0.0, None);
        let cloud = ParticleCloud::gaussian(500, &[2.0], 0.1, 1).unwrap();
        let run = run_filter(
            FilterModel::Reduced(&model),
            &vec![vec![]; 100],
            FilterInit::Particles(cloud),
            &FilterOptions::new(0.01),
        )
        .unwrap();
        assert!((run.mean[100] - 2.0 * (-1.0f64).exp()).abs() < 0.02);
        assert_eq!(run.resamples, 0);
    }

    #[test]
    fn joint_filter_rejects_grid_backend() {
        let s = example2::<f64>(1.5, 0.1).unwrap();
        let g = Grid1::new(-3.0, 3.0, 64).unwrap();
        let d = GridDensity::gaussian(g, 1.0, 0.1).unwrap();
        let r = run_filter(
            FilterModel::Full { system: &s, theta: &[] },
            &[],
            FilterInit::Grid(d),
            &FilterOptions::new(0.01),
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn joint_prior_draws_fast_component_from_invariant_law() {
        let s = example2::<f64>(1.5, 0.1).unwrap();
        let c = ParticleCloud::joint_prior(&s, &[1.0], 0.1, 20_000, 4).unwrap();
        assert_eq!(c.dim, 2);
        assert!((c.variance(1) - 2.0).abs() < 0.1);
        assert!((c.mean(0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn compare_filters_preconditions() {
        let s = example2::<f64>(1.5, 0.1).unwrap();
        let opts = CompareOptions {
            x0: 1.0,
            prior_sd: 0.1,
            horizon: 0.1,
            obs_dt: 0.01,
            sim_dt: 0.001,
            fast_resolution: 10,
            grid: Grid1::new(-3.0, 3.0, 300).unwrap(),
            particles: 100,
            seed: 1,
        };
        let phi = Functional::Clipped { lo: -3.0, hi: 3.0 };
        assert!(compare_filters(&s, &[], &[0.1], &phi, 1.6, 100, &opts).is_err());
        assert!(compare_filters(&s, &[], &[0.1], &phi, 1.2, 10, &opts).is_err());
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let rows: Vec<MomentRow<f64>> = [0.1, 0.03, 0.01]
            .iter()
            .map(|&e: &f64| MomentRow {
                epsilon: e,
                moment: 3.0 * e.powf(0.8),
                std_error: 0.0,
            })
            .collect();
        assert!((loglog_slope(&rows) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn stable_spectral_step_keeps_mass() {
        let mut s = example2::<f64>(1.5, 0.01).unwrap();
        s.slow_noise = Some(StableSpec::new(1.5, 0.3, 1).unwrap());
        let r = reduce(&s).unwrap();
        let g = Grid1::new(-3.0, 3.0, 600).unwrap();
        let d = GridDensity::gaussian(g, 1.0, 0.1).unwrap();
        let out = predict(&d, &r, 0.002).unwrap();
        assert!((out.mass() - 1.0).abs() < 1e-12);
        assert!(out.variance() > d.variance());
    }
}
