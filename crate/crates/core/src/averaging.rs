//! Invariant measures of the frozen fast process and the averaged slow system.
//!
//! For a fast component `dY = -λY/ε dt + g/√ε dB + s ε^{-1/α} dL` the
//! stationary law does not depend on `ε` or on the slow state, and is known in
//! closed form. Anything else is handled by long-run simulation of the frozen
//! dynamics in fast time.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::grid::{Grid1, GridDensity};
use crate::linalg::{psd_project, psd_sqrt};
use crate::quadrature::{hermite_level, HERMITE_LEVELS};
use crate::rng::{self, Channel};
use crate::scalar::Real;
use crate::simulate::{ChannelNoise, FastDynamics, NoiseSource, Sensor, SlowFastSystem};
use crate::stable::{invert_characteristic, StableSpec};

/// Half-width of the window used for heavy-tailed densities.
pub const STABLE_WINDOW: f64 = 40.0;
const STABLE_NODES: usize = 1 << 14;
/// Refinement stops once successive estimates agree to this relative level.
const QUAD_TARGET: f64 = 1e-8;
/// Refinement fails if the last change is still above this level.
const QUAD_FAIL: f64 = 1e-6;
pub const MIN_EMPIRICAL_SAMPLES: usize = 10_000;
/// Lattice spacing for caching x-dependent measures.
pub const LATTICE_SPACING: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind<T> {
    Gaussian { mean: T, variance: T },
    /// Symmetric law with characteristic function `exp(-c |xi|^alpha)`.
    StableCf { c: T, alpha: T },
    /// `count x dim` samples, row-major.
    Empirical { samples: Vec<T>, dim: usize },
    Grid(GridDensity<T>),
}

#[derive(Debug, Clone)]
pub struct InvariantMeasure<T> {
    pub kind: MeasureKind<T>,
    /// Slow state at which the fast dynamics were frozen; `None` when the
    /// measure does not depend on it.
    pub frozen_x: Option<Vec<T>>,
    /// Relative change of the sample dispersion between the two halves of
    /// the retained window (empirical measures only).
    pub dispersion_drift: Option<T>,
    table: OnceLock<Arc<GridDensity<T>>>,
}

impl<T: Real> InvariantMeasure<T> {
    fn with_kind(kind: MeasureKind<T>) -> Self {
        Self {
            kind,
            frozen_x: None,
            dispersion_drift: None,
            table: OnceLock::new(),
        }
    }

    pub fn gaussian(mean: T, variance: T) -> Result<Self> {
        if !(variance > T::zero()) {
            return Err(domain("variance", "gaussian variance must be positive"));
        }
        Ok(Self::with_kind(MeasureKind::Gaussian { mean, variance }))
    }

    pub fn stable_cf(c: T, alpha: T) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(domain("c", "stable exponent coefficient must be positive"));
        }
        if !(alpha > T::zero() && alpha <= T::lit(2.0)) {
            return Err(domain("alpha", "stability index must lie in (0, 2]"));
        }
        Ok(Self::with_kind(MeasureKind::StableCf { c, alpha }))
    }

    pub fn empirical(samples: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || !samples.len().is_multiple_of(dim) {
            return Err(domain("samples", "sample buffer is not a whole number of points"));
        }
        let count = samples.len() / dim;
        if count < MIN_EMPIRICAL_SAMPLES {
            return Err(domain(
                "samples",
                format!("{count} samples, need at least {MIN_EMPIRICAL_SAMPLES}"),
            ));
        }
        Ok(Self::with_kind(MeasureKind::Empirical { samples, dim }))
    }

    pub fn grid(density: GridDensity<T>) -> Result<Self> {
        if (density.mass() - T::one()).abs() > T::lit(1e-4) {
            return Err(domain("density", "grid measure must be normalized to 1 +- 1e-4"));
        }
        Ok(Self::with_kind(MeasureKind::Grid(density)))
    }

    pub fn at(mut self, frozen_x: Option<Vec<T>>) -> Self {
        self.frozen_x = frozen_x;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            MeasureKind::Empirical { dim, .. } => *dim,
            _ => 1,
        }
    }

    /// One draw from the measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>> {
        Ok(match &self.kind {
            MeasureKind::Gaussian { mean, variance } => {
                vec![*mean + variance.sqrt() * rng::normal::<T, _>(rng)]
            }
            MeasureKind::StableCf { c, alpha } => {
                vec![c.powf(alpha.recip()) * rng::standard_stable(*alpha, rng)]
            }
            MeasureKind::Empirical { samples, dim } => {
                let i = rng.random_range(0..samples.len() / dim);
                samples[i * dim..(i + 1) * dim].to_vec()
            }
            MeasureKind::Grid(_) => {
                let table = self.table()?;
                let cdf = table.cdf();
                let u = T::lit(rng.random::<f64>());
                let j = cdf.partition_point(|c| *c < u).min(cdf.len() - 1);
                let lo = if j == 0 { T::zero() } else { cdf[j - 1] };
                let frac = if cdf[j] > lo { (u - lo) / (cdf[j] - lo) } else { T::lit(0.5) };
                let g = &table.grid;
                vec![g.x(j) + g.dx * (frac - T::lit(0.5))]
            }
        })
    }

    /// Tabulated density for the heavy-tailed kind, built once.
    fn table(&self) -> Result<Arc<GridDensity<T>>> {
        if let Some(t) = self.table.get() {
            return Ok(t.clone());
        }
        let built = match &self.kind {
            MeasureKind::StableCf { c, alpha } => {
                let grid = Grid1::symmetric(T::lit(STABLE_WINDOW), STABLE_NODES)?;
                let (c, alpha) = (*c, *alpha);
                invert_characteristic(grid, |xi| (-c * xi.abs().powf(alpha)).exp())?.density
            }
            MeasureKind::Grid(d) => d.clone(),
            _ => return Err(domain("kind", "measure has no density table")),
        };
        Ok(self.table.get_or_init(|| Arc::new(built)).clone())
    }

    /// `∫ f(y) mu(dy)` for a vector-valued integrand with `out_dim` outputs.
    pub fn expectation(&self, out_dim: usize, f: impl Fn(&[T], &mut [T])) -> Result<Vec<T>> {
        match &self.kind {
            MeasureKind::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                refine(out_dim, 1, HERMITE_LEVELS, |level| {
                    let (xs, ws) = hermite_level(level);
                    let mut acc = vec![T::zero(); out_dim];
                    let mut buf = vec![T::zero(); out_dim];
                    for (z, w) in xs.iter().zip(ws) {
                        f(&[*mean + sd * T::lit(*z)], &mut buf);
                        let w = T::lit(*w);
                        for (s, v) in acc.iter_mut().zip(&buf) {
                            *s += *v * w;
                        }
                    }
                    (acc, xs.len())
                })
            }
            MeasureKind::StableCf { .. } | MeasureKind::Grid(_) => {
                let table = self.table()?;
                let n = table.grid.n;
                let levels = n.trailing_zeros().min(9) as usize;
                refine(out_dim, 1, levels + 1, |level| {
                    // Stride halves with each level until every node is used.
                    // Weights are renormalized per level so the truncated tails
                    // do not leak into y-independent terms.
                    let stride = 1usize << (levels - level.min(levels));
                    let mut acc = vec![T::zero(); out_dim];
                    let mut buf = vec![T::zero(); out_dim];
                    let mut mass = T::zero();
                    let mut count = 0;
                    for j in (0..n).step_by(stride) {
                        let p = table.values[j];
                        if p == T::zero() {
                            continue;
                        }
                        f(&[table.grid.x(j)], &mut buf);
                        for (s, v) in acc.iter_mut().zip(&buf) {
                            *s += *v * p;
                        }
                        mass += p;
                        count += 1;
                    }
                    for s in acc.iter_mut() {
                        *s /= mass;
                    }
                    (acc, count)
                })
            }
            MeasureKind::Empirical { samples, dim } => {
                let mut acc = vec![T::zero(); out_dim];
                let mut buf = vec![T::zero(); out_dim];
                let count = samples.len() / dim;
                for y in samples.chunks_exact(*dim) {
                    f(y, &mut buf);
                    for (s, v) in acc.iter_mut().zip(&buf) {
                        *s += *v;
                    }
                }
                let inv = T::from_usize_lossy(count).recip();
                Ok(acc.into_iter().map(|v| v * inv).collect())
            }
        }
    }
}

/// Runs `estimate(level)` for increasing levels until the max-norm relative
/// change between successive estimates drops below the target.
fn refine<T: Real>(
    out_dim: usize,
    min_levels: usize,
    max_levels: usize,
    estimate: impl Fn(usize) -> (Vec<T>, usize),
) -> Result<Vec<T>> {
    let (mut prev, _) = estimate(0);
    let mut change = f64::INFINITY;
    let mut nodes = 0;
    for level in 1..max_levels {
        let (next, used) = estimate(level);
        nodes = used;
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs().as_f64()));
        let diff = next
            .iter()
            .zip(&prev)
            .fold(0.0f64, |m, (a, b)| m.max((*a - *b).abs().as_f64()));
        change = if scale > 1e-300 { diff / scale } else { 0.0 };
        prev = next;
        if level >= min_levels.min(max_levels - 1) && (change <= QUAD_TARGET || diff < 1e-15) {
            return Ok(prev);
        }
    }
    if change <= QUAD_FAIL || out_dim == 0 {
        Ok(prev)
    } else {
        Err(Error::Quadrature { change, nodes })
    }
}

/// How to obtain the invariant measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureMethod<T> {
    /// Closed form for scalar linear fast dynamics.
    Analytic,
    Empirical(EmpiricalOptions<T>),
}

/// Long-run simulation of the frozen fast process in fast time `t / ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalOptions<T> {
    pub horizon: T,
    pub dt: T,
    pub chains: usize,
    /// Time between retained samples.
    pub thin: T,
    pub seed: u64,
}

impl<T: Real> Default for EmpiricalOptions<T> {
    fn default() -> Self {
        Self {
            horizon: T::lit(1000.0),
            dt: T::lit(0.01),
            chains: 32,
            thin: T::lit(1.0),
            seed: 0x5EED,
        }
    }
}

/// Invariant measure of the fast dynamics with the slow state frozen at `frozen_x`.
pub fn invariant_measure<T: Real>(
    system: &SlowFastSystem<T>,
    frozen_x: &[T],
    method: MeasureMethod<T>,
) -> Result<InvariantMeasure<T>> {
    if frozen_x.len() != system.slow_dim {
        return Err(Error::Dimension(format!(
            "frozen state has {} components, system has {}",
            frozen_x.len(),
            system.slow_dim
        )));
    }
    if system.fast_dim == 0 {
        return Err(domain("fast_dim", "system has no fast component to average"));
    }
    match method {
        MeasureMethod::Analytic => analytic_measure(system),
        MeasureMethod::Empirical(opts) => empirical_measure(system, frozen_x, &opts),
    }
}

fn analytic_measure<T: Real>(system: &SlowFastSystem<T>) -> Result<InvariantMeasure<T>> {
    let FastDynamics::Linear { rate, intensity } = system.fast else {
        return Err(domain(
            "fast",
            "closed-form measure needs linear fast drift; use the empirical method",
        ));
    };
    if system.fast_dim != 1 {
        return Err(Error::Dimension(
            "closed-form measure is implemented for a scalar fast component".into(),
        ));
    }
    let stable = system.fast_noise.filter(|s| s.scale > T::zero());
    let two = T::lit(2.0);
    match (intensity > T::zero(), stable) {
        (true, None) => InvariantMeasure::gaussian(T::zero(), intensity * intensity / (two * rate)),
        (false, Some(s)) => InvariantMeasure::stable_cf(
            s.exponent_coefficient() / (s.alpha * rate),
            s.alpha,
        ),
        (true, Some(s)) => {
            // Independent Gaussian and stable parts: multiply the characteristic functions.
            let gauss = intensity * intensity / (two * two * rate);
            let c = s.exponent_coefficient() / (s.alpha * rate);
            let grid = Grid1::symmetric(T::lit(STABLE_WINDOW), STABLE_NODES)?;
            let d = invert_characteristic(grid, |xi| {
                (-gauss * xi * xi - c * xi.abs().powf(s.alpha)).exp()
            })?;
            InvariantMeasure::grid(d.density)
        }
        (false, None) => Err(domain(
            "fast",
            "fast component is noiseless; its invariant measure is a point mass",
        )),
    }
}

fn empirical_measure<T: Real>(
    system: &SlowFastSystem<T>,
    frozen_x: &[T],
    opts: &EmpiricalOptions<T>,
) -> Result<InvariantMeasure<T>> {
    if !(opts.dt > T::zero()) || !(opts.horizon > opts.dt) || opts.chains == 0 {
        return Err(domain("empirical", "need dt > 0, horizon > dt and at least one chain"));
    }
    let m = system.fast_dim;
    let steps = (opts.horizon / opts.dt).round().to_usize().unwrap_or(0);
    let thin = (opts.thin / opts.dt).round().to_usize().unwrap_or(1).max(1);
    let burn = steps / 2;
    let sqrt_dt = opts.dt.sqrt();
    let stable = system
        .fast_noise
        .filter(|s| s.scale > T::zero())
        .map(|s| (s.alpha, s.scale * opts.dt.powf(s.alpha.recip())));
    let diffusive = system.has_fast_diffusion();

    let chains: Vec<Vec<T>> = (0..opts.chains)
        .into_par_iter()
        .map(|c| {
            let mut noise = ChannelNoise::new(opts.seed, c as u64);
            let mut y = vec![T::zero(); m];
            let mut drift = vec![T::zero(); m];
            let mut z = vec![T::zero(); m];
            let mut scratch = vec![T::zero(); m * m];
            let mut kept = Vec::with_capacity((steps - burn) / thin * m);
            for k in 0..steps {
                system.fast_drift_at(frozen_x, &y, &mut drift);
                for d in drift.iter_mut() {
                    *d *= opts.dt;
                }
                if diffusive {
                    for v in z.iter_mut() {
                        *v = NoiseSource::<T>::normal(&mut noise, Channel::FastBrownian) * sqrt_dt;
                    }
                    system.apply_fast_diffusion(frozen_x, &y, &z, &mut drift, &mut scratch);
                }
                if let Some((alpha, scale)) = stable {
                    for d in drift.iter_mut() {
                        *d += scale * noise.stable(alpha, Channel::FastStable);
                    }
                }
                for (v, d) in y.iter_mut().zip(&drift) {
                    *v += *d;
                }
                if k >= burn && (k - burn) % thin == thin - 1 {
                    kept.extend_from_slice(&y);
                }
            }
            kept
        })
        .collect();

    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { path: 0, step: steps });
    }
    let per_chain = chains[0].len() / m;
    let split = |first: bool| -> Vec<T> {
        chains
            .iter()
            .flat_map(|c| {
                let half = per_chain / 2 * m;
                if first {
                    c[..half].iter().step_by(m).copied().collect::<Vec<_>>()
                } else {
                    c[half..].iter().step_by(m).copied().collect::<Vec<_>>()
                }
            })
            .collect()
    };
    let (d1, d2) = (iqr(split(true)), iqr(split(false)));
    let drift = (d1 - d2).abs() / d2.max(T::min_positive_value());
    if drift > T::lit(0.05) {
        warn!("fast dynamics may not be ergodic: dispersion changed by {drift} over the retained window");
    }
    let samples: Vec<T> = chains.into_iter().flatten().collect();
    let frozen = match system.fast {
        FastDynamics::Linear { .. } => None,
        FastDynamics::General { .. } => Some(frozen_x.to_vec()),
    };
    let mut mu = InvariantMeasure::empirical(samples, m)?.at(frozen);
    mu.dispersion_drift = Some(drift);
    Ok(mu)
}

fn iqr<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    q(0.75) - q(0.25)
}

fn check_scalar_fast<T: Real>(system: &SlowFastSystem<T>, mu: &InvariantMeasure<T>) -> Result<()> {
    if mu.dim() != system.fast_dim {
        return Err(Error::Dimension(format!(
            "measure lives in R^{}, fast component in R^{}",
            mu.dim(),
            system.fast_dim
        )));
    }
    Ok(())
}

/// `f̄(x, θ) = ∫ f1(x, y, θ) mu(dy)`.
pub fn averaged_drift<T: Real>(
    system: &SlowFastSystem<T>,
    mu: &InvariantMeasure<T>,
    x: &[T],
    theta: &[T],
) -> Result<Vec<T>> {
    check_scalar_fast(system, mu)?;
    mu.expectation(system.slow_dim, |y, out| (system.slow_drift)(x, y, theta, out))
}

/// `Ḡ(x) = ∫ g1 g1ᵀ mu(dy)`, projected onto the symmetric PSD cone.
pub fn averaged_diffusion<T: Real>(
    system: &SlowFastSystem<T>,
    mu: &InvariantMeasure<T>,
    x: &[T],
) -> Result<Vec<T>> {
    let n = system.slow_dim;
    let Some(g1) = &system.slow_diffusion else {
        return Ok(vec![T::zero(); n * n]);
    };
    check_scalar_fast(system, mu)?;
    let raw = mu.expectation(n * n, |y, out| {
        let mut g = vec![T::zero(); n * n];
        g1(x, y, &mut g);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| g[i * n + k] * g[j * n + k]).sum();
            }
        }
    })?;
    Ok(psd_project(&raw, n))
}

enum MeasureSource<T> {
    /// No fast component: coefficients are evaluated directly.
    Trivial,
    Fixed(Arc<InvariantMeasure<T>>),
    Lattice {
        method: MeasureMethod<T>,
        cache: RwLock<HashMap<Vec<i64>, Arc<InvariantMeasure<T>>>>,
    },
}

/// Averaged slow dynamics `dX̄ = f̄(X̄, θ) dt + Ḡ(X̄)^{1/2} dB + σ1 dL`, observed
/// through the original sensor.
#[derive(Clone)]
pub struct ReducedSystem<T> {
    system: Arc<SlowFastSystem<T>>,
    source: Arc<MeasureSource<T>>,
    pub slow_noise: Option<StableSpec<T>>,
    pub sensor: Option<Sensor<T>>,
    /// Parameter used by the filters; estimation passes θ explicitly.
    pub theta: Vec<T>,
}

impl<T: Real> std::fmt::Debug for ReducedSystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedSystem")
            .field("system", &self.system.name)
            .field("slow_noise", &self.slow_noise)
            .field("theta", &self.theta)
            .finish()
    }
}

/// Builds the averaged system, choosing closed-form measures when available.
pub fn reduce<T: Real>(system: &SlowFastSystem<T>) -> Result<ReducedSystem<T>> {
    let method = match system.fast {
        FastDynamics::Linear { .. } if system.fast_dim == 1 => MeasureMethod::Analytic,
        _ => MeasureMethod::Empirical(EmpiricalOptions::default()),
    };
    reduce_with(system, method)
}

pub fn reduce_with<T: Real>(
    system: &SlowFastSystem<T>,
    method: MeasureMethod<T>,
) -> Result<ReducedSystem<T>> {
    system.validate()?;
    let source = if system.fast_dim == 0 {
        MeasureSource::Trivial
    } else if !system.fast.depends_on_slow() {
        let x0 = vec![T::zero(); system.slow_dim];
        MeasureSource::Fixed(Arc::new(invariant_measure(system, &x0, method)?))
    } else {
        if let MeasureMethod::Analytic = method {
            return Err(domain("method", "x-dependent fast dynamics need the empirical method"));
        }
        MeasureSource::Lattice {
            method,
            cache: RwLock::new(HashMap::new()),
        }
    };
    Ok(ReducedSystem {
        system: Arc::new(system.clone()),
        source: Arc::new(source),
        slow_noise: system.slow_noise,
        sensor: system.sensor.clone(),
        theta: vec![T::zero(); system.theta_dim],
    })
}

impl<T: Real> ReducedSystem<T> {
    pub fn dim(&self) -> usize {
        self.system.slow_dim
    }

    pub fn system(&self) -> &SlowFastSystem<T> {
        &self.system
    }

    pub fn with_theta(mut self, theta: Vec<T>) -> Result<Self> {
        if theta.len() != self.system.theta_dim {
            return Err(Error::Dimension(format!(
                "theta has {} components, system expects {}",
                theta.len(),
                self.system.theta_dim
            )));
        }
        self.theta = theta;
        Ok(self)
    }

    /// Measure used at `x` (the cached global one when x-independent).
    pub fn measure_at(&self, x: &[T]) -> Result<Option<Arc<InvariantMeasure<T>>>> {
        match &*self.source {
            MeasureSource::Trivial => Ok(None),
            MeasureSource::Fixed(mu) => Ok(Some(mu.clone())),
            MeasureSource::Lattice { .. } => {
                let key = self.lattice_key(x, |v| v.round());
                Ok(Some(self.lattice_measure(&key)?))
            }
        }
    }

    fn lattice_key(&self, x: &[T], snap: impl Fn(T) -> T) -> Vec<i64> {
        let h = T::lit(LATTICE_SPACING);
        x.iter().map(|&v| snap(v / h).to_i64().unwrap_or(0)).collect()
    }

    fn lattice_measure(&self, key: &[i64]) -> Result<Arc<InvariantMeasure<T>>> {
        let MeasureSource::Lattice { method, cache } = &*self.source else {
            unreachable!("lattice lookup on a non-lattice source");
        };
        if let Some(mu) = cache.read().expect("measure cache poisoned").get(key) {
            return Ok(mu.clone());
        }
        let h = T::lit(LATTICE_SPACING);
        let point: Vec<T> = key.iter().map(|&k| T::lit(k as f64) * h).collect();
        let mu = Arc::new(invariant_measure(&self.system, &point, *method)?);
        let mut w = cache.write().expect("measure cache poisoned");
        Ok(w.entry(key.to_vec()).or_insert(mu).clone())
    }

    /// Averaged drift at `x` for parameter `theta`.
    pub fn drift(&self, x: &[T], theta: &[T]) -> Result<Vec<T>> {
        match &*self.source {
            MeasureSource::Trivial => Ok(self.system.slow_drift_at(x, &[], theta)),
            MeasureSource::Fixed(mu) => averaged_drift(&self.system, mu, x, theta),
            MeasureSource::Lattice { .. } => self.interpolate(x, |mu, p| {
                averaged_drift(&self.system, mu, p, theta)
            }),
        }
    }

    /// Averaged diffusion matrix `Ḡ(x)` (row-major `n x n`).
    pub fn diffusion(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        match &*self.source {
            MeasureSource::Trivial => {
                let Some(g1) = &self.system.slow_diffusion else {
                    return Ok(vec![T::zero(); n * n]);
                };
                let mut g = vec![T::zero(); n * n];
                g1(x, &[], &mut g);
                let gg: Vec<T> = (0..n * n)
                    .map(|k| (0..n).map(|l| g[(k / n) * n + l] * g[(k % n) * n + l]).sum())
                    .collect();
                Ok(psd_project(&gg, n))
            }
            MeasureSource::Fixed(mu) => averaged_diffusion(&self.system, mu, x),
            MeasureSource::Lattice { .. } => {
                let raw = self.interpolate(x, |mu, p| averaged_diffusion(&self.system, mu, p))?;
                Ok(psd_project(&raw, n))
            }
        }
    }

    /// Multilinear interpolation of a lattice-evaluated quantity.
    fn interpolate(
        &self,
        x: &[T],
        eval: impl Fn(&InvariantMeasure<T>, &[T]) -> Result<Vec<T>>,
    ) -> Result<Vec<T>> {
        let h = T::lit(LATTICE_SPACING);
        let base = self.lattice_key(x, |v| v.floor());
        let frac: Vec<T> = x
            .iter()
            .zip(&base)
            .map(|(&v, &k)| v / h - T::lit(k as f64))
            .collect();
        let n = x.len();
        let mut out: Option<Vec<T>> = None;
        for corner in 0..(1usize << n) {
            let mut key = base.clone();
            let mut w = T::one();
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    key[d] += 1;
                    w *= frac[d];
                } else {
                    w *= T::one() - frac[d];
                }
            }
            if w == T::zero() {
                continue;
            }
            let mu = self.lattice_measure(&key)?;
            let point: Vec<T> = key.iter().map(|&k| T::lit(k as f64) * h).collect();
            let v = eval(&mu, &point)?;
            match &mut out {
                None => out = Some(v.into_iter().map(|a| a * w).collect()),
                Some(acc) => acc.iter_mut().zip(v).for_each(|(a, b)| *a += b * w),
            }
        }
        Ok(out.unwrap_or_default())
    }

    /// Integrates the averaged dynamics from `x0`, recording every
    /// `record_every` steps. Without `noise_seed` (or without any noise in
    /// the model) the deterministic averaged ODE is solved with classical RK4;
    /// otherwise Euler-Maruyama with the averaged diffusion and the slow driver.
    pub fn integrate_path(
        &self,
        theta: &[T],
        x0: &[T],
        dt: T,
        steps: usize,
        record_every: usize,
        noise_seed: Option<u64>,
    ) -> Result<Vec<T>> {
        let n = self.dim();
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has {} components, expected {n}", x0.len())));
        }
        if record_every == 0 || !steps.is_multiple_of(record_every) {
            return Err(domain("record_every", "steps must be a multiple of the record stride"));
        }
        let mut x = x0.to_vec();
        let mut out = Vec::with_capacity((steps / record_every + 1) * n);
        out.extend_from_slice(&x);
        let stable = self.slow_noise.filter(|s| s.scale > T::zero());
        let has_diffusion = self.system.slow_diffusion.is_some();
        let noisy = noise_seed.is_some() && (stable.is_some() || has_diffusion);
        let mut noise = ChannelNoise::new(noise_seed.unwrap_or(0), 0);
        let half = T::lit(0.5);
        let sixth = T::lit(1.0 / 6.0);
        for step in 0..steps {
            if noisy {
                let f = self.drift(&x, theta)?;
                let mut dx: Vec<T> = f.iter().map(|&v| v * dt).collect();
                if has_diffusion {
                    let root = psd_sqrt(&self.diffusion(&x)?, n);
                    let z: Vec<T> = (0..n)
                        .map(|_| NoiseSource::<T>::normal(&mut noise, Channel::SlowBrownian) * dt.sqrt())
                        .collect();
                    for i in 0..n {
                        dx[i] += (0..n).map(|k| root[i * n + k] * z[k]).sum::<T>();
                    }
                }
                if let Some(s) = stable {
                    let scale = s.scale * dt.powf(s.alpha.recip());
                    for d in dx.iter_mut() {
                        *d += scale * noise.stable(s.alpha, Channel::SlowStable);
                    }
                }
                x.iter_mut().zip(&dx).for_each(|(a, b)| *a += *b);
            } else {
                let k1 = self.drift(&x, theta)?;
                let p: Vec<T> = x.iter().zip(&k1).map(|(a, k)| *a + *k * dt * half).collect();
                let k2 = self.drift(&p, theta)?;
                let p: Vec<T> = x.iter().zip(&k2).map(|(a, k)| *a + *k * dt * half).collect();
                let k3 = self.drift(&p, theta)?;
                let p: Vec<T> = x.iter().zip(&k3).map(|(a, k)| *a + *k * dt).collect();
                let k4 = self.drift(&p, theta)?;
                for i in 0..n {
                    x[i] += dt * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { path: 0, step });
            }
            if (step + 1) % record_every == 0 {
                out.extend_from_slice(&x);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongErrorRow<T> {
    pub epsilon: T,
    /// Monte Carlo estimate of `E|x(T) − x̄(T)|^p`.
    pub moment: T,
    pub std_error: T,
}

/// Distance at time `horizon` between slow paths of `system` at each epsilon
/// and the averaged path from the same `x0`.
///
/// All epsilons share `dt` and `seed`, so each path sees the same standard
/// noise variates; `dt` must respect the fast-step guard of the smallest
/// epsilon. The fast component starts at zero.
#[allow(clippy::too_many_arguments)]
pub fn strong_error<T: Real>(
    system: &SlowFastSystem<T>,
    theta: &[T],
    x0: &[T],
    epsilons: &[T],
    paths: usize,
    p: T,
    horizon: T,
    dt: T,
    seed: u64,
) -> Result<Vec<StrongErrorRow<T>>> {
    use crate::simulate::{integrate, IntegrateOptions};
    if !(p > T::zero()) {
        return Err(domain("p", "moment exponent must be positive"));
    }
    if paths < 2 {
        return Err(domain("paths", "need at least two paths"));
    }
    let steps = (horizon / dt).round().to_usize().unwrap_or(0);
    if steps == 0 {
        return Err(domain("dt", "step must not exceed the horizon"));
    }
    let y0 = vec![T::zero(); system.fast_dim];
    let reduced = reduce(system)?;
    let avg = reduced.integrate_path(theta, x0, dt, steps, steps, None)?;
    let target = &avg[avg.len() - x0.len()..];
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let sys = system.with_epsilon(eps)?;
        let opts = IntegrateOptions::new(dt, horizon, paths, seed).record_every(steps);
        let ens = integrate(&sys, theta, x0, &y0, &opts)?;
        let last = ens.slow.dim().1 - 1;
        let diffs: Vec<T> = (0..paths)
            .map(|j| {
                let d2: T = (0..x0.len())
                    .map(|k| {
                        let d = ens.slow[[j, last, k]] - target[k];
                        d * d
                    })
                    .sum();
                d2.sqrt().powf(p)
            })
            .collect();
        let count = T::from_usize_lossy(paths);
        let moment = diffs.iter().copied().sum::<T>() / count;
        let var = diffs.iter().map(|d| (*d - moment) * (*d - moment)).sum::<T>() / T::from_usize_lossy(paths - 1);
        rows.push(StrongErrorRow {
            epsilon: eps,
            moment,
            std_error: (var / count).sqrt(),
        });
    }
    Ok(rows)
}
