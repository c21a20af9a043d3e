//! Drift parameter estimation by matching observed slow paths with the
//! averaged model, minimized by a (stochastic) Nelder-Mead search.

use log::{info, warn};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::averaging::{reduce, ReducedSystem};
use crate::error::{domain, Error, Result};
use crate::linalg::det;
use crate::rng::{self, Channel};
use crate::scalar::Real;
use crate::simulate::{example1, integrate, IntegrateOptions, PathEnsemble};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MAX_DEGENERATE_RESTARTS: usize = 3;
/// Edge of the simplex rebuilt after a degeneracy, as a fraction of the box width.
const RESTART_EDGE: f64 = 0.01;

/// Closed box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(domain("theta_domain", "bounds must be nonempty and of equal length"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(domain("theta_domain", "each interval needs finite lower < upper"));
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: T, hi: T) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> T {
        self.upper[i] - self.lower[i]
    }

    pub fn project(&self, x: &mut [T]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.max(self.lower[i]).min(self.upper[i]);
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    /// Whether `x` lies on a face of the box, up to `1e-9` of its width.
    pub fn on_boundary(&self, x: &[T]) -> bool {
        x.iter().enumerate().any(|(i, v)| {
            let tol = self.width(i) * T::lit(1e-9);
            (*v - self.lower[i]).abs() <= tol || (self.upper[i] - *v).abs() <= tol
        })
    }
}

/// Function minimized by [`nelder_mead`]. `replicate` selects an independent
/// noise realization; `None` asks for the deterministic value.
pub trait Objective<T>: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, theta: &[T], replicate: Option<u64>) -> Result<T>;
}

/// Objective from a closure `f(theta, replicate)`.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<T: Real, F: Fn(&[T], Option<u64>) -> T + Sync> Objective<T> for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &[T], replicate: Option<u64>) -> Result<T> {
        Ok((self.f)(theta, replicate))
    }
}

/// `Σ_j Σ_i |x^{ij} − x̄^i|^p · dt` for observations `M x (N+1) x n` and a
/// model path flattened as `(N+1) x n`.
pub fn path_mismatch<T: Real>(observations: &Array3<T>, model: &[T], p: T, dt: T) -> T {
    let (_, len, n) = observations.dim();
    debug_assert_eq!(model.len(), len * n);
    let mut total = T::zero();
    for path in observations.outer_iter() {
        for (i, row) in path.outer_iter().enumerate() {
            let gap = if n == 1 {
                (row[0] - model[i]).abs()
            } else {
                row.iter()
                    .zip(&model[i * n..(i + 1) * n])
                    .map(|(a, b)| (*a - *b) * (*a - *b))
                    .sum::<T>()
                    .sqrt()
            };
            total += gap.powf(p);
        }
    }
    total * dt
}

/// Observed slow paths, the averaged model with free parameter, and the
/// search box.
#[derive(Debug, Clone)]
pub struct EstimationProblem<T: Real> {
    /// `M x (N+1) x n`, all paths started from `x0`.
    pub observations: Array3<T>,
    pub obs_dt: T,
    pub x0: Vec<T>,
    pub reduced: ReducedSystem<T>,
    pub theta_domain: Bounds<T>,
    pub p: T,
    /// Integration step of the averaged model; divides `obs_dt`.
    pub dt: T,
    pub horizon: T,
    /// Base seed for noisy replicates of the averaged model.
    pub seed: u64,
}

impl<T: Real> EstimationProblem<T> {
    pub fn new(
        ensemble: &PathEnsemble<T>,
        reduced: ReducedSystem<T>,
        theta_domain: Bounds<T>,
        p: T,
    ) -> Result<Self> {
        let (paths, len, n) = ensemble.slow.dim();
        if paths == 0 || len < 2 {
            return Err(domain("observations", "need at least one path with two record times"));
        }
        if n != reduced.dim() {
            return Err(Error::Dimension(format!(
                "observations have {n} components, reduced model {}",
                reduced.dim()
            )));
        }
        if theta_domain.dim() != reduced.system().theta_dim {
            return Err(Error::Dimension(format!(
                "theta domain has {} components, model expects {}",
                theta_domain.dim(),
                reduced.system().theta_dim
            )));
        }
        let sys = reduced.system();
        let upper = sys
            .slow_noise
            .or(sys.fast_noise)
            .map_or(T::infinity(), |s| s.alpha);
        if !(p > T::one() && p < upper) {
            return Err(domain("p", format!("mismatch exponent {p} must lie in (1, {upper})")));
        }
        let x0: Vec<T> = (0..n).map(|k| ensemble.slow[[0, 0, k]]).collect();
        for j in 1..paths {
            if (0..n).any(|k| ensemble.slow[[j, 0, k]] != x0[k]) {
                return Err(domain("observations", "all paths must share the initial condition"));
            }
        }
        let obs_dt = ensemble.record_dt();
        Ok(Self {
            observations: ensemble.slow.clone(),
            obs_dt,
            x0,
            reduced,
            theta_domain,
            p,
            dt: obs_dt,
            horizon: *ensemble.times.last().expect("nonempty times"),
            seed: ensemble.seed ^ 0xA5A5,
        })
    }

    /// Integrate the averaged model with `obs_dt / substeps`.
    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(domain("dt", "need at least one substep per observation"));
        }
        self.dt = self.obs_dt / T::from_usize_lossy(substeps);
        Ok(self)
    }

    fn substeps(&self) -> usize {
        (self.obs_dt / self.dt).round().to_usize().unwrap_or(1).max(1)
    }

    /// Averaged path from `x0`, flattened `(N+1) x n`.
    pub fn model_path(&self, theta: &[T], replicate: Option<u64>) -> Result<Vec<T>> {
        let sub = self.substeps();
        let records = self.observations.dim().1 - 1;
        let noise = replicate.map(|r| rng::mix(self.seed, r));
        self.reduced
            .integrate_path(theta, &self.x0, self.dt, records * sub, sub, noise)
    }
}

impl<T: Real> Objective<T> for EstimationProblem<T> {
    fn dim(&self) -> usize {
        self.theta_domain.dim()
    }

    fn eval(&self, theta: &[T], replicate: Option<u64>) -> Result<T> {
        if !self.theta_domain.contains(theta) {
            return Err(domain("theta", format!("{theta:?} lies outside the parameter domain")));
        }
        let path = self.model_path(theta, replicate)?;
        Ok(path_mismatch(&self.observations, &path, self.p, self.obs_dt))
    }
}

/// Deterministic mismatch `F(theta)`.
pub fn objective<T: Real>(problem: &EstimationProblem<T>, theta: &[T]) -> Result<T> {
    problem.eval(theta, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Deterministic,
    /// Averages fresh replicates, `min(5 * iteration, 50)` per evaluation,
    /// and keeps refining the incumbent best vertex.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Maximum number of iterations.
    pub budget: usize,
    /// Stop once the simplex diameter falls below this.
    pub tolerance: f64,
    pub mode: SearchMode,
    pub seed: u64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            budget: 50,
            tolerance: 1e-4,
            mode: SearchMode::Deterministic,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState<T> {
    /// Sorted by ascending value.
    pub vertices: Vec<Vec<T>>,
    pub values: Vec<T>,
    pub iteration: usize,
    /// `(iteration, best value)`, starting at iteration 0.
    pub best_history: Vec<(usize, T)>,
    /// Best vertex after each iteration.
    pub theta_history: Vec<Vec<T>>,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
}

impl<T: Real> SimplexState<T> {
    pub fn diameter(&self) -> T {
        let mut d = T::zero();
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                let s: T = a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
                d = d.max(s.sqrt());
            }
        }
        d
    }

    pub fn best(&self) -> (&[T], T) {
        (&self.vertices[0], self.values[0])
    }

    /// First iteration after which the best value stays within `rel` of its final value.
    pub fn stabilized_at(&self, rel: T) -> usize {
        let last = self.best_history.last().map_or(T::zero(), |h| h.1);
        let tol = rel * last.abs().max(T::min_positive_value());
        self.best_history
            .iter()
            .find(|(_, v)| (*v - last).abs() <= tol)
            .map_or(0, |(i, _)| *i)
    }

    fn sort(&mut self, extra: &mut [Estimate<T>]) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| {
            self.values[a]
                .partial_cmp(&self.values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.vertices = order.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
        let copy: Vec<Estimate<T>> = order.iter().map(|&i| extra[i]).collect();
        extra.copy_from_slice(&copy);
    }

    /// Volume of the simplex relative to a regular one of the same diameter.
    fn degenerate(&self) -> bool {
        let k = self.vertices.len() - 1;
        if k < 2 {
            return false;
        }
        let base = &self.vertices[0];
        let mut m = vec![T::zero(); k * k];
        for (r, v) in self.vertices[1..].iter().enumerate() {
            for c in 0..k {
                m[r * k + c] = v[c] - base[c];
            }
        }
        let scale = self.diameter().powi(k as i32);
        scale > T::zero() && det(&m, k).abs() / scale < T::lit(1e-10)
    }
}

/// Running mean of replicate evaluations at one vertex.
#[derive(Debug, Clone, Copy)]
struct Estimate<T> {
    sum: T,
    count: usize,
}

struct Evaluator<'o, T, O> {
    objective: &'o O,
    mode: SearchMode,
    seed: u64,
    next_replicate: u64,
    evaluations: usize,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real, O: Objective<T>> Evaluator<'_, T, O> {
    fn replicates(iteration: usize) -> usize {
        (5 * iteration).clamp(1, 50)
    }

    /// Evaluates each point (in parallel) with the replicate count for `iteration`.
    fn eval(&mut self, points: &[Vec<T>], iteration: usize) -> Result<Vec<Estimate<T>>> {
        match self.mode {
            SearchMode::Deterministic => {
                self.evaluations += points.len();
                let vals: Vec<T> = points
                    .par_iter()
                    .map(|p| self.objective.eval(p, None))
                    .collect::<Result<_>>()?;
                Ok(vals.into_iter().map(|v| Estimate { sum: v, count: 1 }).collect())
            }
            SearchMode::Stochastic => {
                let reps = Self::replicates(iteration);
                let first = self.next_replicate;
                self.next_replicate += (reps * points.len()) as u64;
                self.evaluations += reps * points.len();
                let seed = self.seed;
                let objective = self.objective;
                points
                    .par_iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let mut sum = T::zero();
                        for r in 0..reps {
                            let id = first + (k * reps + r) as u64;
                            sum += objective.eval(p, Some(rng::mix(seed, id)))?;
                        }
                        Ok(Estimate { sum, count: reps })
                    })
                    .collect()
            }
        }
    }
}

fn mean<T: Real>(e: &Estimate<T>) -> T {
    e.sum / T::from_usize_lossy(e.count)
}

fn combine<T: Real>(c: &[T], a: &[T], coef: f64) -> Vec<T> {
    // c + coef * (a - c)
    c.iter().zip(a).map(|(c, a)| *c + T::lit(coef) * (*a - *c)).collect()
}

/// Simplex with one vertex at `start` and edges `edge * width` along each axis,
/// flipped inward where they would leave the box.
pub fn axis_simplex<T: Real>(start: &[T], bounds: &Bounds<T>, edge: T) -> Vec<Vec<T>> {
    let mut v0 = start.to_vec();
    bounds.project(&mut v0);
    let mut out = vec![v0.clone()];
    for i in 0..v0.len() {
        let mut v = v0.clone();
        let step = edge * bounds.width(i);
        v[i] = if v0[i] + step <= bounds.upper[i] { v0[i] + step } else { v0[i] - step };
        bounds.project(&mut v);
        out.push(v);
    }
    out
}

/// Nelder-Mead with reflection, expansion, contraction and shrink
/// coefficients (1, 2, 0.5, 0.5). Trial points are projected into the box.
pub fn nelder_mead<T: Real, O: Objective<T>>(
    objective: &O,
    bounds: &Bounds<T>,
    init_simplex: Vec<Vec<T>>,
    opts: &NelderMeadOptions,
) -> Result<(Vec<T>, SimplexState<T>)> {
    let k = bounds.dim();
    if objective.dim() != k {
        return Err(Error::Dimension(format!(
            "objective has {} parameters, bounds {k}",
            objective.dim()
        )));
    }
    if opts.budget == 0 {
        return Err(domain("budget", "need at least one iteration"));
    }
    if init_simplex.len() != k + 1 || init_simplex.iter().any(|v| v.len() != k) {
        return Err(Error::Simplex(format!("need {} vertices of dimension {k}", k + 1)));
    }
    let mut vertices = init_simplex;
    for v in vertices.iter_mut() {
        bounds.project(v);
    }
    let mut ev = Evaluator {
        objective,
        mode: opts.mode,
        seed: opts.seed,
        next_replicate: 1,
        evaluations: 0,
        _t: std::marker::PhantomData,
    };
    let mut est = ev.eval(&vertices, 0)?;
    let mut state = SimplexState {
        values: est.iter().map(mean).collect(),
        vertices,
        iteration: 0,
        best_history: Vec::new(),
        theta_history: Vec::new(),
        evaluations: 0,
        restarts: 0,
        converged: false,
    };
    if state.diameter() == T::zero() || state.degenerate() {
        return Err(Error::Simplex("initial simplex is degenerate".into()));
    }
    state.sort(&mut est);
    state.best_history.push((0, state.values[0]));
    state.theta_history.push(state.vertices[0].clone());
    let tol = T::lit(opts.tolerance);

    while state.iteration < opts.budget {
        if state.diameter() < tol {
            state.converged = true;
            break;
        }
        state.iteration += 1;
        let it = state.iteration;

        if opts.mode == SearchMode::Stochastic {
            // Refresh the incumbent with new replicates.
            let extra = ev.eval(&state.vertices[..1], it)?[0];
            est[0].sum += extra.sum;
            est[0].count += extra.count;
            state.values[0] = mean(&est[0]);
            state.sort(&mut est);
        }

        let centroid: Vec<T> = (0..k)
            .map(|c| state.vertices[..k].iter().map(|v| v[c]).sum::<T>() / T::from_usize_lossy(k))
            .collect();
        let worst = state.vertices[k].clone();
        let project = |mut v: Vec<T>| {
            bounds.project(&mut v);
            v
        };
        let xr = project(combine(&centroid, &worst, -REFLECT));
        let er = ev.eval(std::slice::from_ref(&xr), it)?[0];
        let fr = mean(&er);
        let (f0, f_second, f_worst) = (state.values[0], state.values[k - 1], state.values[k]);

        let mut accepted: Option<(Vec<T>, Estimate<T>)> = None;
        if fr < f0 {
            let xe = project(combine(&centroid, &xr, EXPAND));
            let ee = ev.eval(std::slice::from_ref(&xe), it)?[0];
            accepted = Some(if mean(&ee) < fr { (xe, ee) } else { (xr, er) });
        } else if fr < f_second {
            accepted = Some((xr, er));
        } else if fr < f_worst {
            let xc = project(combine(&centroid, &xr, CONTRACT));
            let ec = ev.eval(std::slice::from_ref(&xc), it)?[0];
            if mean(&ec) <= fr {
                accepted = Some((xc, ec));
            }
        } else {
            let xc = project(combine(&centroid, &worst, CONTRACT));
            let ec = ev.eval(std::slice::from_ref(&xc), it)?[0];
            if mean(&ec) < f_worst {
                accepted = Some((xc, ec));
            }
        }

        match accepted {
            Some((x, e)) => {
                state.vertices[k] = x;
                est[k] = e;
            }
            None => {
                let best = state.vertices[0].clone();
                let shrunk: Vec<Vec<T>> = state.vertices[1..]
                    .iter()
                    .map(|v| project(combine(&best, v, SHRINK)))
                    .collect();
                let vals = ev.eval(&shrunk, it)?;
                for (i, (v, e)) in shrunk.into_iter().zip(vals).enumerate() {
                    state.vertices[i + 1] = v;
                    est[i + 1] = e;
                }
            }
        }
        state.values = est.iter().map(mean).collect();
        state.sort(&mut est);

        if state.diameter() >= tol && state.degenerate() {
            if state.restarts >= MAX_DEGENERATE_RESTARTS {
                warn!("simplex degenerate after {} restarts; stopping", state.restarts);
                break;
            }
            state.restarts += 1;
            let best = state.vertices[0].clone();
            let fresh = axis_simplex(&best, bounds, T::lit(RESTART_EDGE));
            let vals = ev.eval(&fresh[1..], it)?;
            state.vertices = fresh;
            est = std::iter::once(est[0]).chain(vals).collect();
            state.values = est.iter().map(mean).collect();
            state.sort(&mut est);
        }
        state.best_history.push((it, state.values[0]));
        state.theta_history.push(state.vertices[0].clone());
    }
    if !state.converged && state.diameter() < tol {
        state.converged = true;
    }
    state.evaluations = ev.evaluations;
    let mut theta = state.vertices[0].clone();
    bounds.project(&mut theta);
    Ok((theta, state))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartOptions {
    pub restarts: usize,
    /// Candidates screened per restart; the best becomes the start.
    pub screen: usize,
    /// Initial simplex edge as a fraction of the box width.
    pub edge_fraction: f64,
    pub search: NelderMeadOptions,
}

impl Default for RestartOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            screen: 20,
            edge_fraction: 0.1,
            search: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartRun<T> {
    pub start: Vec<T>,
    pub theta: Vec<T>,
    pub value: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport<T> {
    pub theta_hat: Vec<T>,
    pub value: T,
    /// State of the winning run.
    pub state: SimplexState<T>,
    pub runs: Vec<RestartRun<T>>,
}

/// Runs [`nelder_mead`] from `restarts` starting points and keeps the best.
/// The box is cut into `restarts` equal slices along its diagonal; each start
/// is the best of `screen` stratified candidates from its slice.
pub fn minimize<T: Real, O: Objective<T>>(
    objective: &O,
    bounds: &Bounds<T>,
    opts: &RestartOptions,
) -> Result<SearchReport<T>> {
    if opts.restarts == 0 {
        return Err(domain("restarts", "need at least one start"));
    }
    if opts.screen == 0 {
        return Err(domain("screen", "need at least one candidate per restart"));
    }
    let mut rng = rng::stream(opts.search.seed, 0, Channel::Auxiliary);
    let (r, q) = (opts.restarts, opts.screen);
    // Candidate c of restart s has coordinate i in sub-slot perm_i(c) of slice s.
    let candidates: Vec<Vec<T>> = (0..r)
        .flat_map(|s| {
            let perms: Vec<Vec<usize>> = (0..bounds.dim())
                .map(|_| {
                    let mut p: Vec<usize> = (0..q).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            let mut out = Vec::with_capacity(q);
            for c in 0..q {
                out.push(
                    (0..bounds.dim())
                        .map(|i| {
                            let u: f64 = rng.random();
                            let frac = (s as f64 + (perms[i][c] as f64 + u) / q as f64) / r as f64;
                            bounds.lower[i] + bounds.width(i) * T::lit(frac)
                        })
                        .collect::<Vec<T>>(),
                );
            }
            out
        })
        .collect();
    let scores: Vec<T> = candidates
        .par_iter()
        .map(|c| objective.eval(c, Some(rng::mix(opts.search.seed, u64::MAX))))
        .collect::<Result<_>>()?;
    let starts: Vec<Vec<T>> = (0..r)
        .map(|s| {
            let best = (s * q..(s + 1) * q)
                .min_by(|&a, &b| {
                    scores[a]
                        .partial_cmp(&scores[b])
                        .unwrap_or(std::cmp::Ordering::Greater)
                })
                .expect("nonempty slice");
            candidates[best].clone()
        })
        .collect();
    let results: Vec<(Vec<T>, SimplexState<T>)> = starts
        .par_iter()
        .enumerate()
        .map(|(s, start)| {
            let simplex = axis_simplex(start, bounds, T::lit(opts.edge_fraction));
            let search = NelderMeadOptions {
                seed: rng::mix(opts.search.seed, s as u64 + 1),
                ..opts.search
            };
            nelder_mead(objective, bounds, simplex, &search)
        })
        .collect::<Result<_>>()?;
    let runs: Vec<RestartRun<T>> = starts
        .iter()
        .zip(&results)
        .map(|(start, (theta, st))| RestartRun {
            start: start.clone(),
            theta: theta.clone(),
            value: st.values[0],
            iterations: st.iteration,
        })
        .collect();
    let (theta_hat, state) = results
        .into_iter()
        .min_by(|a, b| a.1.values[0].partial_cmp(&b.1.values[0]).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one run");
    if bounds.on_boundary(&theta_hat) {
        warn!("estimate {theta_hat:?} lies on the boundary of the parameter domain");
    }
    Ok(SearchReport {
        value: state.values[0],
        theta_hat,
        state,
        runs,
    })
}

/// Minimizes the mismatch of an estimation problem over its domain.
pub fn estimate<T: Real>(problem: &EstimationProblem<T>, opts: &RestartOptions) -> Result<SearchReport<T>> {
    minimize(problem, &problem.theta_domain, opts)
}

/// Controls for [`recovery_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOptions<T> {
    pub horizon: T,
    /// Number of observation intervals `N`.
    pub observations: usize,
    /// Upper bound on the simulation step (further limited to `epsilon / 10`).
    pub sim_dt: T,
    /// Common initial slow state.
    pub x0: T,
    pub theta_domain: (T, T),
    /// Substeps of the averaged model per observation interval.
    pub model_substeps: usize,
    pub search: RestartOptions,
}

impl<T: Real> Default for RecoveryOptions<T> {
    fn default() -> Self {
        Self {
            horizon: T::one(),
            observations: 100,
            sim_dt: T::lit(0.001),
            x0: T::one(),
            theta_domain: (T::lit(0.1), T::lit(100.0)),
            model_substeps: 1,
            search: RestartOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport<T> {
    pub epsilon: T,
    pub theta0: T,
    pub theta_hat: T,
    pub abs_error: T,
    /// Iterations of the winning run.
    pub iterations: usize,
    /// Iteration after which the best value no longer changed.
    pub stabilized_at: usize,
    pub value: T,
    /// Best value per iteration of the winning run.
    pub f_trace: Vec<T>,
    /// Best parameter per iteration of the winning run.
    pub theta_trace: Vec<T>,
}

/// Simulates the first catalog example at `theta0`, builds the averaged model,
/// and estimates `theta` from the `m` simulated slow paths.
pub fn recovery_experiment<T: Real>(
    theta0: T,
    epsilon: T,
    alpha: T,
    m: usize,
    p: T,
    seed: u64,
    opts: &RecoveryOptions<T>,
) -> Result<RecoveryReport<T>> {
    let (lo, hi) = opts.theta_domain;
    let bounds = Bounds::interval(lo, hi)?;
    if !bounds.contains(&[theta0]) {
        return Err(domain("theta0", "true parameter must lie in the domain"));
    }
    if opts.observations == 0 {
        return Err(domain("observations", "need at least one observation interval"));
    }
    let system = example1(alpha, epsilon)?;
    let obs_dt = opts.horizon / T::from_usize_lossy(opts.observations);
    let limit = opts.sim_dt.min(epsilon / T::lit(10.0));
    let every = ((obs_dt / limit).as_f64() - 1e-9).ceil().max(1.0) as usize;
    let sim_dt = obs_dt / T::from_usize_lossy(every);
    let int = IntegrateOptions::new(sim_dt, opts.horizon, m, seed).record_every(every);
    let ensemble = integrate(&system, &[theta0], &[opts.x0], &[T::zero()], &int)?;
    let reduced = reduce(&system)?;
    let problem = EstimationProblem::new(&ensemble, reduced, bounds, p)?.with_substeps(opts.model_substeps)?;
    let report = estimate(&problem, &opts.search)?;
    let theta_hat = report.theta_hat[0];
    info!(
        "epsilon {epsilon}: theta_hat {theta_hat} (F = {}) after {} iterations",
        report.value, report.state.iteration
    );
    Ok(RecoveryReport {
        epsilon,
        theta0,
        theta_hat,
        abs_error: (theta_hat - theta0).abs(),
        iterations: report.state.iteration,
        stabilized_at: report.state.stabilized_at(T::lit(1e-9)),
        value: report.value,
        f_trace: report.state.best_history.iter().map(|h| h.1).collect(),
        theta_trace: report.state.theta_history.iter().map(|t| t[0]).collect(),
    })
}

/// [`recovery_experiment`] for each epsilon with a shared seed.
pub fn epsilon_sweep<T: Real>(
    theta0: T,
    epsilons: &[T],
    alpha: T,
    m: usize,
    p: T,
    seed: u64,
    opts: &RecoveryOptions<T>,
) -> Result<Vec<RecoveryReport<T>>> {
    epsilons
        .iter()
        .map(|&eps| recovery_experiment(theta0, eps, alpha, m, p, seed, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> FnObjective<impl Fn(&[f64], Option<u64>) -> f64 + Sync> {
        FnObjective {
            dim: 1,
            f: |t: &[f64], _: Option<u64>| (t[0] - 3.0).powi(2),
        }
    }

    #[test]
    fn hand_computed_mismatch() {
        let obs = Array3::from_shape_vec((1, 2, 1), vec![1.0, 2.0]).unwrap();
        assert_eq!(path_mismatch(&obs, &[1.0, 1.0], 2.0, 1.0), 1.0);
    }

    #[test]
    fn quadratic_minimum() {
        let b = Bounds::interval(0.0, 10.0).unwrap();
        let opts = NelderMeadOptions {
            budget: 200,
            ..Default::default()
        };
        let (t, st) = nelder_mead(&quadratic(), &b, vec![vec![7.0], vec![8.0]], &opts).unwrap();
        assert!((t[0] - 3.0).abs() < 1e-4, "{t:?}");
        assert!(st.converged);
    }

    #[test]
    fn best_value_never_increases() {
        let b = Bounds::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let rosen = FnObjective {
            dim: 2,
            f: |t: &[f64], _: Option<u64>| (1.0 - t[0]).powi(2) + 100.0 * (t[1] - t[0] * t[0]).powi(2),
        };
        let opts = NelderMeadOptions {
            budget: 500,
            ..Default::default()
        };
        let (_, st) = nelder_mead(&rosen, &b, axis_simplex(&[-1.5, 1.5], &b, 0.1), &opts).unwrap();
        for w in st.best_history.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn projection_keeps_iterates_inside() {
        // Minimum outside the box: the search must stop on the face.
        let b = Bounds::interval(0.0, 2.0).unwrap();
        let f = FnObjective {
            dim: 1,
            f: |t: &[f64], _: Option<u64>| (t[0] - 5.0).powi(2),
        };
        let opts = NelderMeadOptions {
            budget: 100,
            ..Default::default()
        };
        let (t, _) = nelder_mead(&f, &b, vec![vec![0.5], vec![1.0]], &opts).unwrap();
        assert!((t[0] - 2.0).abs() < 1e-4);
        assert!(b.on_boundary(&t));
    }

    #[test]
    fn invalid_inputs() {
        let b = Bounds::interval(0.0, 10.0).unwrap();
        let opts = NelderMeadOptions::default();
        assert!(matches!(
            nelder_mead(&quadratic(), &b, vec![vec![1.0], vec![1.0]], &opts),
            Err(Error::Simplex(_))
        ));
        assert!(nelder_mead(&quadratic(), &b, vec![vec![1.0]], &opts).is_err());
        let zero = NelderMeadOptions { budget: 0, ..opts };
        assert!(nelder_mead(&quadratic(), &b, vec![vec![1.0], vec![2.0]], &zero).is_err());
        assert!(Bounds::<f64>::interval(1.0, 1.0).is_err());
    }

    #[test]
    fn collinear_simplex_is_rejected() {
        let b = Bounds::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let f = FnObjective {
            dim: 2,
            f: |t: &[f64], _: Option<u64>| t[0] * t[0] + t[1] * t[1],
        };
        let line = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]];
        assert!(nelder_mead(&f, &b, line, &NelderMeadOptions::default()).is_err());
    }

    #[test]
    fn stochastic_mode_averages_noise() {
        let b = Bounds::interval(0.0, 10.0).unwrap();
        let noisy = FnObjective {
            dim: 1,
            f: |t: &[f64], r: Option<u64>| {
                let mut g = rng::stream(r.unwrap_or(0), 0, Channel::Auxiliary);
                (t[0] - 3.0).powi(2) + 0.05 * rng::normal::<f64, _>(&mut g)
            },
        };
        let opts = NelderMeadOptions {
            budget: 60,
            mode: SearchMode::Stochastic,
            seed: 5,
            ..Default::default()
        };
        let (t, st) = nelder_mead(&noisy, &b, vec![vec![8.0], vec![9.0]], &opts).unwrap();
        assert!((t[0] - 3.0).abs() < 0.3, "{t:?}");
        assert!(st.evaluations > st.iteration);
    }

    #[test]
    fn restarts_find_global_minimum_of_multimodal_function() {
        let b = Bounds::interval(0.0, 10.0).unwrap();
        let f = FnObjective {
            dim: 1,
            f: |t: &[f64], _: Option<u64>| (3.0 * t[0]).sin() + 0.1 * (t[0] - 7.0).powi(2),
        };
        let opts = RestartOptions {
            search: NelderMeadOptions {
                budget: 100,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = minimize(&f, &b, &opts).unwrap();
        let grid_min = (0..=10_000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| (f.f)(&[*a], None).partial_cmp(&(f.f)(&[*b], None)).unwrap())
            .unwrap();
        assert!((r.theta_hat[0] - grid_min).abs() < 2e-3, "{:?} vs {grid_min}", r.theta_hat);
        assert_eq!(r.runs.len(), 5);
    }

    #[test]
    fn restart_starts_are_stratified() {
        let b = Bounds::interval(0.0, 10.0).unwrap();
        let r = minimize(&quadratic(), &b, &RestartOptions::default()).unwrap();
        for (s, run) in r.runs.iter().enumerate() {
            assert!(run.start[0] >= 2.0 * s as f64 && run.start[0] <= 2.0 * (s + 1) as f64);
        }
    }
}
