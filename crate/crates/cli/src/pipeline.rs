//! One pipeline per command; each writes its artifacts under
//! `<output_dir>/<command>-<seed>/`.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use slowfast::averaging::{reduce, ReducedSystem};
use slowfast::estimate::{estimate, Bounds, EstimationProblem, NelderMeadOptions, RestartOptions, SearchMode};
use slowfast::grid::{Grid1, GridDensity};
use slowfast::mpp::{compare_mpp_system, MppOptions};
use slowfast::simulate::{catalog, integrate, IntegrateOptions, ModelParams, PathEnsemble, SlowFastSystem};
use slowfast::zakai::{
    compare_filters, loglog_slope, run_filter, CompareOptions, FilterInit, FilterModel, FilterOptions, Functional,
};

use crate::config::{Command, ExperimentConfig};
use crate::plot::{emit_plot, PlotSpec};
use crate::RunError;

/// Paths drawn in `paths.svg`.
const PLOTTED_PATHS: usize = 5;
/// Spacing of the grid on which particle marginals are histogrammed.
const MARGINAL_SPACING: f64 = 0.05;
/// Simulation steps per fast relaxation time in filter comparisons.
const FAST_RESOLUTION: usize = 50;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    /// One-line human-readable summary.
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn create(cfg: &ExperimentConfig, force: bool) -> Result<Self, RunError> {
        let dir = cfg.output_dir.join(format!("{}-{}", cfg.command.name(), cfg.seed));
        if dir.exists() && !force {
            return Err(RunError::Exists(dir));
        }
        fs::create_dir_all(&dir).map_err(|source| RunError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&mut self, name: &str, headers: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<PathBuf, RunError> {
        let path = self.path(name);
        let io = |e: csv::Error| RunError::Io {
            path: path.clone(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(headers).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), RunError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        fs::write(&path, text).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn plot(&mut self, csv: &Path, name: &str, spec: PlotSpec) -> Result<(), RunError> {
        let svg = self.path(name);
        emit_plot(csv, &svg, &spec)?;
        self.files.push(svg);
        Ok(())
    }
}

/// Validates `cfg`, runs its pipeline and writes the artifacts.
pub fn run(cfg: &ExperimentConfig, force: bool) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let system = catalog(
        &cfg.model,
        &ModelParams {
            alpha: cfg.alpha,
            epsilon: cfg.epsilon,
        },
    )?;
    let mut out = Out::create(cfg, force)?;
    out.json("config.json", cfg)?;
    info!("running {} on {} into {}", cfg.command.name(), cfg.model, out.dir.display());
    let summary = match cfg.command {
        Command::Simulate => simulate(cfg, &system, &mut out)?,
        Command::Average => average(cfg, &system, &mut out)?,
        Command::Filter => filter(cfg, &system, &mut out)?,
        Command::CompareFilters => compare(cfg, &system, &mut out)?,
        Command::Estimate => estimation(cfg, &system, &mut out)?,
        Command::Mpp => mpp(cfg, &system, &mut out)?,
    };
    Ok(Outcome {
        dir: out.dir,
        summary,
        files: out.files,
    })
}

/// Simulation step dividing the observation interval, at most `dt` and `epsilon / 10`.
fn steps(cfg: &ExperimentConfig, epsilon: f64) -> (f64, usize) {
    let obs_dt = cfg.horizon / cfg.observations as f64;
    let limit = cfg.dt.min(epsilon / 10.0);
    let every = ((obs_dt / limit) - 1e-9).ceil().max(1.0) as usize;
    (obs_dt / every as f64, every)
}

fn ensemble(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, paths: usize) -> Result<PathEnsemble<f64>, RunError> {
    let (sim_dt, every) = steps(cfg, system.epsilon);
    let theta = cfg.theta(system.theta_dim);
    let opts = IntegrateOptions::new(sim_dt, cfg.horizon, paths, cfg.seed).record_every(every);
    let y0 = vec![0.0; system.fast_dim];
    Ok(integrate(system, &theta, &[cfg.x0], &y0, &opts)?)
}

fn averaged_path(cfg: &ExperimentConfig, reduced: &ReducedSystem<f64>, theta: &[f64]) -> Result<Vec<f64>, RunError> {
    let (sim_dt, every) = steps(cfg, reduced.system().epsilon);
    Ok(reduced.integrate_path(theta, &[cfg.x0], sim_dt, cfg.observations * every, every, None)?)
}

fn paths_table(ens: &PathEnsemble<f64>, extra: &[(&str, &[f64])], limit: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let m = ens.paths().min(limit);
    let mut headers = vec!["t".to_string()];
    headers.extend((0..m).map(|j| format!("x_{j}")));
    headers.extend(extra.iter().map(|(n, _)| n.to_string()));
    let rows = ens
        .times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut row = vec![*t];
            row.extend((0..m).map(|j| ens.slow[[j, i, 0]]));
            row.extend(extra.iter().map(|(_, v)| v[i]));
            row
        })
        .collect();
    (headers, rows)
}

fn overlay_spec(title: &str, headers: &[String]) -> PlotSpec {
    PlotSpec {
        title: title.into(),
        x: "t".into(),
        ys: headers
            .iter()
            .skip(1)
            .filter(|h| !h.starts_with("x_") || h[2..].parse::<usize>().is_ok_and(|j| j < PLOTTED_PATHS))
            .cloned()
            .collect(),
        ..Default::default()
    }
}

fn simulate(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, out: &mut Out) -> Result<String, RunError> {
    let ens = ensemble(cfg, system, cfg.paths)?;
    let reduced = reduce(system)?;
    let xbar = averaged_path(cfg, &reduced, &cfg.theta(system.theta_dim))?;
    let (headers, rows) = paths_table(&ens, &[("x_bar", &xbar)], usize::MAX);
    let csv = out.csv("paths.csv", &headers, rows.into_iter())?;
    out.plot(&csv, "paths.svg", overlay_spec("slow paths and averaged path", &headers))?;
    let last = ens.times.len() - 1;
    let mean = (0..ens.paths()).map(|j| ens.slow[[j, last, 0]]).sum::<f64>() / ens.paths() as f64;
    Ok(format!(
        "simulate: {} paths of {} to T = {}; mean x(T) = {mean:.6}, x_bar(T) = {:.6}",
        ens.paths(),
        cfg.model,
        ens.times[last],
        xbar[last]
    ))
}

fn average(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, out: &mut Out) -> Result<String, RunError> {
    let reduced = reduce(system)?;
    let theta = cfg.theta(system.theta_dim);
    let grid = Grid1::new(cfg.grid.xmin, cfg.grid.xmax, cfg.grid.nx)?;
    let rows: Vec<Vec<f64>> = grid
        .points()
        .into_iter()
        .map(|x| Ok(vec![x, reduced.drift(&[x], &theta)?[0]]))
        .collect::<Result<_, slowfast::Error>>()?;
    let csv = out.csv("drift.csv", &["x".into(), "f_bar".into()], rows.into_iter())?;
    out.plot(
        &csv,
        "drift.svg",
        PlotSpec {
            title: "averaged drift".into(),
            x: "x".into(),
            ..Default::default()
        },
    )?;
    let ens = ensemble(cfg, system, 1)?;
    let xbar = averaged_path(cfg, &reduced, &theta)?;
    let (headers, rows) = paths_table(&ens, &[("x_bar", &xbar)], 1);
    let csv = out.csv("paths.csv", &headers, rows.into_iter())?;
    out.plot(&csv, "paths.svg", overlay_spec("slow path and averaged path", &headers))?;
    Ok(format!(
        "average: f_bar({}) = {:.10}",
        cfg.x0,
        reduced.drift(&[cfg.x0], &theta)?[0]
    ))
}

fn filter(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, out: &mut Out) -> Result<String, RunError> {
    let ens = ensemble(cfg, system, 1)?;
    let theta = cfg.theta(system.theta_dim);
    let reduced = reduce(system)?.with_theta(theta)?;
    let grid = Grid1::new(cfg.grid.xmin, cfg.grid.xmax, cfg.grid.nx)?;
    let obs = ens.observations(0).expect("validated sensor");
    let run = run_filter(
        FilterModel::Reduced(&reduced),
        &obs,
        FilterInit::Grid(GridDensity::gaussian(grid, cfg.x0, cfg.prior_sd)?),
        &FilterOptions::new(ens.record_dt()).keep_densities(None, None),
    )?;
    let mut headers = vec!["t".to_string()];
    headers.extend(grid.points().iter().map(|x| x.to_string()));
    out.csv(
        "density.csv",
        &headers,
        run.densities.iter().map(|d| {
            let mut row = vec![d.time];
            row.extend(&d.values);
            row
        }),
    )?;
    let (headers, rows) = paths_table(&ens, &[("filter_mean", &run.mean)], 1);
    let csv = out.csv("paths.csv", &headers, rows.into_iter())?;
    out.plot(&csv, "paths.svg", overlay_spec("signal and reduced filter mean", &headers))?;
    let last = run.times.len() - 1;
    Ok(format!(
        "filter: x(T) = {:.6}, filter mean = {:.6}, sd = {:.6}",
        ens.slow[[0, last, 0]],
        run.mean[last],
        run.variance[last].sqrt()
    ))
}

fn compare(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, out: &mut Out) -> Result<String, RunError> {
    let grid = Grid1::new(cfg.grid.xmin, cfg.grid.xmax, cfg.grid.nx)?;
    let opts = CompareOptions {
        x0: cfg.x0,
        prior_sd: cfg.prior_sd,
        horizon: cfg.horizon,
        obs_dt: cfg.horizon / cfg.observations as f64,
        sim_dt: cfg.dt,
        fast_resolution: FAST_RESOLUTION,
        grid,
        particles: cfg.particles,
        seed: cfg.seed,
    };
    let phi = Functional::Clipped {
        lo: cfg.grid.xmin,
        hi: cfg.grid.xmax,
    };
    let rows = compare_filters(
        system,
        &cfg.theta(system.theta_dim),
        &cfg.epsilons,
        &phi,
        cfg.p,
        cfg.trials,
        &opts,
    )?;
    let csv = out.csv(
        "moments.csv",
        &["epsilon".into(), "moment".into()],
        rows.iter().map(|r| vec![r.epsilon, r.moment]),
    )?;
    out.plot(
        &csv,
        "moments.svg",
        PlotSpec {
            title: "filter difference moment against epsilon".into(),
            x: "epsilon".into(),
            log_log: true,
            markers: true,
            ..Default::default()
        },
    )?;
    let table: Vec<String> = rows.iter().map(|r| format!("{}:{:.3e}", r.epsilon, r.moment)).collect();
    Ok(format!(
        "compare-filters: moments [{}], log-log slope {:.3}",
        table.join(", "),
        loglog_slope(&rows)
    ))
}

#[derive(Serialize)]
struct EstimateRecord {
    theta_hat: serde_json::Value,
    iterations: usize,
    f_trace: Vec<f64>,
    theta_trace: Vec<serde_json::Value>,
    value: f64,
    evaluations: usize,
    theta0: f64,
}

fn theta_json(theta: &[f64]) -> serde_json::Value {
    match theta {
        [t] => (*t).into(),
        _ => theta.to_vec().into(),
    }
}

fn estimation(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, out: &mut Out) -> Result<String, RunError> {
    let ens = ensemble(cfg, system, cfg.paths)?;
    let reduced = reduce(system)?;
    let bounds = Bounds::new(
        cfg.theta_domain.iter().map(|b| b[0]).collect(),
        cfg.theta_domain.iter().map(|b| b[1]).collect(),
    )?;
    let problem = EstimationProblem::new(&ens, reduced.clone(), bounds, cfg.p)?;
    let search = RestartOptions {
        restarts: cfg.restarts,
        search: NelderMeadOptions {
            budget: cfg.budget,
            mode: SearchMode::Deterministic,
            seed: cfg.seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = estimate(&problem, &search)?;
    let state = &report.state;
    out.json(
        "estimate.json",
        &EstimateRecord {
            theta_hat: theta_json(&report.theta_hat),
            iterations: state.iteration,
            f_trace: state.best_history.iter().map(|h| h.1).collect(),
            theta_trace: state.theta_history.iter().map(|t| theta_json(t)).collect(),
            value: report.value,
            evaluations: state.evaluations,
            theta0: cfg.theta0,
        },
    )?;
    let csv = out.csv(
        "trace.csv",
        &["iteration".into(), "theta".into(), "f".into()],
        state
            .best_history
            .iter()
            .zip(&state.theta_history)
            .map(|((i, f), t)| vec![*i as f64, t[0], *f]),
    )?;
    out.plot(
        &csv,
        "theta.svg",
        PlotSpec {
            title: "estimated theta per iteration".into(),
            x: "iteration".into(),
            ys: vec!["theta".into()],
            markers: true,
            ..Default::default()
        },
    )?;
    let xbar = averaged_path(cfg, &reduced, &report.theta_hat)?;
    let (headers, rows) = paths_table(&ens, &[("x_bar", &xbar)], PLOTTED_PATHS);
    let csv = out.csv("paths.csv", &headers, rows.into_iter())?;
    out.plot(&csv, "paths.svg", overlay_spec("observed slow paths and fitted averaged path", &headers))?;
    Ok(format!(
        "estimate: theta_hat = {:?} (theta0 = {}), F = {:.6}, {} iterations",
        report.theta_hat, cfg.theta0, report.value, state.iteration
    ))
}

fn mpp(cfg: &ExperimentConfig, system: &SlowFastSystem<f64>, out: &mut Out) -> Result<String, RunError> {
    let g = &cfg.grid;
    let marginal_nx = (((g.xmax - g.xmin) / MARGINAL_SPACING).round() as usize).max(2);
    let opts = MppOptions {
        x0: cfg.x0,
        prior_sd: cfg.prior_sd,
        obs_dt: cfg.horizon / cfg.observations as f64,
        sim_dt: cfg.dt,
        grid: Grid1::new(g.xmin, g.xmax, g.nx)?,
        marginal_grid: Grid1::new(g.xmin, g.xmax, marginal_nx)?,
        bandwidth: Some(MARGINAL_SPACING),
        particles: cfg.particles,
        theta: cfg.theta(system.theta_dim),
        ..Default::default()
    };
    let cmp = compare_mpp_system(system, cfg.horizon, cfg.seed, &opts)?;
    let csv = out.csv(
        "mpp.csv",
        &["t".into(), "x_full".into(), "x_reduced".into()],
        (0..cmp.full.len()).map(|i| vec![cmp.full.times[i], cmp.full.states[i], cmp.reduced.states[i]]),
    )?;
    out.plot(
        &csv,
        "mpp.svg",
        PlotSpec {
            title: "most probable paths".into(),
            x: "t".into(),
            ..Default::default()
        },
    )?;
    Ok(format!(
        "mpp: sup |x_full - x_reduced| over [{:.3}, {}] = {:.4}",
        cmp.burn_in, cfg.horizon, cmp.sup_distance
    ))
}
