use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use slowfast_cli::plot::{emit_plot, PlotSpec};
use slowfast_cli::{Command as Cmd, ExperimentConfig};

fn slowfast(args: &[&str], extra: &[&Path]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slowfast"));
    c.args(args);
    for p in extra {
        c.arg(p);
    }
    c.output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

const SIMULATE: &str = r#"{"command": "simulate", "model": "example1", "alpha": 1.9, "epsilon": 0.05, "T": 0.2, "M": 3, "seed": 4}"#;

#[test]
fn invalid_epsilon_exits_with_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"command": "simulate", "model": "example1", "epsilon": -1}"#);
    let out = slowfast(&["--config"], &[&cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"command": "simulate", "model": "example1", "epsilonn": 0.1}"#);
    let out = slowfast(&["--config"], &[&cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilonn"));
}

#[test]
fn existing_output_needs_force_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SIMULATE);
    let out_dir = dir.path().join("out");
    let first = slowfast(&["--config"], &[&cfg, Path::new("--out"), &out_dir]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = out_dir.join("simulate-4").join("paths.csv");
    let before = std::fs::read(&csv).unwrap();

    let again = slowfast(&["--config"], &[&cfg, Path::new("--out"), &out_dir]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let forced = slowfast(&["--force", "--config"], &[&cfg, Path::new("--out"), &out_dir]);
    assert!(forced.status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), before);
    assert!(out_dir.join("simulate-4").join("paths.svg").exists());
}

#[test]
fn fig2_preset_writes_both_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = slowfast(&["--preset", "fig2", "--seed", "1", "--out"], &[dir.path()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("mpp-1");
    let text = std::fs::read_to_string(run.join("mpp.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x_full,x_reduced");
    assert!(lines.all(|l| l.split(',').count() == 3));
    let svg = std::fs::read_to_string(run.join("mpp.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn empty_csv_is_an_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "t,x\n").unwrap();
    let svg = dir.path().join("empty.svg");
    let spec = PlotSpec {
        title: "empty".into(),
        x: "t".into(),
        ys: Vec::new(),
        log_log: false,
        markers: false,
    };
    assert!(emit_plot(&csv, &svg, &spec).is_err());
    assert!(!svg.exists());
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop::sample::select(vec![Cmd::Simulate, Cmd::Average, Cmd::Filter, Cmd::CompareFilters, Cmd::Estimate, Cmd::Mpp]),
        1.01f64..1.99,
        1e-4f64..1.0,
        any::<u64>(),
        prop::collection::vec(1e-3f64..0.5, 1..5),
        0.1f64..5.0,
    )
        .prop_map(|(command, alpha, epsilon, seed, epsilons, x0)| {
            let mut cfg = ExperimentConfig::preset("fig1").unwrap();
            cfg.command = command;
            cfg.alpha = alpha;
            cfg.epsilon = epsilon;
            cfg.seed = seed;
            cfg.epsilons = epsilons;
            cfg.x0 = x0;
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn configs_round_trip(cfg in config_strategy()) {
        prop_assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
