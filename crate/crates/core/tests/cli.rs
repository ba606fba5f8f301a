use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cann::checkpoint::{Checkpoint, Metadata};
use cann::network::MlpParams;
use cann::problems::{catalog, ProblemId};
use cann::stencil::StencilKind;

fn cann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cann")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"
name = "cli"
problem = "heat2d"
test_variants = ["cos"]
meshes = ["pi/4"]
dt_factors = [1.0, 2.0]
final_time = "pi"
stencil = "edge_neighbors"
hidden = [5]
init_gain = 0.1
target_mode = "exact_averages"
seeds = [3]

[train]
max_iters = 500
tolerance = 1e-6
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("cli.toml");
    fs::write(&path, CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gradcheck_passes_on_default_sizes() {
    let out = cann(&["gradcheck"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let err: f64 = text.rsplit(' ').next().unwrap().trim().parse().unwrap();
    assert!(err < 1e-6, "{text}");

    let out = cann(&["gradcheck", "--sizes", "27,10,1", "--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn zero_network_checkpoint_leaves_the_initial_averages() {
    let dir = tempfile::tempdir().unwrap();
    let ck_path = dir.path().join("zero.json");
    let metadata = Metadata {
        problem: Some("heat2d".into()),
        stencil: Some(StencilKind::EdgeNeighbors),
        dx: Some(PI / 8.0),
        dt: Some(PI / 8.0),
        ..Metadata::default()
    };
    Checkpoint::new(MlpParams::zeros(&[5, 4, 1]).unwrap(), None, metadata)
        .save(&ck_path)
        .unwrap();
    let csv_path = dir.path().join("field.csv");
    let out = cann(&[
        "evolve",
        "--checkpoint",
        ck_path.to_str().unwrap(),
        "--variant",
        "cos",
        "--final-time",
        "pi/2",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("steps=4"));

    let spec = catalog(ProblemId::Heat2D, "cos").unwrap();
    let initial = spec.initial_field(&spec.grid_for_dx(PI / 8.0).unwrap()).unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().next_back(), Some("value"));
    let values: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap().iter().next_back().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), initial.values().len());
    for (a, b) in values.iter().zip(initial.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn train_then_evolve_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let ck = dir.path().join("net.json");
    let losses = dir.path().join("loss.csv");
    let out = cann(&[
        "train",
        "--config",
        &config,
        "--dt-index",
        "1",
        "--out",
        ck.to_str().unwrap(),
        "--loss-csv",
        losses.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::read_to_string(&losses).unwrap().starts_with("iteration,loss"));
    let saved = Checkpoint::load(&ck).unwrap();
    assert_eq!(saved.seed, Some(3));
    assert!((saved.metadata.dt.unwrap() - PI / 2.0).abs() < 1e-15);

    let out = cann(&["evolve", "--checkpoint", ck.to_str().unwrap(), "--variant", "cos", "--final-time", "pi"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("L2="), "{}", stdout(&out));

    let out = cann(&["export", "--checkpoint", ck.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("layer 0: weights 5x5"));
    assert!(text.contains("trained on heat2d/sin"));
}

#[test]
fn bench_runs_a_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out_root = dir.path().join("out");
    let out = cann(&["bench", dir.path().to_str().unwrap(), "--out", out_root.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("cli"));
    let results = fs::read_to_string(out_root.join("cli/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, CONFIG.replace("edge_neighbors", "hexagon")).unwrap();
    let out = cann(&["bench", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.toml"), "{}", stderr(&out));

    let fractional = dir.path().join("fractional.toml");
    fs::write(&fractional, CONFIG.replace("dt_factors = [1.0, 2.0]", "dt_factors = [3.0]")).unwrap();
    let out = cann(&["bench", fractional.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("whole number of steps"), "{}", stderr(&out));

    let out = cann(&["evolve", "--checkpoint", "/nonexistent.json", "--variant", "cos", "--final-time", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent.json"));

    let ck = dir.path().join("wide.json");
    Checkpoint::new(MlpParams::zeros(&[9, 3, 1]).unwrap(), None, Metadata::default())
        .save(&ck)
        .unwrap();
    let out = cann(&[
        "evolve",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--problem",
        "heat2d",
        "--variant",
        "cos",
        "--dx",
        "pi/4",
        "--dt",
        "pi/4",
        "--stencil",
        "edge_neighbors",
        "--final-time",
        "pi",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("takes 9 inputs"), "{}", stderr(&out));

    let out = cann(&["gradcheck", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}
