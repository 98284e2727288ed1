use std::path::Path;
use std::process::{Command, Output};

use sparse_sdf::io::{read_mesh, read_point_cloud, write_point_cloud, RunManifest};
use sparse_sdf::pipeline::{TrainConfig, Trainer};
use sparse_sdf::PointCloud;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-sdf"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// 64 points on the unit sphere, golden-angle spiral.
fn sphere_cloud(dir: &Path) -> std::path::PathBuf {
    let n = 64;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y, r * t.sin()]
        })
        .collect();
    let path = dir.join("sphere.xyz");
    write_point_cloud(&PointCloud::new(points), &path).unwrap();
    path
}

const TINY: [&str; 12] = [
    "--set",
    "iterations=6",
    "--set",
    "resolution=6",
    "--set",
    "feature_dim=8",
    "--set",
    "pool_size=128",
    "--set",
    "sdf_width=16",
    "--set",
    "samples=200",
];

fn reconstruct(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "reconstruct",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&run(&["reconstruct"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn bad_config_value_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = sphere_cloud(dir.path());
    let o = reconstruct(&input, &dir.path().join("r"), &["--set", "resolution=0"]);
    assert_eq!(code(&o), 1);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "lambda1 = 10\nwidth = 3\n").unwrap();
    let o = run(&[
        "reconstruct",
        "--input",
        input.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "reconstruct",
        "--input",
        "/nonexistent/x.xyz",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn reconstruct_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let input = sphere_cloud(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = reconstruct(
            &input,
            out,
            &["--gt", input.to_str().unwrap(), "--eval-samples", "500"],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("cd_l1_x10="));
    }
    for name in ["mesh.ply", "checkpoint.ckpt", "loss.tsv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let loss = std::fs::read_to_string(a.join("loss.tsv")).unwrap();
    assert_eq!(loss.lines().count(), 7);
    let mesh = read_mesh(&a.join("mesh.ply")).unwrap();
    assert!(!mesh.triangles.is_empty());

    let manifest = RunManifest::read(&a.join("manifest.json")).unwrap();
    assert_eq!(manifest.command, "reconstruct");
    assert_eq!(manifest.config["seed"], "5");
    assert_eq!(manifest.config["iterations"], "6");
    assert!(manifest.outputs.contains_key("mesh"));
    assert!(manifest.timings.contains_key("train"));
    assert!(manifest.metrics.is_some());
}

#[test]
fn config_file_then_flags_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = sphere_cloud(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# toy\nseed = 9\nlambda2 = 0.5\niterations = 100\n").unwrap();
    let out = dir.path().join("r");
    let o = reconstruct(&input, &out, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    // file over defaults, --set and --seed over the file
    assert_eq!(m.config["lambda2"], "0.5");
    assert_eq!(m.config["iterations"], "6");
    assert_eq!(m.config["seed"], "5");
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = sphere_cloud(dir.path());
    let full = dir.path().join("full");
    assert_eq!(code(&reconstruct(&input, &full, &[])), 0);

    // the state an interrupted run leaves after iteration 3
    let mut config = TrainConfig::default();
    for pair in TINY.chunks(2) {
        let (k, v) = pair[1].split_once('=').unwrap();
        config.set(k, v).unwrap();
    }
    config.seed = 5;
    let mut trainer = Trainer::new(&read_point_cloud(&input).unwrap(), config).unwrap();
    for _ in 0..3 {
        trainer.step().unwrap();
    }
    let split = dir.path().join("split");
    std::fs::create_dir_all(&split).unwrap();
    trainer
        .checkpoint()
        .save(&split.join("checkpoint.ckpt"))
        .unwrap();

    let o = reconstruct(&input, &split, &["--resume"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["mesh.ply", "checkpoint.ckpt", "loss.tsv"] {
        assert_eq!(
            std::fs::read(full.join(name)).unwrap(),
            std::fs::read(split.join(name)).unwrap(),
            "{name}"
        );
    }
    let o = reconstruct(&input, &split, &["--resume", "--set", "lambda2=0.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluate_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let input = sphere_cloud(dir.path());
    let out = dir.path().join("r");
    assert_eq!(code(&reconstruct(&input, &out, &[])), 0);
    let mesh = out.join("mesh.ply");
    let args = [
        "evaluate",
        "--mesh",
        mesh.to_str().unwrap(),
        "--gt",
        mesh.to_str().unwrap(),
        "--samples",
        "2000",
    ];
    let o = run(&args);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(value("cd_l1_x10") < 0.5, "{text}");
    assert!(value("nc") > 0.9, "{text}");
    assert_eq!(stdout(&run(&args)), text);
}

#[test]
fn gridgen_writes_every_face_once() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "gridgen",
        "--resolution",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let mesh = read_mesh(&dir.path().join("grid_r2.ply")).unwrap();
    assert_eq!(mesh.vertices.len(), 27);
    // 4 faces per tet, interior ones shared: (4 * 48 + boundary) / 2,
    // boundary = 6 sides * 4 squares * 2 triangles
    assert_eq!(mesh.triangles.len(), (4 * 48 + 48) / 2);
    assert_eq!(code(&run(&["gridgen", "--resolution", "0"])), 1);
}

#[test]
fn oracle_agrees_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let a = sphere_cloud(dir.path());
    let b = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/cloud300.ply");
    let o = run(&[
        "oracle",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("agree=true"));
}

#[test]
fn gradcheck_passes() {
    let o = run(&["gradcheck", "--seeds", "2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
