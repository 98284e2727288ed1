use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use mimalloc::MiMalloc;

use sparse_sdf::geometry::{brute, chamfer, hausdorff, ChamferMode, KdTree};
use sparse_sdf::io::{self, RunManifest};
use sparse_sdf::pipeline::{
    evaluate, Checkpoint, GroundTruth, LossRecord, MetricsReport, TrainConfig, Trainer,
    DEFAULT_EVAL_SAMPLES,
};
use sparse_sdf::{Error, PointCloud, TriangleMesh};

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

/// Surface reconstruction from sparse point clouds.
#[derive(Parser, Debug)]
#[command(name = "sparse-sdf", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for every random choice (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` config file applied over the defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on a point cloud and extract a mesh.
    Reconstruct {
        /// Input cloud (.xyz or .ply).
        #[arg(long)]
        input: PathBuf,
        /// Config override, e.g. `--set iterations=500`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Continue from `<out>/checkpoint.ckpt`.
        #[arg(long)]
        resume: bool,
        /// Ground truth (mesh or cloud) to evaluate the result against.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EVAL_SAMPLES)]
        eval_samples: usize,
        /// Checkpoint every N iterations (0 writes only the final one).
        #[arg(long, default_value_t = 250)]
        checkpoint_every: usize,
    },
    /// Compare a mesh against a ground-truth mesh or cloud.
    Evaluate {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EVAL_SAMPLES)]
        samples: usize,
    },
    /// Write the faces of a tetrahedral grid as a mesh.
    Gridgen {
        #[arg(long, default_value_t = 8)]
        resolution: usize,
    },
    /// Finite-difference check of every differentiable component.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Brute-force versus indexed Chamfer, Hausdorff and KNN between two clouds.
    Oracle {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
}

/// Failure classes, mapped to exit codes 1 and 2.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let common = cli.common;
    match cli.command {
        Command::Reconstruct {
            input,
            overrides,
            resume,
            gt,
            eval_samples,
            checkpoint_every,
        } => {
            let config = build_config(&common, &overrides)?;
            let opts = ReconstructOptions {
                resume,
                gt,
                eval_samples,
                checkpoint_every,
            };
            reconstruct(&common, &input, config, &opts)
        }
        Command::Evaluate { mesh, gt, samples } => evaluate_cmd(&common, &mesh, &gt, samples),
        Command::Gridgen { resolution } => gridgen(&common, resolution),
        Command::Gradcheck { seeds } => gradcheck(seeds),
        Command::Oracle { a, b, k } => oracle(&a, &b, k),
    }
}

/// Defaults, then the config file, then `--set`, then `--seed`.
fn build_config(common: &Common, overrides: &[String]) -> Result<TrainConfig, Failure> {
    let usage = |e: Error| Failure::Usage(e.to_string());
    let mut config = match &common.config {
        Some(path) => io::read_config(path).map_err(usage)?,
        None => TrainConfig::default(),
    };
    for item in overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
        config.set(k.trim(), v.trim()).map_err(usage)?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn out_dir(common: &Common) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn loss_table(history: &[LossRecord]) -> String {
    let mut s = String::from("iteration\ttotal\tpara\tsurf\tdeform\tempty\n");
    for (i, r) in history.iter().enumerate() {
        s.push_str(&format!(
            "{i}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\n",
            r.total, r.para, r.surf, r.deform, r.empty as u8
        ));
    }
    s
}

struct ReconstructOptions {
    resume: bool,
    gt: Option<PathBuf>,
    eval_samples: usize,
    checkpoint_every: usize,
}

fn reconstruct(
    common: &Common,
    input: &Path,
    config: TrainConfig,
    opts: &ReconstructOptions,
) -> CmdResult {
    let dir = out_dir(common)?;
    let ckpt_path = dir.join("checkpoint.ckpt");
    let mut manifest = RunManifest::new("reconstruct");
    manifest.input = Some(input.display().to_string());
    manifest.set_config(&config);

    let start = Instant::now();
    let cloud = io::read_point_cloud(input)?;
    let mut trainer = if opts.resume {
        let ckpt = Checkpoint::load_for(&ckpt_path, &config)?;
        info!("resuming from iteration {}", ckpt.iteration);
        Trainer::from_checkpoint(&ckpt)?
    } else {
        Trainer::new(&cloud, config.clone())?
    };
    manifest
        .timings
        .insert("load".into(), start.elapsed().as_secs_f64());

    let start = Instant::now();
    let total = trainer.config.iterations;
    while trainer.iteration < total {
        match trainer.step() {
            Ok(r) => {
                if trainer.iteration % 100 == 0 || trainer.iteration == total {
                    info!(
                        "iteration {}/{total} loss {:.6}",
                        trainer.iteration, r.total
                    );
                }
                if opts.checkpoint_every > 0 && trainer.iteration % opts.checkpoint_every == 0 {
                    trainer.checkpoint().save(&ckpt_path)?;
                }
            }
            Err(e) => {
                // the rejected step left the trainer at its last finite state
                trainer.checkpoint().save(&ckpt_path)?;
                io::write_atomic(
                    &dir.join("loss.tsv"),
                    loss_table(&trainer.history).as_bytes(),
                )?;
                warn!("last finite state written to {}", ckpt_path.display());
                return Err(e.into());
            }
        }
    }
    manifest
        .timings
        .insert("train".into(), start.elapsed().as_secs_f64());

    trainer.checkpoint().save(&ckpt_path)?;
    io::write_atomic(
        &dir.join("loss.tsv"),
        loss_table(&trainer.history).as_bytes(),
    )?;
    manifest
        .outputs
        .insert("checkpoint".into(), ckpt_path.display().to_string());
    manifest
        .outputs
        .insert("loss".into(), dir.join("loss.tsv").display().to_string());

    let start = Instant::now();
    let mesh = trainer.reconstruct()?;
    let mesh_path = dir.join("mesh.ply");
    io::write_mesh(&mesh, &mesh_path)?;
    manifest
        .timings
        .insert("extract".into(), start.elapsed().as_secs_f64());
    manifest
        .outputs
        .insert("mesh".into(), mesh_path.display().to_string());
    info!(
        "mesh: {} vertices, {} triangles",
        mesh.vertices.len(),
        mesh.triangles.len()
    );

    if let Some(gt) = &opts.gt {
        let start = Instant::now();
        let report = evaluate_against(&mesh, gt, opts.eval_samples, trainer.config.seed)?;
        print!("{}", report.to_text());
        manifest.metrics = Some(report);
        manifest
            .timings
            .insert("evaluate".into(), start.elapsed().as_secs_f64());
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(())
}

enum LoadedTruth {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

/// `.obj` and faced `.ply` files are meshes; `.xyz` and vertex-only `.ply`
/// files are clouds.
fn load_truth(path: &Path) -> sparse_sdf::Result<LoadedTruth> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "obj" => Ok(LoadedTruth::Mesh(io::read_mesh(path)?)),
        "ply" => match io::read_mesh(path) {
            Ok(m) if !m.triangles.is_empty() => Ok(LoadedTruth::Mesh(m)),
            _ => Ok(LoadedTruth::Cloud(io::read_point_cloud(path)?)),
        },
        _ => Ok(LoadedTruth::Cloud(io::read_point_cloud(path)?)),
    }
}

fn evaluate_against(
    mesh: &TriangleMesh,
    gt: &Path,
    samples: usize,
    seed: u64,
) -> sparse_sdf::Result<MetricsReport> {
    match load_truth(gt)? {
        LoadedTruth::Mesh(m) => evaluate(mesh, GroundTruth::Mesh(&m), samples, seed),
        LoadedTruth::Cloud(c) => evaluate(mesh, GroundTruth::Cloud(&c), samples, seed),
    }
}

fn evaluate_cmd(common: &Common, mesh: &Path, gt: &Path, samples: usize) -> CmdResult {
    let mesh = io::read_mesh(mesh)?;
    let report = evaluate_against(&mesh, gt, samples, common.seed.unwrap_or(0))?;
    print!("{}", report.to_text());
    if common.out.is_some() {
        let path = out_dir(common)?.join("metrics.json");
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
        io::write_atomic(&path, json.as_bytes())?;
    }
    Ok(())
}

/// Every distinct tetrahedron face once, oriented as in the first
/// tetrahedron that owns it.
fn grid_faces(grid: &sparse_sdf::gdo::TetGrid) -> TriangleMesh {
    let mut seen = std::collections::HashSet::new();
    let mut triangles = Vec::new();
    for &[a, b, c, d] in &grid.tets {
        for f in [[b, c, d], [a, d, c], [a, b, d], [a, c, b]] {
            let mut key = f;
            key.sort_unstable();
            if seen.insert(key) {
                triangles.push(f);
            }
        }
    }
    TriangleMesh {
        vertices: grid.vertices.clone(),
        triangles,
    }
}

fn gridgen(common: &Common, resolution: usize) -> CmdResult {
    let grid =
        sparse_sdf::gdo::build_tet_grid(resolution).map_err(|e| Failure::Usage(e.to_string()))?;
    let mesh = grid_faces(&grid);
    let path = out_dir(common)?.join(format!("grid_r{resolution}.ply"));
    io::write_mesh(&mesh, &path)?;
    println!(
        "vertices={}\ntetrahedra={}\nfaces={}\npath={}",
        grid.vertices.len(),
        grid.tets.len(),
        mesh.triangles.len(),
        path.display()
    );
    Ok(())
}

fn gradcheck(seeds: u64) -> CmdResult {
    let results = sparse_sdf::suite::gradient_suite(seeds)?;
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<40} max_rel={:.3e} tol={:.0e} checked={} skipped={}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.checked,
            r.skipped
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} checks failed",
            results.len()
        )));
    }
    Ok(())
}

fn oracle(a: &Path, b: &Path, k: usize) -> CmdResult {
    let a = io::read_point_cloud(a)?;
    let b = io::read_point_cloud(b)?;
    let k = k.min(b.len());
    let mut agree = true;
    for (name, mode) in [
        ("chamfer_l1", ChamferMode::L1),
        ("chamfer_l2", ChamferMode::L2),
    ] {
        let fast = chamfer(&a, &b, mode)?;
        let slow = brute::chamfer(&a.points, &b.points, mode)?;
        agree &= fast == slow;
        println!("{name}_kdtree={fast:?}\n{name}_brute={slow:?}");
    }
    let fast = hausdorff(&a, &b)?;
    let slow = brute::hausdorff(&a.points, &b.points)?;
    agree &= fast == slow;
    println!("hausdorff_kdtree={fast:?}\nhausdorff_brute={slow:?}");

    let tree = KdTree::new(&b.points);
    let mut mismatched = 0;
    for &q in &a.points {
        if tree.knn(q, k)? != brute::knn(&b.points, q, k)? {
            mismatched += 1;
        }
    }
    agree &= mismatched == 0;
    println!("knn_k={k}\nknn_mismatched_queries={mismatched}\nagree={agree}");
    if agree {
        Ok(())
    } else {
        Err(Failure::Runtime(
            "indexed and brute-force results differ".into(),
        ))
    }
}
