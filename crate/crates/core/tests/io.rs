use std::path::{Path, PathBuf};

use sparse_sdf::io::{
    parse_config, read_mesh, read_point_cloud, write_mesh, write_point_cloud, RunManifest,
};
use sparse_sdf::pipeline::{Mode, TrainConfig};
use sparse_sdf::{Error, PointCloud, TriangleMesh};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn xyz_two_points() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.xyz", "0 0 0\n1 0 0\n");
    let c = read_point_cloud(&p).unwrap();
    assert_eq!(c.points, vec![[0.0; 3], [1.0, 0.0, 0.0]]);
    assert!(c.normals.is_none());
}

#[test]
fn xyz_comments_and_normals() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "a.xyz",
        "# header\n0 0 0 0 0 2\n\n1 2 3 1 0 0 # trailing\n",
    );
    let c = read_point_cloud(&p).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.normals.unwrap()[0], [0.0, 0.0, 1.0]);
}

#[test]
fn xyz_malformed_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.xyz", "0 0 0\n1 0\n");
    match read_point_cloud(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
    let p = write(dir.path(), "b.xyz", "0 0 0\n1 zero 0\n");
    assert!(matches!(
        read_point_cloud(&p),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn empty_cloud_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.xyz", "# nothing\n");
    assert!(read_point_cloud(&p).is_err());
}

#[test]
fn unknown_extension_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.txt", "0 0 0\n");
    assert!(matches!(read_point_cloud(&p), Err(Error::Format(_))));
}

fn random_cloud(n: usize, normals: bool) -> PointCloud {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let points: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.gen(), rng.gen::<f64>() * 1e-7, -rng.gen::<f64>() * 1e5])
        .collect();
    if normals {
        let ns = (0..n)
            .map(|_| {
                let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 1.0];
                let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                [v[0] / l, v[1] / l, v[2] / l]
            })
            .collect();
        PointCloud::with_normals(points, ns).unwrap()
    } else {
        PointCloud::new(points)
    }
}

#[test]
fn xyz_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for normals in [false, true] {
        let c = random_cloud(200, normals);
        let p = dir.path().join("c.xyz");
        write_point_cloud(&c, &p).unwrap();
        let back = read_point_cloud(&p).unwrap();
        for (a, b) in c.points.iter().zip(&back.points) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1.0));
            }
        }
        assert_eq!(back.has_normals(), normals);
    }
}

#[test]
fn binary_ply_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for normals in [false, true] {
        let c = random_cloud(200, normals);
        let p = dir.path().join("c.ply");
        write_point_cloud(&c, &p).unwrap();
        let back = read_point_cloud(&p).unwrap();
        assert_eq!(back.points, c.points);
        if normals {
            let (a, b) = (c.normals.unwrap(), back.normals.unwrap());
            for (x, y) in a.iter().zip(&b) {
                for k in 0..3 {
                    assert!((x[k] - y[k]).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn ply_fixture_matches_independent_reader() {
    let c = read_point_cloud(&fixture("cloud300.ply")).unwrap();
    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("cloud300.json")).unwrap()).unwrap();
    assert_eq!(c.len(), expected["count"].as_u64().unwrap() as usize);
    assert!(c.normals.is_none());
    let vec3 = |v: &serde_json::Value| -> Vec<f64> {
        v.as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect()
    };
    assert_eq!(c.points[0].to_vec(), vec3(&expected["first"]));
    assert_eq!(c.points[299].to_vec(), vec3(&expected["last"]));
    let sum = vec3(&expected["sum"]);
    for k in 0..3 {
        let s: f64 = c.points.iter().map(|p| p[k]).sum();
        assert!((s - sum[k]).abs() < 1e-9);
    }
}

#[test]
fn ascii_ply_with_normals_and_faces() {
    let c = read_point_cloud(&fixture("tetra_ascii.ply")).unwrap();
    assert_eq!(c.len(), 4);
    assert_eq!(c.normals.as_ref().unwrap()[0], [0.0, 0.0, 1.0]);
    let m = read_mesh(&fixture("tetra_ascii.ply")).unwrap();
    assert_eq!(m.triangles.len(), 4);
    assert!(m.is_closed());
    assert!(m.signed_volume() > 0.0);
}

#[test]
fn ply_header_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "bad.ply",
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty floaty x\nend_header\n0\n",
    );
    assert!(matches!(
        read_point_cloud(&p),
        Err(Error::Parse { line: 4, .. })
    ));
    let p = write(
        dir.path(),
        "short.ply",
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1\n",
    );
    assert!(matches!(
        read_point_cloud(&p),
        Err(Error::Parse { line: 9, .. })
    ));
}

#[test]
fn single_triangle_obj() {
    let dir = tempfile::tempdir().unwrap();
    let m = TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let p = dir.path().join("t.obj");
    write_mesh(&m, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("f "))
            .collect::<Vec<_>>(),
        vec!["f 1 2 3"]
    );
    assert_eq!(read_mesh(&p).unwrap(), m);
}

#[test]
fn mesh_ply_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = TriangleMesh::unit_cube();
    m.vertices.iter_mut().for_each(|v| v[0] += 0.1 / 3.0);
    let p = dir.path().join("m.ply");
    write_mesh(&m, &p).unwrap();
    assert_eq!(read_mesh(&p).unwrap(), m);
}

#[test]
fn cube_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["cube.obj", "cube.ply"] {
        let p = dir.path().join(name);
        write_mesh(&TriangleMesh::unit_cube(), &p).unwrap();
        assert_eq!(
            std::fs::read(&p).unwrap(),
            std::fs::read(fixture(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn unwritable_path_errors() {
    let m = TriangleMesh::unit_cube();
    let r = write_mesh(&m, Path::new("/nonexistent-dir/x/cube.obj"));
    assert!(matches!(r, Err(Error::Io { .. })));
}

#[test]
fn config_file_overrides_defaults() {
    let text = "# run\niterations = 50\nmode=sparse_only\n\nlambda2 = 0.5 # weight\n";
    let cfg = parse_config(text, Path::new("c.cfg"), TrainConfig::default()).unwrap();
    assert_eq!(cfg.iterations, 50);
    assert_eq!(cfg.mode, Mode::SparseOnly);
    assert_eq!(cfg.lambda2, 0.5);
    assert_eq!(cfg.lambda1, TrainConfig::default().lambda1);
}

#[test]
fn config_file_errors_name_the_line() {
    let r = parse_config(
        "iterations=5\nbogus=1\n",
        Path::new("c.cfg"),
        TrainConfig::default(),
    );
    assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
    let r = parse_config(
        "iterations five\n",
        Path::new("c.cfg"),
        TrainConfig::default(),
    );
    assert!(matches!(r, Err(Error::Parse { line: 1, .. })));
}

#[test]
fn manifest_round_trips_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::new("reconstruct");
    m.input = Some("in.xyz".into());
    m.set_config(&TrainConfig::default());
    m.outputs.insert("mesh".into(), "mesh.ply".into());
    m.timings.insert("train".into(), 1.5);
    let p = dir.path().join("manifest.json");
    m.write(&p).unwrap();
    let back = RunManifest::read(&p).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.config["mode"], "full");
    assert!(
        std::fs::read_dir(dir.path()).unwrap().count() == 1,
        "temporary file left behind"
    );
}
