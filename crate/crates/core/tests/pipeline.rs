use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_sdf::gdo::SphereSdf;
use sparse_sdf::geometry::UnitCubeTransform;
use sparse_sdf::pipeline::{
    evaluate, reconstruct, reconstruct_field, sphere_chamfer_l1_mesh, sphere_chamfer_l1_sphere,
    total_loss, Checkpoint, GroundTruth, Mode, Sphere, TrainConfig, Trainer,
};
use sparse_sdf::tensor::finite_diff_check;
use sparse_sdf::{Error, PointCloud, Tape, Tensor, TriangleMesh};

fn toy_config() -> TrainConfig {
    TrainConfig {
        iterations: 4,
        resolution: 8,
        feature_dim: 8,
        pool_size: 256,
        condition_tokens: 4,
        sdf_width: 16,
        sdf_depth: 2,
        offset_width: 8,
        samples: 400,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn toy_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(Sphere::unit().sample(n, &mut rng))
}

#[test]
fn total_loss_weights() {
    let cfg = TrainConfig::default();
    let mut tape = Tape::new();
    let mut c = |v: f64| tape.constant(Tensor::scalar(v)).unwrap();
    let (zero, one) = ([c(0.0), c(0.0), c(0.0)], [c(1.0), c(1.0), c(1.0)]);
    let l0 = total_loss(&mut tape, Some(zero[0]), Some(zero[1]), Some(zero[2]), &cfg).unwrap();
    let l1 = total_loss(&mut tape, Some(one[0]), Some(one[1]), Some(one[2]), &cfg).unwrap();
    assert_eq!(tape.value(l0).item(), 0.0);
    assert!((tape.value(l1).item() - 11.01).abs() < 1e-12);
}

#[test]
fn total_loss_gradient_is_weighted_sum() {
    let cfg = TrainConfig::default();
    let x = Tensor::new(1, 3, vec![0.4, -1.3, 2.0]);
    let components = |tape: &mut Tape, v| {
        let sq = tape.mul(v, v).unwrap();
        let a = tape.sum(sq).unwrap();
        let ab = tape.abs(v).unwrap();
        let b = tape.mean(ab).unwrap();
        let s = tape.scale(v, 0.5).unwrap();
        let c = tape.sum(s).unwrap();
        (a, b, c)
    };
    let mut tape = Tape::new();
    let v = tape.constant(x.clone()).unwrap();
    let (a, b, c) = components(&mut tape, v);
    let total = total_loss(&mut tape, Some(a), Some(b), Some(c), &cfg).unwrap();
    let g = tape.backward(total).unwrap().get_or_zero(v);
    for (i, &xi) in x.data().iter().enumerate() {
        let expected = cfg.lambda1 * 2.0 * xi + cfg.lambda2 * xi.signum() / 3.0 + 0.5;
        assert!((g.data()[i] - expected).abs() < 1e-10);
    }
    let report = finite_diff_check(
        |tape, v| {
            let (a, b, c) = components(tape, v);
            total_loss(tape, Some(a), Some(b), Some(c), &cfg)
        },
        &x,
        1e-5,
    );
    assert!(report.passed(1e-6), "{report:?}");
}

#[test]
fn absent_terms_contribute_nothing() {
    let cfg = TrainConfig::default();
    let mut tape = Tape::new();
    let d = tape.constant(Tensor::scalar(0.25)).unwrap();
    let l = total_loss(&mut tape, None, None, Some(d), &cfg).unwrap();
    assert_eq!(tape.value(l).item(), 0.25);
    let l = total_loss(&mut tape, None, None, None, &cfg).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
}

#[test]
fn one_iteration_is_one_adam_step() {
    let cfg = TrainConfig {
        iterations: 1,
        ..toy_config()
    };
    let mut t = Trainer::new(&toy_cloud(64, 1), cfg).unwrap();
    let before = t.store.flatten();
    t.train().unwrap();
    assert_eq!(t.adam.t, 1);
    assert_eq!(t.history.len(), 1);
    assert_ne!(t.store.flatten(), before);
}

#[test]
fn too_few_points_rejected() {
    let r = Trainer::new(&toy_cloud(5, 1), toy_config());
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    for mode in [
        Mode::Full,
        Mode::SparseOnly,
        Mode::OffsetAblation,
        Mode::BspFrozen,
    ] {
        let cfg = TrainConfig {
            mode,
            ..toy_config()
        };
        let cloud = toy_cloud(64, 2);
        let mut a = Trainer::new(&cloud, cfg.clone()).unwrap();
        let mut b = Trainer::new(&cloud, cfg).unwrap();
        a.train().unwrap();
        b.train().unwrap();
        assert_eq!(a.history, b.history, "{mode}");
        assert_eq!(a.store, b.store, "{mode}");
    }
}

#[test]
fn the_seed_changes_the_run() {
    let cloud = toy_cloud(64, 2);
    let run = |seed| {
        let mut t = Trainer::new(
            &cloud,
            TrainConfig {
                seed,
                ..toy_config()
            },
        )
        .unwrap();
        t.train().unwrap();
        t
    };
    let (a, b) = (run(11), run(12));
    assert_ne!(a.history, b.history);
    assert_ne!(a.store, b.store);
}

#[test]
fn modes_register_the_expected_networks() {
    let cloud = toy_cloud(64, 3);
    let names = |mode| {
        let t = Trainer::new(
            &cloud,
            TrainConfig {
                mode,
                ..toy_config()
            },
        )
        .unwrap();
        t.store
            .iter()
            .map(|(_, n, _)| n.to_string())
            .collect::<Vec<_>>()
    };
    assert!(names(Mode::Full).iter().any(|n| n.starts_with("bsp.")));
    assert!(!names(Mode::SparseOnly)
        .iter()
        .any(|n| n.starts_with("bsp.")));
    assert!(names(Mode::OffsetAblation)
        .iter()
        .any(|n| n.starts_with("offset.")));
    assert!(!names(Mode::Full).iter().any(|n| n.starts_with("offset.")));
}

#[test]
fn bsp_frozen_stops_updating_the_parameterization() {
    let cfg = TrainConfig {
        mode: Mode::BspFrozen,
        iterations: 6,
        ..toy_config()
    };
    let mut t = Trainer::new(&toy_cloud(64, 4), cfg).unwrap();
    let bsp = |t: &Trainer| {
        t.store
            .iter()
            .filter(|(_, n, _)| n.starts_with("bsp."))
            .flat_map(|(_, _, x)| x.data().to_vec())
            .collect::<Vec<_>>()
    };
    let sdf = |t: &Trainer| {
        t.store
            .iter()
            .filter(|(_, n, _)| n.starts_with("sdf."))
            .flat_map(|(_, _, x)| x.data().to_vec())
            .collect::<Vec<_>>()
    };
    let (bsp0, sdf0) = (bsp(&t), sdf(&t));
    for _ in 0..3 {
        t.step().unwrap();
    }
    assert_ne!(bsp(&t), bsp0);
    assert_eq!(sdf(&t), sdf0, "grid must not train during the first half");
    assert!(t.history.iter().all(|r| r.surf == 0.0 && r.deform == 0.0));
    let bsp_mid = bsp(&t);
    for _ in 0..3 {
        t.step().unwrap();
    }
    assert_eq!(bsp(&t), bsp_mid);
    assert_ne!(sdf(&t), sdf0);
    assert!(t.history[3..]
        .iter()
        .all(|r| r.para == 0.0 && r.deform > 0.0));
}

#[test]
fn checkpoint_bytes_round_trip() {
    let mut t = Trainer::new(&toy_cloud(64, 5), toy_config()).unwrap();
    t.step().unwrap();
    let ckpt = t.checkpoint();
    let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
    assert_eq!(back, ckpt);
    let restored = Trainer::from_checkpoint(&back).unwrap();
    assert_eq!(restored.store, t.store);
    assert_eq!(restored.adam, t.adam);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cloud = toy_cloud(64, 6);
    let cfg = TrainConfig {
        iterations: 5,
        ..toy_config()
    };
    let mut straight = Trainer::new(&cloud, cfg.clone()).unwrap();
    straight.train().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let mut first = Trainer::new(&cloud, cfg.clone()).unwrap();
    for _ in 0..3 {
        first.step().unwrap();
    }
    first.checkpoint().save(&path).unwrap();
    let mut resumed =
        Trainer::from_checkpoint(&Checkpoint::load_for(&path, &cfg).unwrap()).unwrap();
    resumed.train().unwrap();
    assert_eq!(resumed.history, straight.history);
    assert_eq!(resumed.store, straight.store);
    assert_eq!(resumed.adam, straight.adam);
}

#[test]
fn checkpoint_rejects_mismatch_and_corruption() {
    let t = Trainer::new(&toy_cloud(64, 7), toy_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    t.checkpoint().save(&path).unwrap();
    let other = TrainConfig {
        lambda2: 0.02,
        ..toy_config()
    };
    assert!(matches!(
        Checkpoint::load_for(&path, &other),
        Err(Error::Checkpoint(_))
    ));

    let bytes = t.checkpoint().to_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        Checkpoint::from_bytes(&bad),
        Err(Error::Checkpoint(_))
    ));
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut version = bytes.clone();
    version[8] = 9;
    assert!(Checkpoint::from_bytes(&version).is_err());
    // flip one byte of the stored config text; its hash no longer matches
    let text_start = 8 + 4 + 8 + 4;
    let mut tampered = bytes;
    tampered[text_start] = b'X';
    assert!(Checkpoint::from_bytes(&tampered).is_err());
}

#[test]
fn checkpoint_with_wrong_parameter_shape_rejected() {
    let t = Trainer::new(&toy_cloud(64, 8), toy_config()).unwrap();
    let mut ckpt = t.checkpoint();
    ckpt.params[0].1 = Tensor::zeros(1, 1);
    assert!(matches!(
        Trainer::from_checkpoint(&ckpt),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn analytic_field_reconstructs_sphere() {
    let mesh = reconstruct_field(&SphereSdf::new(0.3), 32, &UnitCubeTransform::identity()).unwrap();
    let worst = mesh
        .vertices
        .iter()
        .map(|v| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 0.3).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 2e-3, "max radial error {worst}");
    assert!(mesh.is_closed());
}

#[test]
fn empty_field_is_an_error() {
    let r = reconstruct_field(&SphereSdf::new(2.0), 8, &UnitCubeTransform::identity());
    assert!(matches!(r, Err(Error::Reconstruction(_))));
}

#[test]
fn reconstruct_is_deterministic() {
    let mut t = Trainer::new(&toy_cloud(64, 9), toy_config()).unwrap();
    t.train().unwrap();
    let ckpt = t.checkpoint();
    assert_eq!(reconstruct(&ckpt).unwrap(), reconstruct(&ckpt).unwrap());
}

#[test]
fn reconstruction_is_similarity_equivariant() {
    let cloud = toy_cloud(64, 10);
    let scaled = PointCloud::new(cloud.points.iter().map(|p| p.map(|c| 7.0 * c)).collect());
    let mut a = Trainer::new(&cloud, toy_config()).unwrap();
    let mut b = Trainer::new(&scaled, toy_config()).unwrap();
    a.train().unwrap();
    b.train().unwrap();
    let (ma, mb) = (a.reconstruct().unwrap(), b.reconstruct().unwrap());
    assert_eq!(ma.triangles, mb.triangles);
    for (u, v) in ma.vertices.iter().zip(&mb.vertices) {
        for k in 0..3 {
            assert!((7.0 * u[k] - v[k]).abs() < 1e-6);
        }
    }
}

fn sphere_mesh(radius: f64) -> TriangleMesh {
    reconstruct_field(&SphereSdf::new(radius), 24, &UnitCubeTransform::identity()).unwrap()
}

#[test]
fn evaluate_self_comparison() {
    let m = sphere_mesh(0.3);
    let r = evaluate(&m, GroundTruth::Mesh(&m), 100_000, 1).unwrap();
    assert!(r.cd_l1 < 1e-9, "{r:?}");
    assert!(r.nc.unwrap() >= 0.999, "{r:?}");
    assert_eq!(r.samples_pred, 100_000);
}

#[test]
fn evaluate_scaled_sphere_hausdorff() {
    let m = sphere_mesh(0.3);
    let mut big = m.clone();
    big.vertices
        .iter_mut()
        .for_each(|v| *v = v.map(|c| 1.01 * c));
    // unit sphere and its 1.01 copy: offset 0.01
    let unit = TriangleMesh {
        vertices: m.vertices.iter().map(|v| v.map(|c| c / 0.3)).collect(),
        triangles: m.triangles.clone(),
    };
    let unit_big = TriangleMesh {
        vertices: big.vertices.iter().map(|v| v.map(|c| c / 0.3)).collect(),
        triangles: big.triangles.clone(),
    };
    let r = evaluate(&unit, GroundTruth::Mesh(&unit_big), 100_000, 2).unwrap();
    assert!((r.hd - 0.01).abs() < 0.001, "{r:?}");
}

#[test]
fn evaluate_is_stable_across_seeds() {
    let a = sphere_mesh(0.3);
    let b = sphere_mesh(0.32);
    let r1 = evaluate(&a, GroundTruth::Mesh(&b), 100_000, 3).unwrap();
    let r2 = evaluate(&a, GroundTruth::Mesh(&b), 100_000, 4).unwrap();
    for (x, y) in [
        (r1.cd_l1, r2.cd_l1),
        (r1.cd_l2, r2.cd_l2),
        (r1.hd, r2.hd),
        (r1.nc.unwrap(), r2.nc.unwrap()),
    ] {
        assert!(
            (x - y).abs() <= 0.02 * x.abs().max(y.abs()),
            "{r1:?} vs {r2:?}"
        );
    }
}

#[test]
fn evaluate_against_cloud_without_normals() {
    let m = sphere_mesh(0.3);
    let cloud = PointCloud::new(m.vertices.clone());
    let r = evaluate(&m, GroundTruth::Cloud(&cloud), 10_000, 5).unwrap();
    assert!(r.nc.is_none());
    assert!(r.cd_l1.is_finite() && r.cd_l1 >= 0.0);
    assert!(evaluate(&m, GroundTruth::Cloud(&PointCloud::default()), 10, 5).is_err());
    let empty = TriangleMesh {
        vertices: vec![],
        triangles: vec![],
    };
    assert!(evaluate(&empty, GroundTruth::Mesh(&m), 10, 5).is_err());
}

#[test]
fn sphere_chamfer_oracles() {
    let unit = Sphere::unit();
    assert!(sphere_chamfer_l1_sphere(&unit, &unit, 1000, 1) < 1e-15);
    let bigger = Sphere {
        center: [0.0; 3],
        radius: 1.1,
    };
    assert!((sphere_chamfer_l1_sphere(&bigger, &unit, 1000, 1) - 0.2).abs() < 1e-12);
    let fit = Sphere::fit(
        &Sphere {
            center: [1.0, 2.0, 3.0],
            radius: 0.5,
        }
        .sample(2000, &mut ChaCha8Rng::seed_from_u64(1)),
    )
    .unwrap();
    assert!((fit.radius - 0.5).abs() < 0.02);
    let mesh = reconstruct_field(
        &SphereSdf::new(0.3),
        32,
        &UnitCubeTransform {
            center: [0.0; 3],
            scale: 0.3,
        },
    )
    .unwrap();
    let cd = sphere_chamfer_l1_mesh(&mesh, &unit, 10_000, 1).unwrap();
    assert!(cd < 0.01, "{cd}");
}
