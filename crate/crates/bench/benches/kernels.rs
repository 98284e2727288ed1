use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mimalloc::MiMalloc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_sdf::gdo::{
    build_tet_grid, deform_vertices, marching_tetrahedra, DeformedGrid, ScalarField, SphereSdf,
};
use sparse_sdf::geometry::{KdTree, Point3};
use sparse_sdf::pipeline::{TrainConfig, Trainer};
use sparse_sdf::{PointCloud, Tape, Tensor};

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random =
        |r: usize, k: usize| Tensor::new(r, k, (0..r * k).map(|_| rng.gen()).collect());
    let a = random(4096, 64);
    let b = random(64, 64);
    c.bench_function("matmul forward+backward 4096x64x64", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let x = tape.constant(a.clone()).unwrap();
            let w = tape.constant(b.clone()).unwrap();
            let y = tape.matmul(x, w).unwrap();
            let l = tape.sum(y).unwrap();
            tape.backward(l).unwrap()
        })
    });
}

fn knn(c: &mut Criterion) {
    let points = random_points(20_000, 2);
    let queries = random_points(5_000, 3);
    c.bench_function("kd-tree build 20k", |b| b.iter(|| KdTree::new(&points)));
    let tree = KdTree::new(&points);
    c.bench_function("kd-tree 8-NN x 5k queries", |b| {
        b.iter(|| {
            queries
                .iter()
                .map(|&q| tree.knn(q, 8).unwrap()[7])
                .sum::<usize>()
        })
    });
}

fn extraction(c: &mut Criterion) {
    let grid = build_tet_grid(32).unwrap();
    let sphere = SphereSdf::new(0.3);
    let undeformed = DeformedGrid {
        positions: grid.vertices.clone(),
        values: sphere.values(&grid.vertices).unwrap(),
    };
    c.bench_function("marching tetrahedra r=32", |b| {
        b.iter(|| marching_tetrahedra(&grid, &undeformed))
    });
    c.bench_function("deform vertices r=32", |b| {
        b.iter(|| deform_vertices(&grid, &sphere).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let cloud = PointCloud::new(
        random_points(300, 4)
            .into_iter()
            .map(|p| {
                let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                p.map(|v| v / n)
            })
            .collect(),
    );
    let trainer = Trainer::new(&cloud, TrainConfig::default()).unwrap();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("full step at defaults", |b| {
        b.iter_batched(
            || trainer.checkpoint(),
            |ckpt| {
                let mut t = Trainer::from_checkpoint(&ckpt).unwrap();
                t.step().unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, matmul, knn, extraction, training_step);
criterion_main!(benches);
