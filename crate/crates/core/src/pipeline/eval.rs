use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3::{dist2, norm, sub};
use crate::geometry::{
    nearest_distances2, normal_consistency, sample_mesh_surface, KdTree, MeshDistance, Point3,
    PointCloud, TriangleMesh,
};

/// Default evaluation sample count for shapes.
pub const DEFAULT_EVAL_SAMPLES: usize = 100_000;

/// Surface comparison under the usual reporting scales: `cd_l1` is
/// multiplied by 10 and `cd_l2` by 100. `nc` is absent when the ground
/// truth carries no normals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cd_l1: f64,
    pub cd_l2: f64,
    pub nc: Option<f64>,
    pub hd: f64,
    pub samples_pred: usize,
    pub samples_gt: usize,
    pub seed: u64,
}

impl MetricsReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let nc = self
            .nc
            .map_or_else(|| "none".to_string(), |v| format!("{v:.9}"));
        format!(
            "cd_l1_x10={:.9}\ncd_l2_x100={:.9}\nnc={nc}\nhd={:.9}\nsamples_pred={}\nsamples_gt={}\nseed={}\n",
            self.cd_l1, self.cd_l2, self.hd, self.samples_pred, self.samples_gt, self.seed
        )
    }
}

/// Reference surface for [`evaluate`].
#[derive(Clone, Copy, Debug)]
pub enum GroundTruth<'a> {
    /// Sampled like the prediction.
    Mesh(&'a TriangleMesh),
    /// Used as given.
    Cloud(&'a PointCloud),
}

/// Samples `n_samples` area-weighted points (with face normals) from `mesh`
/// and, for a mesh ground truth, from the ground truth too. Distances are
/// exact point-to-surface distances wherever the other side is a mesh and
/// nearest-point distances to a ground-truth cloud. Normal consistency pairs
/// each sample with its nearest sample on the other side.
pub fn evaluate(
    mesh: &TriangleMesh,
    gt: GroundTruth<'_>,
    n_samples: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if mesh.is_empty() {
        return Err(Error::Empty("evaluated mesh"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = sample_mesh_surface(mesh, n_samples, true, &mut rng)?;
    let (gt_cloud, to_gt): (PointCloud, Vec<f64>) = match gt {
        GroundTruth::Mesh(m) => {
            if m.is_empty() {
                return Err(Error::Empty("ground-truth mesh"));
            }
            let cloud = sample_mesh_surface(m, n_samples, true, &mut rng)?;
            let md = MeshDistance::new(m);
            let d = pred
                .points
                .iter()
                .map(|&p| md.distance(p).expect("non-empty mesh"))
                .collect();
            (cloud, d)
        }
        GroundTruth::Cloud(c) => {
            if c.is_empty() {
                return Err(Error::Empty("ground-truth cloud"));
            }
            let tree = KdTree::new(&c.points);
            let d = nearest_distances2(&pred.points, &tree)
                .into_iter()
                .map(|(_, d2)| d2.sqrt())
                .collect();
            (c.clone(), d)
        }
    };
    let md = MeshDistance::new(mesh);
    let to_pred: Vec<f64> = gt_cloud
        .points
        .iter()
        .map(|&p| md.distance(p).expect("non-empty mesh"))
        .collect();
    let mean = |d: &[f64], f: fn(f64) -> f64| d.iter().map(|&x| f(x)).sum::<f64>() / d.len() as f64;
    let nc = gt_cloud
        .has_normals()
        .then(|| normal_consistency(&pred, &gt_cloud))
        .transpose()?;
    Ok(MetricsReport {
        cd_l1: 10.0 * (mean(&to_gt, |x| x) + mean(&to_pred, |x| x)),
        cd_l2: 100.0 * (mean(&to_gt, |x| x * x) + mean(&to_pred, |x| x * x)),
        nc,
        hd: to_gt.iter().chain(&to_pred).fold(0.0f64, |a, &b| a.max(b)),
        samples_pred: pred.len(),
        samples_gt: gt_cloud.len(),
        seed,
    })
}

/// Sphere given by centre and radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: Point3,
    pub radius: f64,
}

impl Sphere {
    pub fn unit() -> Self {
        Sphere {
            center: [0.0; 3],
            radius: 1.0,
        }
    }

    /// Unsigned distance from `p` to the sphere surface.
    pub fn distance(&self, p: Point3) -> f64 {
        (dist2(p, self.center).sqrt() - self.radius).abs()
    }

    /// `n` uniform samples on the surface.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                let d: [f64; 3] = UnitSphere.sample(rng);
                [
                    self.center[0] + self.radius * d[0],
                    self.center[1] + self.radius * d[1],
                    self.center[2] + self.radius * d[2],
                ]
            })
            .collect()
    }

    /// Fixed-radius fit: centre at the centroid, radius the mean distance to
    /// it.
    pub fn fit(points: &[Point3]) -> Result<Self> {
        let center = PointCloud::new(points.to_vec())
            .centroid()
            .ok_or(Error::Empty("sphere fit input"))?;
        let radius =
            points.iter().map(|&p| norm(sub(p, center))).sum::<f64>() / points.len() as f64;
        Ok(Sphere { center, radius })
    }
}

/// Unscaled L1 Chamfer between `mesh` and an analytic sphere using exact
/// point-to-surface distances in both directions: `n` area-weighted mesh
/// samples measured against the sphere, `n` uniform sphere samples measured
/// against the mesh.
pub fn sphere_chamfer_l1_mesh(
    mesh: &TriangleMesh,
    truth: &Sphere,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if mesh.is_empty() {
        return Err(Error::Empty("evaluated mesh"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = sample_mesh_surface(mesh, n, false, &mut rng)?;
    let to_truth = pred.points.iter().map(|&p| truth.distance(p)).sum::<f64>() / n as f64;
    let md = MeshDistance::new(mesh);
    let mut to_mesh = 0.0;
    for p in truth.sample(n, &mut rng) {
        to_mesh += md.distance(p).ok_or(Error::Empty("evaluated mesh"))?;
    }
    Ok(to_truth + to_mesh / n as f64)
}

/// [`sphere_chamfer_l1_mesh`] with another sphere as the prediction.
pub fn sphere_chamfer_l1_sphere(pred: &Sphere, truth: &Sphere, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = pred
        .sample(n, &mut rng)
        .into_iter()
        .map(|p| truth.distance(p))
        .sum::<f64>();
    let b = truth
        .sample(n, &mut rng)
        .into_iter()
        .map(|p| pred.distance(p))
        .sum::<f64>();
    (a + b) / n as f64
}
