//! Non-differentiable geometry kernels: spatial indexing, point-set metrics,
//! sampling and normalisation.
//!
//! All functions are pure over immutable inputs.

pub mod brute;
mod cloud;
mod distance;
mod kdtree;
mod mesh;
mod metrics;
mod normalize;
mod sampling;
mod sphere;
pub mod vec3;

pub use cloud::PointCloud;
pub use distance::{point_triangle_distance2, MeshDistance};
pub use kdtree::KdTree;
pub use mesh::TriangleMesh;
pub use metrics::{chamfer, hausdorff, nearest_distances2, normal_consistency, ChamferMode};
pub use normalize::{normalize_unit_cube, UnitCubeTransform, NORMALIZED_HALF_EXTENT};
pub use sampling::{sample_mesh_barycentric, sample_mesh_surface, SurfaceSample};
pub use sphere::fibonacci_sphere;

pub type Point3 = [f64; 3];
