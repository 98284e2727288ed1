use super::vec3::dot;
use super::{KdTree, Point3, PointCloud};
use crate::error::{Error, Result};

/// Distance convention for [`chamfer`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChamferMode {
    /// Unsquared nearest distances.
    L1,
    /// Squared nearest distances.
    L2,
}

/// For every point of `from`, the nearest point of `to` and its squared
/// distance.
pub fn nearest_distances2(from: &[Point3], to: &KdTree) -> Vec<(usize, f64)> {
    from.iter()
        .map(|&p| to.nearest(p).expect("nearest on empty tree"))
        .collect()
}

fn directional_mean(from: &[Point3], to: &KdTree, mode: ChamferMode) -> f64 {
    let total: f64 = nearest_distances2(from, to)
        .into_iter()
        .map(|(_, d2)| match mode {
            ChamferMode::L1 => d2.sqrt(),
            ChamferMode::L2 => d2,
        })
        .sum();
    total / from.len() as f64
}

/// Symmetric Chamfer distance: the mean nearest distance from `a` to `b`
/// plus the mean nearest distance from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud, mode: ChamferMode) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer input cloud"));
    }
    let ta = KdTree::new(&a.points);
    let tb = KdTree::new(&b.points);
    Ok(directional_mean(&a.points, &tb, mode) + directional_mean(&b.points, &ta, mode))
}

/// Largest nearest-neighbour distance, over both directions.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("hausdorff input cloud"));
    }
    let one_way = |from: &[Point3], to: &[Point3]| {
        let tree = KdTree::new(to);
        nearest_distances2(from, &tree)
            .into_iter()
            .map(|(_, d2)| d2)
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    Ok(one_way(&a.points, &b.points).max(one_way(&b.points, &a.points)))
}

/// Mean absolute cosine between each normal and the normal of its nearest
/// neighbour in the other cloud, averaged over both directions.
pub fn normal_consistency(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let (Some(na), Some(nb)) = (&a.normals, &b.normals) else {
        return Err(Error::invalid(
            "normal consistency needs normals on both clouds",
        ));
    };
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("normal consistency input cloud"));
    }
    let one_way = |from: &[Point3], from_n: &[Point3], to: &[Point3], to_n: &[Point3]| {
        let tree = KdTree::new(to);
        let total: f64 = nearest_distances2(from, &tree)
            .into_iter()
            .zip(from_n)
            .map(|((j, _), n)| dot(*n, to_n[j]).abs().min(1.0))
            .sum();
        total / from.len() as f64
    };
    Ok(0.5 * (one_way(&a.points, na, &b.points, nb) + one_way(&b.points, nb, &a.points, na)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(p: &[Point3]) -> PointCloud {
        PointCloud::new(p.to_vec())
    }

    #[test]
    fn identical_clouds_are_zero() {
        let a = cloud(&[[0.0, 1.0, 2.0], [3.0, -1.0, 0.5]]);
        assert_eq!(chamfer(&a, &a, ChamferMode::L1).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &a, ChamferMode::L2).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn two_to_one_example() {
        let a = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b, ChamferMode::L2).unwrap(), 2.0);
    }

    #[test]
    fn single_pair() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        // one unit each way
        assert_eq!(chamfer(&a, &b, ChamferMode::L1).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &b, ChamferMode::L2).unwrap(), 2.0);
        let c = cloud(&[[3.0, 4.0, 0.0]]);
        assert_eq!(hausdorff(&a, &c).unwrap(), 5.0);
    }

    #[test]
    fn empty_rejected() {
        let a = cloud(&[[0.0; 3]]);
        let e = PointCloud::default();
        assert!(chamfer(&a, &e, ChamferMode::L1).is_err());
        assert!(hausdorff(&e, &a).is_err());
    }

    #[test]
    fn normal_consistency_flip_invariant() {
        let p = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        let n = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        let flipped = vec![[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]];
        let a = PointCloud::with_normals(p.clone(), n).unwrap();
        let b = PointCloud::with_normals(p, flipped).unwrap();
        assert_eq!(normal_consistency(&a, &a).unwrap(), 1.0);
        assert_eq!(normal_consistency(&a, &b).unwrap(), 1.0);
        assert!(normal_consistency(&a, &cloud(&[[0.0; 3]])).is_err());
    }
}
