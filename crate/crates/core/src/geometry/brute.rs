//! Brute-force double-loop references for the indexed routines.
//!
//! These deliberately share nothing with [`super::KdTree`] beyond the
//! distance function, and back the `oracle` CLI subcommand.

use super::vec3::dist2;
use super::{ChamferMode, Point3};
use crate::error::{Error, Result};

/// `k` nearest indices by full scan, ties broken by lower index.
pub fn knn(points: &[Point3], query: Point3, k: usize) -> Result<Vec<usize>> {
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds cloud size {}",
            points.len()
        )));
    }
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (dist2(query, p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(all.into_iter().take(k).map(|(_, i)| i).collect())
}

fn min_d2(query: Point3, points: &[Point3]) -> f64 {
    points
        .iter()
        .map(|&p| dist2(query, p))
        .fold(f64::INFINITY, f64::min)
}

fn directional_mean(a: &[Point3], b: &[Point3], mode: ChamferMode) -> f64 {
    let total: f64 = a
        .iter()
        .map(|&p| {
            let d2 = min_d2(p, b);
            match mode {
                ChamferMode::L1 => d2.sqrt(),
                ChamferMode::L2 => d2,
            }
        })
        .sum();
    total / a.len() as f64
}

pub fn chamfer(a: &[Point3], b: &[Point3], mode: ChamferMode) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer input cloud"));
    }
    Ok(directional_mean(a, b, mode) + directional_mean(b, a, mode))
}

pub fn hausdorff(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("hausdorff input cloud"));
    }
    let one_way = |x: &[Point3], y: &[Point3]| {
        x.iter()
            .map(|&p| min_d2(p, y))
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    Ok(one_way(a, b).max(one_way(b, a)))
}
