use nalgebra::{Matrix3, SymmetricEigen};

use super::{PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

/// PCA normals over the `k` nearest neighbours of every point.
///
/// Each normal is the least-variance eigenvector of the neighbourhood
/// covariance, flipped to face `viewpoint`. Neighbourhoods whose covariance
/// has rank below two get flagged in `excluded` and keep a placeholder normal.
pub fn estimate_normals(
    cloud: &PointCloud,
    index: &SpatialIndex,
    k: usize,
    viewpoint: &Vec3,
) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::invalid(format!("k must be at least 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(Error::invalid(format!(
            "cloud has {} points, fewer than k = {k}",
            cloud.len()
        )));
    }
    let mut normals = Vec::with_capacity(cloud.len());
    let mut excluded = Vec::with_capacity(cloud.len());
    for p in &cloud.positions {
        let nbrs = index.knn(p, k);
        match pca_normal(nbrs.iter().map(|&(i, _)| cloud.positions[i])) {
            Some(mut n) => {
                if (viewpoint - p).dot(&n) < 0.0 {
                    n = -n;
                }
                normals.push(n);
                excluded.push(false);
            }
            None => {
                normals.push(Vec3::z());
                excluded.push(true);
            }
        }
    }
    let mut out = cloud.clone();
    out.normals = Some(normals);
    out.excluded = excluded;
    Ok(out)
}

fn pca_normal(points: impl Iterator<Item = Vec3>) -> Option<Vec3> {
    let pts: Vec<Vec3> = points.collect();
    let mean = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if largest <= 0.0 || middle <= 1e-10 * largest {
        return None;
    }
    let n: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    Some(n.normalize())
}

/// Mean distance from each point to its nearest other point.
pub fn average_spacing(cloud: &PointCloud, index: &SpatialIndex) -> f64 {
    if cloud.len() < 2 {
        return 0.0;
    }
    let total: f64 = cloud
        .positions
        .iter()
        .map(|p| index.knn(p, 2).get(1).map_or(0.0, |&(_, d)| d))
        .sum();
    total / cloud.len() as f64
}
