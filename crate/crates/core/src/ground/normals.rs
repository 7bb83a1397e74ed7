use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::knn::NeighborGraph;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Local surface estimate at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNormal {
    /// Unit normal, oriented toward the sensor origin.
    pub normal: [f64; 3],
    /// Surface variation `λ_min / (λ1 + λ2 + λ3)`, in `[0, 1/3]`.
    pub curvature: f64,
    pub neighbors: usize,
    /// Set when the neighborhood has zero spread and the normal is arbitrary.
    pub degenerate: bool,
}

/// Centroid and population covariance of a point set.
pub(crate) fn covariance(points: impl Iterator<Item = [f64; 3]>) -> (Vector3<f64>, Matrix3<f64>, usize) {
    let pts: Vec<Vector3<f64>> = points.map(Vector3::from).collect();
    let n = pts.len();
    if n == 0 {
        return (Vector3::zeros(), Matrix3::zeros(), 0);
    }
    let centroid = pts.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    (centroid, cov / n as f64, n)
}

/// Eigenvalues ascending with matching unit eigenvectors as columns.
pub(crate) fn symmetric_eigen(cov: Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.map(|k| eig.eigenvalues[k].max(0.0));
    let vectors = Matrix3::from_columns(&order.map(|k| eig.eigenvectors.column(k).normalize()));
    (values, vectors)
}

fn surface_at(position: Vector3<f64>, neighborhood: impl Iterator<Item = [f64; 3]>) -> SurfaceNormal {
    let (_, cov, n) = covariance(neighborhood);
    let (values, vectors) = symmetric_eigen(cov);
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return SurfaceNormal {
            normal: [0.0, 0.0, 1.0],
            curvature: 0.0,
            neighbors: n,
            degenerate: true,
        };
    }
    let mut normal: Vector3<f64> = vectors.column(0).into();
    if normal.dot(&position) > 0.0 {
        normal = -normal;
    }
    SurfaceNormal {
        normal: normal.into(),
        curvature: (values[0] / total).clamp(0.0, 1.0 / 3.0),
        neighbors: n,
        degenerate: false,
    }
}

fn positions(cloud: &PointCloud) -> Result<Vec<[f64; 3]>> {
    cloud
        .points()
        .iter()
        .map(|p| {
            if p.valid {
                Ok(p.position())
            } else {
                Err(Error::Degenerate(format!(
                    "no-return slot (ring {}, col {}) in normal estimation input",
                    p.ring, p.col
                )))
            }
        })
        .collect()
}

/// Normals from the `k` nearest neighbors of every point.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<Vec<SurfaceNormal>> {
    let pos = positions(cloud)?;
    if k < 3 {
        return Err(Error::Config(format!("k_neighbors {k} must be at least 3")));
    }
    let graph = NeighborGraph::build(&pos, k)?;
    estimate_normals_with(cloud, &graph)
}

/// Normals over a precomputed neighbor graph of `cloud`.
pub fn estimate_normals_with(cloud: &PointCloud, graph: &NeighborGraph) -> Result<Vec<SurfaceNormal>> {
    let pos = positions(cloud)?;
    if graph.len() != pos.len() {
        return Err(Error::Structural(format!(
            "neighbor graph over {} points used with a cloud of {}",
            graph.len(),
            pos.len()
        )));
    }
    Ok((0..pos.len())
        .into_par_iter()
        .map(|i| {
            let hood = graph.neighbors(i).iter().map(|&j| pos[j as usize]);
            surface_at(Vector3::from(pos[i]), hood)
        })
        .collect())
}
