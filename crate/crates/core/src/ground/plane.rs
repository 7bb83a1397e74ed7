use nalgebra::Vector3;
use rand::seq::index::sample;
use rayon::prelude::*;

use super::normals::{covariance, symmetric_eigen};
use crate::cloud::{IndexMask, PointCloud};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Plane `a·x + b·y + c·z + d = 0` with unit `(a, b, c)`.
///
/// The normal is oriented so that `d >= 0`: the sensor origin lies on the
/// positive side.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub d: f64,
    /// Valid points within the inlier threshold of this exact plane.
    pub inliers: IndexMask,
    pub iterations: usize,
}

impl PlaneModel {
    pub fn coefficients(&self) -> [f64; 4] {
        [self.normal[0], self.normal[1], self.normal[2], self.d]
    }

    #[inline]
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.d
    }

    /// Orthogonal projection onto the plane.
    pub fn project(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.signed_distance(p);
        [
            p[0] - s * self.normal[0],
            p[1] - s * self.normal[1],
            p[2] - s * self.normal[2],
        ]
    }
}

fn oriented(normal: Vector3<f64>, d: f64) -> (Vector3<f64>, f64) {
    if d < 0.0 || (d == 0.0 && normal.z < 0.0) {
        (-normal, -d)
    } else {
        (normal, d)
    }
}

fn consensus(pos: &[[f64; 3]], n: &Vector3<f64>, d: f64, th: f64) -> usize {
    pos.iter()
        .filter(|p| (n.x * p[0] + n.y * p[1] + n.z * p[2] + d).abs() <= th)
        .count()
}

/// RANSAC road-plane fit over the valid points of `cloud`.
///
/// Each iteration draws three distinct points from its own RNG stream of
/// `seed`, so the result does not depend on scheduling. The best
/// hypothesis (largest consensus, earliest iteration on ties) is refit by
/// least squares over its consensus; the refit replaces it when its own
/// consensus is at least as large.
pub fn fit_plane_ransac(cloud: &PointCloud, th_plane: f64, max_iter: usize, seed: u64) -> Result<PlaneModel> {
    if !(th_plane > 0.0) || max_iter == 0 {
        return Err(Error::Config(
            "plane threshold and iteration count must be positive".into(),
        ));
    }
    let valid = cloud.valid_mask();
    let pos: Vec<[f64; 3]> = valid.iter().map(|i| cloud.points()[i].position()).collect();
    if pos.len() < 3 {
        return Err(Error::Degenerate(format!("{} points cannot define a plane", pos.len())));
    }
    let (_, cov, _) = covariance(pos.iter().copied());
    let (values, _) = symmetric_eigen(cov);
    if values[1] <= 1e-12 * values[2].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("all points collinear".into()));
    }

    let best = (0..max_iter)
        .into_par_iter()
        .filter_map(|it| {
            let mut rng = stream_rng(seed, it as u64);
            let s = sample(&mut rng, pos.len(), 3);
            let [a, b, c] = [0, 1, 2].map(|k| Vector3::from(pos[s.index(k)]));
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            if !(norm > 1e-12 * (b - a).norm() * (c - a).norm()) {
                return None;
            }
            let n = cross / norm;
            let d = -n.dot(&a);
            Some((consensus(&pos, &n, d, th_plane), it, n, d))
        })
        .reduce_with(|x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x });
    let Some((count, _, mut n, mut d)) = best else {
        return Err(Error::Degenerate("no non-degenerate plane hypothesis sampled".into()));
    };

    let support: Vec<[f64; 3]> = pos
        .iter()
        .copied()
        .filter(|p| (n.x * p[0] + n.y * p[1] + n.z * p[2] + d).abs() <= th_plane)
        .collect();
    let (centroid, cov, _) = covariance(support.into_iter());
    let (_, vectors) = symmetric_eigen(cov);
    let rn: Vector3<f64> = vectors.column(0).into();
    let rd = -rn.dot(&centroid);
    if consensus(&pos, &rn, rd, th_plane) >= count {
        n = rn;
        d = rd;
    }
    let (n, d) = oriented(n.normalize(), d);
    let model = PlaneModel {
        normal: n.into(),
        d,
        inliers: IndexMask::empty(cloud.len()),
        iterations: max_iter,
    };
    let pts = cloud.points();
    let inliers = IndexMask::from_predicate(cloud.len(), |i| {
        pts[i].valid && model.signed_distance(pts[i].position()).abs() <= th_plane
    });
    Ok(PlaneModel { inliers, ..model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::tests::point;
    use crate::cloud::LidarPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud_of(pts: &[[f64; 3]]) -> PointCloud {
        let points: Vec<LidarPoint> = pts
            .iter()
            .enumerate()
            .map(|(k, p)| point(0, k as u16, p[0], p[1], p[2]))
            .collect();
        PointCloud::new(1, pts.len().max(1) as u16, "p", points).unwrap()
    }

    #[test]
    fn exact_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), -2.0])
            .collect();
        let m = fit_plane_ransac(&cloud_of(&pts), 0.30, 200, 9).unwrap();
        let c = m.coefficients();
        assert!(c[0].abs() < 1e-9 && c[1].abs() < 1e-9);
        assert!((c[2] - 1.0).abs() < 1e-9 && (c[3] - 2.0).abs() < 1e-9);
        assert_eq!(m.inliers.len(), 500);
    }

    #[test]
    fn clutter_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts: Vec<[f64; 3]> = (0..400)
            .map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), -2.0])
            .collect();
        for _ in 0..100 {
            pts.push([
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(0.0..2.0),
            ]);
        }
        let m = fit_plane_ransac(&cloud_of(&pts), 0.30, 200, 3).unwrap();
        let angle = m.normal[2].clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 0.5);
        // Inlier set matches direct per-point evaluation.
        for (i, p) in pts.iter().enumerate() {
            let d = (m.normal[0] * p[0] + m.normal[1] * p[1] + m.normal[2] * p[2] + m.d).abs();
            assert_eq!(m.inliers.contains(i), d <= 0.30);
            assert_eq!(m.inliers.contains(i), i < 400);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let two = cloud_of(&[[0.0, 0.0, -2.0], [1.0, 0.0, -2.0]]);
        assert!(matches!(fit_plane_ransac(&two, 0.3, 10, 0), Err(Error::Degenerate(_))));
        let line: Vec<[f64; 3]> = (0..20).map(|k| [k as f64, 2.0 * k as f64, -2.0]).collect();
        assert!(matches!(
            fit_plane_ransac(&cloud_of(&line), 0.3, 10, 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn seeded_fit_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|_| {
                [
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    -2.0 + rng.random_range(-0.05..0.05),
                ]
            })
            .collect();
        let c = cloud_of(&pts);
        let a = fit_plane_ransac(&c, 0.3, 100, 11).unwrap();
        let b = fit_plane_ransac(&c, 0.3, 100, 11).unwrap();
        assert_eq!(a.coefficients().map(f64::to_bits), b.coefficients().map(f64::to_bits));
        assert_eq!(a.inliers, b.inliers);
    }
}
