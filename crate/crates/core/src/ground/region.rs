use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::knn::NeighborGraph;
use super::normals::SurfaceNormal;
use crate::cloud::{IndexMask, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub k_neighbors: usize,
    pub th_angle_deg: f64,
    /// Both the curvature-difference bound for joining a region and the
    /// curvature below which a joined point keeps growing it. Curvature
    /// never exceeds 1/3, so values above that disable both tests.
    pub th_curve: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            k_neighbors: 30,
            th_angle_deg: 2.0,
            th_curve: 1.0,
        }
    }
}

impl RegionParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 3 {
            return Err(Error::Config(format!(
                "k_neighbors {} must be at least 3",
                self.k_neighbors
            )));
        }
        if !(self.th_angle_deg > 0.0 && self.th_angle_deg < 90.0) {
            return Err(Error::Config(format!(
                "th_angle_deg {} must lie in (0, 90)",
                self.th_angle_deg
            )));
        }
        if !(self.th_curve > 0.0) {
            return Err(Error::Config("th_curve must be positive".into()));
        }
        Ok(())
    }

    /// Whether `b` may join the region through `a`.
    #[inline]
    pub fn linked(&self, a: &SurfaceNormal, b: &SurfaceNormal) -> bool {
        let dot: f64 = (0..3).map(|k| a.normal[k] * b.normal[k]).sum();
        dot.clamp(-1.0, 1.0).acos() < self.th_angle_deg.to_radians()
            && (a.curvature - b.curvature).abs() < self.th_curve
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: IndexMask,
    pub seed: usize,
    pub mean_normal: [f64; 3],
}

/// Region growing over the `k_neighbors` graph of `cloud`.
pub fn region_grow(cloud: &PointCloud, normals: &[SurfaceNormal], params: &RegionParams) -> Result<Vec<Cluster>> {
    params.validate()?;
    let pos: Vec<[f64; 3]> = cloud.points().iter().map(|p| p.position()).collect();
    if pos.is_empty() {
        return Ok(Vec::new());
    }
    let graph = NeighborGraph::build(&pos, params.k_neighbors.min(pos.len()))?;
    region_grow_with_graph(cloud, normals, &graph, params)
}

/// Region growing over a precomputed neighbor graph.
///
/// Seeds are taken in ascending curvature order (index breaks ties). A
/// region absorbs an unassigned neighbor when the normals differ by less
/// than `th_angle_deg` and curvatures by less than `th_curve`; the
/// neighbor continues the growth if its curvature is below `th_curve`.
pub fn region_grow_with_graph(
    cloud: &PointCloud,
    normals: &[SurfaceNormal],
    graph: &NeighborGraph,
    params: &RegionParams,
) -> Result<Vec<Cluster>> {
    params.validate()?;
    let n = cloud.len();
    if normals.len() != n || graph.len() != n {
        return Err(Error::Structural(format!(
            "cloud of {n} points with {} normals and a graph over {}",
            normals.len(),
            graph.len()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| normals[a].curvature.total_cmp(&normals[b].curvature).then(a.cmp(&b)));

    const UNASSIGNED: u32 = u32::MAX;
    let mut owner = vec![UNASSIGNED; n];
    let mut seeds = Vec::new();
    let mut queue = VecDeque::new();
    for &seed in &order {
        if owner[seed] != UNASSIGNED {
            continue;
        }
        let id = seeds.len() as u32;
        seeds.push(seed);
        owner[seed] = id;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in graph.neighbors(p) {
                let q = q as usize;
                if owner[q] != UNASSIGNED || !params.linked(&normals[p], &normals[q]) {
                    continue;
                }
                owner[q] = id;
                if normals[q].curvature < params.th_curve {
                    queue.push_back(q);
                }
            }
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    for (i, &c) in owner.iter().enumerate() {
        members[c as usize].push(i);
    }
    Ok(members
        .into_iter()
        .zip(seeds)
        .map(|(m, seed)| {
            let mut sum = [0.0; 3];
            for &i in &m {
                for k in 0..3 {
                    sum[k] += normals[i].normal[k];
                }
            }
            let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mean_normal = if norm > 0.0 {
                sum.map(|v| v / norm)
            } else {
                [0.0, 0.0, 1.0]
            };
            Cluster {
                members: IndexMask::new(m, n).expect("ascending by construction"),
                seed,
                mean_normal,
            }
        })
        .collect())
}

/// Which clusters make up the road surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadSelection {
    /// Only the cluster owning the return nearest the nadir.
    Nadir,
    /// The clusters owning the nearest return ahead of the sensor and the
    /// nearest one behind it. The blind zone around the sensor splits a
    /// straight road into a front and a rear patch that share no neighbors.
    #[default]
    FrontAndRear,
}

/// Index of the cluster owning the corridor return closest to the z axis,
/// among returns accepted by `side`.
fn nearest_in_corridor(
    clusters: &[Cluster],
    cloud: &PointCloud,
    corridor: f64,
    side: impl Fn(f64) -> bool,
) -> Option<usize> {
    let pts = cloud.points();
    let mut best: Option<(f64, usize)> = None;
    for (c, cluster) in clusters.iter().enumerate() {
        for i in cluster.members.iter() {
            let p = &pts[i];
            if !p.valid || p.y.abs() > corridor || !side(p.x) {
                continue;
            }
            let r = p.x.hypot(p.y);
            if best.is_none_or(|(br, _)| r < br) {
                best = Some((r, c));
            }
        }
    }
    best.map(|(_, c)| c)
}

fn largest(clusters: &[Cluster]) -> usize {
    let mut largest = 0;
    for (c, cl) in clusters.iter().enumerate() {
        if cl.members.len() > clusters[largest].members.len() {
            largest = c;
        }
    }
    largest
}

/// Picks the road cluster: the one owning the return closest to the z axis
/// among returns within `corridor` meters of the vehicle's x axis. Falls
/// back to the largest cluster when that strip is empty.
pub fn select_road_cluster(clusters: &[Cluster], cloud: &PointCloud, corridor: f64) -> Result<IndexMask> {
    if clusters.is_empty() {
        return Err(Error::Degenerate("no clusters to choose a road surface from".into()));
    }
    let pick = nearest_in_corridor(clusters, cloud, corridor, |_| true).unwrap_or_else(|| largest(clusters));
    Ok(clusters[pick].members.clone())
}

/// Road surface under `mode`: a single cluster, or the union of the front
/// and rear nadir clusters (one of them may be missing).
pub fn select_road(clusters: &[Cluster], cloud: &PointCloud, corridor: f64, mode: RoadSelection) -> Result<IndexMask> {
    match mode {
        RoadSelection::Nadir => select_road_cluster(clusters, cloud, corridor),
        RoadSelection::FrontAndRear => {
            if clusters.is_empty() {
                return Err(Error::Degenerate("no clusters to choose a road surface from".into()));
            }
            let front = nearest_in_corridor(clusters, cloud, corridor, |x| x >= 0.0);
            let rear = nearest_in_corridor(clusters, cloud, corridor, |x| x < 0.0);
            let picks: Vec<usize> = match (front, rear) {
                (None, None) => vec![largest(clusters)],
                (Some(a), Some(b)) if a != b => vec![a, b],
                (Some(a), _) | (None, Some(a)) => vec![a],
            };
            let mut idx: Vec<usize> = picks.iter().flat_map(|&c| clusters[c].members.iter()).collect();
            idx.sort_unstable();
            IndexMask::new(idx, cloud.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::tests::point;
    use crate::cloud::LidarPoint;
    use crate::ground::estimate_normals;

    fn cloud_of(pts: &[[f64; 3]]) -> PointCloud {
        let points: Vec<LidarPoint> = pts
            .iter()
            .enumerate()
            .map(|(k, p)| point((k / 4096) as u16, (k % 4096) as u16, p[0], p[1], p[2]))
            .collect();
        PointCloud::new(64, 4096, "g", points).unwrap()
    }

    fn grid(nx: usize, ny: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                v.push(f(i as f64, j as f64));
            }
        }
        v
    }

    fn grow(pts: &[[f64; 3]]) -> (PointCloud, Vec<Cluster>) {
        let c = cloud_of(pts);
        let normals = estimate_normals(&c, 30).unwrap();
        let clusters = region_grow(&c, &normals, &RegionParams::default()).unwrap();
        (c, clusters)
    }

    fn assert_partition(clusters: &[Cluster], n: usize) {
        let mut seen = vec![false; n];
        for cl in clusters {
            for i in cl.members.iter() {
                assert!(!seen[i], "point {i} in two clusters");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn single_plane_single_cluster() {
        let pts = grid(40, 40, |i, j| [5.0 + i * 0.25, -5.0 + j * 0.25, -2.0]);
        let (_, clusters) = grow(&pts);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members.len(), pts.len());
    }

    #[test]
    fn floor_and_wall_split() {
        // Floor z = -2 for x in [5, 15); wall x = 15 for z in (-2, 3].
        let mut pts = grid(40, 40, |i, j| [5.0 + i * 0.25, -5.0 + j * 0.25, -2.0]);
        let floor = pts.len();
        pts.extend(grid(20, 40, |i, j| [15.0, -5.0 + j * 0.25, -2.0 + (i + 1.0) * 0.25]));
        let (_, clusters) = grow(&pts);
        assert_partition(&clusters, pts.len());
        let big: Vec<&Cluster> = clusters.iter().filter(|c| c.members.len() > 50).collect();
        assert_eq!(
            big.len(),
            2,
            "sizes {:?}",
            clusters.iter().map(|c| c.members.len()).collect::<Vec<_>>()
        );
        for cl in big {
            let on_floor = cl.members.iter().filter(|&i| i < floor).count();
            assert!(on_floor == 0 || on_floor == cl.members.len() || on_floor > cl.members.len() * 9 / 10);
        }
    }

    #[test]
    fn isolated_points_become_singletons() {
        let mut pts = grid(30, 30, |i, j| [5.0 + i * 0.25, -4.0 + j * 0.25, -2.0]);
        let plane = pts.len();
        for k in 0..5 {
            let a = k as f64;
            pts.push([60.0 + 9.0 * a, 40.0 - 13.0 * a * a, 5.0 + 3.0 * a]);
        }
        let (_, clusters) = grow(&pts);
        assert_partition(&clusters, pts.len());
        let plane_cluster = clusters.iter().find(|c| c.members.contains(0)).unwrap();
        assert_eq!(plane_cluster.members.len(), plane);
    }

    #[test]
    fn curvature_test_is_inert_at_defaults() {
        let p = RegionParams::default();
        let a = SurfaceNormal {
            normal: [0.0, 0.0, 1.0],
            curvature: 0.0,
            neighbors: 30,
            degenerate: false,
        };
        let b = SurfaceNormal {
            curvature: 1.0 / 3.0,
            ..a
        };
        assert!(p.linked(&a, &b));
        let strict = RegionParams { th_curve: 0.1, ..p };
        assert!(!strict.linked(&a, &b));
    }

    #[test]
    fn road_cluster_choice() {
        // Road under the vehicle and a sidewalk of equal extent beside it.
        let mut pts = grid(40, 20, |i, j| [-10.0 + i * 0.5, -2.0 + j * 0.2, -1.9]);
        let road = pts.len();
        pts.extend(grid(40, 20, |i, j| [-10.0 + i * 0.5, 3.0 + j * 0.2, -1.75]));
        let c = cloud_of(&pts);
        let a = IndexMask::new((0..road).collect(), pts.len()).unwrap();
        let b = IndexMask::new((road..pts.len()).collect(), pts.len()).unwrap();
        let mk = |m: IndexMask| Cluster {
            seed: m.indices()[0],
            members: m,
            mean_normal: [0.0, 0.0, 1.0],
        };
        let clusters = vec![mk(b.clone()), mk(a.clone())];
        assert_eq!(select_road_cluster(&clusters, &c, 1.0).unwrap(), a);
        assert_eq!(select_road_cluster(&clusters[..1], &c, 1.0).unwrap(), b);
        assert!(select_road_cluster(&[], &c, 1.0).is_err());
    }

    #[test]
    fn growth_links_respect_thresholds() {
        let mut pts = grid(30, 30, |i, j| {
            [5.0 + i * 0.25, -4.0 + j * 0.25, -2.0 + 0.02 * (i * j).sin()]
        });
        pts.extend(grid(10, 30, |i, j| [12.5, -4.0 + j * 0.25, -1.9 + i * 0.2]));
        let c = cloud_of(&pts);
        let params = RegionParams::default();
        let graph = NeighborGraph::build(&pts, 30).unwrap();
        let normals = crate::ground::estimate_normals_with(&c, &graph).unwrap();
        let clusters = region_grow_with_graph(&c, &normals, &graph, &params).unwrap();
        assert_partition(&clusters, pts.len());
        // Every member other than the seed is reachable from the seed through
        // links that satisfy both thresholds.
        for cl in &clusters {
            let mut reached = vec![cl.seed];
            let mut frontier = vec![cl.seed];
            while let Some(p) = frontier.pop() {
                for &q in graph.neighbors(p) {
                    let q = q as usize;
                    if cl.members.contains(q) && !reached.contains(&q) && params.linked(&normals[p], &normals[q]) {
                        reached.push(q);
                        frontier.push(q);
                    }
                }
            }
            assert_eq!(reached.len(), cl.members.len());
        }
    }

    #[test]
    fn front_and_rear_patches() {
        // Two road patches on either side of a blind zone plus a sidewalk.
        let mut pts = Vec::new();
        for x in 0..20 {
            for y in 0..10 {
                let (x, y) = (x as f64 * 0.3, y as f64 * 0.3 - 1.5);
                pts.push([10.0 + x, y, -1.9]);
                pts.push([-10.0 - x, y, -1.9]);
                pts.push([10.0 + x, y - 6.0, -1.75]);
            }
        }
        let c = cloud_of(&pts);
        let front = IndexMask::from_predicate(c.len(), |i| i % 3 == 0);
        let rear = IndexMask::from_predicate(c.len(), |i| i % 3 == 1);
        let side = IndexMask::from_predicate(c.len(), |i| i % 3 == 2);
        let clusters: Vec<Cluster> = [&front, &rear, &side]
            .into_iter()
            .map(|m| Cluster {
                members: m.clone(),
                seed: m.indices()[0],
                mean_normal: [0.0, 0.0, 1.0],
            })
            .collect();
        let both = select_road(&clusters, &c, 1.0, RoadSelection::FrontAndRear).unwrap();
        assert_eq!(both, IndexMask::from_predicate(c.len(), |i| i % 3 != 2));
        let one = select_road(&clusters, &c, 1.0, RoadSelection::Nadir).unwrap();
        assert!(one == front || one == rear);
        // With only one patch present the rule degrades to the nadir rule.
        assert_eq!(
            select_road(&clusters[..1], &c, 1.0, RoadSelection::FrontAndRear).unwrap(),
            front
        );
    }
}
