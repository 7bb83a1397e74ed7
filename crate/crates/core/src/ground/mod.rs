//! Road-surface extraction: plane RANSAC followed by normal-based region
//! growing.

mod knn;
mod normals;
mod plane;
mod region;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use knn::NeighborGraph;
pub use normals::{estimate_normals, estimate_normals_with, SurfaceNormal};
pub use plane::{fit_plane_ransac, PlaneModel};
pub use region::{
    region_grow, region_grow_with_graph, select_road, select_road_cluster, Cluster, RegionParams, RoadSelection,
};

pub(crate) use normals::{covariance, symmetric_eigen};

/// `[ground]` configuration group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundParams {
    /// Plane inlier distance in meters.
    pub th_plane: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub k_neighbors: usize,
    pub th_angle_deg: f64,
    pub th_curve: f64,
    /// Half-width in meters of the strip along the vehicle's x axis searched
    /// for the return nearest the nadir.
    pub nadir_corridor: f64,
    pub road_selection: RoadSelection,
}

impl Default for GroundParams {
    fn default() -> Self {
        GroundParams {
            th_plane: 0.30,
            max_iter: 200,
            seed: 0,
            k_neighbors: 30,
            th_angle_deg: 2.0,
            th_curve: 1.0,
            nadir_corridor: 1.0,
            road_selection: RoadSelection::FrontAndRear,
        }
    }
}

impl GroundParams {
    pub fn region(&self) -> RegionParams {
        RegionParams {
            k_neighbors: self.k_neighbors,
            th_angle_deg: self.th_angle_deg,
            th_curve: self.th_curve,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.th_plane > 0.0) {
            return Err(Error::Config("ground.th_plane must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("ground.max_iter must be positive".into()));
        }
        if !(self.nadir_corridor > 0.0) {
            return Err(Error::Config("ground.nadir_corridor must be positive".into()));
        }
        self.region().validate()
    }
}
