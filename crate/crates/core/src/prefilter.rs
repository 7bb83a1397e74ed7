//! Ring cut-off and height band.

use serde::{Deserialize, Serialize};

use crate::cloud::{IndexMask, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrefilterParams {
    /// Rings `0..max_ring` are kept, counted from the lowest beam upward.
    pub max_ring: u16,
    /// Lower band limit in meters. A depth below the sensor unless
    /// `z_band_absolute` is set.
    pub z_low: f64,
    pub z_high: f64,
    /// Keep `z_low <= z <= z_high` literally instead of
    /// `-z_high <= z <= -z_low`.
    pub z_band_absolute: bool,
}

impl Default for PrefilterParams {
    fn default() -> Self {
        PrefilterParams {
            max_ring: 30,
            z_low: 1.44,
            z_high: 2.44,
            z_band_absolute: false,
        }
    }
}

impl PrefilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_ring == 0 {
            return Err(Error::Config("prefilter.max_ring must be positive".into()));
        }
        if !(self.z_low < self.z_high) {
            return Err(Error::Config(format!(
                "prefilter.z_low {} must be below z_high {}",
                self.z_low, self.z_high
            )));
        }
        Ok(())
    }

    /// Inclusive z interval kept in the sensor frame.
    pub fn z_band(&self) -> (f64, f64) {
        if self.z_band_absolute {
            (self.z_low, self.z_high)
        } else {
            (-self.z_high, -self.z_low)
        }
    }
}

/// Indices of valid points on rings below `max_ring` whose z lies in the band.
pub fn prefilter(cloud: &PointCloud, params: &PrefilterParams) -> Result<IndexMask> {
    params.validate()?;
    if params.max_ring > cloud.n_layers() {
        return Err(Error::Config(format!(
            "prefilter.max_ring {} exceeds the cloud's {} layers",
            params.max_ring,
            cloud.n_layers()
        )));
    }
    let (lo, hi) = params.z_band();
    let pts = cloud.points();
    Ok(IndexMask::from_predicate(cloud.len(), |i| {
        let p = &pts[i];
        p.valid && p.ring < params.max_ring && p.z >= lo && p.z <= hi
    }))
}
