//! Pipeline configuration file.
//!
//! TOML with one table per stage; every key is optional and defaults to the
//! reference parameter values. Unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//! workers = 0
//!
//! [prefilter]
//! max_ring = 30
//! z_low = 1.44
//! z_high = 2.44
//!
//! [ground]
//! th_plane = 0.30
//! max_iter = 200
//! k_neighbors = 30
//! th_angle_deg = 2.0
//! th_curve = 1.0
//!
//! [threshold]
//! channel = "reflectivity"
//!
//! [lines]
//! th_lines = 0.15
//! max_lines = 10
//! min_support = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::GroundParams;
use crate::lines::LineParams;
use crate::prefilter::PrefilterParams;
use crate::threshold::{Channel, ThresholdParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Seeds both RANSAC stages; overrides their own `seed` keys.
    pub seed: u64,
    /// Frames processed concurrently in batch mode; 0 uses every core.
    pub workers: usize,
    /// Default output directory for CLI runs.
    pub out_dir: Option<PathBuf>,
    pub prefilter: PrefilterParams,
    pub ground: GroundParams,
    pub threshold: ThresholdParams,
    pub lines: LineParams,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut c: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.apply_seed();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.prefilter.validate()?;
        self.ground.validate()?;
        self.threshold.validate()?;
        self.lines.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.apply_seed();
        self
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.threshold.channel = channel;
        self
    }

    fn apply_seed(&mut self) {
        self.ground.seed = self.seed;
        self.lines.seed = self.seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::T0Mode;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.prefilter.max_ring, 30);
        assert_eq!((c.prefilter.z_low, c.prefilter.z_high), (1.44, 2.44));
        assert_eq!(
            (c.ground.th_plane, c.ground.max_iter, c.ground.k_neighbors),
            (0.30, 200, 30)
        );
        assert_eq!((c.ground.th_angle_deg, c.ground.th_curve), (2.0, 1.0));
        assert_eq!(
            (c.lines.th_lines, c.lines.max_lines, c.lines.min_support),
            (0.15, 10, 10)
        );
        assert_eq!(c.threshold.n_bins, 256);
        assert_eq!(c.threshold.channel, Channel::Reflectivity);
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn partial_file() {
        let c = PipelineConfig::from_toml_str(
            "seed = 7\n[threshold]\nchannel = \"intensity\"\nt0_mode = \"mean_plus_var\"\n[lines]\nth_lines = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.threshold.channel, Channel::Intensity);
        assert_eq!(c.threshold.t0_mode, T0Mode::MeanPlusVar);
        assert_eq!(c.lines.th_lines, 0.2);
        assert_eq!((c.ground.seed, c.lines.seed), (7, 7));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            PipelineConfig::from_toml_str("[ground]\nth_plan = 0.3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("colour = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("[lines]\nth_lines = -1.0\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig::default().with_seed(3).with_channel(Channel::Intensity);
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }
}
