//! Road-marking extraction from organized LIDAR point clouds.

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops over
// small fixed arrays read closer to the vector math they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cloud;
pub mod config;
pub mod error;
pub mod ground;
pub mod io;
pub mod lines;
pub mod metrics;
pub mod pipeline;
pub mod prefilter;
pub mod rng;
pub mod synth;
pub mod threshold;

pub use cloud::{IndexMask, Label, LidarPoint, PointCloud};
pub use error::{Error, Result};
