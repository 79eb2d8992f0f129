//! Per-frame vision primitives: corner detection, pyramidal sparse optical
//! flow, edge density, and compact frame statistics. Everything is scalar
//! CPU code with fixed iteration orders, so results are reproducible across
//! runs and thread counts.

mod corners;
mod edges;
mod flow;
mod pyramid;
mod stats;

pub use corners::{min_eigen_map, shi_tomasi_corners, Corner};
pub(crate) use corners::SpacingGrid;
pub use edges::canny_edge_density;
pub use flow::{lk_track, LkParams, TrackResult};
pub use pyramid::{ImagePyramid, Plane};
pub use stats::{cosine, grayscale_entropy, hsv_histogram, HIST_BINS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("canny thresholds must satisfy lo < hi, got lo={lo} hi={hi}")]
    InvalidThresholds { lo: f32, hi: f32 },
}
