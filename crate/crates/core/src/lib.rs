pub mod cc;
pub mod config;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod lig;
pub mod pipeline;
pub mod sort;
pub mod synth;
pub mod upsample;

pub use error::{Error, Result};
pub use frame::Frame;
pub use geometry::{bbox_iou, centroid_distance, BBox, Detection, Point};
