//! Simple online and realtime tracking (SORT).

pub mod assignment;
pub mod kalman;
pub mod tracker;

pub use assignment::{associate, Association};
pub use kalman::{bbox_to_measurement, measurement_to_bbox, NoiseModel, TrackState};
pub use tracker::{SortParams, SortTracker, Track, TrackReport};
