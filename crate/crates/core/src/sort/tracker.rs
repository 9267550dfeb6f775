use serde::{Deserialize, Serialize};

use super::assignment::associate;
use super::kalman::{bbox_to_measurement, NoiseModel, TrackState};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SortParams {
    /// Minimum IoU for a track/detection pair to be associated.
    pub iou_min: f64,
    /// Frames a track may go unmatched before it is dropped.
    pub max_age: usize,
    /// Updates needed before a track is reported.
    pub min_hits: usize,
    /// Report fresh, never-missed tracks during the first `min_hits` frames.
    pub warmup_reporting: bool,
    pub noise: NoiseModel,
}

impl Default for SortParams {
    fn default() -> Self {
        SortParams {
            iou_min: 0.3,
            max_age: 1,
            min_hits: 3,
            warmup_reporting: true,
            noise: NoiseModel::default(),
        }
    }
}

impl SortParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_min > 0.0 && self.iou_min < 1.0) {
            return Err(Error::param("iou_min", format!("{} (must be in (0, 1))", self.iou_min)));
        }
        if self.max_age == 0 {
            return Err(Error::param("max_age", "must be >= 1"));
        }
        if self.min_hits == 0 {
            return Err(Error::param("min_hits", "must be >= 1"));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    /// Number of detections absorbed, including the one that created it.
    pub hits: usize,
    /// Frames since creation.
    pub age: usize,
    pub time_since_update: usize,
    pub confirmed: bool,
    /// Score of the most recent matched detection.
    pub score: f64,
}

/// A track reported for the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackReport {
    pub track_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

/// SORT multi-object tracker. Frames must be fed in strictly increasing
/// index order; one tracker per video.
#[derive(Debug, Clone)]
pub struct SortTracker {
    params: SortParams,
    tracks: Vec<Track>,
    next_id: u64,
    frames_seen: usize,
    last_frame: Option<usize>,
}

impl SortTracker {
    pub fn new(params: SortParams) -> Result<Self> {
        params.validate()?;
        Ok(SortTracker {
            params,
            tracks: Vec::new(),
            next_id: 1,
            frames_seen: 0,
            last_frame: None,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances the tracker by one frame and returns the tracks to report for
    /// it, ordered by id.
    pub fn step(&mut self, frame_index: usize, detections: &[Detection]) -> Result<Vec<TrackReport>> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::OutOfOrder {
                    last,
                    got: frame_index,
                });
            }
        }
        self.last_frame = Some(frame_index);
        self.frames_seen += 1;
        let p = self.params;

        let predicted: Vec<BBox> = self
            .tracks
            .iter_mut()
            .map(|t| {
                t.state.predict(&p.noise);
                t.age += 1;
                t.time_since_update += 1;
                t.state.bbox()
            })
            .collect();
        let boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(&predicted, &boxes, p.iou_min);

        for &(t, d) in &assoc.matches {
            let track = &mut self.tracks[t];
            track.state.update(&bbox_to_measurement(&boxes[d]), &p.noise);
            track.hits += 1;
            track.time_since_update = 0;
            track.score = detections[d].score;
            track.confirmed |= track.hits >= p.min_hits;
        }
        for &d in &assoc.unmatched_detections {
            self.tracks.push(Track {
                id: self.next_id,
                state: TrackState::from_bbox(&boxes[d], &p.noise),
                hits: 1,
                age: 0,
                time_since_update: 0,
                confirmed: p.min_hits <= 1,
                score: detections[d].score,
            });
            self.next_id += 1;
        }
        self.tracks.retain(|t| t.time_since_update <= p.max_age);

        let warmup = p.warmup_reporting && self.frames_seen <= p.min_hits;
        Ok(self
            .tracks
            .iter()
            .filter(|t| {
                t.time_since_update == 0 && (t.confirmed || (warmup && t.hits == t.age + 1))
            })
            .map(|t| TrackReport {
                track_id: t.id,
                bbox: t.state.bbox(),
                score: t.score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn det(frame: usize, x: f64, y: f64, side: f64) -> Detection {
        let bbox = BBox::new(x, y, x + side - 1.0, y + side - 1.0).unwrap();
        Detection {
            frame_index: frame,
            bbox,
            centroid: bbox.center(),
            score: 0.5,
            area: 4,
        }
    }

    fn no_warmup() -> SortParams {
        SortParams {
            warmup_reporting: false,
            ..SortParams::default()
        }
    }

    #[test]
    fn validates_params() {
        assert!(SortTracker::new(SortParams { iou_min: 1.0, ..SortParams::default() }).is_err());
        assert!(SortTracker::new(SortParams { max_age: 0, ..SortParams::default() }).is_err());
        assert!(SortTracker::new(SortParams { min_hits: 0, ..SortParams::default() }).is_err());
    }

    #[test]
    fn nothing_in_nothing_out() {
        let mut t = SortTracker::new(SortParams::default()).unwrap();
        for f in 0..10 {
            assert!(t.step(f, &[]).unwrap().is_empty());
        }
    }

    #[test]
    fn rejects_out_of_order_frames() {
        let mut t = SortTracker::new(SortParams::default()).unwrap();
        t.step(3, &[]).unwrap();
        assert!(matches!(t.step(3, &[]), Err(Error::OutOfOrder { .. })));
        assert!(t.step(2, &[]).is_err());
    }

    #[test]
    fn stationary_target_confirmed_on_third_frame() {
        let mut t = SortTracker::new(no_warmup()).unwrap();
        let mut first = None;
        let mut ids = Vec::new();
        for f in 0..10 {
            let out = t.step(f, &[det(f, 20.0, 20.0, 7.0)]).unwrap();
            if !out.is_empty() && first.is_none() {
                first = Some(f);
            }
            ids.extend(out.iter().map(|r| r.track_id));
        }
        assert_eq!(first, Some(2));
        assert_eq!(ids.len(), 8);
        assert!(ids.iter().all(|&id| id == ids[0]));
    }

    #[test]
    fn warmup_reports_from_first_frame() {
        let mut t = SortTracker::new(SortParams::default()).unwrap();
        let out = t.step(0, &[det(0, 20.0, 20.0, 7.0)]).unwrap();
        assert_eq!(out.len(), 1);
        let ids: Vec<_> = (1..10)
            .flat_map(|f| t.step(f, &[det(f, 20.0, 20.0, 7.0)]).unwrap())
            .map(|r| r.track_id)
            .collect();
        assert_eq!(ids.len(), 9);
        assert!(ids.iter().all(|&id| id == out[0].track_id));
    }

    #[test]
    fn single_frame_spurious_detection_is_suppressed() {
        let mut t = SortTracker::new(SortParams::default()).unwrap();
        let mut spurious_seen = false;
        for f in 0..20 {
            let x = 10.0 + 0.5 * f as f64;
            let mut dets = vec![det(f, x, 30.0, 7.0)];
            if f == 9 {
                dets.push(det(f, 100.0, 80.0, 7.0));
            }
            let out = t.step(f, &dets).unwrap();
            assert_eq!(out.len(), 1, "frame {f}");
            spurious_seen |= out.iter().any(|r| r.bbox.x_min > 90.0);
            if f == 11 {
                // the spurious track has aged out
                assert_eq!(t.tracks().len(), 1);
            }
        }
        assert!(!spurious_seen);
    }

    #[test]
    fn moving_target_keeps_identity() {
        let mut t = SortTracker::new(SortParams::default()).unwrap();
        let mut ids = std::collections::BTreeSet::new();
        for f in 0..60 {
            let out = t.step(f, &[det(f, 5.0 + 1.2 * f as f64, 5.0 + 0.4 * f as f64, 6.0)]).unwrap();
            ids.extend(out.iter().map(|r| r.track_id));
        }
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn missed_frame_within_max_age_keeps_track() {
        let mut t = SortTracker::new(SortParams::default()).unwrap();
        for f in 0..5 {
            t.step(f, &[det(f, 20.0, 20.0, 7.0)]).unwrap();
        }
        assert!(t.step(5, &[]).unwrap().is_empty());
        let out = t.step(6, &[det(6, 20.0, 20.0, 7.0)]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].track_id, 1);
        t.step(7, &[]).unwrap();
        t.step(8, &[]).unwrap();
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn ids_are_never_reused() {
        let mut t = SortTracker::new(SortParams { min_hits: 1, ..SortParams::default() }).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for f in 0..40 {
            // jump far every frame so each detection spawns a new track
            let x = ((f * 37) % 200) as f64;
            let out = t.step(f, &[det(f, x, 10.0, 5.0)]).unwrap();
            for r in out {
                if seen.contains(&r.track_id) {
                    continue;
                }
                seen.insert(r.track_id);
            }
        }
        assert_eq!(seen.len(), 40);
    }

    #[test]
    fn pass_through_when_min_hits_is_one() {
        let params = SortParams { min_hits: 1, max_age: usize::MAX, ..SortParams::default() };
        let mut t = SortTracker::new(params).unwrap();
        for f in 0..30 {
            let dets: Vec<_> = (0..(f % 4)).map(|i| det(f, 40.0 * i as f64 + (f % 7) as f64 * 13.0, 5.0, 4.0)).collect();
            let out = t.step(f, &dets).unwrap();
            assert_eq!(out.len(), dets.len());
        }
        let _ = Point::default();
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut t = SortTracker::new(SortParams { max_age: usize::MAX, ..SortParams::default() }).unwrap();
        for f in 0..1000 {
            let dets = if f % 5 == 3 { vec![] } else { vec![det(f, 50.0 + (f % 9) as f64, 40.0, 5.0 + (f % 3) as f64)] };
            t.step(f, &dets).unwrap();
            for tr in t.tracks() {
                let p = tr.state.covariance;
                assert!((p - p.transpose()).abs().max() < 1e-9);
                let min_eig = p.symmetric_eigenvalues().min();
                assert!(min_eig >= -1e-9, "frame {f}: {min_eig}");
                assert!(tr.state.s() > 0.0 && tr.state.r() > 0.0);
            }
        }
    }
}
