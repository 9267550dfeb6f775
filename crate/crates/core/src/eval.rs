//! Centroid-distance scoring of detections against single-target ground
//! truth.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid_distance, BBox, Point};
use crate::upsample::to_upsampled_coordinate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub frame_index: usize,
    pub bbox: BBox,
    pub centroid: Point,
}

/// At most one target per frame; frames without a record have no target.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    records: BTreeMap<usize, GtRecord>,
}

impl GroundTruth {
    pub fn new(records: impl IntoIterator<Item = GtRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert(r.frame_index, r).is_some() {
                return Err(Error::param(
                    "ground_truth",
                    format!("frame {} has more than one record", r.frame_index),
                ));
            }
        }
        Ok(GroundTruth { records: map })
    }

    pub fn get(&self, frame: usize) -> Option<&GtRecord> {
        self.records.get(&frame)
    }

    pub fn records(&self) -> impl Iterator<Item = &GtRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Maps original-scale coordinates onto a grid upsampled by `factor`.
    pub fn scaled(&self, factor: usize) -> GroundTruth {
        if factor == 1 {
            return self.clone();
        }
        let map = |v: f64| to_upsampled_coordinate(v, factor);
        // box edges sit half a pixel outside the extreme pixel centres
        let half = 0.5 * (factor as f64 - 1.0);
        let records = self
            .records
            .iter()
            .map(|(&k, r)| {
                let b = r.bbox;
                let scaled = GtRecord {
                    frame_index: r.frame_index,
                    centroid: Point::new(map(r.centroid.x), map(r.centroid.y)),
                    bbox: BBox {
                        x_min: map(b.x_min) - half,
                        y_min: map(b.y_min) - half,
                        x_max: map(b.x_max) + half,
                        y_max: map(b.y_max) + half,
                    },
                };
                (k, scaled)
            })
            .collect();
        GroundTruth { records }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            missed: self.missed + o.missed,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

/// Scores one frame. The detection nearest the ground-truth centroid is a
/// true positive if it lies within `tp_distance`; every other detection is a
/// false positive, and a target without a qualifying detection is a miss.
pub fn match_frame(detections: &[Point], gt: Option<&GtRecord>, tp_distance: f64) -> Counts {
    let Some(gt) = gt else {
        return Counts {
            fp: detections.len(),
            ..Counts::default()
        };
    };
    let nearest = detections
        .iter()
        .map(|&p| centroid_distance(p, gt.centroid))
        .min_by(f64::total_cmp);
    match nearest {
        Some(d) if d <= tp_distance => Counts {
            tp: 1,
            fp: detections.len() - 1,
            missed: 0,
        },
        _ => Counts {
            tp: 0,
            fp: detections.len(),
            missed: 1,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision, recall and F1 from raw counts; each ratio is 0 when its
/// denominator is 0.
pub fn compute_metrics(counts: Counts) -> MetricsReport {
    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.missed);
    MetricsReport {
        tp: counts.tp,
        fp: counts.fp,
        missed: counts.missed,
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Scores every frame that has either a detection or a ground-truth record.
pub fn evaluate(
    detections: &BTreeMap<usize, Vec<Point>>,
    gt: &GroundTruth,
    tp_distance: f64,
) -> MetricsReport {
    let mut counts = Counts::default();
    for r in gt.records() {
        let dets = detections.get(&r.frame_index).map_or(&[][..], Vec::as_slice);
        counts += match_frame(dets, Some(r), tp_distance);
    }
    for (frame, dets) in detections {
        if gt.get(*frame).is_none() {
            counts += match_frame(dets, None, tp_distance);
        }
    }
    compute_metrics(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt_at(frame: usize, x: f64, y: f64) -> GtRecord {
        GtRecord {
            frame_index: frame,
            bbox: BBox::new(x - 3.0, y - 3.0, x + 3.0, y + 3.0).unwrap(),
            centroid: Point::new(x, y),
        }
    }

    #[test]
    fn frame_matching_examples() {
        let g = gt_at(0, 10.0, 10.0);
        assert_eq!(match_frame(&[Point::new(10.0, 10.0)], Some(&g), 10.0), Counts { tp: 1, fp: 0, missed: 0 });
        assert_eq!(match_frame(&[], Some(&g), 10.0), Counts { tp: 0, fp: 0, missed: 1 });
        let two = [Point::new(13.0, 10.0), Point::new(10.0, 17.0)];
        assert_eq!(match_frame(&two, Some(&g), 10.0), Counts { tp: 1, fp: 1, missed: 0 });
        assert_eq!(match_frame(&two, None, 10.0), Counts { tp: 0, fp: 2, missed: 0 });
        assert_eq!(match_frame(&[Point::new(30.0, 10.0)], Some(&g), 10.0), Counts { tp: 0, fp: 1, missed: 1 });
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(Counts::default());
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!((f1_score(0.941, 0.950) - 0.945).abs() <= 0.001);
        assert!((f1_score(1.0, 0.95) - 0.974).abs() <= 0.001);
        let m = compute_metrics(Counts { tp: 95, fp: 6, missed: 5 });
        assert!((m.precision - 0.941).abs() < 5e-4);
        assert_eq!(m.recall, 0.95);
    }

    #[test]
    fn rejects_duplicate_gt_frames() {
        assert!(GroundTruth::new([gt_at(1, 0.0, 0.0), gt_at(1, 5.0, 5.0)]).is_err());
    }

    #[test]
    fn scaling_matches_pixel_centre_mapping() {
        let gt = GroundTruth::new([gt_at(0, 10.0, 20.0)]).unwrap().scaled(2);
        let r = gt.get(0).unwrap();
        assert_eq!(r.centroid, Point::new(20.5, 40.5));
        // a box of 7 source pixels spans 14 upsampled pixels
        assert_eq!(r.bbox.width(), 14.0);
    }

    #[test]
    fn detections_without_gt_are_false_positives() {
        let gt = GroundTruth::new([gt_at(0, 5.0, 5.0)]).unwrap();
        let mut dets = BTreeMap::new();
        dets.insert(0, vec![Point::new(5.0, 5.0)]);
        dets.insert(3, vec![Point::new(1.0, 1.0)]);
        let m = evaluate(&dets, &gt, 10.0);
        assert_eq!((m.tp, m.fp, m.missed), (1, 1, 0));
    }

    proptest! {
        #[test]
        fn counts_are_consistent(
            frames in proptest::collection::vec((any::<bool>(), 0usize..3, 0.0f64..20.0), 1..40),
        ) {
            let mut records = Vec::new();
            let mut dets = BTreeMap::new();
            for (i, &(has_gt, n, offset)) in frames.iter().enumerate() {
                if has_gt {
                    records.push(gt_at(i, 50.0, 50.0));
                }
                if n > 0 {
                    dets.insert(i, (0..n).map(|k| Point::new(50.0 + offset + k as f64, 50.0)).collect::<Vec<_>>());
                }
            }
            let gt = GroundTruth::new(records).unwrap();
            let m = evaluate(&dets, &gt, 10.0);
            prop_assert_eq!(m.tp + m.missed, gt.len());
            let total: usize = dets.values().map(Vec::len).sum();
            prop_assert_eq!(m.tp + m.fp, total);
            if m.tp + m.fp > 0 {
                prop_assert!((m.precision - m.tp as f64 / (m.tp + m.fp) as f64).abs() < 1e-15);
            }
            // frame order does not matter
            let mut counts = Counts::default();
            for r in gt.records().collect::<Vec<_>>().into_iter().rev() {
                counts += match_frame(dets.get(&r.frame_index).map_or(&[][..], Vec::as_slice), Some(r), 10.0);
            }
            for (f, d) in dets.iter().rev() {
                if gt.get(*f).is_none() {
                    counts += match_frame(d, None, 10.0);
                }
            }
            prop_assert_eq!(compute_metrics(counts), m);
        }
    }
}
