//! Optimal track-to-detection assignment on IoU.

use crate::geometry::{bbox_iou, BBox};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// `(track, detection)` index pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Minimum-cost assignment of every row of a `rows x cols` cost matrix
/// (`rows <= cols`) to a distinct column, by the shortest augmenting path
/// method with dual potentials. Returns the column of each row.
pub fn solve_assignment(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "more rows than columns");
    assert_eq!(cost.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    // 1-based internally; index 0 is the virtual start column.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for row in 1..=rows {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_slack = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let reduced = cost[(r - 1) * cols + (c - 1)] - u[r] - v[c];
                if reduced < min_slack[c] {
                    min_slack[c] = reduced;
                    way[c] = col0;
                }
                if min_slack[c] < delta {
                    delta = min_slack[c];
                    col1 = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; rows];
    for c in 1..=cols {
        if owner[c] != 0 {
            assignment[owner[c] - 1] = c - 1;
        }
    }
    assignment
}

/// IoU with pairs below the gate counted as zero.
pub fn gated_iou(a: &BBox, b: &BBox, iou_min: f64) -> f64 {
    let iou = bbox_iou(a, b);
    if iou >= iou_min {
        iou
    } else {
        0.0
    }
}

/// Matches predicted track boxes to detection boxes so that the summed IoU
/// over accepted pairs is maximal. Pairs below `iou_min` are never accepted.
pub fn associate(predicted: &[BBox], detections: &[BBox], iou_min: f64) -> Association {
    let (nt, nd) = (predicted.len(), detections.len());
    let mut out = Association::default();
    if nt > 0 && nd > 0 {
        let transpose = nt > nd;
        let (rows, cols) = if transpose { (nd, nt) } else { (nt, nd) };
        let mut cost = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let (t, d) = if transpose { (c, r) } else { (r, c) };
                cost.push(1.0 - gated_iou(&predicted[t], &detections[d], iou_min));
            }
        }
        for (r, c) in solve_assignment(&cost, rows, cols).into_iter().enumerate() {
            let (t, d) = if transpose { (c, r) } else { (r, c) };
            if gated_iou(&predicted[t], &detections[d], iou_min) > 0.0 {
                out.matches.push((t, d));
            }
        }
        out.matches.sort_unstable();
    }
    let mut track_used = vec![false; nt];
    let mut det_used = vec![false; nd];
    for &(t, d) in &out.matches {
        track_used[t] = true;
        det_used[d] = true;
    }
    out.unmatched_tracks = (0..nt).filter(|&t| !track_used[t]).collect();
    out.unmatched_detections = (0..nd).filter(|&d| !det_used[d]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Best total over all partial injections of rows into columns.
    fn brute_best(weights: &[Vec<f64>]) -> f64 {
        fn go(row: usize, weights: &[Vec<f64>], used: &mut Vec<bool>) -> f64 {
            if row == weights.len() {
                return 0.0;
            }
            let mut best = go(row + 1, weights, used);
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(weights[row][c] + go(row + 1, weights, used));
                    used[c] = false;
                }
            }
            best
        }
        let cols = weights.first().map_or(0, |r| r.len());
        go(0, weights, &mut vec![false; cols])
    }

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, x + w, y + h).unwrap()
    }

    #[test]
    fn empty_inputs() {
        let a = associate(&[bx(0.0, 0.0, 3.0, 3.0)], &[], 0.3);
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert!(a.matches.is_empty());
        let a = associate(&[], &[bx(0.0, 0.0, 3.0, 3.0)], 0.3);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn single_pair_above_gate() {
        // 10x10 boxes offset by 10/3 cells share half their union
        let t = BBox::new(0.0, 0.0, 9.0, 9.0).unwrap();
        let d = BBox::new(10.0 / 3.0, 0.0, 9.0 + 10.0 / 3.0, 9.0).unwrap();
        assert!((bbox_iou(&t, &d) - 0.5).abs() < 1e-12);
        assert_eq!(associate(&[t], &[d], 0.3).matches, vec![(0, 0)]);
        assert!(associate(&[t], &[d], 0.6).matches.is_empty());
    }

    #[test]
    fn solver_prefers_global_optimum() {
        // greedy on row 0 would take column 0 and force row 1 into a bad slot
        let cost = [1.0, 2.0, 1.0, 10.0];
        assert_eq!(solve_assignment(&cost, 2, 2), vec![1, 0]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let nt = rng.random_range(0..=6);
            let nd = rng.random_range(0..=6);
            let rand_box = |rng: &mut ChaCha8Rng| {
                bx(
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.0..30.0),
                    rng.random_range(1.0..15.0),
                    rng.random_range(1.0..15.0),
                )
            };
            let tracks: Vec<_> = (0..nt).map(|_| rand_box(&mut rng)).collect();
            let dets: Vec<_> = (0..nd).map(|_| rand_box(&mut rng)).collect();
            let a = associate(&tracks, &dets, 0.3);
            let weights: Vec<Vec<f64>> = tracks
                .iter()
                .map(|t| dets.iter().map(|d| gated_iou(t, d, 0.3)).collect())
                .collect();
            let got: f64 = a.matches.iter().map(|&(t, d)| bbox_iou(&tracks[t], &dets[d])).sum();
            assert!((got - brute_best(&weights)).abs() < 1e-9);
            assert_eq!(a.matches.len() + a.unmatched_tracks.len(), nt);
            assert_eq!(a.matches.len() + a.unmatched_detections.len(), nd);
            for &(t, d) in &a.matches {
                assert!(bbox_iou(&tracks[t], &dets[d]) >= 0.3);
            }
        }
    }
}
