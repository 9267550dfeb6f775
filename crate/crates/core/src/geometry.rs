//! Points, boxes and the per-frame detection record.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous pixel coordinates; `x` grows to the right, `y` downwards.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned box with inclusive extents: a box covering the single pixel
/// `(3, 4)` is `(3, 4, 3, 4)` and has area 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min > x_max || y_min > y_max {
            return Err(Error::param(
                "bbox",
                format!("({x_min}, {y_min}, {x_max}, {y_max}) is not a valid box"),
            ));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Box covering exactly one pixel.
    pub fn pixel(x: usize, y: usize) -> Self {
        let (x, y) = (x as f64, y as f64);
        BBox {
            x_min: x,
            y_min: y,
            x_max: x,
            y_max: y,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min + 1.0
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min + 1.0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }
}

/// Intersection over union under the inclusive-extent convention.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min) + 1.0;
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min) + 1.0;
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn centroid_distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// One candidate target in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BBox,
    pub centroid: Point,
    /// Peak frame intensity inside the source component, in `[0, 1]`.
    pub score: f64,
    pub area: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    // Counts shared integer cells; only valid for integer-aligned boxes.
    fn brute_iou(a: &BBox, b: &BBox) -> f64 {
        let cells = |r: &BBox| {
            let mut v = Vec::new();
            for y in r.y_min as i64..=r.y_max as i64 {
                for x in r.x_min as i64..=r.x_max as i64 {
                    v.push((x, y));
                }
            }
            v
        };
        let ca = cells(a);
        let cb = cells(b);
        let inter = ca.iter().filter(|c| cb.contains(c)).count() as f64;
        inter / (ca.len() as f64 + cb.len() as f64 - inter)
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 9.0, 9.0);
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        let b = bx(5.0, 0.0, 14.0, 9.0);
        let want = brute_iou(&a, &b);
        assert!((want - 50.0 / 150.0).abs() < 1e-12);
        assert!((bbox_iou(&a, &b) - want).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_boxes() {
        let p = BBox::pixel(3, 4);
        assert_eq!(p.area(), 1.0);
        assert_eq!(bbox_iou(&p, &p), 1.0);
        assert_eq!(bbox_iou(&p, &BBox::pixel(4, 4)), 0.0);
    }

    #[test]
    fn rejects_inverted_box() {
        assert!(BBox::new(5.0, 0.0, 4.0, 1.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 4.0, 1.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let p = Point::new(1.5, 2.0);
        assert_eq!(centroid_distance(p, p), 0.0);
        assert_eq!(centroid_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        assert!((centroid_distance(p, Point::new(4.5, 6.0)) - 5.0).abs() < 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0i32..40, 0i32..40, 0i32..15, 0i32..15).prop_map(|(x, y, w, h)| {
            bx(x as f64, y as f64, (x + w) as f64, (y + h) as f64)
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = bbox_iou(&a, &b);
            prop_assert_eq!(ab, bbox_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(bbox_iou(&a, &a), 1.0);
            prop_assert!((ab - brute_iou(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn distance_triangle_inequality(
            p in (-1e3f64..1e3, -1e3f64..1e3),
            q in (-1e3f64..1e3, -1e3f64..1e3),
            r in (-1e3f64..1e3, -1e3f64..1e3),
        ) {
            let (p, q, r) = (Point::new(p.0, p.1), Point::new(q.0, q.1), Point::new(r.0, r.1));
            prop_assert!(centroid_distance(p, r) <= centroid_distance(p, q) + centroid_distance(q, r) + 1e-9);
        }
    }
}
