//! Connected-component analysis of binarized detector output.
//!
//! The binarized pixels are dilated with a square structuring element so that
//! nearby fragments of one target fuse, the dilated mask is labelled with
//! 8-connectivity, and each dilated component becomes one candidate whose
//! statistics are taken over the binarized pixels it absorbed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{BBox, Detection, Point};
use crate::lig::BinaryMask;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Dense label starting at 1.
    pub label: u32,
    /// Member pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    /// Tight box around `pixels`.
    pub bbox: BBox,
    /// Box of the dilated region that grouped `pixels`; equal to `bbox` when
    /// no dilation was applied.
    pub footprint: BBox,
    pub max_intensity: f64,
    pub centroid: Point,
}

/// Strict area bounds: a component is kept when `min_exclusive < area < max_exclusive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaRule {
    pub min_exclusive: usize,
    pub max_exclusive: usize,
}

impl Default for AreaRule {
    fn default() -> Self {
        AreaRule {
            min_exclusive: 1,
            max_exclusive: 100,
        }
    }
}

impl AreaRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_exclusive >= self.max_exclusive {
            return Err(Error::param(
                "area_rule",
                format!(
                    "min {} must be below max {}",
                    self.min_exclusive, self.max_exclusive
                ),
            ));
        }
        Ok(())
    }

    pub fn accepts(&self, area: usize) -> bool {
        area > self.min_exclusive && area < self.max_exclusive
    }
}

/// Offset of the structuring element's anchor from its top-left corner.
pub fn anchor_offset(se_side: usize) -> usize {
    (se_side.saturating_sub(1)) / 2
}

/// Square dilation: an output pixel is set when any input pixel in the
/// `se_side x se_side` square anchored on it is set. The square is clipped
/// at the image border.
pub fn dilate(mask: &BinaryMask, se_side: usize) -> Result<BinaryMask> {
    if se_side == 0 {
        return Err(Error::param("dilation_side", "must be >= 1"));
    }
    let (w, h) = (mask.width, mask.height);
    let a = anchor_offset(se_side) as isize;
    let s = se_side as isize;

    // Separable: the square is a row window followed by a column window.
    let sweep = |line: &[bool], out: &mut [bool]| {
        let n = line.len() as isize;
        let mut prefix = Vec::with_capacity(line.len() + 1);
        prefix.push(0u32);
        for &b in line {
            prefix.push(prefix.last().unwrap() + b as u32);
        }
        for (x, o) in out.iter_mut().enumerate() {
            let lo = (x as isize - a).clamp(0, n) as usize;
            let hi = (x as isize - a + s).clamp(0, n) as usize;
            *o = prefix[hi] > prefix[lo];
        }
    };

    let mut rows = vec![false; w * h];
    for y in 0..h {
        sweep(&mask.bits[y * w..(y + 1) * w], &mut rows[y * w..(y + 1) * w]);
    }
    let mut out = BinaryMask::empty(w, h);
    let mut column = vec![false; h];
    let mut dilated = vec![false; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = rows[y * w + x];
        }
        sweep(&column, &mut dilated);
        for y in 0..h {
            out.bits[y * w + x] = dilated[y];
        }
    }
    Ok(out)
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is the background
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let up = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = up;
            x = up;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller id as root so labels follow raster order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass 8-connected labelling. Returns the label image (0 = background)
/// and the number of labels; labels are dense from 1 in raster order of
/// each component's first pixel.
pub fn label_image(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.bits[y * w + x] {
                continue;
            }
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = labels[y * w + x - 1];
            }
            if y > 0 {
                let up = (y - 1) * w;
                if x > 0 {
                    neighbours[1] = labels[up + x - 1];
                }
                neighbours[2] = labels[up + x];
                if x + 1 < w {
                    neighbours[3] = labels[up + x + 1];
                }
            }
            let mut current = 0;
            for &n in neighbours.iter().filter(|&&n| n != 0) {
                if current == 0 {
                    current = n;
                } else {
                    sets.union(current, n);
                }
            }
            if current == 0 {
                current = sets.make();
            }
            labels[y * w + x] = current;
        }
    }

    let mut dense = vec![0u32; sets.parent.len()];
    let mut next = 0;
    for l in labels.iter_mut().filter(|l| **l != 0) {
        let root = sets.find(*l) as usize;
        if dense[root] == 0 {
            next += 1;
            dense[root] = next;
        }
        *l = dense[root];
    }
    (labels, next)
}

#[derive(Default)]
struct Accumulator {
    pixels: Vec<(usize, usize)>,
    max_intensity: f64,
    sum_x: f64,
    sum_y: f64,
    bbox: Option<BBox>,
}

impl Accumulator {
    fn push(&mut self, x: usize, y: usize, intensity: f64) {
        self.pixels.push((x, y));
        self.max_intensity = self.max_intensity.max(intensity);
        self.sum_x += x as f64;
        self.sum_y += y as f64;
        let p = BBox::pixel(x, y);
        self.bbox = Some(self.bbox.map_or(p, |b| b.union(&p)));
    }
}

fn check_dims(mask: &BinaryMask, frame: &Frame) -> Result<()> {
    if mask.width != frame.width() || mask.height != frame.height() {
        return Err(Error::param(
            "mask",
            format!(
                "{}x{} mask for a {}x{} frame",
                mask.width,
                mask.height,
                frame.width(),
                frame.height()
            ),
        ));
    }
    Ok(())
}

/// Collects the pixels of `members` into the components given by `labels`.
fn collect(
    labels: &[u32],
    count: u32,
    members: &BinaryMask,
    frame: &Frame,
) -> Vec<Component> {
    let w = members.width;
    let mut acc: Vec<Accumulator> = (0..count).map(|_| Accumulator::default()).collect();
    let mut footprints: Vec<Option<BBox>> = vec![None; count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let p = BBox::pixel(x, y);
        let fp = &mut footprints[l as usize - 1];
        *fp = Some(fp.map_or(p, |b| b.union(&p)));
        if members.bits[i] {
            acc[l as usize - 1].push(x, y, frame.get(x, y));
        }
    }
    // Renumber densely: a dilated region holding no member pixels is dropped.
    acc.into_iter()
        .zip(footprints)
        .filter(|(a, _)| !a.pixels.is_empty())
        .enumerate()
        .map(|(i, (a, fp))| {
            let n = a.pixels.len() as f64;
            Component {
                label: i as u32 + 1,
                area: a.pixels.len(),
                bbox: a.bbox.expect("non-empty component"),
                footprint: fp.expect("non-empty component"),
                max_intensity: a.max_intensity,
                centroid: Point::new(a.sum_x / n, a.sum_y / n),
                pixels: a.pixels,
            }
        })
        .collect()
}

/// 8-connected components of `mask`, with peak intensities read from `frame`.
pub fn label_components(mask: &BinaryMask, frame: &Frame) -> Result<Vec<Component>> {
    check_dims(mask, frame)?;
    let (labels, count) = label_image(mask);
    Ok(collect(&labels, count, mask, frame))
}

/// Dilates `mask`, labels the dilated mask, and groups the original set
/// pixels by the dilated component they fall in. Each group's area, box,
/// centroid and peak intensity are computed over its original pixels.
pub fn group_components(
    mask: &BinaryMask,
    se_side: usize,
    frame: &Frame,
) -> Result<Vec<Component>> {
    check_dims(mask, frame)?;
    let dilated = dilate(mask, se_side)?;
    let (labels, count) = label_image(&dilated);
    Ok(collect(&labels, count, mask, frame))
}

pub fn rule_filter(components: Vec<Component>, rule: &AreaRule) -> Vec<Component> {
    components
        .into_iter()
        .filter(|c| rule.accepts(c.area))
        .collect()
}

/// Picks the `top_n` brightest components. Ties go to the larger area, then
/// to the box whose top-left corner comes first in raster order.
pub fn select_targets(
    mut components: Vec<Component>,
    top_n: usize,
    frame_index: usize,
) -> Vec<Detection> {
    components.sort_by(|a, b| {
        b.max_intensity
            .total_cmp(&a.max_intensity)
            .then(b.area.cmp(&a.area))
            .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
            .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
    });
    components
        .into_iter()
        .take(top_n)
        .map(|c| Detection {
            frame_index,
            bbox: c.footprint,
            centroid: c.centroid,
            score: c.max_intensity,
            area: c.area,
        })
        .collect()
}
