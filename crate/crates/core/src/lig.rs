//! Local intensity and gradient (LIG) small-target detector.
//!
//! Every pixel far enough from the border is scored by a `k x k` window
//! centred on it. The window is split into a central `c x c` cell and the
//! surrounding ring:
//!
//! * local intensity is the positive part of `mean(center) - mean(ring)`;
//! * local gradient looks at the central-difference gradient of each ring
//!   pixel, keeps only its component pointing at the window centre, averages
//!   that per angular sector and takes the minimum over sectors.
//!
//! A small bright blob is brighter than its surroundings and has gradients
//! converging from every direction, so both terms are large. A straight edge
//! leaves at least one sector with no inward gradient and scores zero.
//!
//! The map is binarized at the mean of its largest `top_fraction` values,
//! recomputed for every frame.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LigParams {
    pub patch_size: usize,
    pub center_size: usize,
    pub sector_count: usize,
    pub top_fraction: f64,
}

impl Default for LigParams {
    fn default() -> Self {
        LigParams::for_patch(7)
    }
}

impl LigParams {
    /// Parameters for a `patch_size` window with the default centre cell:
    /// 3 for 7, 7 for 19, and otherwise the odd size nearest `0.37 * k`.
    pub fn for_patch(patch_size: usize) -> Self {
        LigParams {
            patch_size,
            center_size: default_center_size(patch_size),
            sector_count: 8,
            top_fraction: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, c) = (self.patch_size, self.center_size);
        if k < 3 || k % 2 == 0 {
            return Err(Error::param("patch_size", format!("{k} (must be odd and >= 3)")));
        }
        if c == 0 || c % 2 == 0 || c >= k {
            return Err(Error::param(
                "center_size",
                format!("{c} (must be odd and smaller than patch_size {k})"),
            ));
        }
        if self.sector_count < 4 {
            return Err(Error::param(
                "sector_count",
                format!("{} (must be >= 4)", self.sector_count),
            ));
        }
        check_fraction(self.top_fraction)
    }
}

pub fn default_center_size(patch_size: usize) -> usize {
    match patch_size {
        7 => 3,
        19 => 7,
        k => {
            let c = ((0.37 * k as f64 - 1.0) / 2.0).round().max(0.0) as usize * 2 + 1;
            c.min(k.saturating_sub(2)).max(1)
        }
    }
}

pub(crate) fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("top_fraction", format!("{f} (must be in (0, 1])")))
    }
}

/// Per-pixel intensity-gradient response.
#[derive(Debug, Clone, PartialEq)]
pub struct IgMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl IgMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Which difference stencil a ring pixel needs along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stencil {
    Forward,
    Central,
    Backward,
}

impl Stencil {
    fn at(i: usize, k: usize) -> Self {
        if i == 0 {
            Stencil::Forward
        } else if i == k - 1 {
            Stencil::Backward
        } else {
            Stencil::Central
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RingPixel {
    col: usize,
    row: usize,
    // unit vector from this pixel toward the window centre
    ux: f64,
    uy: f64,
    sector: usize,
    sx: Stencil,
    sy: Stencil,
}

/// Ring geometry shared by every window of a given shape.
#[derive(Debug, Clone)]
struct RingLayout {
    k: usize,
    center_lo: usize,
    center_hi: usize,
    pixels: Vec<RingPixel>,
    sector_sizes: Vec<usize>,
}

impl RingLayout {
    fn new(k: usize, c: usize, sectors: usize) -> Self {
        let half = k / 2;
        let center_lo = half - c / 2;
        let center_hi = half + c / 2;
        let mut pixels = Vec::with_capacity(k * k - c * c);
        let mut sector_sizes = vec![0; sectors];
        for row in 0..k {
            for col in 0..k {
                if (center_lo..=center_hi).contains(&row) && (center_lo..=center_hi).contains(&col) {
                    continue;
                }
                let dx = col as f64 - half as f64;
                let dy = row as f64 - half as f64;
                let norm = dx.hypot(dy);
                let sector = sector_of(dx, dy, sectors);
                sector_sizes[sector] += 1;
                pixels.push(RingPixel {
                    col,
                    row,
                    ux: -dx / norm,
                    uy: -dy / norm,
                    sector,
                    sx: Stencil::at(col, k),
                    sy: Stencil::at(row, k),
                });
            }
        }
        RingLayout {
            k,
            center_lo,
            center_hi,
            pixels,
            sector_sizes,
        }
    }

    #[inline]
    fn in_center(&self, row: usize, col: usize) -> bool {
        (self.center_lo..=self.center_hi).contains(&row)
            && (self.center_lo..=self.center_hi).contains(&col)
    }

    fn min_sector_mean(&self, sums: &[f64]) -> f64 {
        sums.iter()
            .zip(&self.sector_sizes)
            .filter(|(_, &n)| n > 0)
            .map(|(s, &n)| s / n as f64)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Angular sector of offset `(dx, dy)` from the centre, using the bearing
/// `atan2(dy, dx)` folded into `[0, 2π)`.
fn sector_of(dx: f64, dy: f64, sectors: usize) -> usize {
    let mut bearing = dy.atan2(dx);
    if bearing < 0.0 {
        bearing += TAU;
    }
    ((sectors as f64 * bearing / TAU).floor() as usize).min(sectors - 1)
}

fn check_window(window: &[f64], k: usize, c: usize) -> Result<()> {
    if window.len() != k * k {
        return Err(Error::param(
            "window",
            format!("{} values for a {k}x{k} window", window.len()),
        ));
    }
    if c == 0 || c.is_multiple_of(2) || c >= k || k.is_multiple_of(2) {
        return Err(Error::param("center_size", format!("{c} in a {k}x{k} window")));
    }
    Ok(())
}

/// Contrast of the central `c x c` cell against the rest of a row-major
/// `k x k` window, clamped at zero.
pub fn local_intensity(window: &[f64], k: usize, c: usize) -> Result<f64> {
    check_window(window, k, c)?;
    let layout = RingLayout::new(k, c, 4);
    Ok(window_intensity(window, &layout))
}

fn window_intensity(window: &[f64], layout: &RingLayout) -> f64 {
    let k = layout.k;
    let reference = window[(k / 2) * k + k / 2];
    let (mut center, mut ring) = (0.0, 0.0);
    for row in 0..k {
        for col in 0..k {
            let v = window[row * k + col] - reference;
            if layout.in_center(row, col) {
                center += v;
            } else {
                ring += v;
            }
        }
    }
    intensity_from_sums(center, ring, layout)
}

// Sums are of deviations from the window's centre pixel, so flat windows give
// exactly zero.
#[inline]
fn intensity_from_sums(center: f64, ring: f64, layout: &RingLayout) -> f64 {
    let c = layout.center_hi - layout.center_lo + 1;
    (center / (c * c) as f64 - ring / layout.pixels.len() as f64).max(0.0)
}

/// Minimum over angular sectors of the mean inward gradient of the ring
/// pixels of a row-major `k x k` window. Gradients are central differences
/// with clamp-to-edge inside the window.
pub fn local_gradient(window: &[f64], k: usize, c: usize, sector_count: usize) -> Result<f64> {
    check_window(window, k, c)?;
    if sector_count < 4 {
        return Err(Error::param("sector_count", format!("{sector_count} (must be >= 4)")));
    }
    let layout = RingLayout::new(k, c, sector_count);
    let mut sums = vec![0.0; sector_count];
    let at = |col: usize, row: usize| window[row * k + col];
    for p in &layout.pixels {
        let gx = (at((p.col + 1).min(k - 1), p.row) - at(p.col.saturating_sub(1), p.row)) * 0.5;
        let gy = (at(p.col, (p.row + 1).min(k - 1)) - at(p.col, p.row.saturating_sub(1))) * 0.5;
        sums[p.sector] += (gx * p.ux + gy * p.uy).max(0.0);
    }
    Ok(layout.min_sector_mean(&sums))
}

/// Image-wide difference planes; a window picks the stencil its clamp-to-edge
/// rule calls for, so results match per-window evaluation exactly.
struct GradientPlanes {
    x: [Vec<f64>; 3],
    y: [Vec<f64>; 3],
}

impl GradientPlanes {
    fn new(frame: &Frame) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let px = frame.pixels();
        let plane = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            let mut v = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    v.push(f(x, y));
                }
            }
            v
        };
        let at = |x: usize, y: usize| px[y * w + x];
        let xp = |x: usize| (x + 1).min(w - 1);
        let yp = |y: usize| (y + 1).min(h - 1);
        GradientPlanes {
            x: [
                plane(&|x, y| (at(xp(x), y) - at(x, y)) * 0.5),
                plane(&|x, y| (at(xp(x), y) - at(x.saturating_sub(1), y)) * 0.5),
                plane(&|x, y| (at(x, y) - at(x.saturating_sub(1), y)) * 0.5),
            ],
            y: [
                plane(&|x, y| (at(x, yp(y)) - at(x, y)) * 0.5),
                plane(&|x, y| (at(x, yp(y)) - at(x, y.saturating_sub(1))) * 0.5),
                plane(&|x, y| (at(x, y) - at(x, y.saturating_sub(1))) * 0.5),
            ],
        }
    }

    #[inline]
    fn pick(planes: &[Vec<f64>; 3], s: Stencil) -> &[f64] {
        match s {
            Stencil::Forward => &planes[0],
            Stencil::Central => &planes[1],
            Stencil::Backward => &planes[2],
        }
    }
}

/// Computes the IG map of a frame. Rows are scored in parallel on the current
/// rayon pool; the result does not depend on the number of workers.
pub fn compute_ig_map(frame: &Frame, params: &LigParams) -> Result<IgMap> {
    params.validate()?;
    let k = params.patch_size;
    let (w, h) = (frame.width(), frame.height());
    if w < k || h < k {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            required: k,
        });
    }
    let half = k / 2;
    let layout = RingLayout::new(k, params.center_size, params.sector_count);
    let planes = GradientPlanes::new(frame);
    // Per-ring-pixel offsets into the image relative to the window origin.
    let ring: Vec<(usize, &[f64], &[f64], f64, f64, usize)> = layout
        .pixels
        .iter()
        .map(|p| {
            (
                p.row * w + p.col,
                GradientPlanes::pick(&planes.x, p.sx),
                GradientPlanes::pick(&planes.y, p.sy),
                p.ux,
                p.uy,
                p.sector,
            )
        })
        .collect();
    let px = frame.pixels();

    let mut values = vec![0.0; w * h];
    values
        .par_chunks_mut(w)
        .enumerate()
        .skip(half)
        .take(h - 2 * half)
        .for_each(|(cy, row)| {
            let mut sums = vec![0.0; params.sector_count];
            for cx in half..w - half {
                let origin = (cy - half) * w + (cx - half);
                let reference = px[cy * w + cx];
                let (mut center, mut ring_sum) = (0.0, 0.0);
                for r in 0..k {
                    let line = &px[origin + r * w..origin + r * w + k];
                    for (col, &v) in line.iter().enumerate() {
                        if layout.in_center(r, col) {
                            center += v - reference;
                        } else {
                            ring_sum += v - reference;
                        }
                    }
                }
                let intensity = intensity_from_sums(center, ring_sum, &layout);
                if intensity <= 0.0 {
                    continue;
                }
                sums.iter_mut().for_each(|s| *s = 0.0);
                for &(off, gx, gy, ux, uy, sector) in &ring {
                    let i = origin + off;
                    sums[sector] += (gx[i] * ux + gy[i] * uy).max(0.0);
                }
                row[cx] = intensity * layout.min_sector_mean(&sums);
            }
        });

    Ok(IgMap {
        width: w,
        height: h,
        values,
    })
}

/// The `m = max(1, round(top_fraction * N))` largest map values, in
/// descending order.
pub fn threshold_selection(ig: &IgMap, top_fraction: f64) -> Result<Vec<f64>> {
    check_fraction(top_fraction)?;
    let n = ig.values.len();
    if n == 0 {
        return Err(Error::param("ig_map", "empty map"));
    }
    let m = ((top_fraction * n as f64).round() as usize).clamp(1, n);
    let mut values = ig.values.clone();
    if m < n {
        values.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
        values.truncate(m);
    }
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Mean of the largest `top_fraction` of the map.
pub fn adaptive_threshold(ig: &IgMap, top_fraction: f64) -> Result<f64> {
    let top = threshold_selection(ig, top_fraction)?;
    Ok(top.iter().sum::<f64>() / top.len() as f64)
}

/// Mean of the strictly positive map values, or 0 if there are none.
pub fn nonzero_mean_threshold(ig: &IgMap) -> f64 {
    let (sum, n) = ig
        .values
        .iter()
        .filter(|&&v| v > 0.0)
        .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Sets every pixel with `IG >= threshold` and `IG > 0`.
pub fn binarize(ig: &IgMap, threshold: f64) -> BinaryMask {
    BinaryMask {
        width: ig.width,
        height: ig.height,
        bits: ig.values.iter().map(|&v| v > 0.0 && v >= threshold).collect(),
    }
}
