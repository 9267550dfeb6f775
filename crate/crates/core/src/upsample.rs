//! Single-frame bicubic upsampling by cubic convolution over a 4x4
//! neighbourhood.
//!
//! Output pixel `d` samples the source at `(d + 0.5) / factor - 0.5`
//! (pixel-center alignment), and samples outside the source are replicated
//! from the nearest edge.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Keys cubic convolution kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicubicKernel {
    pub a: f64,
}

impl Default for BicubicKernel {
    fn default() -> Self {
        BicubicKernel { a: -0.5 }
    }
}

impl BicubicKernel {
    pub fn weight(&self, t: f64) -> f64 {
        let a = self.a;
        let t = t.abs();
        if t <= 1.0 {
            ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
        } else if t < 2.0 {
            ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
        } else {
            0.0
        }
    }

    /// Weights of the four taps `floor(s) - 1 ..= floor(s) + 2` for a sample
    /// at fractional offset `t = s - floor(s)`.
    pub fn taps(&self, t: f64) -> [f64; 4] {
        [
            self.weight(t + 1.0),
            self.weight(t),
            self.weight(1.0 - t),
            self.weight(2.0 - t),
        ]
    }
}

/// Maps an output coordinate to its source-space sample position.
pub fn source_coordinate(dst: usize, factor: usize) -> f64 {
    (dst as f64 + 0.5) / factor as f64 - 0.5
}

/// Maps a source-space coordinate to where it lands in the upsampled grid.
pub fn to_upsampled_coordinate(src: f64, factor: usize) -> f64 {
    (src + 0.5) * factor as f64 - 0.5
}

/// Inverse of [`to_upsampled_coordinate`].
pub fn to_source_coordinate(dst: f64, factor: usize) -> f64 {
    (dst + 0.5) / factor as f64 - 0.5
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    index: [usize; 4],
    weight: [f64; 4],
}

fn axis_taps(src_len: usize, factor: usize, kernel: &BicubicKernel) -> Vec<Tap> {
    let last = src_len as isize - 1;
    (0..src_len * factor)
        .map(|d| {
            let s = source_coordinate(d, factor);
            let base = s.floor();
            let weight = kernel.taps(s - base);
            let base = base as isize;
            let mut index = [0usize; 4];
            for (k, slot) in index.iter_mut().enumerate() {
                *slot = (base - 1 + k as isize).clamp(0, last) as usize;
            }
            Tap { index, weight }
        })
        .collect()
}

pub fn bicubic_upsample(frame: &Frame, factor: usize) -> Result<Frame> {
    bicubic_upsample_with(frame, factor, &BicubicKernel::default())
}

/// Separable implementation: a horizontal pass over every source row, then a
/// vertical pass. Output rows are computed in parallel.
pub fn bicubic_upsample_with(
    frame: &Frame,
    factor: usize,
    kernel: &BicubicKernel,
) -> Result<Frame> {
    if !matches!(factor, 2 | 4) {
        return Err(Error::param(
            "upsample_factor",
            format!("{factor} (bicubic upsampling supports 2 or 4)"),
        ));
    }
    let (w, h) = (frame.width(), frame.height());
    let (ow, oh) = (w * factor, h * factor);
    let xt = axis_taps(w, factor, kernel);
    let yt = axis_taps(h, factor, kernel);
    let src = frame.pixels();

    let mut horizontal = vec![0.0; h * ow];
    horizontal
        .par_chunks_mut(ow)
        .enumerate()
        .for_each(|(y, row)| {
            let line = &src[y * w..(y + 1) * w];
            for (out, tap) in row.iter_mut().zip(&xt) {
                *out = (0..4).map(|k| tap.weight[k] * line[tap.index[k]]).sum();
            }
        });

    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        let tap = &yt[y];
        for (x, v) in row.iter_mut().enumerate() {
            let acc: f64 = (0..4)
                .map(|k| tap.weight[k] * horizontal[tap.index[k] * ow + x])
                .sum();
            *v = acc.clamp(0.0, 1.0);
        }
    });

    Frame::new(ow, oh, frame.index(), out, frame.source_depth())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Direct 16-neighbour sum written without the separable machinery.
    fn oracle(frame: &Frame, factor: usize, a: f64) -> Vec<f64> {
        let keys = |t: f64| {
            let t = t.abs();
            if t <= 1.0 {
                (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
            } else if t < 2.0 {
                a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
            } else {
                0.0
            }
        };
        let (w, h) = (frame.width() as i64, frame.height() as i64);
        let f = factor as f64;
        let mut out = Vec::new();
        for dy in 0..h * factor as i64 {
            for dx in 0..w * factor as i64 {
                let sx = (dx as f64 + 0.5) / f - 0.5;
                let sy = (dy as f64 + 0.5) / f - 0.5;
                let mut acc = 0.0;
                for j in -1..=2 {
                    for i in -1..=2 {
                        let px = sx.floor() as i64 + i;
                        let py = sy.floor() as i64 + j;
                        let v = frame.get(px.clamp(0, w - 1) as usize, py.clamp(0, h - 1) as usize);
                        acc += keys(sx - px as f64) * keys(sy - py as f64) * v;
                    }
                }
                out.push(acc.clamp(0.0, 1.0));
            }
        }
        out
    }

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h).map(|_| rng.random::<f64>()).collect();
        Frame::new(w, h, 0, px, 16).unwrap()
    }

    #[test]
    fn rejects_unsupported_factor() {
        let f = random_frame(4, 4, 1);
        for factor in [0, 1, 3, 8] {
            assert!(bicubic_upsample(&f, factor).is_err());
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let f = Frame::new(5, 7, 0, vec![0.37; 35], 8).unwrap();
        for factor in [2, 4] {
            let up = bicubic_upsample(&f, factor).unwrap();
            assert_eq!((up.width(), up.height()), (5 * factor, 7 * factor));
            assert!(up.pixels().iter().all(|&v| (v - 0.37).abs() < 1e-15));
        }
    }

    #[test]
    fn linear_ramp_reproduced_in_interior() {
        let px = (0..64).map(|i| (i % 8) as f64 / 7.0).collect();
        let f = Frame::new(8, 8, 0, px, 16).unwrap();
        let up = bicubic_upsample(&f, 2).unwrap();
        for dy in 0..16 {
            for dx in 0..16 {
                let sx = source_coordinate(dx, 2);
                let base = sx.floor();
                if base < 1.0 || base + 2.0 > 7.0 {
                    continue;
                }
                assert!((up.get(dx, dy) - sx / 7.0).abs() < 1e-9, "({dx},{dy})");
            }
        }
    }

    #[test]
    fn matches_direct_summation() {
        let f = random_frame(16, 16, 7);
        for factor in [2, 4] {
            let up = bicubic_upsample(&f, factor).unwrap();
            let want = oracle(&f, factor, -0.5);
            for (got, want) in up.pixels().iter().zip(&want) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coordinate_maps_invert() {
        for s in [0.0, 1.25, 17.5] {
            for f in [2, 4] {
                let d = to_upsampled_coordinate(s, f);
                assert!((to_source_coordinate(d, f) - s).abs() < 1e-12);
            }
        }
        assert_eq!(to_upsampled_coordinate(source_coordinate(5, 2), 2), 5.0);
    }

    proptest! {
        #[test]
        fn kernel_is_partition_of_unity(t in 0.0f64..1.0, a in -1.0f64..0.0) {
            let k = BicubicKernel { a };
            let s: f64 = k.taps(t).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn output_stays_in_unit_range(seed in any::<u64>()) {
            let up = bicubic_upsample(&random_frame(6, 5, seed), 2).unwrap();
            prop_assert!(up.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
