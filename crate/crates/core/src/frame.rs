use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single grayscale frame with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    width: usize,
    height: usize,
    index: usize,
    pixels: Vec<f64>,
    source_depth: u8,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        index: usize,
        pixels: Vec<f64>,
        source_depth: u8,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("frame", "width and height must be at least 1"));
        }
        if pixels.len() != width * height {
            return Err(Error::param(
                "frame",
                format!("{} pixels for a {width}x{height} frame", pixels.len()),
            ));
        }
        max_sample(source_depth)?;
        if let Some(bad) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param(
                "frame",
                format!("pixel {bad} has intensity {} outside [0, 1]", pixels[bad]),
            ));
        }
        Ok(Frame {
            width,
            height,
            index,
            pixels,
            source_depth,
        })
    }

    /// Builds a frame from raw integer samples, dividing by `2^depth - 1`.
    pub fn from_samples(
        width: usize,
        height: usize,
        index: usize,
        samples: &[u16],
        source_depth: u8,
    ) -> Result<Self> {
        let full = max_sample(source_depth)?;
        let pixels = samples
            .iter()
            .map(|&s| (f64::from(s) / full).min(1.0))
            .collect();
        Frame::new(width, height, index, pixels, source_depth)
    }

    /// Quantizes back to integer samples at `depth` bits.
    pub fn to_samples(&self, depth: u8) -> Result<Vec<u16>> {
        let full = max_sample(depth)?;
        Ok(self
            .pixels
            .iter()
            .map(|&v| (v * full).round() as u16)
            .collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn source_depth(&self) -> u8 {
        self.source_depth
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

fn max_sample(depth: u8) -> Result<f64> {
    if (1..=16).contains(&depth) {
        Ok(((1u32 << depth) - 1) as f64)
    } else {
        Err(Error::param("source_depth", format!("{depth} (expected 1 to 16)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_by_depth() {
        let f = Frame::from_samples(2, 1, 0, &[0, 255], 8).unwrap();
        assert_eq!(f.pixels(), &[0.0, 1.0]);
        let f = Frame::from_samples(2, 1, 0, &[65535, 32768], 16).unwrap();
        assert_eq!(f.get(0, 0), 1.0);
        assert!((f.get(1, 0) - 32768.0 / 65535.0).abs() < 1e-15);
        assert_eq!(f.to_samples(16).unwrap(), vec![65535, 32768]);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(Frame::new(0, 3, 0, vec![], 8).is_err());
        assert!(Frame::new(2, 2, 0, vec![0.0; 3], 8).is_err());
        assert!(Frame::new(1, 1, 0, vec![1.5], 8).is_err());
        assert!(Frame::new(1, 1, 0, vec![0.5], 0).is_err());
        assert!(Frame::new(1, 1, 0, vec![0.5], 17).is_err());
        assert_eq!(Frame::from_samples(1, 1, 0, &[4095], 12).unwrap().get(0, 0), 1.0);
    }
}
