//! Synthetic MWIR-like sequences with a single moving target.
//!
//! Each frame is a flat background plus static Gaussian clutter, the moving
//! Gaussian target, and occasionally a one-frame bright speck. A global gain
//! jitter and i.i.d. Gaussian noise are applied last, and intensities are
//! quantized to 16 bits so that frames survive a PGM round trip unchanged.
//!
//! Randomness comes from ChaCha8: stream 0 of the scenario seed draws the
//! clutter layout, stream `t + 1` draws everything specific to frame `t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruth, GtRecord};
use crate::frame::Frame;
use crate::geometry::{BBox, Point};

pub const RNG_ALGORITHM: &str = "ChaCha8 (seed, stream = frame index + 1)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    pub amplitude: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterSpec {
    pub count: usize,
    pub amplitude_range: [f64; 2],
    pub sigma_range: [f64; 2],
    /// Fixed blob centres; drawn uniformly from the seed when absent.
    pub positions: Option<Vec<[f64; 2]>>,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        ClutterSpec {
            count: 0,
            amplitude_range: [0.05, 0.2],
            sigma_range: [3.0, 6.0],
            positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeckSpec {
    pub amplitude: f64,
    /// Defaults to the target's sigma, so a speck looks like the target.
    pub sigma: Option<f64>,
    /// Specks are never placed closer than this to the target centre.
    pub min_target_distance: f64,
}

impl Default for SpeckSpec {
    fn default() -> Self {
        SpeckSpec {
            amplitude: 0.6,
            sigma: None,
            min_target_distance: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub background_level: f64,
    pub target: TargetSpec,
    #[serde(default)]
    pub clutter: ClutterSpec,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub flicker: f64,
    #[serde(default)]
    pub spurious_rate: f64,
    #[serde(default)]
    pub speck: SpeckSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Position of a one-frame speck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckRecord {
    pub frame_index: usize,
    pub position: Point,
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub ground_truth: GroundTruth,
    pub specks: Vec<SpeckRecord>,
}

fn in_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} (must be in [0, 1])")))
    }
}

fn ordered_range(name: &'static str, r: [f64; 2], min: f64) -> Result<()> {
    if r[0].is_finite() && r[1].is_finite() && min <= r[0] && r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::param(name, format!("[{}, {}] is not an ordered range >= {min}", r[0], r[1])))
    }
}

impl Scenario {
    pub fn speck_sigma(&self) -> f64 {
        self.speck.sigma.unwrap_or(self.target.sigma)
    }

    pub fn target_center(&self, t: usize) -> Point {
        let t = t as f64;
        Point::new(
            self.target.start[0] + t * self.target.velocity[0],
            self.target.start[1] + t * self.target.velocity[1],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("width/height", "frame dimensions must be >= 1"));
        }
        if self.frame_count == 0 {
            return Err(Error::param("frame_count", "must be >= 1"));
        }
        in_unit("background_level", self.background_level)?;
        in_unit("target.amplitude", self.target.amplitude)?;
        if self.target.amplitude + self.background_level > 1.0 {
            return Err(Error::param(
                "target.amplitude",
                format!(
                    "amplitude {} + background {} exceeds 1",
                    self.target.amplitude, self.background_level
                ),
            ));
        }
        if !(self.target.sigma > 0.0) {
            return Err(Error::param("target.sigma", "must be positive"));
        }
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        for t in [0, self.frame_count - 1] {
            let c = self.target_center(t);
            if !(c.x >= 0.0 && c.x <= w && c.y >= 0.0 && c.y <= h) {
                return Err(Error::param(
                    "target",
                    format!("centre ({:.2}, {:.2}) at frame {t} is outside the frame", c.x, c.y),
                ));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.flicker) {
            return Err(Error::param("flicker", format!("{} (must be in [0, 1))", self.flicker)));
        }
        in_unit("spurious_rate", self.spurious_rate)?;
        in_unit("speck.amplitude", self.speck.amplitude)?;
        if !(self.speck_sigma() > 0.0) {
            return Err(Error::param("speck.sigma", "must be positive"));
        }
        ordered_range("clutter.amplitude_range", self.clutter.amplitude_range, 0.0)?;
        ordered_range("clutter.sigma_range", self.clutter.sigma_range, f64::MIN_POSITIVE)?;
        if let Some(p) = &self.clutter.positions {
            if p.len() != self.clutter.count {
                return Err(Error::param(
                    "clutter.positions",
                    format!("{} positions for count {}", p.len(), self.clutter.count),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    amplitude: f64,
    sigma: f64,
}

impl Blob {
    fn add_to(&self, img: &mut [f64], w: usize) {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        for (i, v) in img.iter_mut().enumerate() {
            let dx = (i % w) as f64 - self.x;
            let dy = (i / w) as f64 - self.y;
            *v += self.amplitude * (-(dx * dx + dy * dy) * inv).exp();
        }
    }
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn clutter_blobs(sc: &Scenario) -> Vec<Blob> {
    let c = &sc.clutter;
    let mut rng = frame_rng(sc.seed, 0);
    (0..c.count)
        .map(|i| {
            let (x, y) = match &c.positions {
                Some(p) => (p[i][0], p[i][1]),
                None => (
                    rng.random_range(0.0..sc.width as f64),
                    rng.random_range(0.0..sc.height as f64),
                ),
            };
            Blob {
                x,
                y,
                amplitude: sample(&mut rng, c.amplitude_range),
                sigma: sample(&mut rng, c.sigma_range),
            }
        })
        .collect()
}

fn sample(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] < r[1] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn render_frame(sc: &Scenario, t: usize, clutter: &[Blob]) -> (Frame, Option<SpeckRecord>) {
    let (w, h) = (sc.width, sc.height);
    let mut rng = frame_rng(sc.seed, t as u64 + 1);
    let mut img = vec![sc.background_level; w * h];
    for b in clutter {
        b.add_to(&mut img, w);
    }
    let center = sc.target_center(t);
    Blob {
        x: center.x,
        y: center.y,
        amplitude: sc.target.amplitude,
        sigma: sc.target.sigma,
    }
    .add_to(&mut img, w);

    let mut speck = None;
    if sc.spurious_rate > 0.0 && rng.random::<f64>() < sc.spurious_rate {
        // bounded rejection sampling keeps specks clear of the target
        for _ in 0..64 {
            let p = Point::new(
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
            );
            if crate::geometry::centroid_distance(p, center) >= sc.speck.min_target_distance {
                speck = Some(SpeckRecord {
                    frame_index: t,
                    position: p,
                });
                break;
            }
        }
        if let Some(s) = speck {
            Blob {
                x: s.position.x,
                y: s.position.y,
                amplitude: sc.speck.amplitude,
                sigma: sc.speck_sigma(),
            }
            .add_to(&mut img, w);
        }
    }

    let gain = if sc.flicker > 0.0 {
        1.0 + sc.flicker * rng.random_range(-1.0..1.0)
    } else {
        1.0
    };
    let noise = (sc.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, sc.noise_sigma).expect("validated sigma"));
    for v in img.iter_mut() {
        let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        let x = (*v * gain + n).clamp(0.0, 1.0);
        *v = (x * 65535.0).round() / 65535.0;
    }
    let frame = Frame::new(w, h, t, img, 16).expect("intensities clamped to [0, 1]");
    (frame, speck)
}

/// Renders every frame of the scenario together with its ground truth.
pub fn generate_sequence(sc: &Scenario) -> Result<Sequence> {
    sc.validate()?;
    let clutter = clutter_blobs(sc);
    let rendered: Vec<_> = (0..sc.frame_count)
        .into_par_iter()
        .map(|t| render_frame(sc, t, &clutter))
        .collect();
    let two_sigma = 2.0 * sc.target.sigma;
    let gt = GroundTruth::new((0..sc.frame_count).map(|t| {
        let c = sc.target_center(t);
        GtRecord {
            frame_index: t,
            centroid: c,
            bbox: BBox {
                x_min: c.x - two_sigma,
                y_min: c.y - two_sigma,
                x_max: c.x + two_sigma,
                y_max: c.y + two_sigma,
            },
        }
    }))?;
    let mut frames = Vec::with_capacity(rendered.len());
    let mut specks = Vec::new();
    for (f, s) in rendered {
        frames.push(f);
        specks.extend(s);
    }
    Ok(Sequence {
        frames,
        ground_truth: gt,
        specks,
    })
}
