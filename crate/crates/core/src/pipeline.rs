//! End-to-end workflows over frame directories: detect, track, evaluate,
//! benchmark, synthesize, render and upsample.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cc::{group_components, rule_filter, select_targets};
use crate::config::{PipelineConfig, ResolvedConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::frame::Frame;
use crate::geometry::{BBox, Detection};
use crate::io::{self, Pgm, TrackRow};
use crate::lig::{adaptive_threshold, binarize, compute_ig_map, LigParams};
use crate::sort::{SortParams, SortTracker};
use crate::synth::{generate_sequence, Scenario, RNG_ALGORITHM};
use crate::upsample::bicubic_upsample;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Wall-clock milliseconds spent in each stage of a detect run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub upsample: f64,
    pub lig: f64,
    pub threshold: f64,
    pub cc: f64,
}

impl StageTimings {
    pub fn sum(&self) -> f64 {
        self.load + self.upsample + self.lig + self.threshold + self.cc
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub input: PathBuf,
    pub config: PipelineConfig,
    pub resolved: ResolvedConfig,
    pub workers: usize,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub timings_ms: StageTimings,
    pub total_ms: f64,
    pub detections_per_frame: Vec<usize>,
}

/// Path of the manifest written next to an output file:
/// `out/detections.csv` gives `out/detections.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::param("workers", "must be >= 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))
}

/// Detection chain for one frame, original scale in, processed scale out.
pub fn detect_frame(frame: &Frame, config: &PipelineConfig) -> Result<Vec<Detection>> {
    let resolved = config.resolve()?;
    let up;
    let frame = if config.upsample_factor > 1 {
        up = bicubic_upsample(frame, config.upsample_factor)?;
        &up
    } else {
        frame
    };
    let ig = compute_ig_map(frame, &lig_params(&resolved))?;
    let mask = binarize(&ig, adaptive_threshold(&ig, resolved.lig.top_fraction)?);
    let comps = group_components(&mask, resolved.dilation_side, frame)?;
    let comps = rule_filter(comps, &resolved.area_rule);
    Ok(select_targets(comps, config.top_n_targets, frame.index()))
}

fn lig_params(r: &ResolvedConfig) -> LigParams {
    LigParams {
        patch_size: r.lig.patch_size,
        center_size: r.lig.center_size,
        sector_count: r.lig.sector_count,
        top_fraction: r.lig.top_fraction,
    }
}

/// Something that yields frames by position.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;
    fn load(&self, position: usize) -> Result<Frame>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSource for [Frame] {
    fn len(&self) -> usize {
        <[Frame]>::len(self)
    }

    fn load(&self, position: usize) -> Result<Frame> {
        Ok(self[position].clone())
    }
}

/// PGM files of a sequence directory. Frame indices are list positions.
pub struct FrameDir {
    pub dir: PathBuf,
    pub paths: Vec<PathBuf>,
    pub source_depth: Option<u8>,
}

impl FrameDir {
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ));
        }
        let (paths, sidecar) = io::list_frames(dir)?;
        if let Some(d) = sidecar.source_depth {
            if !(1..=16).contains(&d) {
                return Err(Error::param("source_depth", format!("{d} (expected 1 to 16)")));
            }
        }
        Ok(FrameDir {
            dir: dir.to_path_buf(),
            paths,
            source_depth: sidecar.source_depth,
        })
    }

    pub fn read_pgm(&self, position: usize) -> Result<Pgm> {
        let path = &self.paths[position];
        io::read_pgm(path).map_err(|reason| Error::FrameDecode {
            index: position,
            path: path.clone(),
            reason,
        })
    }
}

impl FrameSource for FrameDir {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn load(&self, position: usize) -> Result<Frame> {
        self.read_pgm(position)?
            .to_frame(position, self.source_depth)
            .map_err(|e| Error::FrameDecode {
                index: position,
                path: self.paths[position].clone(),
                reason: e.to_string(),
            })
    }
}

pub struct DetectRun {
    /// Detections per frame position.
    pub detections: Vec<Vec<Detection>>,
    pub timings_ms: StageTimings,
    pub total_ms: f64,
    pub width: usize,
    pub height: usize,
}

impl DetectRun {
    pub fn flat(&self) -> Vec<Detection> {
        self.detections.iter().flatten().copied().collect()
    }
}

fn par_stage<T: Send, U: Send>(
    items: Vec<T>,
    f: impl Fn(T) -> Result<U> + Sync + Send,
) -> Result<Vec<U>> {
    items.into_par_iter().map(f).collect()
}

/// Runs the detection chain over every frame on a pool of `workers` threads.
/// Frames go through in chunks, one stage at a time, so every stage has its
/// own wall-clock time. The output does not depend on `workers`.
pub fn detect_frames<S: FrameSource + ?Sized>(
    source: &S,
    config: &PipelineConfig,
    workers: usize,
) -> Result<DetectRun> {
    let resolved = config.resolve()?;
    let params = lig_params(&resolved);
    let factor = config.upsample_factor;
    let pool = thread_pool(workers)?;
    let n = source.len();
    if n == 0 {
        return Err(Error::param("frames", "no frames to process"));
    }
    let chunk = 4 * workers;
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let mut detections = Vec::with_capacity(n);
    let mut dims: Option<(usize, usize)> = None;

    pool.install(|| -> Result<()> {
        for first in (0..n).step_by(chunk) {
            let positions: Vec<usize> = (first..n.min(first + chunk)).collect();

            let t = Instant::now();
            let frames = par_stage(positions, |p| source.load(p))?;
            for f in &frames {
                let (w, h) = *dims.get_or_insert((f.width(), f.height()));
                if (f.width(), f.height()) != (w, h) {
                    return Err(Error::SizeMismatch {
                        index: f.index(),
                        got_w: f.width(),
                        got_h: f.height(),
                        want_w: w,
                        want_h: h,
                    });
                }
            }
            timings.load += ms_since(t);

            let frames = if factor > 1 {
                let t = Instant::now();
                let up = par_stage(frames, |f| bicubic_upsample(&f, factor))?;
                timings.upsample += ms_since(t);
                up
            } else {
                frames
            };

            let t = Instant::now();
            let maps = par_stage(frames, |f| compute_ig_map(&f, &params).map(|ig| (f, ig)))?;
            timings.lig += ms_since(t);

            let t = Instant::now();
            let masks = par_stage(maps, |(f, ig)| {
                let th = adaptive_threshold(&ig, params.top_fraction)?;
                Ok((f, binarize(&ig, th)))
            })?;
            timings.threshold += ms_since(t);

            let t = Instant::now();
            let found = par_stage(masks, |(f, mask)| {
                let comps = group_components(&mask, resolved.dilation_side, &f)?;
                let comps = rule_filter(comps, &resolved.area_rule);
                Ok(select_targets(comps, config.top_n_targets, f.index()))
            })?;
            timings.cc += ms_since(t);
            detections.extend(found);
        }
        Ok(())
    })?;

    let (width, height) = dims.unwrap_or_default();
    Ok(DetectRun {
        detections,
        timings_ms: timings,
        total_ms: ms_since(start),
        width,
        height,
    })
}

/// Detects targets in every frame of `input_dir` and writes the detections
/// CSV to `output` plus a manifest next to it. Nothing is written on error.
pub fn run_detect(
    input_dir: &Path,
    output: &Path,
    config: &PipelineConfig,
    workers: usize,
) -> Result<RunManifest> {
    let resolved = config.resolve()?;
    let source = FrameDir::open(input_dir)?;
    let run = detect_frames(&source, config, workers)?;
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        input: input_dir.to_path_buf(),
        config: config.clone(),
        resolved,
        workers,
        frame_count: run.detections.len(),
        width: run.width,
        height: run.height,
        timings_ms: run.timings_ms,
        total_ms: run.total_ms,
        detections_per_frame: run.detections.iter().map(Vec::len).collect(),
    };
    io::write_detections(output, &run.flat(), config.upsample_factor)?;
    write_json(&manifest_path(output), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Feeds detections through SORT frame by frame. Every frame from 0 to the
/// last one with a detection is stepped, so tracks age across empty frames.
/// Detections must be grouped by non-decreasing frame index.
pub fn track_detections(detections: &[Detection], params: &SortParams) -> Result<Vec<TrackRow>> {
    let mut tracker = SortTracker::new(*params)?;
    let mut by_frame: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    let mut last = None;
    for d in detections {
        if let Some(prev) = last {
            if d.frame_index < prev {
                return Err(Error::OutOfOrder {
                    last: prev,
                    got: d.frame_index,
                });
            }
        }
        last = Some(d.frame_index);
        by_frame.entry(d.frame_index).or_default().push(*d);
    }
    let mut rows = Vec::new();
    let Some(max_frame) = last else {
        return Ok(rows);
    };
    for frame in 0..=max_frame {
        let dets = by_frame.get(&frame).map_or(&[][..], Vec::as_slice);
        for r in tracker.step(frame, dets)? {
            rows.push(TrackRow {
                frame_index: frame,
                track_id: r.track_id,
                bbox: r.bbox,
                score: r.score,
            });
        }
    }
    Ok(rows)
}

pub fn run_track(detections: &Path, output: &Path, params: &SortParams) -> Result<Vec<TrackRow>> {
    let rows = track_detections(&io::read_detections(detections)?, params)?;
    io::write_tracks(output, &rows)?;
    Ok(rows)
}

/// Scores a detections or tracks file against original-scale ground truth.
/// Predictions are taken to be on a grid upsampled by `upsample_factor`; the
/// ground truth and `tp_distance` are mapped onto that grid.
pub fn run_eval(
    predictions: &Path,
    ground_truth: &Path,
    tp_distance: f64,
    upsample_factor: usize,
) -> Result<MetricsReport> {
    if !(tp_distance > 0.0 && tp_distance.is_finite()) {
        return Err(Error::param("tp_distance", "must be positive"));
    }
    if !matches!(upsample_factor, 1 | 2 | 4) {
        return Err(Error::param("upsample_factor", "must be 1, 2 or 4"));
    }
    let points = io::read_scored_centroids(predictions)?;
    let gt = io::read_ground_truth(ground_truth)?.scaled(upsample_factor);
    Ok(evaluate(&points, &gt, tp_distance * upsample_factor as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRun {
    pub workers: usize,
    pub total_ms: f64,
    pub lig_ms_per_frame: f64,
    /// Total-time speedup against the single-worker run.
    pub speedup: f64,
    pub lig_speedup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub tool_version: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub available_parallelism: usize,
    pub runs: Vec<BenchRun>,
    pub outputs_identical: bool,
}

/// Times the detect chain on in-memory frames at each worker count. Frames
/// are decoded once up front so only processing is measured. A
/// single-worker run is added as the baseline when not requested.
pub fn bench_frames(
    frames: &[Frame],
    config: &PipelineConfig,
    worker_counts: &[usize],
) -> Result<BenchReport> {
    let mut counts: Vec<usize> = worker_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    if counts.len() < 2 {
        return Err(Error::param(
            "workers",
            "bench needs at least two distinct worker counts",
        ));
    }
    if counts[0] == 0 {
        return Err(Error::param("workers", "must be >= 1"));
    }
    if counts[0] != 1 {
        counts.insert(0, 1);
    }
    let mut raw = Vec::new();
    let mut reference: Option<String> = None;
    let mut identical = true;
    let (mut width, mut height) = (0, 0);
    for &w in &counts {
        let run = detect_frames(frames, config, w)?;
        let csv = io::format_detections(&run.flat(), config.upsample_factor);
        match &reference {
            Some(r) => identical &= *r == csv,
            None => reference = Some(csv),
        }
        (width, height) = (run.width, run.height);
        raw.push((w, run.total_ms, run.timings_ms.lig));
    }
    let (_, base_total, base_lig) = raw[0];
    let n = frames.len() as f64;
    let runs = raw
        .into_iter()
        .map(|(workers, total_ms, lig)| BenchRun {
            workers,
            total_ms,
            lig_ms_per_frame: lig / n,
            speedup: base_total / total_ms,
            lig_speedup: base_lig / lig,
        })
        .collect();
    Ok(BenchReport {
        tool_version: TOOL_VERSION.to_string(),
        frame_count: frames.len(),
        width,
        height,
        patch_size: config.patch_size(),
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        runs,
        outputs_identical: identical,
    })
}

pub fn run_bench(
    input_dir: &Path,
    config: &PipelineConfig,
    worker_counts: &[usize],
) -> Result<BenchReport> {
    config.validate()?;
    let source = FrameDir::open(input_dir)?;
    let frames = (0..source.paths.len())
        .map(|p| source.load(p))
        .collect::<Result<Vec<_>>>()?;
    bench_frames(&frames, config, worker_counts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSummary {
    pub frame_count: usize,
    pub rng: String,
    pub speck_count: usize,
}

/// Writes the scenario's frames as 16-bit PGM, `gt.csv`, `specks.csv` and a
/// copy of the scenario into `out_dir`. The scenario is validated before
/// anything is written.
pub fn run_synth(scenario: &Scenario, out_dir: &Path) -> Result<SynthSummary> {
    let seq = generate_sequence(scenario)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for f in &seq.frames {
        let path = out_dir.join(io::frame_file_name(f.index()));
        io::write_pgm(&path, &Pgm::from_frame(f, 16)?)?;
    }
    io::write_ground_truth(&out_dir.join("gt.csv"), &seq.ground_truth)?;
    let mut specks = String::from("frame,x,y\n");
    for s in &seq.specks {
        specks.push_str(&format!("{},{:.6},{:.6}\n", s.frame_index, s.position.x, s.position.y));
    }
    let specks_path = out_dir.join("specks.csv");
    fs::write(&specks_path, specks).map_err(|e| Error::io(&specks_path, e))?;
    write_json(&out_dir.join("scenario.json"), scenario)?;
    let summary = SynthSummary {
        frame_count: seq.frames.len(),
        rng: RNG_ALGORITHM.to_string(),
        speck_count: seq.specks.len(),
    };
    write_json(&out_dir.join("synth.json"), &summary)?;
    Ok(summary)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sc: Scenario = serde_json::from_str(&text)?;
    sc.validate()?;
    Ok(sc)
}

/// Burns a border of `thickness` pixels around `bbox` (outside it) into
/// `pgm` at full scale. The box is rounded to whole pixels and the border is
/// clipped to the image.
pub fn draw_box(pgm: &mut Pgm, bbox: &BBox, thickness: usize) {
    let t = thickness as i64;
    let (x0, y0) = (bbox.x_min.round() as i64, bbox.y_min.round() as i64);
    let (x1, y1) = (bbox.x_max.round() as i64, bbox.y_max.round() as i64);
    let (w, h) = (pgm.width as i64, pgm.height as i64);
    for y in (y0 - t).max(0)..=(y1 + t).min(h - 1) {
        for x in (x0 - t).max(0)..=(x1 + t).min(w - 1) {
            let inside = (x0..=x1).contains(&x) && (y0..=y1).contains(&y);
            if !inside {
                pgm.samples[(y * w + x) as usize] = pgm.maxval;
            }
        }
    }
}

pub const RENDER_BORDER: usize = 3;

/// Copies every frame of `input_dir` into `out_dir` with the boxes of the
/// tracks reported on it drawn in. Returns the number of boxes drawn.
pub fn run_render(input_dir: &Path, tracks: &Path, out_dir: &Path) -> Result<usize> {
    let source = FrameDir::open(input_dir)?;
    let rows = io::read_tracks(tracks)?;
    let mut by_frame: BTreeMap<usize, Vec<BBox>> = BTreeMap::new();
    for r in &rows {
        if r.frame_index >= source.paths.len() {
            return Err(Error::FrameDecode {
                index: r.frame_index,
                path: tracks.to_path_buf(),
                reason: format!(
                    "track {} refers to a frame that does not exist ({} frames)",
                    r.track_id,
                    source.paths.len()
                ),
            });
        }
        by_frame.entry(r.frame_index).or_default().push(r.bbox);
    }
    let pgms = (0..source.paths.len())
        .map(|p| source.read_pgm(p))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (p, mut pgm) in pgms.into_iter().enumerate() {
        for b in by_frame.get(&p).into_iter().flatten() {
            draw_box(&mut pgm, b, RENDER_BORDER);
        }
        let name = source.paths[p].file_name().expect("frame path has a name");
        io::write_pgm(&out_dir.join(name), &pgm)?;
    }
    Ok(rows.len())
}

/// Writes a bicubic-upsampled copy of every frame, at the source bit depth.
pub fn run_upsample(input_dir: &Path, factor: usize, out_dir: &Path, workers: usize) -> Result<usize> {
    let source = FrameDir::open(input_dir)?;
    let pool = thread_pool(workers)?;
    let outputs = pool.install(|| {
        (0..source.paths.len())
            .into_par_iter()
            .map(|p| {
                let pgm = source.read_pgm(p)?;
                let depth = source.source_depth.unwrap_or_else(|| pgm.depth());
                let frame = source.load(p)?;
                let up = bicubic_upsample(&frame, factor)?;
                Pgm::from_frame(&up, depth)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (p, pgm) in outputs.iter().enumerate() {
        let name = source.paths[p].file_name().expect("frame path has a name");
        io::write_pgm(&out_dir.join(name), pgm)?;
    }
    Ok(outputs.len())
}
