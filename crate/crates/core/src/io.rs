//! File formats: binary PGM frames and the comma-separated detection, track
//! and ground-truth tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruth, GtRecord};
use crate::frame::Frame;
use crate::geometry::{BBox, Detection, Point};
use crate::upsample::to_source_coordinate;

/// Raw contents of a binary (P5) PGM file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    /// Bits needed to hold `maxval`.
    pub fn depth(&self) -> u8 {
        (16 - self.maxval.leading_zeros()).max(1) as u8
    }

    pub fn to_frame(&self, index: usize, depth: Option<u8>) -> Result<Frame> {
        Frame::from_samples(
            self.width,
            self.height,
            index,
            &self.samples,
            depth.unwrap_or_else(|| self.depth()),
        )
    }

    pub fn from_frame(frame: &Frame, depth: u8) -> Result<Pgm> {
        Ok(Pgm {
            width: frame.width(),
            height: frame.height(),
            maxval: ((1u32 << depth.clamp(1, 16)) - 1) as u16,
            samples: frame.to_samples(depth)?,
        })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Pgm, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5) file".into());
    }
    let mut number = |what: &str| -> std::result::Result<usize, String> {
        token()?
            .parse::<usize>()
            .map_err(|_| format!("bad {what} in header"))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    let data = bytes.get(pos..pos + need).ok_or("truncated raster")?;
    let samples = if wide {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        data.iter().map(|&b| u16::from(b)).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval > 255 {
        for s in &pgm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(pgm.samples.iter().map(|&s| s.min(255) as u8));
    }
    out
}

pub fn read_pgm(path: &Path) -> std::result::Result<Pgm, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: &Path, pgm: &Pgm) -> Result<()> {
    fs::write(path, encode_pgm(pgm)).map_err(|e| Error::io(path, e))
}

/// Optional `sequence.json` next to the frames.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSidecar {
    /// Bit depth used for normalization instead of the one implied by each
    /// file's maxval.
    pub source_depth: Option<u8>,
    /// Explicit frame order (file names relative to the directory).
    pub order: Option<Vec<String>>,
}

pub const SIDECAR_NAME: &str = "sequence.json";

/// Frame files of a sequence directory, in processing order, plus the
/// sidecar if present. Without an explicit order, `*.pgm` files are sorted
/// by name.
pub fn list_frames(dir: &Path) -> Result<(Vec<PathBuf>, SequenceSidecar)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let sidecar_path = dir.join(SIDECAR_NAME);
    let sidecar: SequenceSidecar = if sidecar_path.is_file() {
        let text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
        serde_json::from_str(&text)?
    } else {
        SequenceSidecar::default()
    };
    let paths = match &sidecar.order {
        Some(order) => order.iter().map(|n| dir.join(n)).collect(),
        None => {
            let mut paths = Vec::new();
            for e in entries {
                let p = e.map_err(|e| Error::io(dir, e))?.path();
                if p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
                    paths.push(p);
                }
            }
            paths.sort();
            paths
        }
    };
    if paths.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    Ok((paths, sidecar))
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub const DETECTIONS_HEADER: &str = "frame,x_min,y_min,x_max,y_max,cx,cy,score,area";
pub const DETECTIONS_HEADER_UPSAMPLED: &str =
    "frame,x_min,y_min,x_max,y_max,cx,cy,score,area,cx_orig,cy_orig";
pub const TRACKS_HEADER: &str = "frame,track_id,x_min,y_min,x_max,y_max,score";
pub const GT_HEADER: &str = "frame,cx,cy,x_min,y_min,x_max,y_max";

/// Renders detections (processed-scale coordinates). When `upsample_factor`
/// is above 1 the centroid is repeated in original-scale coordinates.
pub fn format_detections(detections: &[Detection], upsample_factor: usize) -> String {
    let mut s = String::new();
    s.push_str(if upsample_factor > 1 {
        DETECTIONS_HEADER_UPSAMPLED
    } else {
        DETECTIONS_HEADER
    });
    s.push('\n');
    for d in detections {
        let b = d.bbox;
        write!(
            s,
            "{},{},{},{},{},{:.4},{:.4},{:.6},{}",
            d.frame_index, b.x_min, b.y_min, b.x_max, b.y_max, d.centroid.x, d.centroid.y, d.score, d.area
        )
        .unwrap();
        if upsample_factor > 1 {
            write!(
                s,
                ",{:.4},{:.4}",
                to_source_coordinate(d.centroid.x, upsample_factor),
                to_source_coordinate(d.centroid.y, upsample_factor)
            )
            .unwrap();
        }
        s.push('\n');
    }
    s
}

/// One row of a tracks file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame_index: usize,
    pub track_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

pub fn format_tracks(rows: &[TrackRow]) -> String {
    let mut s = String::from(TRACKS_HEADER);
    s.push('\n');
    for r in rows {
        let b = r.bbox;
        writeln!(
            s,
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.6}",
            r.frame_index, r.track_id, b.x_min, b.y_min, b.x_max, b.y_max, r.score
        )
        .unwrap();
    }
    s
}

pub fn format_ground_truth(gt: &GroundTruth) -> String {
    let mut s = String::from(GT_HEADER);
    s.push('\n');
    for r in gt.records() {
        let b = r.bbox;
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.frame_index, r.centroid.x, r.centroid.y, b.x_min, b.y_min, b.x_max, b.y_max
        )
        .unwrap();
    }
    s
}

pub fn write_detections(path: &Path, detections: &[Detection], upsample_factor: usize) -> Result<()> {
    write_text(path, &format_detections(detections, upsample_factor))
}

pub fn write_tracks(path: &Path, rows: &[TrackRow]) -> Result<()> {
    write_text(path, &format_tracks(rows))
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    write_text(path, &format_ground_truth(gt))
}

/// Header-checked, line-numbered numeric table.
struct Table<'a> {
    path: &'a Path,
    columns: Vec<&'a str>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Table<'a> {
    fn parse(path: &'a Path, text: &'a str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: "missing header row".into(),
            })?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("expected {} fields, found {}", columns.len(), fields.len()),
                });
            }
            rows.push((i + 1, fields));
        }
        Ok(Table { path, columns, rows })
    }

    fn expect_header(&self, want: &[&str]) -> Result<()> {
        if self.columns.len() < want.len() || self.columns[..want.len()] != *want {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: 1,
                reason: format!("expected header starting `{}`", want.join(",")),
            });
        }
        Ok(())
    }

    fn num<T: std::str::FromStr>(&self, line: usize, fields: &[&str], col: usize) -> Result<T> {
        fields[col].parse().map_err(|_| Error::Parse {
            path: self.path.to_path_buf(),
            line,
            reason: format!("bad value `{}` in column `{}`", fields[col], self.columns[col]),
        })
    }

    fn bbox(&self, line: usize, f: &[&str], first: usize) -> Result<BBox> {
        BBox::new(
            self.num(line, f, first)?,
            self.num(line, f, first + 1)?,
            self.num(line, f, first + 2)?,
            self.num(line, f, first + 3)?,
        )
        .map_err(|e| Error::Parse {
            path: self.path.to_path_buf(),
            line,
            reason: e.to_string(),
        })
    }
}

fn header_fields(h: &str) -> Vec<&str> {
    h.split(',').collect()
}

pub fn parse_detections(path: &Path, text: &str) -> Result<Vec<Detection>> {
    let t = Table::parse(path, text)?;
    t.expect_header(&header_fields(DETECTIONS_HEADER))?;
    t.rows
        .iter()
        .map(|(line, f)| {
            Ok(Detection {
                frame_index: t.num(*line, f, 0)?,
                bbox: t.bbox(*line, f, 1)?,
                centroid: Point::new(t.num(*line, f, 5)?, t.num(*line, f, 6)?),
                score: t.num(*line, f, 7)?,
                area: t.num(*line, f, 8)?,
            })
        })
        .collect()
}

pub fn parse_tracks(path: &Path, text: &str) -> Result<Vec<TrackRow>> {
    let t = Table::parse(path, text)?;
    t.expect_header(&header_fields(TRACKS_HEADER))?;
    t.rows
        .iter()
        .map(|(line, f)| {
            Ok(TrackRow {
                frame_index: t.num(*line, f, 0)?,
                track_id: t.num(*line, f, 1)?,
                bbox: t.bbox(*line, f, 2)?,
                score: t.num(*line, f, 6)?,
            })
        })
        .collect()
}

pub fn parse_ground_truth(path: &Path, text: &str) -> Result<GroundTruth> {
    let t = Table::parse(path, text)?;
    t.expect_header(&header_fields(GT_HEADER))?;
    let records = t
        .rows
        .iter()
        .map(|(line, f)| {
            Ok(GtRecord {
                frame_index: t.num(*line, f, 0)?,
                centroid: Point::new(t.num(*line, f, 1)?, t.num(*line, f, 2)?),
                bbox: t.bbox(*line, f, 3)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::new(records)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(path, &read_text(path)?)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRow>> {
    parse_tracks(path, &read_text(path)?)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(path, &read_text(path)?)
}

/// Centroids per frame from either a detections or a tracks file, chosen by
/// header. Track centroids are box centres.
pub fn read_scored_centroids(path: &Path) -> Result<BTreeMap<usize, Vec<Point>>> {
    let text = read_text(path)?;
    let mut out: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
    if text.starts_with(TRACKS_HEADER) {
        for r in parse_tracks(path, &text)? {
            out.entry(r.frame_index).or_default().push(r.bbox.center());
        }
    } else {
        for d in parse_detections(path, &text)? {
            out.entry(d.frame_index).or_default().push(d.centroid);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend([0u8, 128, 255]);
        let p = decode_pgm(&bytes).unwrap();
        assert_eq!((p.width, p.height, p.maxval), (3, 1, 255));
        assert_eq!(p.samples, vec![0, 128, 255]);
        assert_eq!(p.depth(), 8);
    }

    #[test]
    fn pgm_errors() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2 2\n70000\n").is_err());
        assert!(decode_pgm(b"P5\n2").is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..9, h in 1usize..9, wide in any::<bool>(), seed in any::<u16>()) {
            let maxval = if wide { 65535 } else { 255 };
            let samples = (0..w * h).map(|i| ((i as u32 * 7919 + seed as u32) % (maxval as u32 + 1)) as u16).collect();
            let p = Pgm { width: w, height: h, maxval, samples };
            prop_assert_eq!(decode_pgm(&encode_pgm(&p)).unwrap(), p);
        }
    }

    #[test]
    fn detections_round_trip() {
        let d = Detection {
            frame_index: 4,
            bbox: BBox::new(3.0, 5.0, 9.0, 11.0).unwrap(),
            centroid: Point::new(6.25, 8.0),
            score: 0.75,
            area: 6,
        };
        let text = format_detections(&[d], 1);
        assert_eq!(text, "frame,x_min,y_min,x_max,y_max,cx,cy,score,area\n4,3,5,9,11,6.2500,8.0000,0.750000,6\n");
        assert_eq!(parse_detections(Path::new("d.csv"), &text).unwrap(), vec![d]);
        let up = format_detections(&[d], 2);
        assert!(up.starts_with(DETECTIONS_HEADER_UPSAMPLED));
        assert!(up.ends_with(",2.8750,3.7500\n"));
        assert_eq!(parse_detections(Path::new("d.csv"), &up).unwrap(), vec![d]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "frame,x_min,y_min,x_max,y_max,cx,cy,score,area\n0,1,1,2,2,1.5,1.5,0.5,4\n1,1,x,2,2,1.5,1.5,0.5,4\n";
        let err = parse_detections(Path::new("d.csv"), text).unwrap_err().to_string();
        assert!(err.contains("d.csv:3"), "{err}");
        let err = parse_tracks(Path::new("t.csv"), "frame,track_id,x_min,y_min,x_max,y_max,score\n0,1,2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("t.csv:2"), "{err}");
        assert!(parse_ground_truth(Path::new("g.csv"), "frame,foo\n").is_err());
        assert!(parse_ground_truth(Path::new("g.csv"), "").is_err());
    }

    #[test]
    fn tracks_and_gt_round_trip() {
        let rows = vec![TrackRow {
            frame_index: 2,
            track_id: 7,
            bbox: BBox::new(1.5, 2.25, 8.5, 9.0).unwrap(),
            score: 0.5,
        }];
        let text = format_tracks(&rows);
        assert_eq!(parse_tracks(Path::new("t.csv"), &text).unwrap(), rows);
        assert_eq!(format_tracks(&[]), format!("{TRACKS_HEADER}\n"));

        let gt = GroundTruth::new([GtRecord {
            frame_index: 0,
            centroid: Point::new(4.5, 6.0),
            bbox: BBox::new(1.5, 3.0, 7.5, 9.0).unwrap(),
        }])
        .unwrap();
        assert_eq!(parse_ground_truth(Path::new("g.csv"), &format_ground_truth(&gt)).unwrap(), gt);
    }
}
