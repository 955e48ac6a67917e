//! CSV stream formats. Every reader requires the exact header and reports
//! the file and line of the first malformed record.
//!
//! | file        | header                              |
//! |-------------|-------------------------------------|
//! | calibration | `index,eye,vx,vy,sx,sy`             |
//! | poses       | `frame,wx,wy,wz,tx,ty,tz`           |
//! | vectors     | `frame,eye,vx,vy`                   |
//! | truth       | `frame,sx,sy`                       |
//! | estimates   | `frame,sx,sy,kind,recalibrated`     |
//! | eyes        | `frame,eye,x,y,confidence`          |
//! | features    | `frame,feature,x,y,status`          |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{HeadPose, ScreenGeometry, UserPointSet};
use crate::lk::TrackPoint;
use crate::models::{CalibrationSample, CalibrationSet, Eye, GazeVector, ScreenPoint};
use crate::pipeline::GazeEstimate;

pub const CALIBRATION_HEADER: [&str; 6] = ["index", "eye", "vx", "vy", "sx", "sy"];
pub const POSE_HEADER: [&str; 7] = ["frame", "wx", "wy", "wz", "tx", "ty", "tz"];
pub const VECTOR_HEADER: [&str; 4] = ["frame", "eye", "vx", "vy"];
pub const TRUTH_HEADER: [&str; 3] = ["frame", "sx", "sy"];
pub const ESTIMATE_HEADER: [&str; 5] = ["frame", "sx", "sy", "kind", "recalibrated"];
pub const EYE_HEADER: [&str; 5] = ["frame", "eye", "x", "y", "confidence"];
pub const FEATURE_HEADER: [&str; 5] = ["frame", "feature", "x", "y", "status"];

/// A data row with its 1-based line number in the file.
struct Row {
    line: usize,
    fields: csv::StringRecord,
}

struct Table<'a> {
    path: &'a Path,
    rows: Vec<Row>,
}

impl Table<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Ingest {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, row: &Row, col: usize, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = row.fields.get(col).unwrap_or("").trim();
        raw.parse::<T>()
            .map_err(|e| self.err(row.line, format!("column {name}: cannot parse {raw:?}: {e}")))
    }

    fn float(&self, row: &Row, col: usize, name: &str) -> Result<f64> {
        let v: f64 = self.parse(row, col, name)?;
        if !v.is_finite() {
            return Err(self.err(row.line, format!("column {name}: non-finite value")));
        }
        Ok(v)
    }
}

fn read_table<'a>(path: &'a Path, header: &[&str]) -> Result<Table<'a>> {
    let file = File::open(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    read_table_from(path, file, header)
}

fn read_table_from<'a>(path: &'a Path, input: impl std::io::Read, header: &[&str]) -> Result<Table<'a>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut table = Table { path, rows: Vec::new() };
    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r.map_err(|e| table.err(1, e.to_string()))?,
        None => return Err(table.err(1, format!("empty file, expected header {}", header.join(",")))),
    };
    if first.iter().ne(header.iter().copied()) {
        return Err(table.err(
            1,
            format!("header {:?} does not match {}", first.iter().collect::<Vec<_>>().join(","), header.join(",")),
        ));
    }
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            table.err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(table.err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        table.rows.push(Row { line, fields: rec });
    }
    Ok(table)
}

/// Checks that frame numbers increase by exactly one from row to row.
fn check_consecutive(table: &Table, frames: &[u64]) -> Result<()> {
    for (w, row) in frames.windows(2).zip(table.rows.iter().skip(1)) {
        if w[1] != w[0] + 1 {
            let msg = if w[1] > w[0] + 1 {
                format!("gap in frame numbering: frame {} follows frame {}", w[1], w[0])
            } else {
                format!("frame {} out of order after frame {}", w[1], w[0])
            };
            return Err(table.err(row.line, msg));
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn finish(mut w: csv::Writer<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Calibration samples grouped into one set per eye, left first.
pub fn read_calibration(path: &Path, screen: &ScreenGeometry) -> Result<Vec<CalibrationSet>> {
    let t = read_table(path, &CALIBRATION_HEADER)?;
    let mut by_eye: BTreeMap<Eye, Vec<CalibrationSample>> = BTreeMap::new();
    for row in &t.rows {
        let eye: Eye = t.parse(row, 1, "eye")?;
        by_eye.entry(eye).or_default().push(CalibrationSample {
            index: t.parse(row, 0, "index")?,
            vector: GazeVector::new(t.float(row, 2, "vx")?, t.float(row, 3, "vy")?, eye),
            target: ScreenPoint::new(t.float(row, 4, "sx")?, t.float(row, 5, "sy")?),
        });
    }
    if by_eye.is_empty() {
        return Err(t.err(1, "no calibration samples"));
    }
    by_eye
        .into_values()
        .map(|samples| {
            CalibrationSet::new(samples, *screen).map_err(|e| t.err(0, e.to_string()))
        })
        .collect()
}

pub fn write_calibration(path: &Path, sets: &[CalibrationSet]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(CALIBRATION_HEADER)?;
    for s in sets.iter().flat_map(|s| s.samples()) {
        w.write_record([
            s.index.to_string(),
            s.vector.eye.to_string(),
            s.vector.x.to_string(),
            s.vector.y.to_string(),
            s.target.sx.to_string(),
            s.target.sy.to_string(),
        ])?;
    }
    finish(w)
}

pub fn read_poses(path: &Path) -> Result<Vec<(u64, HeadPose)>> {
    let t = read_table(path, &POSE_HEADER)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let v: Vec<f64> = (1..7).map(|c| t.float(row, c, POSE_HEADER[c])).collect::<Result<_>>()?;
        let pose = HeadPose::new(v[0], v[1], v[2], v[3], v[4], v[5]).map_err(|e| t.err(row.line, e.to_string()))?;
        out.push((t.parse(row, 0, "frame")?, pose));
    }
    let frames: Vec<u64> = out.iter().map(|p| p.0).collect();
    check_consecutive(&t, &frames)?;
    Ok(out)
}

pub fn write_poses(path: &Path, poses: &[(u64, HeadPose)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(POSE_HEADER)?;
    for (f, p) in poses {
        w.write_record([f.to_string(), p.wx.to_string(), p.wy.to_string(), p.wz.to_string(), p.tx.to_string(), p.ty.to_string(), p.tz.to_string()])?;
    }
    finish(w)
}

/// Gaze vectors grouped by frame, in file order. Frames must not decrease.
pub fn read_vectors(path: &Path) -> Result<Vec<(u64, Vec<GazeVector>)>> {
    let t = read_table(path, &VECTOR_HEADER)?;
    let mut out: Vec<(u64, Vec<GazeVector>)> = Vec::new();
    for row in &t.rows {
        let frame: u64 = t.parse(row, 0, "frame")?;
        let v = GazeVector::new(t.float(row, 2, "vx")?, t.float(row, 3, "vy")?, t.parse(row, 1, "eye")?);
        match out.last_mut() {
            Some((f, vs)) if *f == frame => {
                if vs.iter().any(|x| x.eye == v.eye) {
                    return Err(t.err(row.line, format!("second {} vector for frame {frame}", v.eye)));
                }
                vs.push(v);
            }
            Some((f, _)) if *f > frame => {
                return Err(t.err(row.line, format!("frame {frame} out of order after frame {f}")));
            }
            _ => out.push((frame, vec![v])),
        }
    }
    Ok(out)
}

pub fn write_vectors(path: &Path, vectors: &[(u64, Vec<GazeVector>)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(VECTOR_HEADER)?;
    for (f, vs) in vectors {
        for v in vs {
            w.write_record([f.to_string(), v.eye.to_string(), v.x.to_string(), v.y.to_string()])?;
        }
    }
    finish(w)
}

/// Ground-truth points; frame numbers must be consecutive.
pub fn read_truth(path: &Path) -> Result<Vec<(u64, ScreenPoint)>> {
    let t = read_table(path, &TRUTH_HEADER)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        out.push((
            t.parse(row, 0, "frame")?,
            ScreenPoint::new(t.float(row, 1, "sx")?, t.float(row, 2, "sy")?),
        ));
    }
    let frames: Vec<u64> = out.iter().map(|p| p.0).collect();
    check_consecutive(&t, &frames)?;
    Ok(out)
}

pub fn write_truth(path: &Path, truth: &[(u64, ScreenPoint)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(TRUTH_HEADER)?;
    for (f, p) in truth {
        w.write_record([f.to_string(), p.sx.to_string(), p.sy.to_string()])?;
    }
    finish(w)
}

/// Estimated points as `(frame, point)`; the tracker and recalibration
/// columns are checked but not returned.
pub fn read_estimates(path: &Path) -> Result<Vec<(u64, ScreenPoint)>> {
    let t = read_table(path, &ESTIMATE_HEADER)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let _: crate::pipeline::TrackerKind = t.parse(row, 3, "kind")?;
        let _: bool = t.parse(row, 4, "recalibrated")?;
        out.push((
            t.parse(row, 0, "frame")?,
            ScreenPoint::new(t.float(row, 1, "sx")?, t.float(row, 2, "sy")?),
        ));
    }
    Ok(out)
}

pub fn write_estimates(path: &Path, estimates: &[GazeEstimate]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(ESTIMATE_HEADER)?;
    for e in estimates {
        w.write_record([
            e.frame.to_string(),
            e.point.sx.to_string(),
            e.point.sy.to_string(),
            e.tracker.to_string(),
            e.recalibrated.to_string(),
        ])?;
    }
    finish(w)
}

/// One detected eye centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeDetection {
    pub frame: u64,
    pub eye: Eye,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

pub fn write_eyes(path: &Path, rows: &[EyeDetection]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(EYE_HEADER)?;
    for d in rows {
        w.write_record([d.frame.to_string(), d.eye.to_string(), d.x.to_string(), d.y.to_string(), d.confidence.to_string()])?;
    }
    finish(w)
}

/// Feature tracks, one inner vector per feature, all of the same length.
pub fn write_features(path: &Path, tracks: &[Vec<TrackPoint>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(FEATURE_HEADER)?;
    let frames = tracks.iter().map(Vec::len).max().unwrap_or(0);
    for f in 0..frames {
        for (i, track) in tracks.iter().enumerate() {
            if let Some(p) = track.get(f) {
                w.write_record([f.to_string(), i.to_string(), p.position[0].to_string(), p.position[1].to_string(), p.status.to_string()])?;
            }
        }
    }
    finish(w)
}

pub fn write_user_points(path: &Path, ups: &UserPointSet) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(serde_json::to_string_pretty(ups)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_user_points(path: &Path) -> Result<UserPointSet> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
