//! Error statistics in screen pixels and visual degrees.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ScreenGeometry;
use crate::models::ScreenPoint;

/// Per-axis absolute-error statistics over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub frames: usize,
    pub mean_px: [f64; 2],
    /// Population standard deviation.
    pub std_px: [f64; 2],
    pub mean_deg: [f64; 2],
    pub mean_euclidean_px: f64,
}

/// Sum of values in ascending order, so the result does not depend on the
/// order of the frames.
fn ordered_sum(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn mean_std(mut v: Vec<f64>) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = ordered_sum(&mut v) / n;
    let mut sq: Vec<f64> = v.iter().map(|e| (e - mean).powi(2)).collect();
    (mean, (ordered_sum(&mut sq) / n).sqrt())
}

/// Visual angle in degrees subtended by `px` screen pixels along an axis
/// with the given pixel pitch, seen from `depth_mm`.
pub fn px_to_degrees(px: f64, mm_per_px: f64, depth_mm: f64) -> f64 {
    (px * mm_per_px / depth_mm).atan().to_degrees()
}

pub fn compute_report(
    estimates: &[ScreenPoint],
    truths: &[ScreenPoint],
    depth_mm: f64,
    screen: &ScreenGeometry,
) -> Result<ErrorReport> {
    if estimates.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} estimates but {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::invalid("no frames to report on"));
    }
    if !(depth_mm > 0.0 && depth_mm.is_finite()) {
        return Err(Error::invalid(format!("depth must be positive, got {depth_mm}")));
    }
    let pairs = || estimates.iter().zip(truths);
    let (mx, sx) = mean_std(pairs().map(|(e, t)| (e.sx - t.sx).abs()).collect());
    let (my, sy) = mean_std(pairs().map(|(e, t)| (e.sy - t.sy).abs()).collect());
    let (me, _) = mean_std(pairs().map(|(e, t)| e.distance(t)).collect());
    Ok(ErrorReport {
        frames: estimates.len(),
        mean_px: [mx, my],
        std_px: [sx, sy],
        mean_deg: [
            px_to_degrees(mx, screen.mm_per_px_x(), depth_mm),
            px_to_degrees(my, screen.mm_per_px_y(), depth_mm),
        ],
        mean_euclidean_px: me,
    })
}

/// Screen extent in pixels of a visual angle of `degrees` centred on the
/// line of sight at `depth_mm`.
pub fn foveal_window_px(depth_mm: f64, screen: &ScreenGeometry, degrees: f64) -> Result<(f64, f64)> {
    if !(depth_mm > 0.0 && depth_mm.is_finite()) || !(0.0..180.0).contains(&degrees) {
        return Err(Error::invalid(format!("bad foveal window inputs: depth {depth_mm}, angle {degrees}")));
    }
    let w_mm = 2.0 * depth_mm * (degrees / 2.0).to_radians().tan();
    Ok((w_mm / screen.mm_per_px_x(), w_mm / screen.mm_per_px_y()))
}

/// One labelled row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub tracker: String,
    pub report: ErrorReport,
}

/// Plain-text comparison table with Mean and Std pairs per run.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let mut line = String::new();
    let _ = write!(
        line,
        "{:<16} {:<8} {:>7}  {:<22} {:<22} {:<16}",
        "Run", "Tracker", "Frames", "Mean (x, y) px", "Std (x, y) px", "Mean (x, y) deg"
    );
    let _ = writeln!(out, "{}", line.trim_end());
    for r in rows {
        line.clear();
        let pair = |v: [f64; 2], prec: usize| format!("({:.prec$}, {:.prec$})", v[0], v[1]);
        let _ = write!(
            line,
            "{:<16} {:<8} {:>7}  {:<22} {:<22} {:<16}",
            r.run,
            r.tracker,
            r.report.frames,
            pair(r.report.mean_px, 2),
            pair(r.report.std_px, 2),
            pair(r.report.mean_deg, 2),
        );
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}
