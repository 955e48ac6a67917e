//! Translational Lucas-Kanade registration and frame-to-frame feature tracking.

use crate::error::{Error, LostReason, Result};
use crate::imgproc::GrayImage;

/// Convergence threshold on the step length, in pixels.
pub const STEP_TOL: f64 = 1e-4;
/// Largest acceptable condition number of the 2x2 structure matrix.
pub const MAX_CONDITION: f64 = 1e8;
/// Default iteration budget.
pub const DEFAULT_MAX_ITERS: usize = 30;
/// Default side of a tracked patch.
pub const DEFAULT_PATCH: usize = 15;

const MIN_WEIGHT_DENOM: f64 = 1e-6;
const MAX_HALVINGS: usize = 4;

/// Result of a 2D registration.
#[derive(Debug, Clone, PartialEq)]
pub struct Disparity {
    pub h: [f64; 2],
    /// Sum of squared differences at the final estimate.
    pub residual: f64,
    pub iterations: usize,
    /// Residual at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn lerp_1d(f: &[f64], x: f64) -> Option<f64> {
    let n = f.len();
    if !(x >= 0.0 && x <= (n - 1) as f64) {
        return None;
    }
    let i = (x.floor() as usize).min(n - 2);
    let t = x - i as f64;
    Some(f[i] * (1.0 - t) + f[i + 1] * t)
}

fn central_diff(f: &[f64], i: usize) -> f64 {
    let n = f.len();
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(n - 1);
    (f[hi] - f[lo]) / (hi - lo) as f64
}

/// Estimates `h` such that `g(x) ≈ f(x + h)`.
///
/// Each step solves the weighted linearisation with weights
/// `1 / |g'(x) - f'(x)|`, sampling `f` off-grid by linear interpolation.
pub fn register_1d(f: &[f64], g: &[f64], max_iters: usize) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::invalid(format!("sequence lengths differ: {} vs {}", f.len(), g.len())));
    }
    if f.len() < 5 {
        return Err(Error::invalid("sequences need at least 5 samples"));
    }
    if f.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let n = f.len();
    let df: Vec<f64> = (0..n).map(|i| central_diff(f, i)).collect();
    if df.iter().all(|&d| d == 0.0) {
        return Err(Error::UndefinedDisparity);
    }
    let weights: Vec<f64> = (0..n)
        .map(|i| 1.0 / (central_diff(g, i) - df[i]).abs().max(MIN_WEIGHT_DENOM))
        .collect();

    let mut h = 0.0;
    for _ in 0..max_iters {
        let (mut num, mut den) = (0.0, 0.0);
        for x in 0..n {
            let xs = x as f64 + h;
            let (Some(fv), Some(fl), Some(fr)) = (lerp_1d(f, xs), lerp_1d(f, xs - 1.0), lerp_1d(f, xs + 1.0)) else {
                continue;
            };
            let d = 0.5 * (fr - fl);
            num += weights[x] * d * (g[x] - fv);
            den += weights[x] * d * d;
        }
        if den <= 0.0 {
            return Err(Error::UndefinedDisparity);
        }
        let step = num / den;
        h += step;
        if step.abs() < STEP_TOL {
            break;
        }
    }
    Ok(h)
}

/// Samples the patch-sized window centred on `c` together with its central
/// difference gradient. Requires a one pixel margin inside the frame.
fn sample_window(frame: &GrayImage, side: usize, c: [f64; 2]) -> Result<Vec<[f64; 3]>> {
    let half = (side / 2) as f64;
    let (x0, y0) = (c[0] - half - 1.0, c[1] - half - 1.0);
    let (x1, y1) = (c[0] + half + 1.0, c[1] + half + 1.0);
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    if !(x0 >= 0.0 && y0 >= 0.0 && x1 <= w - 1.0 && y1 <= h - 1.0) {
        return Err(Error::Lost(LostReason::OutOfFrame));
    }
    let s = |x: f64, y: f64| frame.sample_bilinear(x, y).expect("window checked against frame");
    let mut out = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let x = c[0] - half + i as f64;
            let y = c[1] - half + j as f64;
            let gx = s(x + 0.5, y) - s(x - 0.5, y);
            let gy = s(x, y + 0.5) - s(x, y - 0.5);
            out.push([s(x, y), gx, gy]);
        }
    }
    Ok(out)
}

fn residual(patch: &GrayImage, window: &[[f64; 3]]) -> f64 {
    patch.samples().iter().zip(window).map(|(g, w)| (g - w[0]).powi(2)).sum()
}

fn check_patch(patch: &GrayImage) -> Result<usize> {
    let side = patch.width();
    if side != patch.height() || side.is_multiple_of(2) || side < 5 {
        return Err(Error::invalid(format!(
            "patch must be square with odd side >= 5, got {}x{}",
            patch.width(),
            patch.height()
        )));
    }
    Ok(side)
}

/// Finds the translation `h` that aligns `patch` with `frame` sampled around
/// `init + h`, solving the unweighted 2x2 normal equations each iteration.
///
/// A step that increases the residual is halved up to four times; if none
/// helps, the current estimate is returned as converged.
pub fn register_2d(patch: &GrayImage, frame: &GrayImage, init: [f64; 2], max_iters: usize) -> Result<Disparity> {
    let side = check_patch(patch)?;
    let mut h = [0.0, 0.0];
    let mut window = sample_window(frame, side, init)?;
    let mut err = residual(patch, &window);
    let mut history = vec![err];
    let mut iterations = 0;

    while iterations < max_iters {
        let (mut a, mut b, mut c, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (g, &[f, gx, gy]) in patch.samples().iter().zip(&window) {
            a += gx * gx;
            b += gx * gy;
            c += gy * gy;
            bx += gx * (g - f);
            by += gy * (g - f);
        }
        // Eigenvalues of [[a, b], [b, c]].
        let mean = 0.5 * (a + c);
        let disc = (0.25 * (a - c).powi(2) + b * b).sqrt();
        let (lmax, lmin) = (mean + disc, mean - disc);
        if !(lmin > 0.0) || lmax / lmin > MAX_CONDITION {
            return Err(Error::Lost(LostReason::IllConditioned));
        }
        let det = a * c - b * b;
        let mut step = [(c * bx - b * by) / det, (a * by - b * bx) / det];

        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = [h[0] + step[0], h[1] + step[1]];
            let tw = sample_window(frame, side, [init[0] + trial[0], init[1] + trial[1]])?;
            let te = residual(patch, &tw);
            if te <= err {
                accepted = Some((trial, tw, te));
                break;
            }
            step = [0.5 * step[0], 0.5 * step[1]];
        }
        let Some((trial, tw, te)) = accepted else {
            break;
        };
        iterations += 1;
        h = trial;
        window = tw;
        err = te;
        history.push(err);
        if step[0].hypot(step[1]) < STEP_TOL {
            break;
        }
    }
    Ok(Disparity {
        h,
        residual: err,
        iterations,
        history,
    })
}

/// Cuts a `side x side` patch centred on `c` by bilinear sampling.
pub fn extract_patch(frame: &GrayImage, c: [f64; 2], side: usize) -> Result<GrayImage> {
    if side.is_multiple_of(2) || side < 5 {
        return Err(Error::invalid(format!("patch side must be odd and >= 5, got {side}")));
    }
    let half = (side / 2) as f64;
    let mut samples = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let v = frame
                .sample_bilinear(c[0] - half + i as f64, c[1] - half + j as f64)
                .ok_or(Error::Lost(LostReason::OutOfFrame))?;
            samples.push(v);
        }
    }
    GrayImage::new(side, side, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracking,
    Lost(LostReason),
}

impl TrackStatus {
    pub fn is_tracking(self) -> bool {
        self == TrackStatus::Tracking
    }
}

impl std::fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrackStatus::Tracking => f.write_str("tracking"),
            TrackStatus::Lost(_) => f.write_str("lost"),
        }
    }
}

/// A facial anchor point followed from frame to frame.
#[derive(Debug, Clone)]
pub struct TrackedFeature {
    pub position: [f64; 2],
    pub patch: GrayImage,
    pub status: TrackStatus,
    pub max_iters: usize,
}

impl TrackedFeature {
    pub fn new(frame: &GrayImage, position: [f64; 2], side: usize) -> Result<Self> {
        let patch = extract_patch(frame, position, side)?;
        Ok(Self {
            position,
            patch,
            status: TrackStatus::Tracking,
            max_iters: DEFAULT_MAX_ITERS,
        })
    }

    /// Registers the stored patch in `frame`, moves the feature and refreshes
    /// the patch. A lost feature stays lost.
    pub fn step(&mut self, frame: &GrayImage) -> TrackStatus {
        if !self.status.is_tracking() {
            return self.status;
        }
        let next = register_2d(&self.patch, frame, self.position, self.max_iters).and_then(|d| {
            let p = [self.position[0] + d.h[0], self.position[1] + d.h[1]];
            extract_patch(frame, p, self.patch.width()).map(|patch| (p, patch))
        });
        match next {
            Ok((p, patch)) => {
                self.position = p;
                self.patch = patch;
            }
            Err(Error::Lost(reason)) => self.status = TrackStatus::Lost(reason),
            Err(_) => self.status = TrackStatus::Lost(LostReason::IllConditioned),
        }
        self.status
    }
}

/// Position and status of a feature in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub position: [f64; 2],
    pub status: TrackStatus,
}

/// Follows `feature` through `frames`. The feature is assumed to sit at its
/// current position in the first frame; later frames are registered against
/// the patch from the previous frame.
pub fn track_sequence(mut feature: TrackedFeature, frames: &[GrayImage]) -> Result<Vec<TrackPoint>> {
    if frames.is_empty() {
        return Err(Error::invalid("empty frame sequence"));
    }
    let mut out = Vec::with_capacity(frames.len());
    out.push(TrackPoint {
        position: feature.position,
        status: feature.status,
    });
    for frame in &frames[1..] {
        let status = feature.step(frame);
        out.push(TrackPoint {
            position: feature.position,
            status,
        });
    }
    Ok(out)
}
