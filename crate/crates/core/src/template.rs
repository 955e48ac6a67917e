//! Sliding-window template matching with the six classic scores.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

/// Scoring function for [`match_template`].
///
/// With `T` the template, `I` the search window at offset `(x, y)` and
/// primes denoting subtraction of the respective window mean:
///
/// | method | score |
/// |---|---|
/// | `SqDiff` | `sum (T - I)^2` |
/// | `CCorr` | `sum T I` |
/// | `CCoeff` | `sum T' I'` |
/// | `SqDiffNormed` | `SqDiff / sqrt(sum T^2 * sum I^2)` |
/// | `CCorrNormed` | `CCorr / sqrt(sum T^2 * sum I^2)` |
/// | `CCoeffNormed` | `CCoeff / sqrt(sum T'^2 * sum I'^2)` |
///
/// A zero normaliser yields a score of 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchMethod {
    SqDiff,
    CCorr,
    CCoeff,
    SqDiffNormed,
    CCorrNormed,
    CCoeffNormed,
}

impl MatchMethod {
    pub const ALL: [MatchMethod; 6] = [
        MatchMethod::SqDiff,
        MatchMethod::CCorr,
        MatchMethod::CCoeff,
        MatchMethod::SqDiffNormed,
        MatchMethod::CCorrNormed,
        MatchMethod::CCoeffNormed,
    ];

    /// Whether the best match is the minimum of the surface.
    pub fn minimizes(self) -> bool {
        matches!(self, MatchMethod::SqDiff | MatchMethod::SqDiffNormed)
    }

    pub fn name(self) -> &'static str {
        match self {
            MatchMethod::SqDiff => "sqdiff",
            MatchMethod::CCorr => "ccorr",
            MatchMethod::CCoeff => "ccoeff",
            MatchMethod::SqDiffNormed => "sqdiff_normed",
            MatchMethod::CCorrNormed => "ccorr_normed",
            MatchMethod::CCoeffNormed => "ccoeff_normed",
        }
    }
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        MatchMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown match method `{s}`")))
    }
}

/// Score surface of size `(W - w + 1) x (H - h + 1)`.
#[derive(Debug, Clone)]
pub struct MatchSurface {
    pub scores: GrayImage,
    pub method: MatchMethod,
}

/// Location and score of the best match on a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

pub fn match_template(search: &GrayImage, tmpl: &GrayImage, method: MatchMethod) -> Result<MatchSurface> {
    let (sw, sh) = (search.width(), search.height());
    let (tw, th) = (tmpl.width(), tmpl.height());
    if tw > sw || th > sh {
        return Err(Error::invalid(format!(
            "template {tw}x{th} does not fit inside search image {sw}x{sh}"
        )));
    }
    let n = (tw * th) as f64;
    let t_sum: f64 = tmpl.sum();
    let t_sq: f64 = tmpl.samples().iter().map(|v| v * v).sum();
    let t_mean = t_sum / n;
    let t_centered_sq: f64 = tmpl.samples().iter().map(|v| (v - t_mean).powi(2)).sum();

    let (ow, oh) = (sw - tw + 1, sh - th + 1);
    let mut scores = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let mut i_sum = 0.0;
            let mut i_sq = 0.0;
            let mut cross = 0.0;
            let mut sq_diff = 0.0;
            for ty in 0..th {
                for tx in 0..tw {
                    let t = tmpl.get(tx, ty);
                    let i = search.get(x + tx, y + ty);
                    i_sum += i;
                    i_sq += i * i;
                    cross += t * i;
                    sq_diff += (t - i) * (t - i);
                }
            }
            let z = (t_sq * i_sq).sqrt();
            let score = match method {
                MatchMethod::SqDiff => sq_diff,
                MatchMethod::CCorr => cross,
                // sum T'I' = sum T I - sum T * sum I / n
                MatchMethod::CCoeff => cross - t_sum * i_sum / n,
                MatchMethod::SqDiffNormed => safe_ratio(sq_diff, z),
                MatchMethod::CCorrNormed => safe_ratio(cross, z),
                MatchMethod::CCoeffNormed => {
                    let i_centered_sq = (i_sq - i_sum * i_sum / n).max(0.0);
                    // Cancellation leaves a tiny residue on flat windows.
                    let flat = i_centered_sq <= 1e-13 * i_sq.max(f64::MIN_POSITIVE);
                    if flat || t_centered_sq == 0.0 {
                        0.0
                    } else {
                        let num = cross - t_sum * i_sum / n;
                        (num / (t_centered_sq * i_centered_sq).sqrt()).clamp(-1.0, 1.0)
                    }
                }
            };
            scores.push(score);
        }
    }
    Ok(MatchSurface {
        scores: GrayImage::new(ow, oh, scores)?,
        method,
    })
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Arg-min for the squared-difference methods, arg-max otherwise; ties go to
/// the first occurrence in row-major order.
pub fn best_match(surface: &MatchSurface) -> Match {
    let s = &surface.scores;
    let minimize = surface.method.minimizes();
    let mut best = (0, 0, s.get(0, 0));
    for y in 0..s.height() {
        for x in 0..s.width() {
            let v = s.get(x, y);
            let better = if minimize { v < best.2 } else { v > best.2 };
            if better {
                best = (x, y, v);
            }
        }
    }
    Match {
        x: best.0,
        y: best.1,
        score: best.2,
    }
}

/// Convenience: match and localise in one call.
pub fn locate_template(search: &GrayImage, tmpl: &GrayImage, method: MatchMethod) -> Result<Match> {
    Ok(best_match(&match_template(search, tmpl, method)?))
}
