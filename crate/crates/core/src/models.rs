//! Calibration sets and the screen-mapping models fitted to them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ScreenGeometry;
use crate::lsq;

/// Margin of the calibration grid as a fraction of each screen dimension.
pub const DEFAULT_GRID_MARGIN: f64 = 0.1;
/// Number of calibration targets in the full grid.
pub const GRID_POINTS: u32 = 25;
pub const LINEAR5_INDICES: [u32; 5] = [1, 5, 13, 21, 25];
pub const NINE_POINT_INDICES: [u32; 9] = [1, 3, 5, 11, 13, 15, 21, 23, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Left => "left",
            Eye::Right => "right",
        })
    }
}

impl FromStr for Eye {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Eye::Left),
            "right" | "r" => Ok(Eye::Right),
            other => Err(Error::invalid(format!("unknown eye {other:?}"))),
        }
    }
}

/// Offset from a facial anchor point to the pupil centre, in camera pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeVector {
    pub x: f64,
    pub y: f64,
    pub eye: Eye,
}

impl GazeVector {
    pub fn new(x: f64, y: f64, eye: Eye) -> Self {
        Self { x, y, eye }
    }
}

/// Screen position in pixels, origin top-left, `y` down. Not clamped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScreenPoint {
    pub sx: f64,
    pub sy: f64,
}

impl ScreenPoint {
    pub fn new(sx: f64, sy: f64) -> Self {
        Self { sx, sy }
    }

    pub fn distance(&self, other: &ScreenPoint) -> f64 {
        (self.sx - other.sx).hypot(self.sy - other.sy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub index: u32,
    pub vector: GazeVector,
    pub target: ScreenPoint,
}

/// Calibration samples of one eye, keyed by grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    samples: Vec<CalibrationSample>,
    screen: ScreenGeometry,
}

impl CalibrationSet {
    pub fn new(mut samples: Vec<CalibrationSample>, screen: ScreenGeometry) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if !(1..=GRID_POINTS).contains(&s.index) {
                return Err(Error::invalid(format!("calibration index {} outside 1..={GRID_POINTS}", s.index)));
            }
            if !seen.insert(s.index) {
                return Err(Error::invalid(format!("duplicate calibration index {}", s.index)));
            }
            if ![s.vector.x, s.vector.y, s.target.sx, s.target.sy].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("non-finite value in calibration sample {}", s.index)));
            }
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|s| s.vector.eye != first.vector.eye) {
                return Err(Error::invalid("a calibration set holds samples of one eye"));
            }
        }
        samples.sort_by_key(|s| s.index);
        Ok(Self { samples, screen })
    }

    pub fn samples(&self) -> &[CalibrationSample] {
        &self.samples
    }

    pub fn screen(&self) -> &ScreenGeometry {
        &self.screen
    }

    pub fn eye(&self) -> Option<Eye> {
        self.samples.first().map(|s| s.vector.eye)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: u32) -> Option<&CalibrationSample> {
        self.samples.iter().find(|s| s.index == index)
    }

    /// The samples at `indices`, failing if any is missing.
    pub fn subset(&self, indices: &[u32]) -> Result<CalibrationSet> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.get(i)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("calibration index {i} is missing")))
            })
            .collect::<Result<Vec<_>>>()?;
        CalibrationSet::new(samples, self.screen)
    }

    /// Same vectors with new targets, matched by index.
    pub fn with_targets(&self, targets: &[(u32, ScreenPoint)]) -> Result<CalibrationSet> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let t = targets
                    .iter()
                    .find(|(i, _)| *i == s.index)
                    .ok_or_else(|| Error::invalid(format!("no target for calibration index {}", s.index)))?;
                Ok(CalibrationSample { target: t.1, ..*s })
            })
            .collect::<Result<Vec<_>>>()?;
        CalibrationSet::new(samples, self.screen)
    }
}

/// The 25 calibration targets on a uniform 5x5 grid inset by `margin` of
/// each screen dimension. Index `i` (1-based) sits at row `(i-1)/5`, column
/// `(i-1)%5`, counted from the top-left.
pub fn grid_targets(screen: &ScreenGeometry, margin: f64) -> Vec<ScreenPoint> {
    (0..GRID_POINTS)
        .map(|i| {
            let (row, col) = ((i / 5) as f64, (i % 5) as f64);
            ScreenPoint {
                sx: screen.width_px * (margin + (1.0 - 2.0 * margin) * col / 4.0),
                sy: screen.height_px * (margin + (1.0 - 2.0 * margin) * row / 4.0),
            }
        })
        .collect()
}

/// Pairs of opposite grid corners usable by the two-point model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpPair {
    /// Bottom-left (21) and top-right (5).
    #[serde(rename = "21-5")]
    BottomLeftTopRight,
    /// Top-left (1) and bottom-right (25).
    #[serde(rename = "1-25")]
    TopLeftBottomRight,
}

impl InterpPair {
    pub fn indices(self) -> (u32, u32) {
        match self {
            InterpPair::BottomLeftTopRight => (21, 5),
            InterpPair::TopLeftBottomRight => (1, 25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadraticSubset {
    Nine,
    TwentyFive,
}

impl QuadraticSubset {
    pub fn indices(self) -> Vec<u32> {
        match self {
            QuadraticSubset::Nine => NINE_POINT_INDICES.to_vec(),
            QuadraticSubset::TwentyFive => (1..=GRID_POINTS).collect(),
        }
    }
}

/// Which model to fit and on which calibration points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Interp2(InterpPair),
    Linear5,
    Quadratic(QuadraticSubset),
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 5] = [
        ModelSpec::Interp2(InterpPair::BottomLeftTopRight),
        ModelSpec::Interp2(InterpPair::TopLeftBottomRight),
        ModelSpec::Linear5,
        ModelSpec::Quadratic(QuadraticSubset::Nine),
        ModelSpec::Quadratic(QuadraticSubset::TwentyFive),
    ];

    /// Calibration indices the fit consumes.
    pub fn indices(self) -> Vec<u32> {
        match self {
            ModelSpec::Interp2(pair) => {
                let (a, b) = pair.indices();
                vec![a, b]
            }
            ModelSpec::Linear5 => LINEAR5_INDICES.to_vec(),
            ModelSpec::Quadratic(subset) => subset.indices(),
        }
    }

    pub fn fit(self, set: &CalibrationSet) -> Result<MappingModel> {
        match self {
            ModelSpec::Interp2(pair) => fit_interp2(set, pair),
            ModelSpec::Linear5 => fit_linear5(set),
            ModelSpec::Quadratic(subset) => fit_quadratic(set, subset),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSpec::Interp2(InterpPair::BottomLeftTopRight) => "interp2-21-5",
            ModelSpec::Interp2(InterpPair::TopLeftBottomRight) => "interp2-1-25",
            ModelSpec::Linear5 => "linear5",
            ModelSpec::Quadratic(QuadraticSubset::Nine) => "quadratic9",
            ModelSpec::Quadratic(QuadraticSubset::TwentyFive) => "quadratic25",
        })
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        ModelSpec::ALL
            .into_iter()
            .find(|m| m.to_string() == key)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown model {s:?}; expected one of interp2-21-5, interp2-1-25, linear5, quadratic9, quadratic25"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Interp2,
    Linear5,
    Quadratic,
}

/// A fitted screen mapping.
///
/// For `Interp2` and `Linear5`, `sx = ax[0] + ax[1] x` and
/// `sy = ay[0] + ay[1] y`. For `Quadratic`, each axis uses the basis
/// `[1, x, y, xy, x², y²]`. Unused trailing coefficients are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingModel {
    pub kind: ModelKind,
    pub ax: [f64; 6],
    pub ay: [f64; 6],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<[CalibrationSample; 2]>,
}

fn quadratic_basis(x: f64, y: f64) -> [f64; 6] {
    [1.0, x, y, x * y, x * x, y * y]
}

impl MappingModel {
    pub fn predict(&self, v: &GazeVector) -> ScreenPoint {
        match (self.kind, &self.endpoints) {
            (ModelKind::Interp2, Some([p1, p2])) => ScreenPoint {
                sx: p1.target.sx + (v.x - p1.vector.x) * (p2.target.sx - p1.target.sx) / (p2.vector.x - p1.vector.x),
                sy: p1.target.sy + (v.y - p1.vector.y) * (p2.target.sy - p1.target.sy) / (p2.vector.y - p1.vector.y),
            },
            (ModelKind::Quadratic, _) => {
                let b = quadratic_basis(v.x, v.y);
                ScreenPoint {
                    sx: b.iter().zip(&self.ax).map(|(b, a)| b * a).sum(),
                    sy: b.iter().zip(&self.ay).map(|(b, a)| b * a).sum(),
                }
            }
            _ => ScreenPoint {
                sx: self.ax[0] + self.ax[1] * v.x,
                sy: self.ay[0] + self.ay[1] * v.y,
            },
        }
    }

    /// Checks finiteness and that unused coefficients are zero.
    pub fn validate(&self) -> Result<()> {
        if self.ax.iter().chain(&self.ay).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite model coefficient"));
        }
        let used = match self.kind {
            ModelKind::Quadratic => 6,
            _ => 2,
        };
        if self.ax[used..].iter().chain(&self.ay[used..]).any(|&v| v != 0.0) {
            return Err(Error::invalid(format!("{:?} model carries more than {used} coefficients per axis", self.kind)));
        }
        match (self.kind, &self.endpoints) {
            (ModelKind::Interp2, None) => Err(Error::invalid("two-point model without endpoints")),
            (ModelKind::Interp2, Some([a, b])) if a.vector.x == b.vector.x || a.vector.y == b.vector.y => {
                Err(Error::degenerate("two-point model endpoints share a coordinate"))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MappingModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Two-point model: per-axis linear interpolation between two opposite
/// grid corners.
pub fn fit_interp2(set: &CalibrationSet, pair: InterpPair) -> Result<MappingModel> {
    let (i1, i2) = pair.indices();
    let missing = |i| Error::invalid(format!("calibration index {i} is missing"));
    let p1 = *set.get(i1).ok_or_else(|| missing(i1))?;
    let p2 = *set.get(i2).ok_or_else(|| missing(i2))?;
    let (dx, dy) = (p2.vector.x - p1.vector.x, p2.vector.y - p1.vector.y);
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::degenerate(format!(
            "endpoints {i1} and {i2} share a gaze-vector coordinate"
        )));
    }
    let a1 = (p2.target.sx - p1.target.sx) / dx;
    let b1 = (p2.target.sy - p1.target.sy) / dy;
    Ok(MappingModel {
        kind: ModelKind::Interp2,
        ax: [p1.target.sx - a1 * p1.vector.x, a1, 0.0, 0.0, 0.0, 0.0],
        ay: [p1.target.sy - b1 * p1.vector.y, b1, 0.0, 0.0, 0.0, 0.0],
        endpoints: Some([p1, p2]),
    })
}

/// Five-point model: independent straight-line fits `x -> sx` and `y -> sy`.
pub fn fit_linear5(set: &CalibrationSet) -> Result<MappingModel> {
    let sub = set.subset(&LINEAR5_INDICES)?;
    let column = |f: fn(&CalibrationSample) -> f64| sub.samples().iter().map(f).collect::<Vec<_>>();
    let a = lsq::polyfit(&column(|s| s.vector.x), &column(|s| s.target.sx), 1)
        .map_err(|e| Error::degenerate(format!("horizontal axis: {e}")))?;
    let b = lsq::polyfit(&column(|s| s.vector.y), &column(|s| s.target.sy), 1)
        .map_err(|e| Error::degenerate(format!("vertical axis: {e}")))?;
    Ok(MappingModel {
        kind: ModelKind::Linear5,
        ax: [a[0], a[1], 0.0, 0.0, 0.0, 0.0],
        ay: [b[0], b[1], 0.0, 0.0, 0.0, 0.0],
        endpoints: None,
    })
}

/// Affine normalisation `v -> scale * v + shift` to zero mean, unit RMS.
fn normaliser(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let rms = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(rms > 0.0) {
        return Err(Error::degenerate("gaze-vector coordinate is constant"));
    }
    Ok((1.0 / rms, -mean / rms))
}

/// Second-order model on `[1, x, y, xy, x², y²]` over 9 or 25 points.
pub fn fit_quadratic(set: &CalibrationSet, subset: QuadraticSubset) -> Result<MappingModel> {
    let sub = set.subset(&subset.indices())?;
    let xs: Vec<f64> = sub.samples().iter().map(|s| s.vector.x).collect();
    let ys: Vec<f64> = sub.samples().iter().map(|s| s.vector.y).collect();
    let (p, q) = normaliser(&xs)?;
    let (r, u) = normaliser(&ys)?;
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| quadratic_basis(p * x + q, r * y + u).to_vec())
        .collect();
    let sx: Vec<f64> = sub.samples().iter().map(|s| s.target.sx).collect();
    let sy: Vec<f64> = sub.samples().iter().map(|s| s.target.sy).collect();
    let unscale = |c: Vec<f64>| -> [f64; 6] {
        [
            c[0] + c[1] * q + c[2] * u + c[3] * q * u + c[4] * q * q + c[5] * u * u,
            p * (c[1] + c[3] * u + 2.0 * c[4] * q),
            r * (c[2] + c[3] * q + 2.0 * c[5] * u),
            c[3] * p * r,
            c[4] * p * p,
            c[5] * r * r,
        ]
    };
    Ok(MappingModel {
        kind: ModelKind::Quadratic,
        ax: unscale(lsq::least_squares(&rows, &sx)?),
        ay: unscale(lsq::least_squares(&rows, &sy)?),
        endpoints: None,
    })
}

pub fn predict(model: &MappingModel, v: &GazeVector) -> ScreenPoint {
    model.predict(v)
}

/// Half the summed squared distance between predictions and targets.
pub fn fit_error(model: &MappingModel, set: &CalibrationSet) -> f64 {
    0.5 * set
        .samples()
        .iter()
        .map(|s| {
            let p = model.predict(&s.vector);
            (p.sx - s.target.sx).powi(2) + (p.sy - s.target.sy).powi(2)
        })
        .sum::<f64>()
}

/// How predictions from the two eyes are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Mean of both eyes when both are available, otherwise the one present.
    #[default]
    Average,
    Left,
    Right,
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "average" | "both" => Ok(Fusion::Average),
            "left" => Ok(Fusion::Left),
            "right" => Ok(Fusion::Right),
            other => Err(Error::invalid(format!("unknown fusion {other:?}"))),
        }
    }
}

/// Combines per-eye predictions; `None` when the requested eye is missing.
pub fn fuse(left: Option<ScreenPoint>, right: Option<ScreenPoint>, fusion: Fusion) -> Option<ScreenPoint> {
    match (fusion, left, right) {
        (Fusion::Left, l, _) => l,
        (Fusion::Right, _, r) => r,
        (Fusion::Average, Some(l), Some(r)) => Some(ScreenPoint::new(0.5 * (l.sx + r.sx), 0.5 * (l.sy + r.sy))),
        (Fusion::Average, l, r) => l.or(r),
    }
}
