//! Per-frame gaze trackers: static 2D, pose-normalised 2.5D and
//! re-calibrating 3D.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_user_plane, project_calibration_to_user_points, reproject_user_points, HeadPose, UserPointSet,
    DEFAULT_USER_PLANE_OFFSET_MM,
};
use crate::imgproc::GrayImage;
use crate::isocenter::{locate_eye_center_with, IsophoteParams, Roi};
use crate::lk::{TrackedFeature, DEFAULT_PATCH};
use crate::models::{fuse, CalibrationSet, Eye, Fusion, GazeVector, MappingModel, ModelKind, ModelSpec, ScreenPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackerKind {
    /// Fixed calibration on raw camera-space vectors.
    Static2D,
    /// Fixed calibration on pose-normalised vectors.
    PoseNormalized25D,
    /// Pose-normalised vectors with the calibration targets re-projected for
    /// every head movement.
    Recalibrating3D,
}

impl TrackerKind {
    pub const ALL: [TrackerKind; 3] = [TrackerKind::Static2D, TrackerKind::PoseNormalized25D, TrackerKind::Recalibrating3D];

    pub fn label(self) -> &'static str {
        match self {
            TrackerKind::Static2D => "2d",
            TrackerKind::PoseNormalized25D => "2.5d",
            TrackerKind::Recalibrating3D => "3d",
        }
    }

    pub fn needs_pose(self) -> bool {
        self != TrackerKind::Static2D
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TrackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2d" | "static" | "static2d" => Ok(TrackerKind::Static2D),
            "2.5d" | "25d" | "pose-normalized" => Ok(TrackerKind::PoseNormalized25D),
            "3d" | "recalibrating" => Ok(TrackerKind::Recalibrating3D),
            other => Err(Error::invalid(format!("unknown tracker kind {other:?}; expected 2d, 2.5d or 3d"))),
        }
    }
}

/// Where an eye is in the frame and, optionally, its facial anchor point.
/// Without an anchor the previous anchor is followed by feature tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeRegion {
    pub eye: Eye,
    pub roi: Roi,
    pub anchor: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Gaze vectors already measured, one per available eye.
    Vectors(Vec<GazeVector>),
    /// A grey frame to measure the vectors from.
    Image { image: GrayImage, eyes: Vec<EyeRegion> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub index: u64,
    pub observation: Observation,
    pub pose: Option<HeadPose>,
}

impl FrameInput {
    pub fn vectors(index: u64, vectors: Vec<GazeVector>, pose: Option<HeadPose>) -> Self {
        Self {
            index,
            observation: Observation::Vectors(vectors),
            pose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeEstimate {
    pub frame: u64,
    pub point: ScreenPoint,
    pub tracker: TrackerKind,
    pub model: ModelKind,
    /// The model was refitted on re-projected targets for this frame.
    pub recalibrated: bool,
    /// Refitting failed and the previous model was used instead.
    pub fallback: bool,
}

/// Pose changes that trigger a refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rotation_deg: f64,
    pub translation_mm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rotation_deg: 0.25,
            translation_mm: 1.0,
        }
    }
}

/// True when any rotation angle moved by more than the rotation threshold
/// or any translation component by more than the translation threshold.
pub fn recalibrate_threshold_policy(pose_now: &HeadPose, pose_ref: &HeadPose, thresholds: &Thresholds) -> bool {
    let (rot, trans) = pose_now.delta(pose_ref);
    rot.to_degrees() > thresholds.rotation_deg || trans > thresholds.translation_mm
}

/// Refits `spec` on the calibration vectors paired with the targets
/// re-projected at `pose`.
pub fn recalibrated_model(spec: ModelSpec, calib: &CalibrationSet, ups: &UserPointSet, pose: &HeadPose) -> Result<MappingModel> {
    let targets = reproject_user_points(pose, ups, calib.screen())?;
    spec.fit(&calib.with_targets(&targets)?)
}

fn require_pose(kind: TrackerKind, input: &FrameInput) -> Result<Option<HeadPose>> {
    match input.pose {
        Some(p) => {
            p.validate()?;
            Ok(Some(p))
        }
        None if kind.needs_pose() => Err(Error::invalid(format!(
            "frame {}: the {kind} tracker needs a head pose",
            input.index
        ))),
        None => Ok(None),
    }
}

/// One frame, one eye, without state: the 3D tracker refits whenever the
/// pose differs from the pose the user points were built at.
pub fn run_frame(
    kind: TrackerKind,
    spec: ModelSpec,
    calib: &CalibrationSet,
    ups: Option<&UserPointSet>,
    input: &FrameInput,
) -> Result<GazeEstimate> {
    let pose = require_pose(kind, input)?;
    let eye = calib.eye().ok_or_else(|| Error::invalid("empty calibration set"))?;
    let Observation::Vectors(vectors) = &input.observation else {
        return Err(Error::invalid("run_frame takes measured gaze vectors"));
    };
    let v = vectors
        .iter()
        .find(|v| v.eye == eye)
        .ok_or_else(|| Error::invalid(format!("frame {}: no {eye} gaze vector", input.index)))?;
    let base = spec.fit(calib)?;
    let (model, recalibrated) = match (kind, pose) {
        (TrackerKind::Recalibrating3D, Some(pose)) => {
            let ups = ups.ok_or_else(|| Error::invalid("the 3d tracker needs user points"))?;
            if pose == ups.pose_at_construction {
                (base, false)
            } else {
                (recalibrated_model(spec, calib, ups, &pose)?, true)
            }
        }
        _ => (base, false),
    };
    Ok(GazeEstimate {
        frame: input.index,
        point: model.predict(v),
        tracker: kind,
        model: model.kind,
        recalibrated,
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub kind: TrackerKind,
    pub model: ModelSpec,
    pub fusion: Fusion,
    pub thresholds: Thresholds,
    pub calibration_pose: HeadPose,
    pub user_plane_offset_mm: f64,
    pub patch: usize,
    pub isophote: IsophoteParams,
}

impl TrackerConfig {
    pub fn new(kind: TrackerKind, model: ModelSpec) -> Self {
        Self {
            kind,
            model,
            fusion: Fusion::Average,
            thresholds: Thresholds::default(),
            calibration_pose: HeadPose::default(),
            user_plane_offset_mm: DEFAULT_USER_PLANE_OFFSET_MM,
            patch: DEFAULT_PATCH,
            isophote: IsophoteParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct EyeState {
    calib: CalibrationSet,
    base: MappingModel,
    current: MappingModel,
    current_pose: HeadPose,
    ups: Option<UserPointSet>,
}

/// Stateful tracker over a stream of frames.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    eyes: BTreeMap<Eye, EyeState>,
    anchors: BTreeMap<Eye, TrackedFeature>,
    refits: usize,
}

impl Tracker {
    /// Fits the base model for every eye that has a calibration set; the 3D
    /// tracker also builds the user points at the calibration pose.
    pub fn new(config: TrackerConfig, calibrations: Vec<CalibrationSet>) -> Result<Self> {
        let mut eyes = BTreeMap::new();
        for calib in calibrations {
            let eye = calib.eye().ok_or_else(|| Error::invalid("empty calibration set"))?;
            let base = config.model.fit(&calib)?;
            let ups = if config.kind == TrackerKind::Recalibrating3D {
                let plane = build_user_plane(&config.calibration_pose, config.user_plane_offset_mm)?;
                Some(project_calibration_to_user_points(
                    &config.calibration_pose,
                    &plane,
                    calib.screen(),
                    &calib,
                )?)
            } else {
                None
            };
            let state = EyeState {
                calib,
                current: base.clone(),
                base,
                current_pose: config.calibration_pose,
                ups,
            };
            if eyes.insert(eye, state).is_some() {
                return Err(Error::invalid(format!("two calibration sets for the {eye} eye")));
            }
        }
        if eyes.is_empty() {
            return Err(Error::invalid("no calibration set"));
        }
        Ok(Self {
            config,
            eyes,
            anchors: BTreeMap::new(),
            refits: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Number of frames on which a model was refitted.
    pub fn refit_count(&self) -> usize {
        self.refits
    }

    pub fn process(&mut self, input: &FrameInput) -> Result<GazeEstimate> {
        let kind = self.config.kind;
        let pose = require_pose(kind, input)?;
        let vectors = match &input.observation {
            Observation::Vectors(v) => v.clone(),
            Observation::Image { image, eyes } => self.measure(input.index, image, eyes)?,
        };

        let mut recalibrated = false;
        let mut fallback = false;
        if let (TrackerKind::Recalibrating3D, Some(pose)) = (kind, pose) {
            let (spec, thresholds, calib_pose) = (self.config.model, self.config.thresholds, self.config.calibration_pose);
            for state in self.eyes.values_mut() {
                if pose == calib_pose {
                    state.current = state.base.clone();
                    state.current_pose = calib_pose;
                } else if recalibrate_threshold_policy(&pose, &state.current_pose, &thresholds) {
                    let ups = state.ups.as_ref().expect("3d tracker builds user points");
                    match recalibrated_model(spec, &state.calib, ups, &pose) {
                        Ok(m) => {
                            state.current = m;
                            state.current_pose = pose;
                            recalibrated = true;
                        }
                        Err(_) => fallback = true,
                    }
                }
            }
            if recalibrated {
                self.refits += 1;
            }
        }

        let predict = |eye: Eye| -> Option<(ScreenPoint, ModelKind)> {
            let state = self.eyes.get(&eye)?;
            let v = vectors.iter().find(|v| v.eye == eye)?;
            Some((state.current.predict(v), state.current.kind))
        };
        let left = predict(Eye::Left);
        let right = predict(Eye::Right);
        let model = left.or(right).map(|(_, k)| k);
        let point = fuse(left.map(|p| p.0), right.map(|p| p.0), self.config.fusion)
            .ok_or_else(|| Error::invalid(format!("frame {}: no calibrated eye observed", input.index)))?;
        if !(point.sx.is_finite() && point.sy.is_finite()) {
            return Err(Error::invalid(format!("frame {}: non-finite estimate", input.index)));
        }
        Ok(GazeEstimate {
            frame: input.index,
            point,
            tracker: kind,
            model: model.expect("a point implies a model"),
            recalibrated,
            fallback,
        })
    }

    /// Gaze vectors from an image: pupil centre in each ROI minus the eye's
    /// anchor point.
    fn measure(&mut self, frame: u64, image: &GrayImage, regions: &[EyeRegion]) -> Result<Vec<GazeVector>> {
        let mut out = Vec::new();
        for region in regions {
            let anchor = match region.anchor {
                Some(a) => {
                    self.anchors.insert(region.eye, TrackedFeature::new(image, a, self.config.patch)?);
                    a
                }
                None => {
                    let feature = self.anchors.get_mut(&region.eye).ok_or_else(|| {
                        Error::invalid(format!("frame {frame}: no anchor for the {} eye", region.eye))
                    })?;
                    if !feature.step(image).is_tracking() {
                        continue;
                    }
                    feature.position
                }
            };
            let pupil = locate_eye_center_with(image, region.roi, &self.config.isophote)?;
            if pupil.confidence > 0.0 {
                out.push(GazeVector::new(pupil.x - anchor[0], pupil.y - anchor[1], region.eye));
            }
        }
        Ok(out)
    }
}

/// Runs `inputs` through a fresh tracker.
pub fn track_stream(config: TrackerConfig, calibrations: Vec<CalibrationSet>, inputs: &[FrameInput]) -> Result<Vec<GazeEstimate>> {
    let mut tracker = Tracker::new(config, calibrations)?;
    inputs.iter().map(|f| tracker.process(f)).collect()
}
