//! Synthetic gaze streams with known ground truth.
//!
//! The calibration is taken at an unrotated head `depth_mm` in front of the
//! camera. For every frame the simulator picks the pose-normalised vector
//! that the world's mapping sends to the target at that frame's pose. Two
//! worlds are provided:
//!
//! * `Projective`: the head-local geometry is frozen at calibration, so at
//!   pose `p` the mapping is the calibration mapping followed by the
//!   user-plane transfer from the calibration pose to `p`.
//! * `ModelConsistent`: at every pose the mapping is the model of the chosen
//!   family fitted to the calibration vectors and the targets transferred to
//!   that pose. This world is exactly representable by the 3D tracker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_user_plane, project_calibration_to_user_points, project_targets_to_user_points, reproject_user_points,
    HeadPose, ScreenGeometry, UserPointSet, DEFAULT_DEPTH_MM, DEFAULT_USER_PLANE_OFFSET_MM,
};
use crate::models::{
    grid_targets, CalibrationSample, CalibrationSet, Eye, GazeVector, MappingModel, ModelKind, ModelSpec,
    QuadraticSubset, ScreenPoint, DEFAULT_GRID_MARGIN,
};
use crate::pipeline::{recalibrated_model, FrameInput, TrackerKind};

const NEWTON_ITERS: usize = 60;
const NEWTON_TOL_PX: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Affine,
    Quadratic,
}

/// Ground-truth mapping from pose-normalised vectors to screen pixels at the
/// calibration pose, over the basis `[1, x, y, xy, x², y²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueMapping {
    pub kind: MappingKind,
    pub ax: [f64; 6],
    pub ay: [f64; 6],
}

impl Default for TrueMapping {
    fn default() -> Self {
        Self {
            kind: MappingKind::Quadratic,
            ax: [640.0, 42.0, 0.8, 0.12, 0.05, -0.1],
            ay: [512.0, 0.5, 48.0, 0.08, 0.05, 0.3],
        }
    }
}

impl TrueMapping {
    pub fn affine(ax: [f64; 3], ay: [f64; 3]) -> Self {
        Self {
            kind: MappingKind::Affine,
            ax: [ax[0], ax[1], ax[2], 0.0, 0.0, 0.0],
            ay: [ay[0], ay[1], ay[2], 0.0, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ax.iter().chain(&self.ay).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite true-mapping coefficient"));
        }
        if self.kind == MappingKind::Affine && self.ax[3..].iter().chain(&self.ay[3..]).any(|&v| v != 0.0) {
            return Err(Error::invalid("affine true mapping with second-order terms"));
        }
        Ok(())
    }

    pub fn model(&self) -> MappingModel {
        MappingModel {
            kind: ModelKind::Quadratic,
            ax: self.ax,
            ay: self.ay,
            endpoints: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum World {
    #[default]
    Projective,
    ModelConsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub screen: ScreenGeometry,
    pub depth_mm: f64,
    pub vector_noise_px: f64,
    pub pose_noise_deg: f64,
    pub pose_noise_mm: f64,
    pub truth: TrueMapping,
    pub world: World,
    /// Model family of the `ModelConsistent` world.
    pub family: ModelSpec,
    /// Shift of the raw camera-space vector per unit sine of head rotation.
    pub parallax_px: f64,
    pub user_plane_offset_mm: f64,
    pub grid_margin: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            screen: ScreenGeometry::default(),
            depth_mm: DEFAULT_DEPTH_MM,
            vector_noise_px: 0.0,
            pose_noise_deg: 0.0,
            pose_noise_mm: 0.0,
            truth: TrueMapping::default(),
            world: World::Projective,
            family: ModelSpec::Quadratic(QuadraticSubset::TwentyFive),
            parallax_px: 8.0,
            user_plane_offset_mm: DEFAULT_USER_PLANE_OFFSET_MM,
            grid_margin: DEFAULT_GRID_MARGIN,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_mm > 0.0 && self.depth_mm.is_finite()) {
            return Err(Error::invalid(format!("depth must be positive, got {}", self.depth_mm)));
        }
        for (name, v) in [
            ("vector noise", self.vector_noise_px),
            ("pose noise (deg)", self.pose_noise_deg),
            ("pose noise (mm)", self.pose_noise_mm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.parallax_px.is_finite() || !(self.user_plane_offset_mm > 0.0) {
            return Err(Error::invalid("parallax must be finite and the user-plane offset positive"));
        }
        self.truth.validate()
    }

    pub fn calibration_pose(&self) -> HeadPose {
        HeadPose::at_depth(self.depth_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimFrame {
    pub index: u64,
    pub true_pose: HeadPose,
    /// Pose as a pose provider would report it, with noise.
    pub pose: HeadPose,
    /// Pose-normalised gaze vector, with noise.
    pub vector: GazeVector,
    /// Camera-space vector for the static tracker, with noise.
    pub raw: GazeVector,
    pub truth: ScreenPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStream {
    pub calibration: CalibrationSet,
    pub calibration_pose: HeadPose,
    pub frames: Vec<SimFrame>,
}

impl SimStream {
    /// Tracker inputs: raw vectors for the static tracker, pose-normalised
    /// vectors otherwise. Reported poses are attached in both cases.
    pub fn inputs(&self, kind: TrackerKind) -> Vec<FrameInput> {
        self.frames
            .iter()
            .map(|f| {
                let v = if kind == TrackerKind::Static2D { f.raw } else { f.vector };
                FrameInput::vectors(f.index, vec![v], Some(f.pose))
            })
            .collect()
    }

    pub fn truths(&self) -> Vec<ScreenPoint> {
        self.frames.iter().map(|f| f.truth).collect()
    }
}

/// Solves `model(v) = target` by Newton's method from `start`. The
/// central-difference Jacobian is exact for mappings of degree two.
pub fn invert_mapping(model: &MappingModel, target: ScreenPoint, start: [f64; 2]) -> Result<[f64; 2]> {
    const H: f64 = 1e-3;
    let eval = |v: [f64; 2]| model.predict(&GazeVector::new(v[0], v[1], Eye::Left));
    let mut v = start;
    for _ in 0..NEWTON_ITERS {
        let p = eval(v);
        let (rx, ry) = (p.sx - target.sx, p.sy - target.sy);
        if rx.abs().max(ry.abs()) < NEWTON_TOL_PX {
            return Ok(v);
        }
        let dx0 = eval([v[0] + H, v[1]]);
        let dx1 = eval([v[0] - H, v[1]]);
        let dy0 = eval([v[0], v[1] + H]);
        let dy1 = eval([v[0], v[1] - H]);
        let (j11, j21) = ((dx0.sx - dx1.sx) / (2.0 * H), (dx0.sy - dx1.sy) / (2.0 * H));
        let (j12, j22) = ((dy0.sx - dy1.sx) / (2.0 * H), (dy0.sy - dy1.sy) / (2.0 * H));
        let det = j11 * j22 - j12 * j21;
        if !(det.abs() > 1e-12) {
            break;
        }
        v[0] -= (j22 * rx - j12 * ry) / det;
        v[1] -= (-j21 * rx + j11 * ry) / det;
        if !(v[0].is_finite() && v[1].is_finite()) {
            break;
        }
    }
    let p = eval(v);
    if (p.sx - target.sx).abs().max((p.sy - target.sy).abs()) < 1e-6 {
        return Ok(v);
    }
    Err(Error::degenerate(format!(
        "mapping cannot be inverted at ({}, {})",
        target.sx, target.sy
    )))
}

/// Screen point seen through the head-attached user plane at `from`, then
/// re-projected at `to`.
pub fn transfer_point(
    from: &HeadPose,
    to: &HeadPose,
    p: ScreenPoint,
    screen: &ScreenGeometry,
    offset_mm: f64,
) -> Result<ScreenPoint> {
    let plane = build_user_plane(from, offset_mm)?;
    let ups = project_targets_to_user_points(from, &plane, screen, &[(0, p)])?;
    Ok(reproject_user_points(to, &ups, screen)?[0].1)
}

struct Worldview<'a> {
    cfg: &'a SceneConfig,
    pose0: HeadPose,
    truth: MappingModel,
    clean: CalibrationSet,
    ups: UserPointSet,
}

impl Worldview<'_> {
    fn vector_for(&self, pose: &HeadPose, target: ScreenPoint) -> Result<[f64; 2]> {
        let at_calibration = if *pose == self.pose0 {
            target
        } else {
            transfer_point(pose, &self.pose0, target, &self.cfg.screen, self.cfg.user_plane_offset_mm)?
        };
        let physical = invert_mapping(&self.truth, at_calibration, [0.0, 0.0])?;
        match self.cfg.world {
            World::Projective => Ok(physical),
            World::ModelConsistent => {
                let model = if *pose == self.pose0 {
                    self.cfg.family.fit(&self.clean)?
                } else {
                    recalibrated_model(self.cfg.family, &self.clean, &self.ups, pose)?
                };
                invert_mapping(&model, target, physical)
            }
        }
    }
}

/// Generates a calibration on the 5x5 grid and one frame per
/// (pose, target) pair.
pub fn simulate_stream(cfg: &SceneConfig, poses: &[HeadPose], targets: &[ScreenPoint]) -> Result<SimStream> {
    cfg.validate()?;
    if poses.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} poses but {} targets",
            poses.len(),
            targets.len()
        )));
    }
    for p in poses {
        p.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vec_noise = Normal::new(0.0, cfg.vector_noise_px).map_err(|e| Error::invalid(e.to_string()))?;
    let rot_noise = Normal::new(0.0, cfg.pose_noise_deg.to_radians()).map_err(|e| Error::invalid(e.to_string()))?;
    let pos_noise = Normal::new(0.0, cfg.pose_noise_mm).map_err(|e| Error::invalid(e.to_string()))?;

    let pose0 = cfg.calibration_pose();
    let truth = cfg.truth.model();
    let grid = grid_targets(&cfg.screen, cfg.grid_margin);
    let clean_samples = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let v = invert_mapping(&truth, t, [0.0, 0.0])?;
            Ok(CalibrationSample {
                index: i as u32 + 1,
                vector: GazeVector::new(v[0], v[1], Eye::Left),
                target: t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let clean = CalibrationSet::new(clean_samples.clone(), cfg.screen)?;
    let plane = build_user_plane(&pose0, cfg.user_plane_offset_mm)?;
    let ups = project_calibration_to_user_points(&pose0, &plane, &cfg.screen, &clean)?;

    let noisy_samples = clean_samples
        .into_iter()
        .map(|mut s| {
            if cfg.vector_noise_px > 0.0 {
                s.vector.x += vec_noise.sample(&mut rng);
                s.vector.y += vec_noise.sample(&mut rng);
            }
            s
        })
        .collect();
    let calibration = CalibrationSet::new(noisy_samples, cfg.screen)?;

    let world = Worldview {
        cfg,
        pose0,
        truth,
        clean,
        ups,
    };
    let mut frames = Vec::with_capacity(poses.len());
    for (k, (pose, &target)) in poses.iter().zip(targets).enumerate() {
        let mut v = world.vector_for(pose, target)?;
        if cfg.vector_noise_px > 0.0 {
            v[0] += vec_noise.sample(&mut rng);
            v[1] += vec_noise.sample(&mut rng);
        }
        let mut reported = *pose;
        if cfg.pose_noise_deg > 0.0 {
            reported.wx += rot_noise.sample(&mut rng);
            reported.wy += rot_noise.sample(&mut rng);
            reported.wz += rot_noise.sample(&mut rng);
        }
        if cfg.pose_noise_mm > 0.0 {
            reported.tx += pos_noise.sample(&mut rng);
            reported.ty += pos_noise.sample(&mut rng);
            reported.tz += pos_noise.sample(&mut rng);
        }
        let scale = cfg.depth_mm / pose.tz;
        let raw = GazeVector::new(
            scale * (v[0] - cfg.parallax_px * pose.wy.sin()),
            scale * (v[1] + cfg.parallax_px * pose.wx.sin()),
            Eye::Left,
        );
        frames.push(SimFrame {
            index: k as u64,
            true_pose: *pose,
            pose: reported,
            vector: GazeVector::new(v[0], v[1], Eye::Left),
            raw,
            truth: target,
        });
    }
    Ok(SimStream {
        calibration,
        calibration_pose: pose0,
        frames,
    })
}

/// `n` poses whose yaw runs 0 → +max → 0 → −max → 0 piecewise linearly.
/// The extremes are hit exactly when `n - 1` is a multiple of 4.
pub fn yaw_sweep(n: usize, max_deg: f64, depth_mm: f64) -> Vec<HeadPose> {
    let span = n.saturating_sub(1).max(1) as f64;
    (0..n)
        .map(|k| {
            let u = 4.0 * k as f64 / span;
            let tri = if u <= 1.0 {
                u
            } else if u <= 3.0 {
                2.0 - u
            } else {
                u - 4.0
            };
            HeadPose {
                wy: (max_deg * tri).to_radians(),
                ..HeadPose::at_depth(depth_mm)
            }
        })
        .collect()
}

/// `n` poses translating the head on a Lissajous path of the given
/// amplitude around the calibration position.
pub fn translation_sweep(n: usize, amplitude_mm: f64, depth_mm: f64) -> Vec<HeadPose> {
    let span = n.max(1) as f64;
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / span;
            HeadPose {
                tx: amplitude_mm * t.sin(),
                ty: 0.6 * amplitude_mm * (2.0 * t).sin(),
                tz: depth_mm + 0.5 * amplitude_mm * (3.0 * t).sin(),
                ..HeadPose::at_depth(depth_mm)
            }
        })
        .collect()
}

/// The calibration grid visited row by row, alternating direction, repeated
/// until `n` targets are produced.
pub fn serpentine_targets(screen: &ScreenGeometry, margin: f64, n: usize) -> Vec<ScreenPoint> {
    let grid = grid_targets(screen, margin);
    let order: Vec<ScreenPoint> = (0..5)
        .flat_map(|r| {
            let cols: Vec<usize> = if r % 2 == 0 { (0..5).collect() } else { (0..5).rev().collect() };
            cols.into_iter().map(move |c| r * 5 + c)
        })
        .map(|i| grid[i])
        .collect();
    order.iter().copied().cycle().take(n).collect()
}
