//! Head pose, the screen as the zero plane, line-plane intersection and the
//! user-plane construction that re-calibrates screen targets under head
//! movement.
//!
//! World frame: right-handed, millimetres, origin at the camera which sits at
//! the screen centre. `+x` points to the user's right along the screen, `+y`
//! up, `+z` from the screen toward the user; the screen is the plane `z = 0`.
//! At the identity pose the head-local axes coincide with the world axes, so
//! the face looks along head-local `-z`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CalibrationSet, ScreenPoint};

pub type Vec3 = Vector3<f64>;

/// Default distance of the head from the camera.
pub const DEFAULT_DEPTH_MM: f64 = 750.0;
/// Default distance of the user plane in front of the head origin.
pub const DEFAULT_USER_PLANE_OFFSET_MM: f64 = 100.0;

const PARALLEL_EPS: f64 = 1e-9;
const COLLINEAR_EPS: f64 = 1e-9;

/// Head pose: rotation angles in radians and head origin in millimetres.
///
/// `wx` is pitch (positive turns the face up), `wy` is yaw (positive turns
/// the face toward `+x`), `wz` is roll about the viewing axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Default for HeadPose {
    fn default() -> Self {
        Self::at_depth(DEFAULT_DEPTH_MM)
    }
}

impl HeadPose {
    pub fn new(wx: f64, wy: f64, wz: f64, tx: f64, ty: f64, tz: f64) -> Result<Self> {
        let pose = Self { wx, wy, wz, tx, ty, tz };
        pose.validate()?;
        Ok(pose)
    }

    /// Unrotated head centred in front of the camera.
    pub fn at_depth(tz: f64) -> Self {
        Self {
            wx: 0.0,
            wy: 0.0,
            wz: 0.0,
            tx: 0.0,
            ty: 0.0,
            tz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.wx, self.wy, self.wz, self.tx, self.ty, self.tz].iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite pose component"));
        }
        if self.tz <= 0.0 {
            return Err(Error::invalid(format!("head must be in front of the camera, tz = {}", self.tz)));
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.tx, self.ty, self.tz)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.wx);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), -self.wy);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.wz);
        (rz * ry * rx).into_inner()
    }

    /// Largest absolute change of any rotation angle (radians) and of any
    /// translation component (mm) between two poses.
    pub fn delta(&self, other: &HeadPose) -> (f64, f64) {
        let rot = [self.wx - other.wx, self.wy - other.wy, self.wz - other.wz]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let trans = [self.tx - other.tx, self.ty - other.ty, self.tz - other.tz]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        (rot, trans)
    }
}

/// Rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Transform from head-local coordinates to world coordinates, with rotation
/// `Rz(wz) Ry(-wy) Rx(wx)`.
pub fn head_local_frame(pose: &HeadPose) -> RigidTransform {
    RigidTransform {
        rotation: pose.rotation(),
        translation: pose.origin(),
    }
}

/// Physical and pixel extent of the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width_px: f64,
    pub height_px: f64,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self {
            width_px: 1280.0,
            height_px: 1024.0,
            width_mm: 430.0,
            height_mm: 320.0,
        }
    }
}

impl ScreenGeometry {
    pub fn new(width_px: f64, height_px: f64, width_mm: f64, height_mm: f64) -> Result<Self> {
        let g = Self {
            width_px,
            height_px,
            width_mm,
            height_mm,
        };
        if [width_px, height_px, width_mm, height_mm].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("screen dimensions must be positive"));
        }
        Ok(g)
    }

    pub fn mm_per_px_x(&self) -> f64 {
        self.width_mm / self.width_px
    }

    pub fn mm_per_px_y(&self) -> f64 {
        self.height_mm / self.height_px
    }

    /// Screen pixel (top-left origin, `y` down) to a world point on the zero
    /// plane.
    pub fn px_to_mm(&self, p: ScreenPoint) -> Vec3 {
        Vec3::new(
            (p.sx - 0.5 * self.width_px) * self.mm_per_px_x(),
            (0.5 * self.height_px - p.sy) * self.mm_per_px_y(),
            0.0,
        )
    }

    /// Inverse of [`ScreenGeometry::px_to_mm`]; `z` is ignored.
    pub fn mm_to_px(&self, p: &Vec3) -> ScreenPoint {
        ScreenPoint {
            sx: p.x / self.mm_per_px_x() + 0.5 * self.width_px,
            sy: 0.5 * self.height_px - p.y / self.mm_per_px_y(),
        }
    }

    /// The zero plane `z = 0`.
    pub fn plane(&self) -> Plane3 {
        Plane3 {
            x1: Vec3::zeros(),
            x2: Vec3::new(self.width_mm, 0.0, 0.0),
            x3: Vec3::new(0.0, self.height_mm, 0.0),
        }
    }
}

/// Plane through three non-collinear points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane3 {
    pub x1: Vec3,
    pub x2: Vec3,
    pub x3: Vec3,
}

impl Plane3 {
    pub fn new(x1: Vec3, x2: Vec3, x3: Vec3) -> Result<Self> {
        if (x2 - x1).cross(&(x3 - x1)).norm() <= COLLINEAR_EPS {
            return Err(Error::invalid("plane points are collinear"));
        }
        Ok(Self { x1, x2, x3 })
    }

    /// Unit normal, oriented by the right-hand rule on `x1, x2, x3`.
    pub fn normal(&self) -> Vec3 {
        (self.x2 - self.x1).cross(&(self.x3 - self.x1)).normalize()
    }

    /// Signed distance of `p` along [`Plane3::normal`].
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(&(p - self.x1))
    }
}

/// Line through two distinct points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    pub x4: Vec3,
    pub x5: Vec3,
}

impl Ray3 {
    pub fn new(x4: Vec3, x5: Vec3) -> Result<Self> {
        if x4 == x5 {
            return Err(Error::invalid("line needs two distinct points"));
        }
        Ok(Self { x4, x5 })
    }
}

/// Intersection of the line `x4 + (x5 - x4) t` with the plane, and the
/// parameter `t`.
///
/// `t` is the ratio of the 4x4 determinants `|1 1 1 1; x1 x2 x3 x4|` and
/// `|1 1 1 0; x1 x2 x3 x5-x4|`, which reduce to the triple products
/// `n·(x4 - x1)` and `n·(x5 - x4)` with `n = (x2 - x1) × (x3 - x1)`. The line
/// counts as parallel when the sine of its angle to the plane is below 1e-9.
pub fn intersect_line_plane(plane: &Plane3, ray: &Ray3) -> Result<(Vec3, f64)> {
    let n = (plane.x2 - plane.x1).cross(&(plane.x3 - plane.x1));
    let d = ray.x5 - ray.x4;
    let num = n.dot(&(ray.x4 - plane.x1));
    let den = n.dot(&d);
    let n_norm = n.norm();
    if den.abs() <= PARALLEL_EPS * n_norm * d.norm() {
        let scale = (ray.x4 - plane.x1).norm().max(d.norm());
        return Err(if num.abs() <= PARALLEL_EPS * n_norm * scale {
            Error::LineInPlane
        } else {
            Error::NoIntersection
        });
    }
    let t = -num / den;
    Ok((ray.x4 + d * t, t))
}

/// Plane parallel to the head-local `xy` plane at head-local
/// `z = -offset_mm`, in world coordinates.
pub fn build_user_plane(pose: &HeadPose, offset_mm: f64) -> Result<Plane3> {
    pose.validate()?;
    if !(offset_mm > 0.0 && offset_mm.is_finite()) {
        return Err(Error::invalid(format!("user-plane offset must be positive, got {offset_mm}")));
    }
    let f = head_local_frame(pose);
    let z = -offset_mm;
    Plane3::new(
        f.apply(&Vec3::new(0.0, 0.0, z)),
        f.apply(&Vec3::new(100.0, 0.0, z)),
        f.apply(&Vec3::new(0.0, 100.0, z)),
    )
}

/// A calibration target carried on the user plane, in head-local mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPoint {
    pub index: u32,
    pub local: [f64; 3],
}

impl UserPoint {
    pub fn local(&self) -> Vec3 {
        Vec3::from(self.local)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPointSet {
    pub points: Vec<UserPoint>,
    pub pose_at_construction: HeadPose,
}

/// Casts a ray from the head origin to each screen target and keeps its
/// intersection with `plane`, in head-local coordinates.
pub fn project_targets_to_user_points(
    pose0: &HeadPose,
    plane: &Plane3,
    screen: &ScreenGeometry,
    targets: &[(u32, ScreenPoint)],
) -> Result<UserPointSet> {
    pose0.validate()?;
    let origin = pose0.origin();
    if plane.signed_distance(&origin).abs() <= PARALLEL_EPS {
        return Err(Error::invalid("head origin lies on the user plane"));
    }
    let to_local = head_local_frame(pose0).inverse();
    let points = targets
        .iter()
        .map(|&(index, target)| {
            let wrap = |source: Error| Error::Construction {
                index,
                source: Box::new(source),
            };
            let ray = Ray3::new(origin, screen.px_to_mm(target)).map_err(wrap)?;
            let (p, _) = intersect_line_plane(plane, &ray).map_err(wrap)?;
            Ok(UserPoint {
                index,
                local: to_local.apply(&p).into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UserPointSet {
        points,
        pose_at_construction: *pose0,
    })
}

pub fn project_calibration_to_user_points(
    pose0: &HeadPose,
    plane: &Plane3,
    screen: &ScreenGeometry,
    set: &CalibrationSet,
) -> Result<UserPointSet> {
    let targets: Vec<(u32, ScreenPoint)> = set.samples().iter().map(|s| (s.index, s.target)).collect();
    project_targets_to_user_points(pose0, plane, screen, &targets)
}

/// Moves the user points with the head to `pose_now` and casts each back
/// through the head origin onto the screen. Results are not clamped to the
/// screen.
pub fn reproject_user_points(
    pose_now: &HeadPose,
    ups: &UserPointSet,
    screen: &ScreenGeometry,
) -> Result<Vec<(u32, ScreenPoint)>> {
    pose_now.validate()?;
    let frame = head_local_frame(pose_now);
    let origin = pose_now.origin();
    let zero = screen.plane();
    ups.points
        .iter()
        .map(|up| {
            let wrap = |source: Error| Error::Construction {
                index: up.index,
                source: Box::new(source),
            };
            let world = frame.apply(&up.local());
            let ray = Ray3::new(world, origin).map_err(wrap)?;
            let (p, _) = intersect_line_plane(&zero, &ray).map_err(wrap)?;
            Ok((up.index, screen.mm_to_px(&p)))
        })
        .collect()
}

/// Head rotations (degrees) that sweep the gaze from the screen centre to its
/// horizontal and vertical edges.
pub fn natural_rotation_bounds(screen: &ScreenGeometry, depth_mm: f64) -> (f64, f64) {
    let alpha = (0.5 * screen.width_mm / depth_mm).atan().to_degrees();
    let beta = (0.5 * screen.height_mm / depth_mm).atan().to_degrees();
    (alpha, beta)
}
