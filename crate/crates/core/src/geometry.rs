//! Points, rigid transforms and the roll/pitch/yaw parameterization.
//!
//! Rotations use the fixed-axis X-Y-Z convention: a pose `(roll, pitch, yaw)`
//! maps to `R = Rz(yaw) * Ry(pitch) * Rx(roll)`. Every simulator setting and
//! every reported calibration result uses this convention, so it must not be
//! changed without regenerating ground truth.
//!
//! Frames are vehicle style (x forward, y left, z up) for both sensors.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;
pub type Point2 = nalgebra::Point2<f64>;
pub type Vector2 = nalgebra::Vector2<f64>;

/// Six extrinsic parameters: translation in meters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6 {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    /// Rotation about x.
    pub roll: f64,
    /// Rotation about y.
    pub pitch: f64,
    /// Rotation about z.
    pub yaw: f64,
}

impl Pose6 {
    pub const fn new(tx: f64, ty: f64, tz: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            roll,
            pitch,
            yaw,
        }
    }

    pub fn translation(&self) -> Vector3 {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    /// Same pose with every angle wrapped into `(-pi, pi]`.
    pub fn normalized(&self) -> Self {
        Self {
            roll: wrap_angle(self.roll),
            pitch: wrap_angle(self.pitch),
            yaw: wrap_angle(self.yaw),
            ..*self
        }
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: rotation_from_rpy(self.roll, self.pitch, self.yaw),
            translation: self.translation(),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.roll, self.pitch, self.yaw]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn rot_x(a: f64) -> Matrix3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotation_from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3 {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Inverse of [`rotation_from_rpy`], choosing the `pitch in [-pi/2, pi/2]`
/// branch. At gimbal lock (`|pitch| = pi/2`) roll is set to 0 and yaw
/// absorbs the remaining rotation.
pub fn rpy_from_rotation(r: &Matrix3) -> (f64, f64, f64) {
    let cos_pitch = (r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)]).sqrt();
    let pitch = (-r[(2, 0)]).atan2(cos_pitch);
    if cos_pitch > 1e-12 {
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        (roll, pitch, yaw)
    } else {
        // r = Rz(yaw) Ry(+-pi/2): columns 1 hold (-sin yaw, cos yaw, 0).
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        let pitch = if r[(2, 0)] < 0.0 { FRAC_PI_2 } else { -FRAC_PI_2 };
        (0.0, pitch, yaw)
    }
}

/// Rotation angle of an orthonormal matrix, in `[0, pi]`.
///
/// Equal to `acos((trace - 1) / 2)`; evaluated through `atan2` of the
/// skew part so that small angles keep full precision.
pub fn rotation_angle(r: &Matrix3) -> f64 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sx = r[(2, 1)] - r[(1, 2)];
    let sy = r[(0, 2)] - r[(2, 0)];
    let sz = r[(1, 0)] - r[(0, 1)];
    let sin = 0.5 * (sx * sx + sy * sy + sz * sz).sqrt();
    sin.atan2(cos).clamp(0.0, PI)
}

/// Rigid-body transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3,
    pub translation: Vector3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3, translation: Vector3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(rotation: Matrix3) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// `R^T R = I` and `det R = +1`, both within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        orth <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    pub fn apply_all(&self, pts: &[Point3]) -> Vec<Point3> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_pose(&self) -> Pose6 {
        let (roll, pitch, yaw) = rpy_from_rotation(&self.rotation);
        Pose6 {
            tx: self.translation.x,
            ty: self.translation.y,
            tz: self.translation.z,
            roll,
            pitch,
            yaw,
        }
    }

    /// Row-major homogeneous 4x4 matrix.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_homogeneous(m: &[[f64; 4]; 4]) -> RigidTransform {
        RigidTransform {
            rotation: Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            translation: Vector3::new(m[0][3], m[1][3], m[2][3]),
        }
    }
}

/// Ordered points with optional per-point ring index and intensity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub rings: Option<Vec<u16>>,
    pub intensities: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            rings: None,
            intensities: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every point is finite and attribute columns, when present, match the
    /// point count; rings are below `layers` when given.
    pub fn is_valid(&self, layers: Option<usize>) -> bool {
        let finite = self.points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()));
        let rings_ok = match &self.rings {
            None => true,
            Some(r) => {
                r.len() == self.points.len()
                    && layers.is_none_or(|n| r.iter().all(|&i| (i as usize) < n))
            }
        };
        let int_ok = self
            .intensities
            .as_ref()
            .is_none_or(|i| i.len() == self.points.len());
        finite && rings_ok && int_ok
    }
}

pub fn centroid(pts: &[Point3]) -> Option<Point3> {
    if pts.is_empty() {
        return None;
    }
    let sum = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / pts.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_pose() {
        let t = Pose6::default().to_transform();
        assert_eq!(t, RigidTransform::identity());
        assert_eq!(RigidTransform::identity().to_pose(), Pose6::default());
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let t = Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2).to_transform();
        let p = t.apply(&Point3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn apply_basics() {
        let id = RigidTransform::identity();
        assert_eq!(id.apply(&Point3::new(1.0, 2.0, 3.0)), Point3::new(1.0, 2.0, 3.0));
        let tr = RigidTransform::from_translation(Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(tr.apply(&Point3::origin()), Point3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn inverse_of_translation() {
        let tr = RigidTransform::from_translation(Vector3::new(0.1, -0.2, 0.3));
        let inv = tr.inverse();
        assert_eq!(inv.rotation, Matrix3::identity());
        assert_abs_diff_eq!(inv.translation, Vector3::new(-0.1, 0.2, -0.3), epsilon = 1e-15);
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let b = Pose6::new(0.3, -0.1, 0.7, 0.2, -0.4, 1.1).to_transform();
        assert_eq!(RigidTransform::identity().compose(&b), b);
        let c = b.inverse().compose(&b);
        assert_abs_diff_eq!(c.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.translation, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_branch() {
        for &pitch in &[FRAC_PI_2, -FRAC_PI_2] {
            let r = rotation_from_rpy(0.4, pitch, -0.9);
            let (roll, p, yaw) = rpy_from_rotation(&r);
            assert_eq!(roll, 0.0);
            assert_abs_diff_eq!(p, pitch, epsilon = 1e-12);
            assert_abs_diff_eq!(rotation_from_rpy(roll, p, yaw), r, epsilon = 1e-9);
        }
    }

    #[test]
    fn rotation_angle_of_yaw() {
        assert_eq!(rotation_angle(&Matrix3::identity()), 0.0);
        assert_abs_diff_eq!(rotation_angle(&rot_z(0.5)), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rotation_angle(&rot_x(PI)), PI, epsilon = 1e-12);
    }

    #[test]
    fn wrap_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn homogeneous_roundtrip() {
        let t = Pose6::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3).to_transform();
        assert_eq!(RigidTransform::from_homogeneous(&t.to_homogeneous()), t);
    }
}
