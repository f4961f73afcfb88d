//! Geometric binding between camera frames and robot-frame gaze commands.
//!
//! Conventions: the camera optical frame has +x to the right, +y down and +z
//! along the optical axis. Normalized image coordinates `(u_n, v_n)` live in
//! `[0, 1]^2` with `u_n` increasing rightward and `v_n` increasing downward.
//! A [`RigidTransform`] maps camera-frame quantities into the robot frame.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for orthonormality and unit-norm checks.
pub const GEOMETRY_TOLERANCE: f64 = 1e-9;

/// Default nominal look-at distance in meters.
pub const DEFAULT_NOMINAL_DISTANCE: f64 = 1.5;

// Relative slack on the frustum edge so that rays produced from u_n = 0 or 1
// survive the tan() round trip.
const FRUSTUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("rotation matrix is not a proper rotation (orthonormality error {0:e})")]
    InvalidRotation(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("field of view {0} rad is outside (0, pi)")]
    InvalidFov(f64),
    #[error("image dimensions must be positive")]
    InvalidImageSize,
    #[error("normalized pixel ({u}, {v}) is outside [0,1]^2")]
    PixelOutOfRange { u: f64, v: f64 },
    #[error("ray lies outside the camera frustum")]
    FrustumExceeded,
    #[error("vector has zero length")]
    ZeroVector,
    #[error("ray is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("nominal distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("gaze target must be finite and away from the origin")]
    DegenerateTarget,
}

/// A point in either the camera or the robot frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

/// Pose of the camera optical frame expressed in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = (rotation.determinant() - 1.0).abs();
        let err = ortho.max(det);
        if err > GEOMETRY_TOLERANCE {
            return Err(GeometryError::InvalidRotation(err));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Point3) -> Result<Self, GeometryError> {
        Self::new(Matrix3::identity(), translation.to_vector())
    }

    /// Rotation about the robot +y axis. A positive angle turns the optical
    /// axis (+z) toward +x.
    pub fn yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::zeros(),
        }
    }

    /// Head pose with no roll: yaw about +y applied after an elevation about
    /// +x. Positive `elevation` tilts the optical axis up (toward -y).
    pub fn from_yaw_elevation(yaw: f64, elevation: f64, translation: Point3) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (se, ce) = elevation.sin_cos();
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ce, -se, 0.0, se, ce);
        Self {
            rotation: ry * rx,
            translation: translation.to_vector(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Point3 {
        Point3::from_vector(&self.translation)
    }

    pub fn with_translation(mut self, translation: Point3) -> Self {
        self.translation = translation.to_vector();
        self
    }

    /// The camera optical axis (+z of the camera) in the robot frame.
    pub fn optical_axis(&self) -> UnitRay {
        UnitRay(self.rotation.column(2).into_owned())
    }

    /// Robot-frame point to camera-frame point.
    pub fn inverse_transform_point(&self, p: Point3) -> Point3 {
        Point3::from_vector(&(self.rotation.transpose() * (p.to_vector() - self.translation)))
    }

    /// Rotation rows followed by the translation, 12 numbers total.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_row_major(values: &[f64; 12]) -> Result<Self, GeometryError> {
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[3], values[4], values[5], values[6], values[7],
            values[8],
        );
        Self::new(rotation, Vector3::new(values[9], values[10], values[11]))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = <[f64; 12]>::deserialize(deserializer)?;
        Self::from_row_major(&values).map_err(serde::de::Error::custom)
    }
}

/// FOV-parameterized pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraModel {
    hfov: f64,
    vfov: f64,
    image_width: u32,
    image_height: u32,
}

impl CameraModel {
    pub fn new(hfov: f64, vfov: f64, image_width: u32, image_height: u32) -> Result<Self, GeometryError> {
        for fov in [hfov, vfov] {
            if !(fov > 0.0 && fov < PI) {
                return Err(GeometryError::InvalidFov(fov));
            }
        }
        if image_width == 0 || image_height == 0 {
            return Err(GeometryError::InvalidImageSize);
        }
        Ok(Self {
            hfov,
            vfov,
            image_width,
            image_height,
        })
    }

    pub fn from_degrees(hfov: f64, vfov: f64, image_width: u32, image_height: u32) -> Result<Self, GeometryError> {
        Self::new(hfov.to_radians(), vfov.to_radians(), image_width, image_height)
    }

    pub fn hfov(&self) -> f64 {
        self.hfov
    }

    pub fn vfov(&self) -> f64 {
        self.vfov
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    fn tan_half_h(&self) -> f64 {
        (self.hfov / 2.0).tan()
    }

    fn tan_half_v(&self) -> f64 {
        (self.vfov / 2.0).tan()
    }

    /// Angle between the optical axis and a frustum corner.
    pub fn half_diagonal_angle(&self) -> f64 {
        self.tan_half_h().hypot(self.tan_half_v()).atan()
    }
}

impl<'de> Deserialize<'de> for CameraModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            hfov: f64,
            vfov: f64,
            image_width: u32,
            image_height: u32,
        }
        let raw = Raw::deserialize(deserializer)?;
        CameraModel::new(raw.hfov, raw.vfov, raw.image_width, raw.image_height)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPixel {
    pub u: f64,
    pub v: f64,
}

impl NormalizedPixel {
    pub const CENTER: NormalizedPixel = NormalizedPixel { u: 0.5, v: 0.5 };

    pub fn new(u: f64, v: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(GeometryError::PixelOutOfRange { u, v });
        }
        Ok(Self { u, v })
    }
}

/// A unit direction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRay(Vector3<f64>);

impl UnitRay {
    pub const OPTICAL_AXIS: UnitRay = UnitRay(Vector3::new(0.0, 0.0, 1.0));

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(v: Vector3<f64>) -> Result<Self, GeometryError> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("ray"));
        }
        let n = v.norm();
        if n == 0.0 {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self(v / n))
    }

    /// Accepts a vector that is already unit length within tolerance.
    pub fn from_unit(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > GEOMETRY_TOLERANCE {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self(v))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Angle in radians between two unit rays.
    pub fn angle_to(&self, other: &UnitRay) -> f64 {
        // atan2 form stays accurate for nearly parallel rays.
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

/// Yaw and pitch corrections that bring the optical axis onto a ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularOffset {
    pub d_yaw: f64,
    pub d_pitch: f64,
}

impl AngularOffset {
    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.d_yaw.abs().max(self.d_pitch.abs())
    }
}

/// A look-at point in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeTarget {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GazeTarget {
    pub fn new(point: Point3) -> Result<Self, GeometryError> {
        if !point.is_finite() || point.norm() == 0.0 {
            return Err(GeometryError::DegenerateTarget);
        }
        Ok(Self {
            x: point.x,
            y: point.y,
            z: point.z,
        })
    }

    pub fn point(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    /// Target at `distance` meters along a robot-frame direction given by yaw
    /// (toward +x) and elevation (toward -y).
    pub fn from_yaw_elevation(yaw: f64, elevation: f64, distance: f64) -> Result<Self, GeometryError> {
        let axis = RigidTransform::from_yaw_elevation(yaw, elevation, Point3::ORIGIN).optical_axis();
        Self::new(Point3::from_vector(&(axis.as_vector() * distance)))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// `R p + t`: camera-frame point to robot frame.
pub fn transform_point(transform: &RigidTransform, p: Point3) -> Point3 {
    Point3::from_vector(&(transform.rotation * p.to_vector() + transform.translation))
}

/// Back-projects a normalized pixel to a unit camera-frame ray.
pub fn pixel_to_ray(camera: &CameraModel, px: NormalizedPixel) -> UnitRay {
    let unnormalized = Vector3::new(
        (2.0 * px.u - 1.0) * camera.tan_half_h(),
        (2.0 * px.v - 1.0) * camera.tan_half_v(),
        1.0,
    );
    UnitRay(unnormalized / unnormalized.norm())
}

/// Projects a camera-frame ray to its normalized pixel, or reports that it
/// falls outside the frustum.
pub fn ray_to_pixel(camera: &CameraModel, ray: &UnitRay) -> Result<NormalizedPixel, GeometryError> {
    if ray.z() <= 0.0 {
        return Err(GeometryError::FrustumExceeded);
    }
    let sx = ray.x() / ray.z() / camera.tan_half_h();
    let sy = ray.y() / ray.z() / camera.tan_half_v();
    if sx.abs() > 1.0 + FRUSTUM_SLACK || sy.abs() > 1.0 + FRUSTUM_SLACK {
        return Err(GeometryError::FrustumExceeded);
    }
    Ok(NormalizedPixel {
        u: ((sx + 1.0) / 2.0).clamp(0.0, 1.0),
        v: ((sy + 1.0) / 2.0).clamp(0.0, 1.0),
    })
}

/// Yaw/pitch offset of a camera ray from the optical axis. Pitch is negated
/// so that targets below the image center give a "look down" command.
pub fn angular_error(ray: &UnitRay) -> AngularOffset {
    AngularOffset {
        d_yaw: wrap_angle(ray.x().atan2(ray.z())),
        d_pitch: wrap_angle(-ray.y().atan2(ray.z())),
    }
}

/// Rotates a camera-frame ray into the robot frame.
pub fn rotate_ray(transform: &RigidTransform, ray: &UnitRay) -> UnitRay {
    UnitRay(transform.rotation * ray.0)
}

/// `t + d r`: look-at point at nominal distance `d` from the camera origin.
pub fn look_at_point(
    transform: &RigidTransform,
    robot_ray: &UnitRay,
    distance: f64,
) -> Result<GazeTarget, GeometryError> {
    if !(distance > 0.0) {
        return Err(GeometryError::NonPositiveDistance(distance));
    }
    GazeTarget::new(Point3::from_vector(&(transform.translation + robot_ray.0 * distance)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn assert_vec(actual: &Vector3<f64>, expected: [f64; 3], tol: f64) {
        for (a, e) in actual.iter().zip(expected) {
            assert_abs_diff_eq!(*a, e, epsilon = tol);
        }
    }

    fn cam(h: f64, v: f64) -> CameraModel {
        CameraModel::from_degrees(h, v, 640, 480).unwrap()
    }

    #[test]
    fn transform_point_examples() {
        let p = transform_point(&RigidTransform::identity(), Point3::new(1.0, 2.0, 3.0));
        assert_eq!(p, Point3::new(1.0, 2.0, 3.0));

        let t = RigidTransform::from_translation(Point3::new(0.1, 0.0, 0.2)).unwrap();
        let p = transform_point(&t, Point3::new(0.0, 0.0, 1.0));
        assert_vec(&p.to_vector(), [0.1, 0.0, 1.2], 1e-12);

        let p = transform_point(&RigidTransform::yaw(PI / 2.0), Point3::new(0.0, 0.0, 1.0));
        assert_vec(&p.to_vector(), [1.0, 0.0, 0.0], 1e-12);
    }

    #[test]
    fn pixel_to_ray_examples() {
        let r = pixel_to_ray(&cam(73.0, 41.0), NormalizedPixel::CENTER);
        assert_eq!(*r.as_vector(), Vector3::new(0.0, 0.0, 1.0));

        let r = pixel_to_ray(&cam(90.0, 90.0), NormalizedPixel::new(1.0, 0.5).unwrap());
        assert_vec(r.as_vector(), [0.70711, 0.0, 0.70711], 1e-5);

        // independent numpy evaluation
        let r = pixel_to_ray(&cam(60.0, 40.0), NormalizedPixel::new(0.25, 0.75).unwrap());
        assert_vec(
            r.as_vector(),
            [-0.2732054542147869, 0.17223279953248008, 0.9464114552098873],
            1e-12,
        );
    }

    #[test]
    fn ray_to_pixel_examples() {
        let c = cam(90.0, 90.0);
        let px = ray_to_pixel(&c, &UnitRay::OPTICAL_AXIS).unwrap();
        assert_eq!((px.u, px.v), (0.5, 0.5));

        let r = UnitRay::normalize(Vector3::new(1.0, 0.0, 1.0)).unwrap();
        let px = ray_to_pixel(&c, &r).unwrap();
        assert_abs_diff_eq!(px.u, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(px.v, 0.5, epsilon = 1e-12);

        let r = UnitRay::normalize(Vector3::new(2.0, 0.0, 1.0)).unwrap();
        assert_eq!(ray_to_pixel(&c, &r), Err(GeometryError::FrustumExceeded));

        let behind = UnitRay::normalize(Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(ray_to_pixel(&c, &behind), Err(GeometryError::FrustumExceeded));
    }

    #[test]
    fn angular_error_examples() {
        assert_eq!(
            angular_error(&UnitRay::OPTICAL_AXIS),
            AngularOffset { d_yaw: 0.0, d_pitch: 0.0 }
        );
        let r = UnitRay::normalize(Vector3::new(0.70711, 0.0, 0.70711)).unwrap();
        let e = angular_error(&r);
        assert_abs_diff_eq!(e.d_yaw, PI / 4.0, epsilon = 1e-12);
        assert_eq!(e.d_pitch, 0.0);

        let r = UnitRay::normalize(Vector3::new(0.0, 0.5, 0.86603)).unwrap();
        let e = angular_error(&r);
        assert_eq!(e.d_yaw, 0.0);
        assert_abs_diff_eq!(e.d_pitch, -0.5235987755982989, epsilon = 1e-4);
    }

    #[test]
    fn rotate_ray_examples() {
        let r = rotate_ray(&RigidTransform::identity(), &UnitRay::OPTICAL_AXIS);
        assert_eq!(r, UnitRay::OPTICAL_AXIS);
        let r = rotate_ray(&RigidTransform::yaw(PI / 2.0), &UnitRay::OPTICAL_AXIS);
        assert_vec(r.as_vector(), [1.0, 0.0, 0.0], 1e-12);
    }

    #[test]
    fn look_at_point_examples() {
        let g = look_at_point(&RigidTransform::identity(), &UnitRay::OPTICAL_AXIS, 1.5).unwrap();
        assert_eq!(g.point(), Point3::new(0.0, 0.0, 1.5));

        let t = RigidTransform::from_translation(Point3::new(0.1, 0.0, 0.2)).unwrap();
        let g = look_at_point(&t, &UnitRay::OPTICAL_AXIS, 1.5).unwrap();
        assert_vec(&g.point().to_vector(), [0.1, 0.0, 1.7], 1e-12);

        assert_eq!(
            look_at_point(&t, &UnitRay::OPTICAL_AXIS, 0.0),
            Err(GeometryError::NonPositiveDistance(0.0))
        );
        assert!(look_at_point(&t, &UnitRay::OPTICAL_AXIS, -1.0).is_err());
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(matches!(CameraModel::new(0.0, 1.0, 10, 10), Err(GeometryError::InvalidFov(_))));
        assert!(matches!(CameraModel::new(1.0, PI, 10, 10), Err(GeometryError::InvalidFov(_))));
        assert_eq!(CameraModel::new(1.0, 1.0, 0, 10), Err(GeometryError::InvalidImageSize));
        assert!(NormalizedPixel::new(1.2, 0.5).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            RigidTransform::new(reflect, Vector3::zeros()),
            Err(GeometryError::InvalidRotation(_))
        ));
        let scaled = Matrix3::identity() * 1.01;
        assert!(RigidTransform::new(scaled, Vector3::zeros()).is_err());
    }

    #[test]
    fn row_major_serialization_round_trips() {
        let t = RigidTransform::from_yaw_elevation(0.7, -0.2, Point3::new(0.1, -0.3, 0.05));
        let json = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
        assert!(serde_json::from_str::<RigidTransform>("[2,0,0,0,1,0,0,0,1,0,0,0]").is_err());
    }

    #[test]
    fn wrap_angle_codomain() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-5.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn yaw_elevation_pose_points_up_for_positive_elevation() {
        let axis = RigidTransform::from_yaw_elevation(0.0, 0.3, Point3::ORIGIN).optical_axis();
        assert!(axis.y() < 0.0);
        let axis = RigidTransform::from_yaw_elevation(PI / 2.0, 0.0, Point3::ORIGIN).optical_axis();
        assert_vec(axis.as_vector(), [1.0, 0.0, 0.0], 1e-12);
    }

    fn fov() -> impl Strategy<Value = f64> {
        1e-3..(PI - 1e-3)
    }

    fn transform() -> impl Strategy<Value = RigidTransform> {
        (-PI..PI, -1.5..1.5, (-1.0..1.0, -1.0..1.0, -1.0..1.0)).prop_map(|(y, e, (x, yy, z))| {
            RigidTransform::from_yaw_elevation(y, e, Point3::new(x, yy, z))
        })
    }

    proptest! {
        #[test]
        fn ray_is_unit_with_positive_z(h in fov(), v in fov(), u in 0.0..=1.0f64, vn in 0.0..=1.0f64) {
            let c = CameraModel::new(h, v, 64, 48).unwrap();
            let r = pixel_to_ray(&c, NormalizedPixel::new(u, vn).unwrap());
            prop_assert!((r.as_vector().norm() - 1.0).abs() < GEOMETRY_TOLERANCE);
            prop_assert!(r.z() > 0.0);
        }

        #[test]
        fn yaw_increases_with_u(h in fov(), v in fov(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
            prop_assume!((a - b).abs() > 1e-9);
            let c = CameraModel::new(h, v, 64, 48).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let e_lo = angular_error(&pixel_to_ray(&c, NormalizedPixel::new(lo, 0.5).unwrap()));
            let e_hi = angular_error(&pixel_to_ray(&c, NormalizedPixel::new(hi, 0.5).unwrap()));
            prop_assert!(e_hi.d_yaw > e_lo.d_yaw);
        }

        #[test]
        fn pitch_decreases_with_v(h in fov(), v in fov(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
            prop_assume!((a - b).abs() > 1e-9);
            let c = CameraModel::new(h, v, 64, 48).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let e_lo = angular_error(&pixel_to_ray(&c, NormalizedPixel::new(0.5, lo).unwrap()));
            let e_hi = angular_error(&pixel_to_ray(&c, NormalizedPixel::new(0.5, hi).unwrap()));
            prop_assert!(e_hi.d_pitch < e_lo.d_pitch);
        }

        #[test]
        fn rotate_ray_preserves_norm(t in transform(), x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            prop_assume!(x.abs() + y.abs() + z.abs() > 1e-3);
            let r = UnitRay::normalize(Vector3::new(x, y, z)).unwrap();
            let out = rotate_ray(&t, &r);
            prop_assert!((out.as_vector().norm() - 1.0).abs() < GEOMETRY_TOLERANCE);
        }

        #[test]
        fn look_at_point_is_affine_in_distance(t in transform(), d in 0.01..5.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let r = UnitRay::normalize(Vector3::new(x, y, 1.0)).unwrap();
            let rr = rotate_ray(&t, &r);
            let (Ok(g1), Ok(g2)) = (look_at_point(&t, &rr, d), look_at_point(&t, &rr, 2.0 * d)) else {
                return Ok(());
            };
            let diff = g2.point().to_vector() - g1.point().to_vector();
            prop_assert!((diff - rr.as_vector() * d).norm() < 1e-12);
        }

        #[test]
        fn transform_inverse_round_trip(t in transform(), x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
            let p = Point3::new(x, y, z);
            let back = t.inverse_transform_point(transform_point(&t, p));
            prop_assert!(back.distance(&p) < 1e-12);
        }
    }
}
