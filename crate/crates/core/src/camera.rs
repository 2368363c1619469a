//! Pinhole camera model, calibration config and the initial bounding box
//! construction from a 3-D seed position and the person's height.
//!
//! Robot frame: x forward, y left, z up. Extrinsics map robot-frame points
//! into the camera frame (x right, y down, z along the optical axis).

use nalgebra::{Matrix3, Matrix3x4, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Points closer than this to the camera plane are treated as behind it.
pub const MIN_DEPTH: f64 = 1e-6;

const ROTATION_TOL: f64 = 1e-9;

/// Intrinsics, extrinsics and image size of a calibrated camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    intrinsics: Matrix3<f64>,
    extrinsics: Matrix3x4<f64>,
    width: u32,
    height: u32,
}

/// On-disk form of [`CameraCalibration`]. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub intrinsics: [[f64; 3]; 3],
    pub extrinsics: [[f64; 4]; 3],
    pub image_size: [u32; 2],
}

impl CameraCalibration {
    pub fn new(
        intrinsics: Matrix3<f64>,
        extrinsics: Matrix3x4<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let fx = intrinsics[(0, 0)];
        let fy = intrinsics[(1, 1)];
        let cx = intrinsics[(0, 2)];
        let cy = intrinsics[(1, 2)];
        let bottom_ok = intrinsics[(1, 0)] == 0.0
            && intrinsics[(2, 0)] == 0.0
            && intrinsics[(2, 1)] == 0.0
            && intrinsics[(2, 2)] == 1.0;
        if !intrinsics.iter().all(|v| v.is_finite()) || !bottom_ok {
            return Err(GeometryError::InvalidCalibration(
                "intrinsics must be finite and upper triangular with A[2][2] = 1".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCalibration("image size must be non-zero".into()));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidCalibration("focal lengths must be positive".into()));
        }
        if !(0.0..f64::from(width)).contains(&cx) || !(0.0..f64::from(height)).contains(&cy) {
            return Err(GeometryError::InvalidCalibration(
                "principal point must lie inside the image".into(),
            ));
        }
        if !extrinsics.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidCalibration("extrinsics must be finite".into()));
        }
        let rot: Matrix3<f64> = extrinsics.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho_err = (rot.transpose() * rot - Matrix3::identity()).amax();
        if ortho_err > ROTATION_TOL || (rot.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::InvalidCalibration(
                "extrinsic rotation must be orthonormal with det = +1".into(),
            ));
        }
        Ok(Self { intrinsics, extrinsics, width, height })
    }

    /// Camera looking along the robot's +x axis, mounted at `mount` (robot frame).
    pub fn forward_looking(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        mount: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let rot = robot_to_camera_rotation();
        let t = -(rot * mount);
        let mut ext = Matrix3x4::zeros();
        ext.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        ext.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let a = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        Self::new(a, ext, width, height)
    }

    pub fn from_config(cfg: &CalibrationConfig) -> Result<Self, GeometryError> {
        let a = Matrix3::from_fn(|r, c| cfg.intrinsics[r][c]);
        let e = Matrix3x4::from_fn(|r, c| cfg.extrinsics[r][c]);
        Self::new(a, e, cfg.image_size[0], cfg.image_size[1])
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let cfg: CalibrationConfig = serde_json::from_str(text)
            .map_err(|e| GeometryError::InvalidCalibration(e.to_string()))?;
        Self::from_config(&cfg)
    }

    pub fn to_config(&self) -> CalibrationConfig {
        CalibrationConfig {
            intrinsics: std::array::from_fn(|r| std::array::from_fn(|c| self.intrinsics[(r, c)])),
            extrinsics: std::array::from_fn(|r| std::array::from_fn(|c| self.extrinsics[(r, c)])),
            image_size: [self.width, self.height],
        }
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &Matrix3x4<f64> {
        &self.extrinsics
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.extrinsics.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.extrinsics.column(3).into_owned()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fx(&self) -> f64 {
        self.intrinsics[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.intrinsics[(1, 1)]
    }

    /// Robot-frame point expressed in the camera frame.
    pub fn to_camera_frame(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }
}

/// Rotation taking robot axes (x fwd, y left, z up) to camera axes
/// (x right, y down, z fwd).
pub fn robot_to_camera_rotation() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

/// Projects a robot-frame point into pixel coordinates.
pub fn project_point(p: &Vector3<f64>, cal: &CameraCalibration) -> Result<Point2<f64>, GeometryError> {
    let pc = cal.to_camera_frame(p);
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    let h = cal.intrinsics * pc;
    Ok(Point2::new(h.x / h.z, h.y / h.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonModel {
    pub height_m: f64,
    #[serde(default = "PersonModel::default_width")]
    pub width_m: f64,
    #[serde(default = "PersonModel::default_emitter_ratio")]
    pub emitter_ratio: f64,
}

impl PersonModel {
    pub const DEFAULT_WIDTH: f64 = 0.4;
    pub const DEFAULT_EMITTER_RATIO: f64 = 0.5;

    pub fn new(height_m: f64) -> Result<Self, GeometryError> {
        let p = Self {
            height_m,
            width_m: Self::DEFAULT_WIDTH,
            emitter_ratio: Self::DEFAULT_EMITTER_RATIO,
        };
        p.validate()?;
        Ok(p)
    }

    fn default_width() -> f64 {
        Self::DEFAULT_WIDTH
    }

    fn default_emitter_ratio() -> f64 {
        Self::DEFAULT_EMITTER_RATIO
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.height_m > 0.5 && self.height_m < 2.5) {
            return Err(GeometryError::InvalidPerson("height must be in (0.5, 2.5) m".into()));
        }
        if !(self.width_m > 0.0 && self.width_m.is_finite()) {
            return Err(GeometryError::InvalidPerson("width must be positive".into()));
        }
        if !(self.emitter_ratio > 0.0 && self.emitter_ratio < 1.0) {
            return Err(GeometryError::InvalidPerson("emitter ratio must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorPoints {
    pub left: Vector3<f64>,
    pub right: Vector3<f64>,
    pub head: Vector3<f64>,
    pub feet: Vector3<f64>,
}

/// Left/right boundary and head/feet points around the emitter position.
pub fn person_anchor_points(x: &Vector3<f64>, person: &PersonModel) -> AnchorPoints {
    let half_w = person.width_m / 2.0;
    let vert = person.emitter_ratio * person.height_m;
    AnchorPoints {
        left: x + Vector3::new(0.0, half_w, 0.0),
        right: x + Vector3::new(0.0, -half_w, 0.0),
        head: x + Vector3::new(0.0, 0.0, vert),
        feet: x + Vector3::new(0.0, 0.0, -vert),
    }
}

/// Axis-aligned image box. Kept in floating point; rounding happens only
/// when pixels are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub center: Point2<f64>,
    pub width: f64,
    pub height: f64,
    pub scale: f64,
}

impl BoundingBox {
    pub fn new(center: Point2<f64>, width: f64, height: f64, scale: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && scale > 0.0) || !center.coords.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::DegenerateBox { width, height });
        }
        Ok(Self { center, width, height, scale })
    }

    pub fn left(&self) -> f64 {
        self.center.x - self.width / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center.y - self.height / 2.0
    }

    pub fn right(&self) -> f64 {
        self.center.x + self.width / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.center.y + self.height / 2.0
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.left() <= other.left()
            && self.right() >= other.right()
            && self.top() <= other.top()
            && self.bottom() >= other.bottom()
    }
}

/// Image box of a person standing with the emitter at `x_init`.
pub fn initial_bbox(
    x_init: &Vector3<f64>,
    person: &PersonModel,
    cal: &CameraCalibration,
) -> Result<BoundingBox, GeometryError> {
    let a = person_anchor_points(x_init, person);
    let left = project_point(&a.left, cal)?;
    let right = project_point(&a.right, cal)?;
    let head = project_point(&a.head, cal)?;
    let feet = project_point(&a.feet, cal)?;
    bbox_from_anchor_pixels(left, right, head, feet)
}

/// Box spanned by the projected left/right and head/feet anchors.
pub fn bbox_from_anchor_pixels(
    left: Point2<f64>,
    right: Point2<f64>,
    head: Point2<f64>,
    feet: Point2<f64>,
) -> Result<BoundingBox, GeometryError> {
    let width = right.x - left.x;
    let height = feet.y - head.y;
    if !(width > 0.0 && height > 0.0) {
        return Err(GeometryError::DegenerateBox { width, height });
    }
    let center = Point2::new((left.x + right.x) / 2.0, (feet.y + head.y) / 2.0);
    BoundingBox::new(center, width, height, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn identity_cal(f: f64, cx: f64, cy: f64) -> CameraCalibration {
        let a = Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0);
        CameraCalibration::new(a, Matrix3x4::identity(), 640, 480).unwrap()
    }

    fn robot_cal() -> CameraCalibration {
        CameraCalibration::forward_looking(500.0, 500.0, 320.0, 240.0, 640, 480, Vector3::zeros()).unwrap()
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let a = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let cal = CameraCalibration::new(a, Matrix3x4::identity(), 4, 4).unwrap();
        let uv = project_point(&Vector3::new(0.0, 0.0, 1.0), &cal).unwrap();
        assert_eq!(uv, Point2::new(0.0, 0.0));
    }

    #[test]
    fn off_axis_pinhole_arithmetic() {
        let cal = identity_cal(500.0, 320.0, 240.0);
        let uv = project_point(&Vector3::new(0.5, 0.0, 2.0), &cal).unwrap();
        assert_abs_diff_eq!(uv.x, 445.0, epsilon = 1e-12);
        assert_abs_diff_eq!(uv.y, 240.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_depth_is_behind_camera() {
        let cal = identity_cal(500.0, 320.0, 240.0);
        let err = project_point(&Vector3::new(0.0, 0.0, -1.0), &cal).unwrap_err();
        assert!(matches!(err, GeometryError::BehindCamera { .. }));
    }

    #[test]
    fn anchors_for_standing_person() {
        let p = PersonModel::new(1.7).unwrap();
        let a = person_anchor_points(&Vector3::new(2.0, 0.0, 1.0), &p);
        assert_abs_diff_eq!(a.head, Vector3::new(2.0, 0.0, 1.85), epsilon = 1e-12);
        assert_abs_diff_eq!(a.feet, Vector3::new(2.0, 0.0, 0.15), epsilon = 1e-12);
        assert_abs_diff_eq!(a.left, Vector3::new(2.0, 0.2, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(a.right, Vector3::new(2.0, -0.2, 1.0), epsilon = 1e-12);

        let a = person_anchor_points(&Vector3::zeros(), &PersonModel::new(2.0).unwrap());
        assert_abs_diff_eq!(a.head, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn zero_height_collapses_head_and_feet() {
        // bypasses validation on purpose: the degenerate limit itself
        let p = PersonModel { height_m: 0.0, width_m: 0.4, emitter_ratio: 0.5 };
        let x = Vector3::new(1.0, 2.0, 3.0);
        let a = person_anchor_points(&x, &p);
        assert_eq!(a.head, x);
        assert_eq!(a.feet, x);
    }

    #[test]
    fn box_from_projected_anchors() {
        let b = bbox_from_anchor_pixels(
            Point2::new(300.0, 200.0),
            Point2::new(340.0, 200.0),
            Point2::new(320.0, 100.0),
            Point2::new(320.0, 300.0),
        )
        .unwrap();
        assert_eq!((b.center.x, b.center.y, b.width, b.height), (320.0, 200.0, 40.0, 200.0));

        let cal = robot_cal();
        let person = PersonModel::new(1.7).unwrap();
        let b = initial_bbox(&Vector3::new(3.0, 0.0, 0.0), &person, &cal).unwrap();
        assert_abs_diff_eq!(b.height, 500.0 * 1.7 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.width, 500.0 * 0.4 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.center.x, 320.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.center.y, 240.0, epsilon = 1e-9);
        assert_eq!(b.scale, 1.0);
    }

    #[test]
    fn target_behind_yawed_camera() {
        let cal = robot_cal();
        let person = PersonModel::new(1.7).unwrap();
        let err = initial_bbox(&Vector3::new(-3.0, 0.0, 0.0), &person, &cal).unwrap_err();
        assert!(matches!(err, GeometryError::BehindCamera { .. }));
    }

    #[test]
    fn rejects_bad_calibration() {
        let a = Matrix3::new(-1.0, 0.0, 10.0, 0.0, 1.0, 10.0, 0.0, 0.0, 1.0);
        assert!(CameraCalibration::new(a, Matrix3x4::identity(), 20, 20).is_err());
        let a = Matrix3::new(1.0, 0.0, 30.0, 0.0, 1.0, 10.0, 0.0, 0.0, 1.0);
        assert!(CameraCalibration::new(a, Matrix3x4::identity(), 20, 20).is_err());
        let a = Matrix3::new(1.0, 0.0, 10.0, 0.0, 1.0, 10.0, 0.0, 0.0, 1.0);
        let mut e = Matrix3x4::identity();
        e[(0, 0)] = 2.0;
        assert!(CameraCalibration::new(a, e, 20, 20).is_err());
        let mut e = Matrix3x4::identity();
        e[(0, 0)] = -1.0;
        assert!(CameraCalibration::new(a, e, 20, 20).is_err(), "reflection has det -1");
    }

    #[test]
    fn calibration_json_round_trip_and_strictness() {
        let cal = robot_cal();
        let text = serde_json::to_string(&cal.to_config()).unwrap();
        assert_eq!(CameraCalibration::from_json(&text).unwrap(), cal);
        let bad = text.replacen('{', "{\"skew\":0.0,", 1);
        assert!(CameraCalibration::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn doubling_depth_halves_box_height(d in 1.0f64..8.0, y in -0.5f64..0.5, z in -0.3f64..0.3) {
            let cal = robot_cal();
            let person = PersonModel::new(1.7).unwrap();
            let near = initial_bbox(&Vector3::new(d, y, z), &person, &cal).unwrap();
            let far = initial_bbox(&Vector3::new(2.0 * d, y, z), &person, &cal).unwrap();
            prop_assert!((far.height / near.height - 0.5).abs() < 1e-6);
        }

        #[test]
        fn homogeneous_scaling_is_invisible(x in 0.5f64..5.0, y in -2.0f64..2.0, z in -1.0f64..1.0, k in 0.1f64..100.0) {
            let cal = robot_cal();
            let p = Vector3::new(x, y, z);
            let uv = project_point(&p, &cal).unwrap();
            let h = cal.intrinsics() * cal.to_camera_frame(&p) * k;
            prop_assert!((h.x / h.z - uv.x).abs() < 1e-9);
            prop_assert!((h.y / h.z - uv.y).abs() < 1e-9);
        }

        #[test]
        fn anchors_keep_forward_coordinate(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0, h in 0.6f64..2.4) {
            let a = person_anchor_points(&Vector3::new(x, y, z), &PersonModel::new(h).unwrap());
            for p in [a.left, a.right, a.head, a.feet] {
                prop_assert_eq!(p.x, x);
            }
        }
    }
}
