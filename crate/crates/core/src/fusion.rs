//! Extended Kalman filter over the emitter's 3-D position.
//!
//! Random-walk prediction, then sequential correction by camera pixel
//! measurements and ultrasonic planar estimates in timestamp order.

use std::cmp::Ordering;
use std::sync::Mutex;

use log::warn;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::camera::{project_point, CameraCalibration, MIN_DEPTH};
use crate::error::{FusionError, GeometryError};
use crate::sonar::{sonar_measurement_fn, sonar_measurement_jacobian, SonarEstimate};

/// Noise constant for a camera measurement at PCE = 1, in squared
/// normalized image units.
pub const CAMERA_NOISE_AT_UNIT_PCE: f64 = 0.002;

const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState3D {
    pub x: Vector3<f64>,
    pub p: Matrix3<f64>,
    pub stamp: f64,
}

impl TargetState3D {
    pub fn new(x: Vector3<f64>, p: Matrix3<f64>, stamp: f64) -> Self {
        Self { x, p, stamp }
    }

    pub fn is_symmetric_psd(&self) -> bool {
        if (self.p - self.p.transpose()).amax() > SYMMETRY_TOL {
            return false;
        }
        self.p.symmetric_eigenvalues().iter().all(|&e| e >= -SYMMETRY_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Camera,
    Ultrasonic,
}

impl MeasurementKind {
    /// Ultrasonic sorts before camera at equal stamps.
    fn tie_rank(self) -> u8 {
        match self {
            MeasurementKind::Ultrasonic => 0,
            MeasurementKind::Camera => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementKind::Camera => "camera",
            MeasurementKind::Ultrasonic => "ultrasonic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub stamp: f64,
    pub kind: MeasurementKind,
    /// Pixels for camera measurements, meters for ultrasonic ones.
    pub value: Vector2<f64>,
    pub noise: Matrix2<f64>,
    pub pce: Option<f64>,
}

impl Measurement {
    /// Camera pixel measurement; the noise is [`camera_noise_from_pce`]
    /// converted to pixels with `unit_px` pixels per normalized image unit.
    pub fn camera(stamp: f64, uv: Vector2<f64>, pce: f64, unit_px: f64) -> Result<Self, FusionError> {
        let q = camera_noise_from_pce(pce)? * (unit_px * unit_px);
        let m = Self { stamp, kind: MeasurementKind::Camera, value: uv, noise: q, pce: Some(pce) };
        m.validate()?;
        Ok(m)
    }

    pub fn ultrasonic(stamp: f64, est: &SonarEstimate) -> Result<Self, FusionError> {
        let m = Self {
            stamp,
            kind: MeasurementKind::Ultrasonic,
            value: Vector2::new(est.x_u, est.y_u),
            noise: est.covariance,
            pce: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !self.stamp.is_finite() || !self.value.iter().all(|v| v.is_finite()) {
            return Err(FusionError::InvalidNoise("non-finite measurement".into()));
        }
        let q = &self.noise;
        if (q[(0, 1)] - q[(1, 0)]).abs() > SYMMETRY_TOL * q.amax().max(1.0) {
            return Err(FusionError::InvalidNoise("noise must be symmetric".into()));
        }
        if !(q[(0, 0)] > 0.0 && q.determinant() > 0.0) {
            return Err(FusionError::InvalidNoise("noise must be positive definite".into()));
        }
        match (self.kind, self.pce) {
            (MeasurementKind::Camera, Some(p)) if p > 0.0 && p <= 1.0 => Ok(()),
            (MeasurementKind::Camera, p) => Err(FusionError::NonPositivePce(p.unwrap_or(0.0))),
            (MeasurementKind::Ultrasonic, _) => Ok(()),
        }
    }

    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.stamp
            .total_cmp(&other.stamp)
            .then(self.kind.tie_rank().cmp(&other.kind.tie_rank()))
            .then_with(|| cmp_slices(self.value.as_slice(), other.value.as_slice()))
            .then_with(|| cmp_slices(self.noise.as_slice(), other.noise.as_slice()))
            .then_with(|| self.pce.unwrap_or(0.0).total_cmp(&other.pce.unwrap_or(0.0)))
    }
}

fn cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Sorts by stamp; ties go ultrasonic first, then by value bits so any input
/// order yields the same sequence.
pub fn sort_measurements(ms: &mut [Measurement]) {
    ms.sort_by(|a, b| a.sort_key_cmp(b));
}

/// Random-walk process noise per unit time (m^2/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionNoise {
    rate: Matrix3<f64>,
}

impl MotionNoise {
    pub fn new(rate: Matrix3<f64>) -> Result<Self, FusionError> {
        if (rate - rate.transpose()).amax() > SYMMETRY_TOL || rate.cholesky().is_none() {
            return Err(FusionError::InvalidNoise("motion noise must be symmetric positive definite".into()));
        }
        Ok(Self { rate })
    }

    pub fn isotropic(q: f64) -> Result<Self, FusionError> {
        Self::new(Matrix3::identity() * q)
    }

    pub fn rate(&self) -> &Matrix3<f64> {
        &self.rate
    }
}

/// Propagates the state to `t_k`: mean unchanged, covariance grows by R*dt.
pub fn predict(state: &TargetState3D, noise: &MotionNoise, t_k: f64) -> Result<TargetState3D, FusionError> {
    if t_k < state.stamp || !t_k.is_finite() {
        return Err(FusionError::TimeRegression { from: state.stamp, to: t_k });
    }
    if t_k == state.stamp {
        return Ok(state.clone());
    }
    let dt = t_k - state.stamp;
    // G is the identity for a random walk, so G P G^T = P
    Ok(TargetState3D { x: state.x, p: state.p + noise.rate * dt, stamp: t_k })
}

pub fn camera_noise_from_pce(pce: f64) -> Result<Matrix2<f64>, FusionError> {
    if !(pce > 0.0 && pce <= 1.0) {
        return Err(FusionError::NonPositivePce(pce));
    }
    Ok(Matrix2::identity() * (CAMERA_NOISE_AT_UNIT_PCE / pce))
}

/// Derivative of the dehomogenized projection with respect to the
/// robot-frame position.
pub fn camera_jacobian(x: &Vector3<f64>, cal: &CameraCalibration) -> Result<Matrix2x3<f64>, GeometryError> {
    let pc = cal.to_camera_frame(x);
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    let a = cal.intrinsics();
    let h = a * pc;
    let w2 = h.z * h.z;
    // d(h_i / h_z)/d(pc) = (A_i h_z - h_i A_2) / h_z^2
    let mut d = Matrix2x3::zeros();
    for i in 0..2 {
        for j in 0..3 {
            d[(i, j)] = (a[(i, j)] * h.z - h[i] * a[(2, j)]) / w2;
        }
    }
    Ok(d * cal.rotation())
}

/// Measurement models available to the correction step.
#[derive(Debug, Clone)]
pub struct MeasurementModels {
    pub calibration: CameraCalibration,
}

impl MeasurementModels {
    fn predicted(&self, kind: MeasurementKind, x: &Vector3<f64>) -> Result<(Vector2<f64>, Matrix2x3<f64>), FusionError> {
        match kind {
            MeasurementKind::Camera => {
                let uv = project_point(x, &self.calibration)?;
                Ok((uv.coords, camera_jacobian(x, &self.calibration)?))
            }
            MeasurementKind::Ultrasonic => {
                let z = sonar_measurement_fn(x).map_err(|_| FusionError::UndefinedRange)?;
                let h = sonar_measurement_jacobian(x).map_err(|_| FusionError::UndefinedRange)?;
                Ok((Vector2::new(z.0, z.1), h))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub state: TargetState3D,
    pub innovation: Vector2<f64>,
}

/// EKF correction with a measurement stamped at the state's time.
pub fn update(
    state: &TargetState3D,
    m: &Measurement,
    models: &MeasurementModels,
) -> Result<UpdateOutcome, FusionError> {
    if m.stamp != state.stamp {
        return Err(FusionError::StampMismatch { state: state.stamp, measurement: m.stamp });
    }
    let (predicted, h) = models.predicted(m.kind, &state.x)?;
    let s = h * state.p * h.transpose() + m.noise;
    let det = s.determinant();
    if !(det.abs() > f64::EPSILON * s.norm_squared()) || !det.is_finite() {
        return Err(FusionError::SingularInnovation);
    }
    let s_inv = s.try_inverse().ok_or(FusionError::SingularInnovation)?;
    let k = state.p * h.transpose() * s_inv;
    let innovation = m.value - predicted;
    let x = state.x + k * innovation;
    let p = (Matrix3::identity() - k * h) * state.p;
    let p = (p + p.transpose()) * 0.5;
    Ok(UpdateOutcome { state: TargetState3D { x, p, stamp: state.stamp }, innovation })
}

/// One line of the per-update log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub stamp: f64,
    pub kind: MeasurementKind,
    pub applied: bool,
    pub innovation_0: f64,
    pub innovation_1: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub p_xx: f64,
    pub p_yy: f64,
    pub p_zz: f64,
}

/// Serially driven filter: predict to each measurement's stamp, then correct.
#[derive(Debug, Clone)]
pub struct FusionFilter {
    state: TargetState3D,
    noise: MotionNoise,
    models: MeasurementModels,
}

impl FusionFilter {
    pub fn new(initial: TargetState3D, noise: MotionNoise, models: MeasurementModels) -> Self {
        Self { state: initial, noise, models }
    }

    pub fn state(&self) -> &TargetState3D {
        &self.state
    }

    pub fn models(&self) -> &MeasurementModels {
        &self.models
    }

    pub fn predict_to(&mut self, t: f64) -> Result<&TargetState3D, FusionError> {
        self.state = predict(&self.state, &self.noise, t)?;
        Ok(&self.state)
    }

    /// Predicts to the measurement and applies it. A correction that fails
    /// is skipped (the prediction is kept) and reported as not applied.
    pub fn process(&mut self, m: &Measurement) -> Result<UpdateRecord, FusionError> {
        self.predict_to(m.stamp)?;
        let (innovation, applied) = match update(&self.state, m, &self.models) {
            Ok(out) => {
                self.state = out.state;
                (out.innovation, true)
            }
            Err(e) => {
                warn!("skipping {} update at t={:.3}: {e}", m.kind.as_str(), m.stamp);
                (Vector2::new(f64::NAN, f64::NAN), false)
            }
        };
        let s = &self.state;
        Ok(UpdateRecord {
            stamp: m.stamp,
            kind: m.kind,
            applied,
            innovation_0: innovation.x,
            innovation_1: innovation.y,
            x: s.x.x,
            y: s.x.y,
            z: s.x.z,
            p_xx: s.p[(0, 0)],
            p_yy: s.p[(1, 1)],
            p_zz: s.p[(2, 2)],
        })
    }
}

/// Processes a batch of measurements in timestamp order and finally
/// predicts to `until` when it lies past the last measurement.
pub fn step(
    state: &TargetState3D,
    mut queue: Vec<Measurement>,
    until: Option<f64>,
    noise: &MotionNoise,
    models: &MeasurementModels,
) -> Result<(TargetState3D, Vec<UpdateRecord>), FusionError> {
    sort_measurements(&mut queue);
    let mut filter = FusionFilter::new(state.clone(), *noise, models.clone());
    let mut log = Vec::with_capacity(queue.len());
    for m in &queue {
        log.push(filter.process(m)?);
    }
    if let Some(t) = until {
        if t > filter.state.stamp {
            filter.predict_to(t)?;
        }
    }
    Ok((filter.state, log))
}

/// Measurement inbox shared by concurrent producers; drained in timestamp order.
#[derive(Debug, Default)]
pub struct MeasurementQueue {
    inner: Mutex<Vec<Measurement>>,
}

impl MeasurementQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, m: Measurement) {
        self.inner.lock().expect("queue lock poisoned").push(m);
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn drain_sorted(&self) -> Vec<Measurement> {
        let mut v = std::mem::take(&mut *self.inner.lock().expect("queue lock poisoned"));
        sort_measurements(&mut v);
        v
    }
}

pub fn write_update_log<W: std::io::Write>(records: &[UpdateRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
