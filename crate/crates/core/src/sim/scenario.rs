//! Scenario configuration: JSON with strict field checking and defaults.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CalibrationConfig, CameraCalibration, PersonModel};
use crate::error::ConfigError;
use crate::fusion::MotionNoise;
use crate::sonar::{KernelParams, PosteriorGrid, SonarArrayGeometry};
use crate::tracker::{KcfParams, Kernel, TrackerParams};

/// Target emitter waypoint: time (s) and world position (m). World z is
/// height relative to the robot's sensor origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint(pub f64, pub f64, pub f64, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    /// When false the robot stays at its start pose.
    #[serde(default = "yes")]
    pub follow: bool,
    /// Start pose (x, y, heading) in the world frame.
    #[serde(default)]
    pub start: [f64; 3],
    #[serde(default = "RobotConfig::d_setpoint")]
    pub setpoint: f64,
    #[serde(default = "RobotConfig::d_k_v")]
    pub k_v: f64,
    #[serde(default = "RobotConfig::d_k_omega")]
    pub k_omega: f64,
    #[serde(default = "RobotConfig::d_max_v")]
    pub max_v: f64,
    #[serde(default = "RobotConfig::d_max_omega")]
    pub max_omega: f64,
}

impl RobotConfig {
    fn d_setpoint() -> f64 {
        2.5
    }
    fn d_k_v() -> f64 {
        0.8
    }
    fn d_k_omega() -> f64 {
        1.5
    }
    fn d_max_v() -> f64 {
        1.5
    }
    fn d_max_omega() -> f64 {
        1.2
    }
}

impl Default for RobotConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn yes() -> bool {
    true
}

/// Scripted occluder: while active, a box `cover` times the target's image
/// box (shifted by `offset_px`) is painted over the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionWindow {
    pub start: f64,
    pub end: f64,
    #[serde(default = "OcclusionWindow::d_cover")]
    pub cover: f64,
    #[serde(default)]
    pub offset_px: [f64; 2],
}

impl OcclusionWindow {
    fn d_cover() -> f64 {
        1.6
    }

    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    #[serde(default = "ImageConfig::d_width")]
    pub width: u32,
    #[serde(default = "ImageConfig::d_height")]
    pub height: u32,
    #[serde(default = "ImageConfig::d_focal")]
    pub focal_px: f64,
    /// Camera position in the robot frame (m).
    #[serde(default = "ImageConfig::d_mount")]
    pub mount: [f64; 3],
    /// Full calibration; overrides the fields above when present.
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    /// Standard deviation of additive pixel noise in 8-bit levels.
    #[serde(default = "ImageConfig::d_noise")]
    pub pixel_noise: f64,
    /// Scales the target texture's deviation from mid-gray; 1 is full contrast.
    #[serde(default = "ImageConfig::d_contrast")]
    pub target_contrast: f64,
}

impl ImageConfig {
    fn d_width() -> u32 {
        320
    }
    fn d_height() -> u32 {
        240
    }
    fn d_focal() -> f64 {
        250.0
    }
    fn d_mount() -> [f64; 3] {
        [0.0, 0.0, -0.05]
    }
    fn d_noise() -> f64 {
        4.0
    }
    fn d_contrast() -> f64 {
        1.0
    }
}

impl Default for ImageConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SonarConfig {
    /// Reading noise standard deviation (m).
    #[serde(default = "SonarConfig::d_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub array: SonarArrayGeometry,
    /// Region and resolution of the posterior search; also the field of view.
    #[serde(default)]
    pub grid: PosteriorGrid,
    #[serde(default = "SonarConfig::d_length_scale")]
    pub length_scale: f64,
    #[serde(default = "SonarConfig::d_signal_std")]
    pub signal_std: f64,
    /// Lower bound on the GPR noise std; keeps the Gram matrix well conditioned.
    #[serde(default = "SonarConfig::d_noise_floor")]
    pub noise_floor: f64,
    /// Training grid size (x, y) over the search region.
    #[serde(default = "SonarConfig::d_training")]
    pub training_grid: [usize; 2],
}

impl SonarConfig {
    fn d_noise() -> f64 {
        0.02
    }
    fn d_length_scale() -> f64 {
        0.5
    }
    fn d_signal_std() -> f64 {
        0.2
    }
    fn d_noise_floor() -> f64 {
        0.01
    }
    fn d_training() -> [usize; 2] {
        [21, 17]
    }

    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            length_scale: self.length_scale,
            signal_std: self.signal_std,
            noise_std: self.noise_std.max(self.noise_floor),
        }
    }
}

impl Default for SonarConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    #[serde(default = "TrackerConfig::d_threshold")]
    pub pce_threshold: f64,
    #[serde(default = "TrackerConfig::d_rate")]
    pub learning_rate: f64,
    #[serde(default = "TrackerConfig::d_lambda")]
    pub lambda: f64,
    /// Label bandwidth in cells.
    #[serde(default = "TrackerConfig::d_output_sigma")]
    pub output_sigma: f64,
    /// Gaussian kernel bandwidth; zero selects the linear kernel.
    #[serde(default = "TrackerConfig::d_kernel_sigma")]
    pub kernel_sigma: f64,
    #[serde(default = "TrackerConfig::d_padding")]
    pub padding: f64,
    #[serde(default = "TrackerConfig::d_cell")]
    pub cell_size: usize,
    #[serde(default = "TrackerConfig::d_area")]
    pub max_template_area: f64,
}

impl TrackerConfig {
    fn d_threshold() -> f64 {
        0.2
    }
    fn d_rate() -> f64 {
        0.02
    }
    fn d_lambda() -> f64 {
        1e-4
    }
    fn d_output_sigma() -> f64 {
        0.5
    }
    fn d_kernel_sigma() -> f64 {
        0.5
    }
    fn d_padding() -> f64 {
        2.5
    }
    fn d_cell() -> usize {
        4
    }
    fn d_area() -> f64 {
        96.0 * 96.0
    }

    pub fn params(&self) -> TrackerParams {
        let d = TrackerParams::default();
        TrackerParams {
            features: crate::tracker::FeatureParams { cell_size: self.cell_size, padding: self.padding, ..d.features },
            kcf: KcfParams {
                lambda: self.lambda,
                output_sigma: self.output_sigma,
                kernel: if self.kernel_sigma > 0.0 { Kernel::Gaussian { sigma: self.kernel_sigma } } else { Kernel::Linear },
                learning_rate: self.learning_rate,
            },
            pce_threshold: self.pce_threshold,
            max_template_area: self.max_template_area,
            ..d
        }
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Random-walk noise rate per axis (m^2/s).
    #[serde(default = "FusionConfig::d_motion")]
    pub motion_noise: [f64; 3],
    /// Initial variance per axis (m^2).
    #[serde(default = "FusionConfig::d_p0")]
    pub initial_variance: f64,
    /// Pixels per normalized image unit for the camera noise; the image
    /// width when absent.
    #[serde(default)]
    pub camera_noise_unit_px: Option<f64>,
}

impl FusionConfig {
    fn d_motion() -> [f64; 3] {
        [0.25, 0.25, 0.02]
    }
    fn d_p0() -> f64 {
        0.1
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    #[serde(default = "Scenario::d_camera_rate")]
    pub camera_rate: f64,
    #[serde(default = "Scenario::d_sonar_rate")]
    pub sonar_rate: f64,
    pub trajectory: Vec<Waypoint>,
    #[serde(default)]
    pub occlusions: Vec<OcclusionWindow>,
    #[serde(default)]
    pub robot: RobotConfig,
    #[serde(default)]
    pub image: ImageConfig,
    #[serde(default)]
    pub sonar: SonarConfig,
    #[serde(default = "Scenario::d_person")]
    pub person: PersonModel,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
}

impl Scenario {
    fn d_camera_rate() -> f64 {
        25.0
    }
    fn d_sonar_rate() -> f64 {
        5.0
    }
    fn d_person() -> PersonModel {
        PersonModel::new(1.7).expect("default person is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.camera_rate > 0.0 && self.camera_rate.is_finite()) || !(self.sonar_rate > 0.0 && self.sonar_rate.is_finite()) {
            return bad("sensor rates must be positive");
        }
        if self.duration * self.camera_rate.max(self.sonar_rate) > 1e6 {
            return bad("scenario has too many simulation steps");
        }
        if self.trajectory.is_empty() {
            return bad("trajectory needs at least one waypoint");
        }
        for w in &self.trajectory {
            if ![w.0, w.1, w.2, w.3].iter().all(|v| v.is_finite()) {
                return bad("waypoints must be finite");
            }
        }
        if self.trajectory.windows(2).any(|p| !(p[1].0 > p[0].0)) {
            return bad("waypoint times must increase strictly");
        }
        for o in &self.occlusions {
            if !(o.start >= 0.0 && o.end > o.start && o.end <= self.duration) {
                return bad("occlusion windows must lie within [0, duration]");
            }
            if !(o.cover > 0.0 && o.cover.is_finite()) || !o.offset_px.iter().all(|v| v.is_finite()) {
                return bad("occluder size must be positive");
            }
        }
        let r = &self.robot;
        if ![r.setpoint, r.k_v, r.k_omega, r.max_v, r.max_omega].iter().all(|v| v.is_finite() && *v >= 0.0)
            || !r.start.iter().all(|v| v.is_finite())
        {
            return bad("robot parameters must be finite and non-negative");
        }
        let im = &self.image;
        if im.width < 16 || im.height < 16 || im.width > 4096 || im.height > 4096 {
            return bad("image size must be within 16..=4096 pixels");
        }
        if !(im.pixel_noise >= 0.0 && im.pixel_noise.is_finite()) || !(im.target_contrast > 0.0 && im.target_contrast <= 1.0) {
            return bad("image noise must be non-negative and contrast in (0, 1]");
        }
        if !(im.focal_px > 0.0 && im.focal_px.is_finite()) || !im.mount.iter().all(|v| v.is_finite()) {
            return bad("focal length must be positive");
        }
        self.calibration()?;
        self.person.validate()?;
        let s = &self.sonar;
        if !(s.noise_std >= 0.0 && s.noise_std.is_finite()) || !(s.noise_floor > 0.0) {
            return bad("sonar noise must be non-negative with a positive floor");
        }
        s.array.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        s.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        s.kernel().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if s.training_grid[0] < 2 || s.training_grid[1] < 2 || s.training_grid[0] * s.training_grid[1] > 2500 {
            return bad("training grid must be between 2x2 and 2500 points");
        }
        self.tracker.params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let f = &self.fusion;
        if !f.motion_noise.iter().all(|q| *q > 0.0 && q.is_finite()) || !(f.initial_variance > 0.0 && f.initial_variance.is_finite()) {
            return bad("fusion noise parameters must be positive");
        }
        if let Some(u) = f.camera_noise_unit_px {
            if !(u > 0.0 && u.is_finite()) {
                return bad("camera noise unit must be positive");
            }
        }
        Ok(())
    }

    pub fn calibration(&self) -> Result<CameraCalibration, ConfigError> {
        let im = &self.image;
        let cal = match &im.calibration {
            Some(c) => CameraCalibration::from_config(c)?,
            None => CameraCalibration::forward_looking(
                im.focal_px,
                im.focal_px,
                im.width as f64 / 2.0,
                im.height as f64 / 2.0,
                im.width,
                im.height,
                Vector3::from(im.mount),
            )?,
        };
        Ok(cal)
    }

    pub fn motion_noise(&self) -> MotionNoise {
        MotionNoise::new(Matrix3::from_diagonal(&self.fusion.motion_noise.into())).expect("validated motion noise")
    }

    pub fn initial_covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * self.fusion.initial_variance
    }

    pub fn camera_noise_unit_px(&self) -> f64 {
        self.fusion.camera_noise_unit_px.unwrap_or(self.image.width as f64)
    }

    /// Number of camera frames and sonar packets in `[0, duration)`.
    pub fn event_counts(&self) -> (usize, usize) {
        let n = |rate: f64| (self.duration * rate - 1e-9).ceil().max(0.0) as usize;
        (n(self.camera_rate), n(self.sonar_rate))
    }

    /// Fraction of camera frames inside an occlusion window.
    pub fn occluded_fraction(&self) -> f64 {
        let (n, _) = self.event_counts();
        let occ = (0..n).filter(|&i| self.occluded_at(i as f64 / self.camera_rate)).count();
        occ as f64 / n.max(1) as f64
    }

    pub fn occluded_at(&self, t: f64) -> bool {
        self.occlusions.iter().any(|o| o.active(t))
    }
}
