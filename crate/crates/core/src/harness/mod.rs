//! End-to-end runs: simulate a scenario, run the tracker and the sonar
//! localizer over it once, then replay the resulting measurement stream
//! through the filter with each sensor combination and score it.

pub mod output;
pub mod plot;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::camera::BoundingBox;
use crate::error::{HarnessError, TrackerError};
use crate::fusion::{
    sort_measurements, FusionFilter, Measurement, MeasurementKind, MeasurementModels, TargetState3D, UpdateRecord,
};
use crate::raster::Raster;
use crate::sim::render::FrameTruth;
use crate::sim::{run_scenario, training_set, GroundTruthLog, Scenario, SensorEvent, SimRun};
use crate::sonar::{SonarLocalizer, TrainingSet, RECEIVERS};
use crate::tracker::{TraceRecord, TrackerState};

pub use output::write_report;
pub use plot::emit_plots;

/// Frames rendered ahead of the tracker in one parallel batch.
const RENDER_BATCH: usize = 32;

/// Which measurement kinds the filter consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fused,
    Camera,
    Sonar,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Fused, Mode::Camera, Mode::Sonar];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fused => "fused",
            Mode::Camera => "camera",
            Mode::Sonar => "sonar",
        }
    }

    pub fn accepts(self, kind: MeasurementKind) -> bool {
        match self {
            Mode::Fused => true,
            Mode::Camera => kind == MeasurementKind::Camera,
            Mode::Sonar => kind == MeasurementKind::Ultrasonic,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fused" => Ok(Mode::Fused),
            "camera" => Ok(Mode::Camera),
            "sonar" => Ok(Mode::Sonar),
            other => Err(HarnessError::UnknownMode(other.to_string())),
        }
    }
}

/// Mean absolute error per axis over matched samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AxisErrors {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub samples: usize,
}

/// Matches each `(stamp, estimate)` to the nearest ground-truth sample
/// within half a step and averages `|est - truth|` per axis. Estimates with
/// no match are ignored.
pub fn compute_errors(estimates: &[(f64, Vector3<f64>)], truth: &GroundTruthLog) -> Result<AxisErrors, HarnessError> {
    let mut diffs: [Vec<f64>; 3] = Default::default();
    for (t, est) in estimates {
        if let Some(s) = truth.at(*t) {
            let d = (est - s.position).abs();
            for (axis, v) in diffs.iter_mut().zip(d.iter()) {
                axis.push(*v);
            }
        }
    }
    let n = diffs[0].len();
    if n == 0 {
        return Err(HarnessError::EmptyOverlap);
    }
    let mean = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / n as f64
    };
    let [mut dx, mut dy, mut dz] = diffs;
    Ok(AxisErrors { x: mean(&mut dx), y: mean(&mut dy), z: mean(&mut dz), samples: n })
}

/// Tracker-side view of one camera frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameStat {
    pub frame: usize,
    pub stamp: f64,
    pub occluded: bool,
    pub fully_covered: bool,
    pub in_view: bool,
    pub pce: f64,
    pub gated: bool,
    /// Appearance-model updates so far, including this frame.
    pub model_writes: u64,
    pub published: bool,
    pub meas_u: f64,
    pub meas_v: f64,
    pub box_u: f64,
    pub box_v: f64,
    pub box_width: f64,
    pub box_height: f64,
    pub true_u: Option<f64>,
    pub true_v: Option<f64>,
    pub true_width: Option<f64>,
    pub true_height: Option<f64>,
    /// Distance between the tracked and true box centers (px).
    pub center_error: Option<f64>,
    pub scale: f64,
    pub true_scale: Option<f64>,
    pub s2d: Option<f64>,
    pub s3d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CameraRecord {
    pub frame: usize,
    pub stamp: f64,
    pub u: f64,
    pub v: f64,
    pub pce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SonarRecord {
    pub index: usize,
    pub stamp: f64,
    pub u1: Option<f64>,
    pub u2: Option<f64>,
    pub u3: Option<f64>,
    pub u4: Option<f64>,
    pub x_u: Option<f64>,
    pub y_u: Option<f64>,
    pub var_x: Option<f64>,
    pub var_y: Option<f64>,
    pub published: bool,
}

/// Filter estimate at a camera frame stamp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSample {
    pub mode: Mode,
    pub frame: usize,
    pub stamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub true_x: Option<f64>,
    pub true_y: Option<f64>,
    pub true_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    pub mode: Mode,
    /// Scored at applied-update instants.
    pub errors: AxisErrors,
    pub updates: Vec<UpdateRecord>,
    pub series: Vec<EstimateSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GatingStats {
    pub frames: usize,
    pub gated: usize,
    pub occluded: usize,
    pub gated_while_occluded: usize,
    pub gated_while_clear: usize,
    pub median_pce_clear: Option<f64>,
    pub median_pce_occluded: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RuntimeStats {
    pub seconds: f64,
    pub frames: usize,
    pub frames_per_second: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    pub modes: Vec<ModeResult>,
    pub frames: Vec<FrameStat>,
    pub trace: Vec<TraceRecord>,
    pub camera: Vec<CameraRecord>,
    pub sonar: Vec<SonarRecord>,
    pub truth: GroundTruthLog,
    pub training: TrainingSet,
    pub gating: GatingStats,
    pub runtime: RuntimeStats,
}

impl RunReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// Mean absolute relative error of the tracked scale over frames with a
    /// known true scale, skipping the initialization frame.
    pub fn scale_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self
            .frames
            .iter()
            .skip(1)
            .filter_map(|f| f.true_scale.map(|s| ((f.scale - s) / s).abs()))
            .collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub modes: Vec<Mode>,
    /// Directory for annotated PNG frames.
    pub dump_frames: Option<PathBuf>,
}

impl RunOptions {
    pub fn all_modes() -> Self {
        Self { modes: Mode::ALL.to_vec(), dump_frames: None }
    }
}

/// The measurement stream shared by every mode, with its side products.
struct FrontEnd {
    initial: TargetState3D,
    models: MeasurementModels,
    measurements: Vec<Measurement>,
    frames: Vec<FrameStat>,
    trace: Vec<TraceRecord>,
    camera: Vec<CameraRecord>,
    sonar: Vec<SonarRecord>,
    training: TrainingSet,
}

pub fn run(scn: &Scenario, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    let started = Instant::now();
    let sim = run_scenario(scn)?;
    info!("simulated {} frames, {} sonar packets", sim.frame_count(), sim.sonar_count());
    let front = front_end(&sim, opts.dump_frames.as_deref())?;

    let mut modes = opts.modes.clone();
    modes.sort();
    modes.dedup();
    let stamps: Vec<(usize, f64)> = front.frames.iter().map(|f| (f.frame, f.stamp)).collect();
    let results = modes
        .iter()
        .map(|&mode| {
            let r = replay(mode, &front, scn, &stamps, &sim.truth)?;
            info!("{mode}: mean abs error x={:.4} y={:.4} z={:.4} ({} samples)", r.errors.x, r.errors.y, r.errors.z, r.errors.samples);
            Ok(r)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let gating = gating_stats(&front.frames);
    let seconds = started.elapsed().as_secs_f64();
    let runtime = RuntimeStats {
        seconds,
        frames: front.frames.len(),
        frames_per_second: front.frames.len() as f64 / seconds.max(1e-9),
    };
    Ok(RunReport {
        scenario: scn.clone(),
        modes: results,
        frames: front.frames,
        trace: front.trace,
        camera: front.camera,
        sonar: front.sonar,
        truth: sim.truth,
        training: front.training,
        gating,
        runtime,
    })
}

fn front_end(sim: &SimRun, dump: Option<&Path>) -> Result<FrontEnd, HarnessError> {
    let scn = &sim.scenario;
    let cal = scn.calibration()?;
    let models = MeasurementModels { calibration: cal.clone() };
    let training = training_set(scn);
    let localizer = SonarLocalizer::train(&training, scn.sonar.kernel(), scn.sonar.grid)?;
    let unit_px = scn.camera_noise_unit_px();
    let initial = TargetState3D::new(sim.truth.samples[0].position, scn.initial_covariance(), 0.0);
    let mut fused = FusionFilter::new(initial.clone(), scn.motion_noise(), models.clone());
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir)?;
    }

    let frame_events: Vec<(usize, usize)> = sim
        .events
        .iter()
        .filter_map(|e| match *e {
            SensorEvent::Frame { index, tick, .. } => Some((index, tick)),
            SensorEvent::Sonar { .. } => None,
        })
        .collect();
    let mut rendered = Vec::new().into_iter();
    let mut next_render = 0;

    let mut tracker: Option<TrackerState> = None;
    let mut out = FrontEnd {
        initial: initial.clone(),
        models,
        measurements: Vec::new(),
        frames: Vec::with_capacity(frame_events.len()),
        trace: Vec::with_capacity(frame_events.len()),
        camera: Vec::new(),
        sonar: Vec::new(),
        training: TrainingSet::default(),
    };

    for event in &sim.events {
        match *event {
            SensorEvent::Sonar { index, stamp, readings, .. } => {
                let mut rec = SonarRecord {
                    index,
                    stamp,
                    u1: readings.map(|r| r[0]),
                    u2: readings.map(|r| r[1]),
                    u3: readings.map(|r| r[2]),
                    u4: readings.map(|r| r[3]),
                    x_u: None,
                    y_u: None,
                    var_x: None,
                    var_y: None,
                    published: false,
                };
                if let Some(r) = readings {
                    match localize(&localizer, stamp, &r) {
                        Ok(m) => {
                            rec.x_u = Some(m.value.x);
                            rec.y_u = Some(m.value.y);
                            rec.var_x = Some(m.noise[(0, 0)]);
                            rec.var_y = Some(m.noise[(1, 1)]);
                            rec.published = true;
                            fused.process(&m)?;
                            out.measurements.push(m);
                        }
                        Err(e) => warn!("sonar packet {index} at t={stamp:.3} dropped: {e}"),
                    }
                }
                out.sonar.push(rec);
            }
            SensorEvent::Frame { index, stamp, .. } => {
                let (image, truth) = match rendered.next() {
                    Some(f) => f,
                    None => {
                        let end = (next_render + RENDER_BATCH).min(frame_events.len());
                        let batch: Vec<(Raster, FrameTruth)> =
                            frame_events[next_render..end].par_iter().map(|&(i, t)| sim.render(i, t)).collect();
                        next_render = end;
                        rendered = batch.into_iter();
                        rendered.next().expect("batch covers the pending frame")
                    }
                };
                let stat = match tracker.as_mut() {
                    None => {
                        let bbox = truth
                            .bbox
                            .ok_or_else(|| TrackerError::InvalidParameter("target not visible in the first frame".into()))?;
                        let t = TrackerState::init(&image, bbox, scn.tracker.params())?;
                        let stat = initial_stat(index, stamp, &t, &truth);
                        tracker = Some(t);
                        stat
                    }
                    Some(t) => {
                        let x_k = fused.predict_to(stamp)?.clone();
                        let r = t.track_frame(&image, Some(&x_k), &scn.person, &cal)?;
                        let mut published = false;
                        if r.pce > 0.0 {
                            match Measurement::camera(stamp, r.measurement.coords, r.pce, unit_px) {
                                Ok(m) => {
                                    fused.process(&m)?;
                                    out.measurements.push(m);
                                    out.camera.push(CameraRecord {
                                        frame: index,
                                        stamp,
                                        u: r.measurement.x,
                                        v: r.measurement.y,
                                        pce: r.pce,
                                    });
                                    published = true;
                                }
                                Err(e) => warn!("frame {index} measurement dropped: {e}"),
                            }
                        }
                        debug!("frame {index}: pce={:.3} gated={} scale={:.3}", r.pce, r.gated, r.bbox.scale);
                        out.trace.push(TraceRecord::new(index, stamp, &r));
                        frame_stat(index, stamp, t, &truth, &r.bbox, r.measurement.coords.into(), r.pce, r.gated, published, r.scale.s2d, r.scale.s3d)
                    }
                };
                if let Some(dir) = dump {
                    let path = dir.join(format!("frame_{index:05}.png"));
                    plot::annotated_frame(&image, &stat_box(&stat), truth.bbox.as_ref()).save(&path)?;
                }
                out.frames.push(stat);
            }
        }
    }
    if let Some(t) = tracker.as_ref() {
        info!("tracker wrote its model {} times over {} frames", t.model_writes(), out.frames.len());
    }
    sort_measurements(&mut out.measurements);
    out.training = training;
    Ok(out)
}

fn localize(localizer: &SonarLocalizer, stamp: f64, r: &[f64; RECEIVERS]) -> Result<Measurement, HarnessError> {
    let est = localizer.estimate(r)?;
    Ok(Measurement::ultrasonic(stamp, &est)?)
}

fn initial_stat(index: usize, stamp: f64, t: &TrackerState, truth: &FrameTruth) -> FrameStat {
    let b = *t.bbox();
    frame_stat(index, stamp, t, truth, &b, [b.center.x, b.center.y], 1.0, false, false, None, None)
}

#[allow(clippy::too_many_arguments)]
fn frame_stat(
    frame: usize,
    stamp: f64,
    t: &TrackerState,
    truth: &FrameTruth,
    bbox: &BoundingBox,
    meas: [f64; 2],
    pce: f64,
    gated: bool,
    published: bool,
    s2d: Option<f64>,
    s3d: Option<f64>,
) -> FrameStat {
    let tb = truth.bbox;
    FrameStat {
        frame,
        stamp,
        occluded: truth.occluded,
        fully_covered: truth.fully_covered,
        in_view: truth.in_view,
        pce,
        gated,
        model_writes: t.model_writes(),
        published,
        meas_u: meas[0],
        meas_v: meas[1],
        box_u: bbox.center.x,
        box_v: bbox.center.y,
        box_width: bbox.width,
        box_height: bbox.height,
        true_u: tb.map(|b| b.center.x),
        true_v: tb.map(|b| b.center.y),
        true_width: tb.map(|b| b.width),
        true_height: tb.map(|b| b.height),
        center_error: tb.map(|b| (b.center - bbox.center).norm()),
        scale: bbox.scale,
        true_scale: tb.map(|b| b.height / t.initial_height()),
        s2d,
        s3d,
    }
}

fn stat_box(s: &FrameStat) -> BoundingBox {
    BoundingBox { center: nalgebra::Point2::new(s.box_u, s.box_v), width: s.box_width, height: s.box_height, scale: s.scale }
}

fn replay(
    mode: Mode,
    front: &FrontEnd,
    scn: &Scenario,
    frame_stamps: &[(usize, f64)],
    truth: &GroundTruthLog,
) -> Result<ModeResult, HarnessError> {
    let mut filter = FusionFilter::new(front.initial.clone(), scn.motion_noise(), front.models.clone());
    let mut updates = Vec::new();
    let mut applied = Vec::new();
    let mut series = Vec::with_capacity(frame_stamps.len());
    let ms = &front.measurements;
    let mut next = 0;
    let mut consume = |filter: &mut FusionFilter, m: &Measurement| -> Result<(), HarnessError> {
        if mode.accepts(m.kind) {
            let rec = filter.process(m)?;
            if rec.applied {
                applied.push((rec.stamp, Vector3::new(rec.x, rec.y, rec.z)));
            }
            updates.push(rec);
        }
        Ok(())
    };
    for &(frame, stamp) in frame_stamps {
        while next < ms.len() && ms[next].stamp <= stamp {
            consume(&mut filter, &ms[next])?;
            next += 1;
        }
        let x = filter.state().x;
        let t = truth.at(stamp).map(|s| s.position);
        series.push(EstimateSample {
            mode,
            frame,
            stamp,
            x: x.x,
            y: x.y,
            z: x.z,
            true_x: t.map(|p| p.x),
            true_y: t.map(|p| p.y),
            true_z: t.map(|p| p.z),
        });
    }
    for m in &ms[next..] {
        consume(&mut filter, m)?;
    }
    let errors = compute_errors(&applied, truth)?;
    Ok(ModeResult { mode, errors, updates, series })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Gating counts and PCE medians; the initialization frame is excluded.
pub fn gating_stats(frames: &[FrameStat]) -> GatingStats {
    let tracked = frames.iter().skip(1);
    let mut clear: Vec<f64> = tracked.clone().filter(|f| !f.occluded).map(|f| f.pce).collect();
    let mut covered: Vec<f64> = tracked.clone().filter(|f| f.fully_covered).map(|f| f.pce).collect();
    GatingStats {
        frames: frames.len(),
        gated: tracked.clone().filter(|f| f.gated).count(),
        occluded: tracked.clone().filter(|f| f.occluded).count(),
        gated_while_occluded: tracked.clone().filter(|f| f.gated && f.occluded).count(),
        gated_while_clear: tracked.filter(|f| f.gated && !f.occluded).count(),
        median_pce_clear: median(&mut clear),
        median_pce_occluded: median(&mut covered),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trajectory::Pose;
    use crate::sim::TruthSample;

    fn truth(points: &[[f64; 3]]) -> GroundTruthLog {
        GroundTruthLog {
            samples: points
                .iter()
                .enumerate()
                .map(|(i, p)| TruthSample {
                    stamp: i as f64 * 0.04,
                    position: Vector3::from(*p),
                    pose: Pose::new(0.0, 0.0, 0.0),
                    bbox: None,
                    occluded: false,
                })
                .collect(),
            step: 0.04,
        }
    }

    fn stamped(points: &[[f64; 3]]) -> Vec<(f64, Vector3<f64>)> {
        points.iter().enumerate().map(|(i, p)| (i as f64 * 0.04, Vector3::from(*p))).collect()
    }

    #[test]
    fn errors_of_truth_are_zero() {
        let p = [[2.0, 0.1, 0.0], [2.1, 0.0, 0.2], [2.2, -0.1, 0.1]];
        let e = compute_errors(&stamped(&p), &truth(&p)).unwrap();
        assert_eq!((e.x, e.y, e.z, e.samples), (0.0, 0.0, 0.0, 3));
    }

    #[test]
    fn constant_offset_shows_up_on_one_axis() {
        let p = [[2.0, 0.1, 0.0], [2.1, 0.0, 0.2], [2.2, -0.1, 0.1]];
        let shifted: Vec<[f64; 3]> = p.iter().map(|q| [q[0] + 0.1, q[1], q[2]]).collect();
        let e = compute_errors(&stamped(&shifted), &truth(&p)).unwrap();
        assert!((e.x - 0.1).abs() < 1e-12);
        assert_eq!((e.y, e.z), (0.0, 0.0));
    }

    #[test]
    fn hand_computed_three_samples() {
        let t = truth(&[[1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, 0.0, 1.0]]);
        let est = stamped(&[[1.5, 0.0, 0.3], [1.0, 1.0, -0.3], [3.0, 0.6, 1.0]]);
        let e = compute_errors(&est, &t).unwrap();
        assert!((e.x - 0.5).abs() < 1e-12);
        assert!((e.y - 0.2).abs() < 1e-12);
        assert!((e.z - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unmatched_estimates_are_ignored() {
        let t = truth(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let est = vec![(0.0, Vector3::new(1.0, 0.0, 0.0)), (0.5, Vector3::new(9.0, 9.0, 9.0))];
        assert_eq!(compute_errors(&est, &t).unwrap().samples, 1);
        let far = vec![(3.0, Vector3::zeros())];
        assert!(matches!(compute_errors(&far, &t), Err(HarnessError::EmptyOverlap)));
        assert!(matches!(compute_errors(&[], &t), Err(HarnessError::EmptyOverlap)));
    }

    #[test]
    fn modes_parse() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!(matches!("lidar".parse::<Mode>(), Err(HarnessError::UnknownMode(s)) if s == "lidar"));
        assert!(Mode::Camera.accepts(MeasurementKind::Camera) && !Mode::Camera.accepts(MeasurementKind::Ultrasonic));
        assert!(Mode::Sonar.accepts(MeasurementKind::Ultrasonic) && !Mode::Sonar.accepts(MeasurementKind::Camera));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn errors_are_permutation_invariant(
                pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..30),
                est in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 30),
                seed in any::<u64>(),
            ) {
                let t = truth(&pts);
                let mut e = stamped(&est[..pts.len()]);
                let a = compute_errors(&e, &t).unwrap();
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                rand::seq::SliceRandom::shuffle(e.as_mut_slice(), &mut rng);
                let b = compute_errors(&e, &t).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a.x >= 0.0 && a.y >= 0.0 && a.z >= 0.0);
            }
        }
    }
}
