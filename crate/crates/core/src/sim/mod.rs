//! Deterministic scenario simulation: target path, following robot,
//! rendered camera frames, sonar readings and the ground-truth log.

pub mod render;
pub mod scenario;
pub mod trajectory;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::camera::BoundingBox;
use crate::error::ConfigError;
use crate::raster::Raster;
use crate::sonar::{SonarArrayGeometry, TrainingSet, RECEIVERS};

pub use render::{FrameTruth, Renderer};
pub use scenario::{OcclusionWindow, Scenario, Waypoint};
pub use trajectory::{follow_controller, Pose, Trajectory};

const SONAR_STREAM: u64 = 2;

/// Derives an independent generator seed for (`stream`, `index`) from the
/// scenario seed.
pub fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    mix(mix(mix(seed) ^ stream) ^ index)
}

/// Ground truth at one simulation tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub stamp: f64,
    /// Emitter position in the robot frame.
    pub position: Vector3<f64>,
    pub pose: Pose,
    pub bbox: Option<BoundingBox>,
    pub occluded: bool,
}

/// Ground truth at every tick, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthLog {
    pub samples: Vec<TruthSample>,
    /// Tick length (s).
    pub step: f64,
}

impl GroundTruthLog {
    /// Sample nearest to `t` when within half a tick.
    pub fn at(&self, t: f64) -> Option<&TruthSample> {
        if self.samples.is_empty() || !t.is_finite() {
            return None;
        }
        let i = self.samples.partition_point(|s| s.stamp < t);
        let cands = [i.checked_sub(1), Some(i)];
        cands
            .iter()
            .flatten()
            .filter_map(|&k| self.samples.get(k))
            .filter(|s| (s.stamp - t).abs() <= self.step / 2.0 + 1e-9)
            .min_by(|a, b| (a.stamp - t).abs().total_cmp(&(b.stamp - t).abs()))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        #[derive(Serialize)]
        struct Row {
            stamp: f64,
            x: f64,
            y: f64,
            z: f64,
            robot_x: f64,
            robot_y: f64,
            robot_heading: f64,
            box_u: Option<f64>,
            box_v: Option<f64>,
            box_width: Option<f64>,
            box_height: Option<f64>,
            occluded: bool,
        }
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(Row {
                stamp: s.stamp,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                robot_x: s.pose.x,
                robot_y: s.pose.y,
                robot_heading: s.pose.heading,
                box_u: s.bbox.map(|b| b.center.x),
                box_v: s.bbox.map(|b| b.center.y),
                box_width: s.bbox.map(|b| b.width),
                box_height: s.bbox.map(|b| b.height),
                occluded: s.occluded,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorEvent {
    /// Camera frame `index`; pixels are rendered on demand.
    Frame { index: usize, stamp: f64, tick: usize },
    /// Four readings, or `None` when the target is outside the sonar field.
    Sonar { index: usize, stamp: f64, tick: usize, readings: Option<[f64; RECEIVERS]> },
}

impl SensorEvent {
    pub fn stamp(&self) -> f64 {
        match self {
            SensorEvent::Frame { stamp, .. } | SensorEvent::Sonar { stamp, .. } => *stamp,
        }
    }
}

/// Readings for a target at robot-frame `x`: path length to each receiver
/// plus Gaussian noise, or `None` outside the sonar field.
pub fn simulate_sonar(
    scn: &Scenario,
    x: &Vector3<f64>,
    rng: &mut ChaCha8Rng,
) -> Option<[f64; RECEIVERS]> {
    let g = &scn.sonar.grid;
    let x_u = x.x.hypot(x.z);
    if !(x.x > 0.0 && x_u >= g.x_min && x_u <= g.x_max && x.y >= g.y_min && x.y <= g.y_max) {
        return None;
    }
    let mut readings = scn.sonar.array.ideal_readings(x_u, x.y);
    if scn.sonar.noise_std > 0.0 {
        let n = Normal::new(0.0, scn.sonar.noise_std).expect("finite noise");
        for r in readings.iter_mut() {
            *r += n.sample(rng);
        }
    }
    Some(readings)
}

/// Noise-free readings on the configured training grid.
pub fn training_set(scn: &Scenario) -> TrainingSet {
    let g = &scn.sonar.grid;
    let [nx, ny] = scn.sonar.training_grid;
    let geom: &SonarArrayGeometry = &scn.sonar.array;
    let mut set = TrainingSet::default();
    for i in 0..nx {
        for j in 0..ny {
            let x = g.x_min + (g.x_max - g.x_min) * i as f64 / (nx - 1) as f64;
            let y = g.y_min + (g.y_max - g.y_min) * j as f64 / (ny - 1) as f64;
            set.inputs.push([x, y]);
            set.readings.push(geom.ideal_readings(x, y));
        }
    }
    set
}

/// A simulated run: ground truth plus the ordered sensor event log.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub scenario: Scenario,
    pub truth: GroundTruthLog,
    pub events: Vec<SensorEvent>,
    renderer: Renderer,
}

impl SimRun {
    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    pub fn frame_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, SensorEvent::Frame { .. })).count()
    }

    pub fn sonar_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, SensorEvent::Sonar { .. })).count()
    }

    /// Pixels and truth of the frame recorded at `tick`.
    pub fn render(&self, index: usize, tick: usize) -> (Raster, FrameTruth) {
        let s = &self.truth.samples[tick];
        let occ = self.scenario.occlusions.iter().find(|o| o.active(s.stamp));
        self.renderer.render(index, s.pose.heading, &s.position, occ)
    }
}

/// Steps the world at the faster sensor rate, emitting camera and sonar
/// events at their own rates. Fully determined by the scenario.
pub fn run_scenario(scn: &Scenario) -> Result<SimRun, ConfigError> {
    scn.validate()?;
    let cal = scn.calibration()?;
    let renderer = Renderer::new(cal, scn.person, scn.image.clone(), scn.seed);
    let traj = Trajectory::new(&scn.trajectory);
    let tick_rate = scn.camera_rate.max(scn.sonar_rate);
    let step = 1.0 / tick_rate;
    let (n_frames, n_sonar) = scn.event_counts();
    let mut frame_times: Vec<f64> = (0..n_frames).map(|i| i as f64 / scn.camera_rate).collect();
    let mut sonar_times: Vec<f64> = (0..n_sonar).map(|j| j as f64 / scn.sonar_rate).collect();
    frame_times.reverse();
    sonar_times.reverse();

    let n_ticks = (scn.duration / step - 1e-9).ceil() as usize;
    let mut pose = Pose::new(scn.robot.start[0], scn.robot.start[1], scn.robot.start[2]);
    let mut truth = GroundTruthLog { samples: Vec::with_capacity(n_ticks), step };
    let mut events = Vec::with_capacity(n_frames + n_sonar);
    let (mut fi, mut si) = (0, 0);
    for tick in 0..n_ticks {
        let t = tick as f64 / tick_rate;
        let t_next = (tick + 1) as f64 / tick_rate;
        let position = pose.world_to_robot(&traj.position(t));
        truth.samples.push(TruthSample {
            stamp: t,
            position,
            pose,
            bbox: renderer.true_box(&position),
            occluded: scn.occluded_at(t),
        });
        // events falling in [t, t_next) are observed at this tick's state
        while sonar_times.last().is_some_and(|&s| s < t_next - 1e-12) {
            let stamp = sonar_times.pop().expect("checked non-empty");
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(scn.seed, SONAR_STREAM, si as u64));
            let readings = simulate_sonar(scn, &position, &mut rng);
            events.push(SensorEvent::Sonar { index: si, stamp, tick, readings });
            si += 1;
        }
        while frame_times.last().is_some_and(|&s| s < t_next - 1e-12) {
            let stamp = frame_times.pop().expect("checked non-empty");
            events.push(SensorEvent::Frame { index: fi, stamp, tick });
            fi += 1;
        }
        if scn.robot.follow {
            let (v, omega) = follow_controller(&position, &scn.robot);
            pose = pose.advance(v, omega, step);
        }
    }
    Ok(SimRun { scenario: scn.clone(), truth, events, renderer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sonar::SonarLocalizer;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_json(text).unwrap()
    }

    const WALK: &str = r#"{"seed": 3, "duration": 10,
        "trajectory": [[0, 2.5, 0, 0], [4, 3.5, 0.8, 0.2], [10, 3.0, -0.5, -0.1]]}"#;

    #[test]
    fn default_rates_give_250_frames_and_50_packets() {
        let run = run_scenario(&scenario(WALK)).unwrap();
        assert_eq!(run.frame_count(), 250);
        assert_eq!(run.sonar_count(), 50);
        assert_eq!(run.truth.samples.len(), 250);
        assert!(run.truth.samples.windows(2).all(|w| w[1].stamp > w[0].stamp));
        assert!(run.events.windows(2).all(|w| w[1].stamp() >= w[0].stamp()));
    }

    #[test]
    fn same_seed_same_streams_and_seed_only_changes_noise() {
        let a = run_scenario(&scenario(WALK)).unwrap();
        let b = run_scenario(&scenario(WALK)).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.render(7, 7).0, b.render(7, 7).0);
        let mut s = scenario(WALK);
        s.seed = 4;
        let c = run_scenario(&s).unwrap();
        assert_eq!(a.truth, c.truth);
        assert_ne!(a.events, c.events);
        assert_ne!(a.render(7, 7).0, c.render(7, 7).0);
    }

    #[test]
    fn rendered_box_matches_projected_truth() {
        let run = run_scenario(&scenario(WALK)).unwrap();
        let cal = run.scenario.calibration().unwrap();
        for s in run.truth.samples.iter().step_by(17) {
            let expect = crate::camera::initial_bbox(&s.position, &run.scenario.person, &cal).unwrap();
            let b = s.bbox.unwrap();
            assert!((b.center - expect.center).norm() < 0.5);
            assert!((b.height - expect.height).abs() < 0.5);
        }
    }

    #[test]
    fn symmetric_readings_dead_ahead() {
        let scn = scenario(r#"{"seed": 1, "duration": 1, "trajectory": [[0, 2, 0, 0]], "sonar": {"noise_std": 0}}"#);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = simulate_sonar(&scn, &Vector3::new(2.0, 0.0, 0.0), &mut rng).unwrap();
        assert_eq!(u[0], u[3]);
        assert_eq!(u[1], u[2]);
        assert!(simulate_sonar(&scn, &Vector3::new(9.0, 0.0, 0.0), &mut rng).is_none());
        assert!(simulate_sonar(&scn, &Vector3::new(2.0, 3.0, 0.0), &mut rng).is_none());
    }

    #[test]
    fn noiseless_readings_localize_within_a_cell() {
        let scn = scenario(r#"{"seed": 1, "duration": 1, "trajectory": [[0, 2, 0, 0]], "sonar": {"noise_std": 0}}"#);
        let loc = SonarLocalizer::train(&training_set(&scn), scn.sonar.kernel(), scn.sonar.grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (x, y, z) in [(2.0, 0.3, 0.0), (3.3, -0.7, 0.25), (1.4, 1.1, -0.2)] {
            let p = Vector3::new(x, y, z);
            let u = simulate_sonar(&scn, &p, &mut rng).unwrap();
            let est = loc.estimate(&u).unwrap();
            assert!((est.x_u - p.x.hypot(p.z)).abs() <= 0.05 + 1e-9, "{est:?}");
            assert!((est.y_u - y).abs() <= 0.05 + 1e-9, "{est:?}");
        }
    }

    #[test]
    fn sonar_noise_has_the_configured_spread() {
        let scn = scenario(r#"{"seed": 1, "duration": 1, "trajectory": [[0, 2, 0, 0]], "sonar": {"noise_std": 0.03}}"#);
        let p: Vector3<f64> = Vector3::new(2.5, 0.2, 0.1);
        let ideal = scn.sonar.array.ideal_readings(p.x.hypot(p.z), p.y);
        let mut devs = Vec::new();
        for k in 0..300u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(9, 2, k));
            let u = simulate_sonar(&scn, &p, &mut rng).unwrap();
            devs.extend(u.iter().zip(&ideal).map(|(a, b)| a - b));
        }
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let sd = (devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.03).abs() < 0.003, "sd {sd}");
    }

    #[test]
    fn occlusion_flags_follow_the_windows() {
        let scn = scenario(r#"{"seed": 1, "duration": 4, "trajectory": [[0, 2.5, 0, 0]],
            "occlusions": [{"start": 1, "end": 2}]}"#);
        let run = run_scenario(&scn).unwrap();
        for s in &run.truth.samples {
            assert_eq!(s.occluded, (1.0..2.0).contains(&s.stamp));
        }
        let (_, truth) = run.render(30, 30);
        assert!(truth.occluded && truth.fully_covered);
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, 1, 0), stream_seed(1, 1, 1));
        assert_ne!(stream_seed(1, 1, 0), stream_seed(1, 2, 0));
        assert_ne!(stream_seed(1, 1, 0), stream_seed(2, 1, 0));
    }
}
