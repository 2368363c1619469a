//! Target path through timed waypoints (Catmull-Rom, clamped at the ends)
//! and the differential-drive robot that follows it.

use nalgebra::{Vector2, Vector3};

use super::scenario::{RobotConfig, Waypoint};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    points: Vec<Vector3<f64>>,
}

impl Trajectory {
    /// `waypoints` must be non-empty with strictly increasing times.
    pub fn new(waypoints: &[Waypoint]) -> Self {
        Self {
            times: waypoints.iter().map(|w| w.0).collect(),
            points: waypoints.iter().map(|w| Vector3::new(w.1, w.2, w.3)).collect(),
        }
    }

    /// World position at time `t`; held constant outside the waypoint span.
    pub fn position(&self, t: f64) -> Vector3<f64> {
        let n = self.points.len();
        if n == 1 || t <= self.times[0] {
            return self.points[0];
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1];
        }
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = (t - t0) / (t1 - t0);
        let p1 = self.points[i];
        let p2 = self.points[i + 1];
        // tangents from the neighbors, scaled to this segment's duration
        let m1 = if i == 0 { Vector3::zeros() } else { (p2 - self.points[i - 1]) / (t1 - self.times[i - 1]) * (t1 - t0) };
        let m2 = if i + 2 >= n { Vector3::zeros() } else { (self.points[i + 2] - p1) / (self.times[i + 2] - t0) * (t1 - t0) };
        let s2 = s * s;
        let s3 = s2 * s;
        p1 * (2.0 * s3 - 3.0 * s2 + 1.0) + m1 * (s3 - 2.0 * s2 + s) + p2 * (-2.0 * s3 + 3.0 * s2) + m2 * (s3 - s2)
    }
}

/// Planar robot pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Expresses a world point in the robot frame (x forward, y left, z up).
    pub fn world_to_robot(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = Vector2::new(p.x - self.x, p.y - self.y);
        let (s, c) = self.heading.sin_cos();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, p.z)
    }

    /// Exact unicycle integration over `dt` at constant (`v`, `omega`).
    pub fn advance(&self, v: f64, omega: f64, dt: f64) -> Pose {
        if omega.abs() < 1e-12 {
            let (s, c) = self.heading.sin_cos();
            return Pose::new(self.x + v * dt * c, self.y + v * dt * s, self.heading);
        }
        let h1 = self.heading + omega * dt;
        let r = v / omega;
        Pose::new(self.x + r * (h1.sin() - self.heading.sin()), self.y - r * (h1.cos() - self.heading.cos()), h1)
    }
}

/// Proportional follow law on the target's robot-frame position:
/// forward speed from the planar range error, turn rate from the bearing.
pub fn follow_controller(target: &Vector3<f64>, cfg: &RobotConfig) -> (f64, f64) {
    let range = target.x.hypot(target.z);
    let v = (cfg.k_v * (range - cfg.setpoint)).clamp(-cfg.max_v, cfg.max_v);
    let omega = (cfg.k_omega * target.y.atan2(target.x)).clamp(-cfg.max_omega, cfg.max_omega);
    (v, omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RobotConfig {
        RobotConfig { k_v: 0.5, ..RobotConfig::default() }
    }

    #[test]
    fn controller_examples() {
        let c = cfg();
        let (v, w) = follow_controller(&Vector3::new(c.setpoint, 0.0, 0.0), &c);
        assert_eq!((v, w), (0.0, 0.0));
        let (v, _) = follow_controller(&Vector3::new(c.setpoint + 1.0, 0.0, 0.0), &c);
        assert!((v - 0.5).abs() < 1e-12);
        let (_, w) = follow_controller(&Vector3::new(2.0, 0.5, 0.0), &c);
        assert!(w > 0.0, "a target on the left turns the robot left");
        let (v, w) = follow_controller(&Vector3::new(50.0, 80.0, 0.0), &c);
        assert_eq!((v, w), (c.max_v, c.max_omega));
    }

    #[test]
    fn turning_left_brings_a_left_target_ahead() {
        let pose = Pose::new(0.0, 0.0, 0.0);
        let target = Vector3::new(2.0, 1.0, 0.3);
        let before = pose.world_to_robot(&target);
        let after = pose.advance(0.0, 0.5, 0.2).world_to_robot(&target);
        assert!(after.y.abs() < before.y.abs());
        assert_eq!(after.z, 0.3);
    }

    #[test]
    fn arc_integration_matches_small_steps() {
        let p = Pose::new(1.0, -2.0, 0.3);
        let exact = p.advance(0.8, 0.6, 1.0);
        let mut q = p;
        for _ in 0..10_000 {
            q = q.advance(0.8, 0.0, 1e-4);
            q.heading += 0.6 * 1e-4;
        }
        assert!((exact.x - q.x).abs() < 1e-3 && (exact.y - q.y).abs() < 1e-3);
        assert!((exact.heading - q.heading).abs() < 1e-9);
    }

    #[test]
    fn spline_passes_through_waypoints_and_clamps() {
        let w = [Waypoint(0.0, 2.0, 0.0, 0.0), Waypoint(2.0, 3.0, 1.0, 0.2), Waypoint(5.0, 4.0, -1.0, -0.1)];
        let tr = Trajectory::new(&w);
        for p in &w {
            assert!((tr.position(p.0) - Vector3::new(p.1, p.2, p.3)).norm() < 1e-12);
        }
        assert_eq!(tr.position(-1.0), Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(tr.position(9.0), Vector3::new(4.0, -1.0, -0.1));
        // continuity across a knot
        let a = tr.position(2.0 - 1e-7);
        let b = tr.position(2.0 + 1e-7);
        assert!((a - b).norm() < 1e-5);
    }

    #[test]
    fn two_waypoints_give_a_straight_line() {
        let tr = Trajectory::new(&[Waypoint(0.0, 2.0, 0.0, 0.0), Waypoint(10.0, 4.0, 0.0, 0.0)]);
        for k in 0..=10 {
            let p = tr.position(k as f64);
            assert!(p.y == 0.0 && p.z == 0.0);
            assert!(p.x >= 2.0 && p.x <= 4.0);
        }
    }
}
