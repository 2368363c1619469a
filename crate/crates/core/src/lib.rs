//! Person following with a camera tracker and an ultrasonic array fused by
//! an extended Kalman filter, plus the simulator and evaluation harness
//! used to exercise them.

pub mod camera;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod raster;
pub mod sim;
pub mod sonar;
pub mod tracker;
