use std::path::PathBuf;

use fusetrack_core::error::HarnessError;
use fusetrack_core::harness::{self, emit_plots, output, Mode, RunOptions};
use fusetrack_core::sim::Scenario;

fn config(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    Scenario::load(&path).unwrap()
}

fn short(name: &str, duration: f64) -> Scenario {
    let mut s = config(name);
    s.duration = duration;
    s.occlusions.retain(|o| o.end <= duration);
    s
}

#[test]
fn shipped_configs_validate() {
    for name in ["outdoor", "occlusion", "depth_doubling", "noiseless"] {
        config(name).validate().unwrap();
    }
}

#[test]
fn noiseless_fused_run_is_within_five_centimeters() {
    let r = harness::run(&config("noiseless"), &RunOptions { modes: vec![Mode::Fused], dump_frames: None }).unwrap();
    let e = r.mode(Mode::Fused).unwrap().errors;
    assert!(e.x < 0.05 && e.y < 0.05 && e.z < 0.05, "{e:?}");
    assert_eq!(r.gating.gated, 0);
}

#[test]
fn report_files_plots_and_frames_are_written() {
    let scn = short("occlusion", 1.0);
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let r = harness::run(&scn, &RunOptions { modes: Mode::ALL.to_vec(), dump_frames: Some(frames.clone()) }).unwrap();
    let files = harness::write_report(&r, dir.path()).unwrap();
    for name in [output::SUMMARY, output::FRAMES, output::ESTIMATES, output::CAMERA, output::SONAR, output::TRACE, output::TRUTH, output::TRAINING, output::RUNTIME] {
        assert!(files.contains(&dir.path().join(name)), "{name}");
    }
    for m in Mode::ALL {
        assert!(dir.path().join(output::updates_file(m)).is_file());
    }
    let plots = emit_plots(&r, dir.path()).unwrap();
    assert_eq!(plots.len(), 4);
    for p in &plots {
        assert!(std::fs::metadata(p).unwrap().len() > 0);
    }
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), r.frames.len());

    let summary = std::fs::read_to_string(dir.path().join(output::SUMMARY)).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("mode,x,y,z,samples"));
    assert_eq!(lines.count(), 3);
    // series lengths follow the frame log
    for m in &r.modes {
        assert_eq!(m.series.len(), r.frames.len());
    }
    assert_eq!(r.frames.len(), r.truth.samples.len());
}

#[test]
fn plots_are_deterministic() {
    let scn = short("noiseless", 1.0);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = RunOptions { modes: vec![Mode::Fused], dump_frames: None };
    let ra = harness::run(&scn, &opts).unwrap();
    let rb = harness::run(&scn, &opts).unwrap();
    emit_plots(&ra, a.path()).unwrap();
    emit_plots(&rb, b.path()).unwrap();
    for name in ["plot_x.png", "plot_y.png", "plot_z.png", "plot_pce.png"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn modes_share_one_measurement_stream() {
    let scn = short("occlusion", 2.0);
    let fused = harness::run(&scn, &RunOptions { modes: vec![Mode::Fused], dump_frames: None }).unwrap();
    let camera = harness::run(&scn, &RunOptions { modes: vec![Mode::Camera], dump_frames: None }).unwrap();
    assert_eq!(fused.camera, camera.camera);
    assert_eq!(fused.sonar, camera.sonar);
    assert_eq!(fused.trace, camera.trace);
    let cam = camera.mode(Mode::Camera).unwrap();
    assert!(cam.updates.iter().all(|u| u.kind.as_str() == "camera"));
}

#[test]
fn seed_changes_noise_but_not_truth() {
    let a = short("occlusion", 1.0);
    let mut b = a.clone();
    b.seed += 1;
    let opts = RunOptions { modes: vec![Mode::Sonar], dump_frames: None };
    let (ra, rb) = (harness::run(&a, &opts).unwrap(), harness::run(&b, &opts).unwrap());
    assert_eq!(ra.truth.samples, rb.truth.samples);
    assert_ne!(ra.sonar, rb.sonar);
}

#[test]
fn empty_report_has_no_plot_data() {
    let scn = short("noiseless", 0.5);
    let mut r = harness::run(&scn, &RunOptions { modes: vec![Mode::Fused], dump_frames: None }).unwrap();
    r.frames.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_plots(&r, dir.path()), Err(HarnessError::NoData)));
}
