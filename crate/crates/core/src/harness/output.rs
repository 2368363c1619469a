//! Report files written under the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::HarnessError;
use crate::fusion::write_update_log;
use crate::tracker::write_trace;

use super::{GatingStats, RunReport, RuntimeStats};

pub const SUMMARY: &str = "summary.csv";
pub const FRAMES: &str = "frames.csv";
pub const ESTIMATES: &str = "estimates.csv";
pub const CAMERA: &str = "camera_measurements.csv";
pub const SONAR: &str = "sonar_measurements.csv";
pub const TRACE: &str = "tracker_trace.csv";
pub const TRUTH: &str = "truth.csv";
pub const TRAINING: &str = "gpr_training.csv";
pub const RUNTIME: &str = "runtime.json";

pub fn updates_file(mode: super::Mode) -> String {
    format!("updates_{mode}.csv")
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    mode: &'a str,
    x: f64,
    y: f64,
    z: f64,
    samples: usize,
}

#[derive(Debug, Serialize)]
struct RuntimeFile<'a> {
    scenario: &'a str,
    seed: u64,
    runtime: RuntimeStats,
    gating: GatingStats,
    scale_error: Option<f64>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-mode mean absolute errors, one row per mode.
pub fn write_summary<W: Write>(report: &RunReport, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for m in &report.modes {
        let e = m.errors;
        w.serialize(SummaryRow { mode: m.mode.as_str(), x: e.x, y: e.y, z: e.z, samples: e.samples })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every CSV and the runtime file; returns the paths written.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut done = |name: &str| written.push(dir.join(name));

    write_summary(report, create(dir, SUMMARY)?)?;
    done(SUMMARY);
    write_rows(dir, FRAMES, &report.frames)?;
    done(FRAMES);
    let estimates: Vec<_> = report.modes.iter().flat_map(|m| m.series.iter()).collect();
    write_rows(dir, ESTIMATES, &estimates)?;
    done(ESTIMATES);
    write_rows(dir, CAMERA, &report.camera)?;
    done(CAMERA);
    write_rows(dir, SONAR, &report.sonar)?;
    done(SONAR);
    for m in &report.modes {
        let name = updates_file(m.mode);
        write_update_log(&m.updates, create(dir, &name)?)?;
        done(&name);
    }
    write_trace(&report.trace, create(dir, TRACE)?)?;
    done(TRACE);
    report.truth.write_csv(create(dir, TRUTH)?)?;
    done(TRUTH);
    report.training.write_csv(create(dir, TRAINING)?)?;
    done(TRAINING);

    let mut f = create(dir, RUNTIME)?;
    serde_json::to_writer_pretty(
        &mut f,
        &RuntimeFile {
            scenario: &report.scenario.name,
            seed: report.scenario.seed,
            runtime: report.runtime,
            gating: report.gating,
            scale_error: report.scale_error(),
        },
    )?;
    f.flush()?;
    done(RUNTIME);
    Ok(written)
}
