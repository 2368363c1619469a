use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use log::info;

use fusetrack_core::harness::{self, Mode, RunOptions};
use fusetrack_core::sim::Scenario;

/// Run a tracking scenario and write error reports and plots.
#[derive(Debug, Parser)]
#[command(name = "fusetrack", version)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// fused, camera, sonar or all.
    #[arg(long, default_value = "all")]
    mode: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write annotated frames to <out>/frames/.
    #[arg(long)]
    dump_frames: bool,
}

fn parse_modes(s: &str) -> Result<Vec<Mode>, fusetrack_core::error::HarnessError> {
    if s == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    s.split(',').map(|m| m.trim().parse()).collect()
}

fn run(args: &Args) -> anyhow::Result<()> {
    let modes = parse_modes(&args.mode)?;
    let mut scn = Scenario::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        scn.seed = seed;
    }
    let opts = RunOptions { modes, dump_frames: args.dump_frames.then(|| args.out.join("frames")) };
    let report = harness::run(&scn, &opts).context("running scenario")?;
    let mut files = harness::write_report(&report, &args.out).context("writing reports")?;
    files.extend(harness::emit_plots(&report, &args.out).context("writing plots")?);
    for m in &report.modes {
        println!("{:<7} x={:.4} y={:.4} z={:.4} (n={})", m.mode, m.errors.x, m.errors.y, m.errors.z, m.errors.samples);
    }
    println!(
        "{} frames in {:.1} s ({:.1} frames/s), {} gated",
        report.runtime.frames, report.runtime.seconds, report.runtime.frames_per_second, report.gating.gated
    );
    info!("wrote {} files under {}", files.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FUSETRACK_LOG", "warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
