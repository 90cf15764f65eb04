//! Runs the full detect, identify and evaluate pipeline into a run directory,
//! the same way the CLI does.
//!
//!     cargo run -p euphemism --example run_pipeline -- [runs_dir]

use std::path::PathBuf;

use euphemism::pipeline::{cmd_detect, cmd_evaluate, cmd_identify, cmd_synth, list_runs, RunConfig, WordSelection};
use euphemism::synth::SynthConfig;

fn main() -> euphemism::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("euphemism-pipeline-example"));
    let paths = cmd_synth(&SynthConfig::default(), &root.join("data"))?;

    let mut cfg = RunConfig::default();
    cfg.apply([
        ("corpus", paths.corpus.to_str().unwrap()),
        ("keywords", paths.keywords.to_str().unwrap()),
        ("truth", paths.truth.to_str().unwrap()),
        ("backend", "count-oracle"),
        ("runs_dir", root.join("runs").to_str().unwrap()),
    ])?;
    cfg.ensure_run_id();

    cmd_detect(&cfg)?;
    cmd_identify(&cfg, &WordSelection::FromDetection(20))?;
    for report in cmd_evaluate(&cfg)? {
        println!("wrote {}", report.display());
    }
    for run in list_runs(&cfg.runs_dir)? {
        println!("{run:?}");
    }
    Ok(())
}
