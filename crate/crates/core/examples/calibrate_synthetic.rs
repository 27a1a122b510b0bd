//! Calibrates a synthetic corpus with both solver modes and prints the
//! before/after bias summary, writing the output files to a directory.
//!
//! Usage: cargo run --release --example calibrate_synthetic [OUT_DIR]

use std::path::PathBuf;

use fairpost::pipeline::calibrate_corpus;
use fairpost::{SolverConfig, SynthConfig};

fn main() -> fairpost::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let (corpus, stats) = fairpost::synth::generate(&SynthConfig::default())?;
    println!("{} instances, {} activities", corpus.len(), stats.len());

    for (name, config) in [("stochastic", SolverConfig::default()), ("full-batch", SolverConfig::full_batch())] {
        let dir = out.as_ref().map(|d| d.join(name));
        let summary = calibrate_corpus(&corpus, &stats, 0.05, &config, dir.as_deref())?;
        println!("{name}: {} steps, dual objective {:.4}", summary.steps, summary.dual_objective);
        println!("  {summary}");
    }
    Ok(())
}
