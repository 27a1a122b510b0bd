//! Compares the dual solver against the grid-search projection on a tiny
//! synthetic corpus with one constrained activity.

use fairpost::pipeline::oracle_compare;
use fairpost::{OracleConfig, SolverConfig, SynthConfig};

fn main() -> fairpost::Result<()> {
    let config = SynthConfig {
        n_activities: 1,
        instances_per_activity: 6,
        candidates_per_instance: 3,
        bias_range: (0.8, 0.9),
        seed: 3,
        ..SynthConfig::default()
    };
    let (corpus, stats) = fairpost::synth::generate(&config)?;
    let report = oracle_compare(&corpus, &stats, &SolverConfig::full_batch(), &OracleConfig::default())?;
    println!("lambda solver {:.6?}", report.lambda_solver);
    println!("lambda oracle {:.6?}", report.lambda_oracle);
    println!("KL solver {:.8} oracle {:.8}", report.kl_solver, report.kl_oracle);
    println!("max total variation {:.2e}", report.max_total_variation);
    Ok(())
}
