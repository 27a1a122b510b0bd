//! Runs a short stochastic solve, saves the optimiser state as a
//! checkpoint, then restores it under a longer epoch budget. The resumed
//! run ends exactly where an uninterrupted run would.

use fairpost::solver::{solve_problem, DualProblem, SolverCheckpoint};
use fairpost::{corpus_posteriors, ConstraintSet, DualState, SolverConfig, SynthConfig};

fn main() -> fairpost::Result<()> {
    let (corpus, stats) = fairpost::synth::generate(&SynthConfig { n_activities: 10, ..SynthConfig::default() })?;
    let config = SolverConfig { epochs: 2, ..SolverConfig::default() };
    let cs = ConstraintSet::from_stats(&stats, &corpus, config.gamma_solve)?;
    let posteriors = corpus_posteriors(&corpus);
    let problem = DualProblem::new(&corpus, &posteriors, &cs);

    let first = solve_problem(&problem, &config, DualState::zeros(problem.dimension(), config.initial_lr))?;
    println!("after {} steps: dual objective {:.4}", first.step, problem.objective(&first.lambda));

    let text = serde_json::to_string(&first.checkpoint(&config))?;
    let restored: SolverCheckpoint = serde_json::from_str(&text)?;
    let longer = SolverConfig { epochs: 6, ..config.clone() };
    let resumed = solve_problem(&problem, &longer, DualState::from_checkpoint(&restored, &longer)?)?;
    println!("resumed to {} steps: dual objective {:.4}", resumed.step, problem.objective(&resumed.lambda));

    let straight = solve_problem(&problem, &longer, DualState::zeros(problem.dimension(), longer.initial_lr))?;
    println!("uninterrupted run matches: {}", straight == resumed);

    // A checkpoint only loads under the config that wrote it.
    let other = SolverConfig { seed: 1, ..config };
    println!("load under another config: {:?}", DualState::from_checkpoint(&restored, &other).err());
    Ok(())
}
