//! Measuring and removing gender-bias amplification in the posteriors of a
//! structured-prediction model.
//!
//! The model is given as per-instance candidate lists with scores. From
//! these the crate computes softmax posteriors, per-activity male-ratio
//! bias against the training label ratio, and amplification. Calibration
//! projects the posteriors onto the set of distributions whose corpus-level
//! bias stays within a margin of the training bias, minimising KL
//! divergence; the projection is solved in the dual with projected
//! adaptive-moment ascent and applied per instance.
//!
//! ```no_run
//! use fairpost::{corpus_posteriors, solve, calibrate, ConstraintSet, SolverConfig};
//! # fn main() -> fairpost::Result<()> {
//! let (corpus, stats) = fairpost::synth::generate(&Default::default())?;
//! let posteriors = corpus_posteriors(&corpus);
//! let cs = ConstraintSet::from_stats(&stats, &corpus, 0.001)?;
//! let state = solve(&corpus, &posteriors, &cs, &SolverConfig::full_batch())?;
//! let calibrated = calibrate(&corpus, &posteriors, &cs, &state.lambda)?;
//! # Ok(()) }
//! ```

pub mod constraints;
pub mod corpus;
pub mod distribution;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod solver;
pub mod synth;

pub use constraints::{
    check_equivalence, corpus_expectation, feature_vector, instance_expectation, ConstraintSet, FeatureValue,
};
pub use corpus::{
    constrained_activities, load_corpus, load_training_stats, ActivityId, CandidateStructure, Corpus, GenderTag,
    Instance, LabelCounts, TrainingStats,
};
pub use distribution::{
    corpus_posteriors, instance_posterior, kl_divergence, map_predict, map_predictions, reweighted_posterior,
    InstancePosterior,
};
pub use error::{Error, Result};
pub use metrics::{
    amplification, bias_in_distribution, bias_in_top_predictions, build_report, dataset_bias, mean_amplification,
    BiasReport,
};
pub use oracle::{brute_force_project, OracleConfig};
pub use solver::{calibrate, dual_gradient, dual_objective, solve, DualState, SolveMode, SolverConfig};
pub use synth::SynthConfig;
