//! File-level commands: report, calibrate, synth and oracle.
//!
//! Every command reads the standard corpus / stats files, writes its
//! outputs into a directory and returns an in-memory summary. Outputs are
//! byte-identical for identical inputs and configuration.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::corpus::{
    load_corpus, load_training_stats, write_corpus, write_training_stats, Corpus, GenderTag, TrainingStats,
};
use crate::distribution::{corpus_posteriors, kl_divergence, map_predictions, max_total_variation, InstancePosterior};
use crate::error::{Error, Result};
use crate::metrics::{build_report, BiasReport, DEFAULT_GAMMA_EVAL, SCHEMA_VERSION};
use crate::oracle::{brute_force_project, check_oracle_size, OracleConfig};
use crate::solver::{calibrate, solve, DualProblem, SolveMode, SolverConfig};
use crate::synth::{generate, SynthConfig};

pub const REPORT_FILE: &str = "report.json";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const REPORT_BEFORE_FILE: &str = "report_before.json";
pub const REPORT_AFTER_FILE: &str = "report_after.json";
pub const SCATTER_BEFORE_FILE: &str = "scatter_before.csv";
pub const SCATTER_AFTER_FILE: &str = "scatter_after.csv";
pub const CHECKPOINT_FILE: &str = "lambda.json";
pub const CALIBRATED_FILE: &str = "calibrated.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const ORACLE_FILE: &str = "oracle.json";

/// Everything `calibrate` needs. Solver defaults are the reproduction
/// hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub stats: PathBuf,
    pub out: PathBuf,
    pub gamma_eval: f64,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, stats: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            corpus: corpus.into(),
            stats: stats.into(),
            out: out.into(),
            gamma_eval: DEFAULT_GAMMA_EVAL,
            solver: SolverConfig::default(),
        }
    }
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(BufReader::new(File::open(path)?))
}

pub fn read_stats(path: &Path) -> Result<TrainingStats> {
    load_training_stats(BufReader::new(File::open(path)?))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_report_pair(report: &BiasReport, dir: &Path, json: &str, csv: &str) -> Result<()> {
    let mut w = create(dir, json)?;
    report.write_json(&mut w)?;
    w.flush()?;
    let mut w = create(dir, csv)?;
    report.write_scatter_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn report_for(
    corpus: &Corpus,
    stats: &TrainingStats,
    posteriors: &[InstancePosterior],
    gamma_eval: f64,
) -> Result<BiasReport> {
    let predictions = map_predictions(posteriors);
    build_report(corpus, stats, posteriors, &predictions, gamma_eval)
}

/// Bias report of the uncalibrated model posteriors.
pub fn cmd_report(corpus_path: &Path, stats_path: &Path, out: &Path, gamma_eval: f64) -> Result<BiasReport> {
    let corpus = read_corpus(corpus_path)?;
    let stats = read_stats(stats_path)?;
    let report = report_for(&corpus, &stats, &corpus_posteriors(&corpus), gamma_eval)?;
    write_report_pair(&report, out, REPORT_FILE, SCATTER_FILE)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary {
    pub before: BiasReport,
    pub after: BiasReport,
    pub lambda: Vec<f64>,
    pub dual_objective: f64,
    pub steps: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

impl fmt::Display for CalibrationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mean_amp_dist {:.4} -> {:.4} | mean_amp_top {} -> {} | violations_dist {} -> {} | violations_top {} -> {} | accuracy {} -> {}",
            self.before.mean_amp_dist,
            self.after.mean_amp_dist,
            opt(self.before.mean_amp_top),
            opt(self.after.mean_amp_top),
            self.before.n_violations_dist,
            self.after.n_violations_dist,
            self.before.n_violations_top,
            self.after.n_violations_top,
            opt(self.before.accuracy),
            opt(self.after.accuracy),
        )
    }
}

/// Solves for `λ*`, calibrates, and writes before/after reports, the
/// checkpoint and the calibrated posteriors.
pub fn cmd_calibrate(config: &RunConfig) -> Result<CalibrationSummary> {
    let corpus = read_corpus(&config.corpus)?;
    let stats = read_stats(&config.stats)?;
    let summary = calibrate_corpus(&corpus, &stats, config.gamma_eval, &config.solver, Some(&config.out))?;
    Ok(summary)
}

/// In-memory calibration pipeline; writes the output files when `out` is set.
pub fn calibrate_corpus(
    corpus: &Corpus,
    stats: &TrainingStats,
    gamma_eval: f64,
    solver: &SolverConfig,
    out: Option<&Path>,
) -> Result<CalibrationSummary> {
    let posteriors = corpus_posteriors(corpus);
    let before = report_for(corpus, stats, &posteriors, gamma_eval)?;
    let cs = ConstraintSet::from_stats(stats, corpus, solver.gamma_solve)?;
    let state = solve(corpus, &posteriors, &cs, solver)?;
    let calibrated = calibrate(corpus, &posteriors, &cs, &state.lambda)?;
    let after = report_for(corpus, stats, &calibrated, gamma_eval)?;
    let dual_objective = DualProblem::new(corpus, &posteriors, &cs).objective(&state.lambda);

    if let Some(dir) = out {
        write_report_pair(&before, dir, REPORT_BEFORE_FILE, SCATTER_BEFORE_FILE)?;
        write_report_pair(&after, dir, REPORT_AFTER_FILE, SCATTER_AFTER_FILE)?;
        write_json(dir, CHECKPOINT_FILE, &state.checkpoint(solver))?;
        let mut w = create(dir, CALIBRATED_FILE)?;
        write_posteriors(corpus, &calibrated, &mut w)?;
        w.flush()?;
    }
    Ok(CalibrationSummary { before, after, lambda: state.lambda, dual_objective, steps: state.step })
}

#[derive(Serialize, Deserialize)]
struct PosteriorLine {
    schema_version: u32,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<usize>,
    candidates: Vec<PosteriorCandidate>,
}

#[derive(Serialize, Deserialize)]
struct PosteriorCandidate {
    activity: String,
    gender: GenderTag,
    prob: f64,
}

/// JSONL mirroring the corpus schema with `prob` in place of `score`.
pub fn write_posteriors<W: Write>(corpus: &Corpus, posteriors: &[InstancePosterior], mut sink: W) -> Result<()> {
    for (inst, post) in corpus.instances().iter().zip(posteriors) {
        let line = PosteriorLine {
            schema_version: SCHEMA_VERSION,
            id: inst.id.clone(),
            gold: inst.gold,
            candidates: inst
                .candidates
                .iter()
                .zip(&post.probs)
                .map(|(c, &prob)| PosteriorCandidate {
                    activity: corpus.activity_name(c.activity).to_owned(),
                    gender: c.gender,
                    prob,
                })
                .collect(),
        };
        serde_json::to_writer(&mut sink, &line)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads posteriors written by [`write_posteriors`], checking them against
/// the corpus they were computed for.
pub fn load_posteriors<R: BufRead>(source: R, corpus: &Corpus) -> Result<Vec<InstancePosterior>> {
    let mut out = Vec::with_capacity(corpus.len());
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PosteriorLine =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno + 1, message: e.to_string() })?;
        let Some(inst) = corpus.instances().get(out.len()) else {
            return Err(Error::Validation("more posterior lines than corpus instances".into()));
        };
        let aligned = inst.id == parsed.id
            && inst.candidates.len() == parsed.candidates.len()
            && inst
                .candidates
                .iter()
                .zip(&parsed.candidates)
                .all(|(c, p)| c.gender == p.gender && corpus.activity_name(c.activity) == p.activity);
        if !aligned {
            return Err(Error::Validation(format!(
                "posterior line {} does not match instance `{}`",
                lineno + 1,
                inst.id
            )));
        }
        out.push(InstancePosterior {
            instance_id: parsed.id,
            probs: parsed.candidates.iter().map(|c| c.prob).collect(),
        });
    }
    if out.len() != corpus.len() {
        return Err(Error::Validation("fewer posterior lines than corpus instances".into()));
    }
    Ok(out)
}

/// Generates a synthetic corpus and writes `corpus.jsonl` and `stats.json`.
pub fn cmd_synth(config: &SynthConfig, out: &Path) -> Result<(Corpus, TrainingStats)> {
    let (corpus, stats) = generate(config)?;
    let mut w = create(out, CORPUS_FILE)?;
    write_corpus(&corpus, &mut w)?;
    w.flush()?;
    let mut w = create(out, STATS_FILE)?;
    write_training_stats(&stats, &mut w)?;
    w.flush()?;
    Ok((corpus, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub gamma_solve: f64,
    pub n_constraints: usize,
    pub kl_solver: f64,
    pub kl_oracle: f64,
    pub max_total_variation: f64,
    pub lambda_solver: Vec<f64>,
    pub lambda_oracle: Vec<f64>,
    pub dual_objective_solver: f64,
    pub dual_objective_oracle: f64,
}

/// Compares a full-batch solve against the grid-search projection.
pub fn oracle_compare(
    corpus: &Corpus,
    stats: &TrainingStats,
    solver: &SolverConfig,
    oracle: &OracleConfig,
) -> Result<OracleReport> {
    let cs = ConstraintSet::from_stats(stats, corpus, solver.gamma_solve)?;
    if cs.n_constraints() == 0 {
        return Err(Error::NoConstrainedActivities);
    }
    check_oracle_size(corpus, &cs)?;
    let posteriors = corpus_posteriors(corpus);
    let full = SolverConfig { mode: SolveMode::FullBatch, ..solver.clone() };
    let state = solve(corpus, &posteriors, &cs, &full)?;
    let ours = calibrate(corpus, &posteriors, &cs, &state.lambda)?;
    let reference = brute_force_project(corpus, &posteriors, &cs, oracle)?;
    Ok(OracleReport {
        schema_version: SCHEMA_VERSION,
        gamma_solve: solver.gamma_solve,
        n_constraints: cs.n_constraints(),
        kl_solver: kl_divergence(&ours, &posteriors)?,
        kl_oracle: kl_divergence(&reference.posteriors, &posteriors)?,
        max_total_variation: max_total_variation(&ours, &reference.posteriors),
        dual_objective_solver: DualProblem::new(corpus, &posteriors, &cs).objective(&state.lambda),
        dual_objective_oracle: reference.objective,
        lambda_solver: state.lambda,
        lambda_oracle: reference.lambda,
    })
}

pub fn cmd_oracle(
    corpus_path: &Path,
    stats_path: &Path,
    out: &Path,
    solver: &SolverConfig,
    oracle: &OracleConfig,
) -> Result<OracleReport> {
    let corpus = read_corpus(corpus_path)?;
    let stats = read_stats(stats_path)?;
    let report = oracle_compare(&corpus, &stats, solver, oracle)?;
    write_json(out, ORACLE_FILE, &report)?;
    Ok(report)
}
