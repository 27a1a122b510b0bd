//! Dataset bias, the male-ratio bias of a posterior or of top predictions,
//! amplification and the per-corpus report built from them.

use std::io::Write;

use serde::Serialize;

use crate::corpus::{activity_coverage, ActivityId, Corpus, Exclusion, GenderTag, TrainingStats};
use crate::distribution::InstancePosterior;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Default evaluation margin for violation counting.
pub const DEFAULT_GAMMA_EVAL: f64 = 0.05;

/// Fraction of male labels among the gendered training labels of `activity`.
pub fn dataset_bias(stats: &TrainingStats, activity: &str) -> Result<f64> {
    let counts = stats.get(activity).unwrap_or_default();
    if counts.total() == 0 {
        return Err(Error::UndefinedBias { activity: activity.to_owned() });
    }
    Ok(counts.male as f64 / counts.total() as f64)
}

/// Male and total gendered posterior mass placed on `activity` across the corpus.
pub fn gendered_mass(posteriors: &[InstancePosterior], corpus: &Corpus, activity: ActivityId) -> (f64, f64) {
    let mut male = 0.0;
    let mut total = 0.0;
    for (instance, post) in corpus.instances().iter().zip(posteriors) {
        for (c, &q) in instance.candidates.iter().zip(&post.probs) {
            if c.activity != activity {
                continue;
            }
            match c.gender {
                GenderTag::Male => {
                    male += q;
                    total += q;
                }
                GenderTag::Female => total += q,
                GenderTag::Ungendered => {}
            }
        }
    }
    (male, total)
}

/// Probability that a gendered prediction of `activity` is male, under the
/// posterior distributions.
pub fn bias_in_distribution(posteriors: &[InstancePosterior], corpus: &Corpus, activity: ActivityId) -> Result<f64> {
    let (male, total) = gendered_mass(posteriors, corpus, activity);
    if total <= 0.0 {
        return Err(Error::UndefinedBias { activity: corpus.activity_name(activity).to_owned() });
    }
    Ok(male / total)
}

/// Same ratio with each posterior replaced by the indicator of its MAP
/// candidate. `None` when no instance's MAP candidate is a gendered
/// structure of `activity`.
pub fn bias_in_top_predictions(predictions: &[usize], corpus: &Corpus, activity: ActivityId) -> Option<f64> {
    let mut male = 0u64;
    let mut total = 0u64;
    for (instance, &k) in corpus.instances().iter().zip(predictions) {
        let c = &instance.candidates[k];
        if c.activity != activity {
            continue;
        }
        match c.gender {
            GenderTag::Male => {
                male += 1;
                total += 1;
            }
            GenderTag::Female => total += 1,
            GenderTag::Ungendered => {}
        }
    }
    (total > 0).then(|| male as f64 / total as f64)
}

/// Signed deviation of `bias` from `b_star`, oriented toward the training
/// majority gender. Zero when `b_star` is exactly 0.5.
pub fn amplification(bias: f64, b_star: f64) -> f64 {
    let orientation = if b_star > 0.5 {
        1.0
    } else if b_star < 0.5 {
        -1.0
    } else {
        0.0
    };
    orientation * (bias - b_star)
}

pub fn mean_amplification(amplifications: &[f64]) -> Result<f64> {
    if amplifications.is_empty() {
        return Err(Error::NoConstrainedActivities);
    }
    Ok(amplifications.iter().sum::<f64>() / amplifications.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityBias {
    pub activity: String,
    pub activity_id: ActivityId,
    pub b_star: f64,
    pub bias_dist: f64,
    /// `None` when the activity has no gendered MAP predictions.
    pub bias_top: Option<f64>,
    pub amp_dist: f64,
    pub amp_top: Option<f64>,
    pub violated_dist: bool,
    pub violated_top: bool,
    /// `b_star == 0.5`; amplification is pinned to zero for such activities.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub gamma_eval: f64,
    pub n_instances: usize,
    pub activities: Vec<ActivityBias>,
    pub mean_amp_dist: f64,
    /// Mean over activities with a defined top-prediction bias.
    pub mean_amp_top: Option<f64>,
    pub n_violations_dist: usize,
    pub n_violations_top: usize,
    pub n_top_not_evaluable: usize,
    pub accuracy: Option<f64>,
    pub excluded: Vec<Exclusion>,
}

/// Scatter point for plotting predicted bias against training bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub b_star: f64,
    pub bias_dist: f64,
    pub bias_top: Option<f64>,
}

/// Fraction of instances whose MAP index equals gold; `None` unless every
/// instance has a gold label.
pub fn accuracy(corpus: &Corpus, predictions: &[usize]) -> Option<f64> {
    if !corpus.fully_labelled() {
        return None;
    }
    let hits = corpus.instances().iter().zip(predictions).filter(|(i, &k)| i.gold == Some(k)).count();
    Some(hits as f64 / corpus.len() as f64)
}

pub fn build_report(
    corpus: &Corpus,
    stats: &TrainingStats,
    posteriors: &[InstancePosterior],
    predictions: &[usize],
    gamma_eval: f64,
) -> Result<BiasReport> {
    if posteriors.len() != corpus.len() || predictions.len() != corpus.len() {
        return Err(Error::Validation("posteriors or predictions not aligned with corpus".into()));
    }
    let coverage = activity_coverage(stats, corpus);
    if coverage.constrained.is_empty() {
        return Err(Error::NoConstrainedActivities);
    }

    let mut activities = Vec::with_capacity(coverage.constrained.len());
    for &id in &coverage.constrained {
        let name = corpus.activity_name(id);
        let b_star = dataset_bias(stats, name)?;
        let bias_dist = bias_in_distribution(posteriors, corpus, id)?;
        let bias_top = bias_in_top_predictions(predictions, corpus, id);
        let amp_dist = amplification(bias_dist, b_star);
        let amp_top = bias_top.map(|b| amplification(b, b_star));
        activities.push(ActivityBias {
            activity: name.to_owned(),
            activity_id: id,
            b_star,
            bias_dist,
            bias_top,
            amp_dist,
            amp_top,
            violated_dist: amp_dist.abs() > gamma_eval,
            violated_top: amp_top.is_some_and(|a| a.abs() > gamma_eval),
            balanced: b_star == 0.5,
        });
    }

    let dist: Vec<f64> = activities.iter().map(|a| a.amp_dist).collect();
    let top: Vec<f64> = activities.iter().filter_map(|a| a.amp_top).collect();
    Ok(BiasReport {
        schema_version: SCHEMA_VERSION,
        gamma_eval,
        n_instances: corpus.len(),
        mean_amp_dist: mean_amplification(&dist)?,
        mean_amp_top: mean_amplification(&top).ok(),
        n_violations_dist: activities.iter().filter(|a| a.violated_dist).count(),
        n_violations_top: activities.iter().filter(|a| a.violated_top).count(),
        n_top_not_evaluable: activities.len() - top.len(),
        accuracy: accuracy(corpus, predictions),
        excluded: coverage.excluded,
        activities,
    })
}

impl BiasReport {
    pub fn scatter(&self) -> Vec<ScatterPoint> {
        self.activities
            .iter()
            .map(|a| ScatterPoint { b_star: a.b_star, bias_dist: a.bias_dist, bias_top: a.bias_top })
            .collect()
    }

    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut sink, self)?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    /// CSV with header `activity,b_star,bias_dist,bias_top,violated_dist,violated_top`.
    /// A not-evaluable `bias_top` is written as an empty field.
    pub fn write_scatter_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "activity,b_star,bias_dist,bias_top,violated_dist,violated_top")?;
        for a in &self.activities {
            let top = a.bias_top.map(|b| b.to_string()).unwrap_or_default();
            writeln!(
                sink,
                "{},{},{},{},{},{}",
                csv_field(&a.activity),
                a.b_star,
                a.bias_dist,
                top,
                a.violated_dist,
                a.violated_top
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
