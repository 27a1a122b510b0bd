//! Gender-ratio constraint features.
//!
//! Each constrained activity `v` owns two coordinates: `2j` bounds the male
//! ratio from above (`B <= b* + γ`) and `2j + 1` bounds it from below
//! (`B >= b* - γ`). A candidate's feature is nonzero only when it is a
//! gendered structure of a constrained activity:
//!
//! | candidate      | coordinate `2j`   | coordinate `2j+1`  |
//! |----------------|-------------------|--------------------|
//! | `(v, Male)`    | `1 - b* - γ`      | `-1 + b* - γ`      |
//! | `(v, Female)`  | `-b* - γ`         | `b* - γ`           |
//! | otherwise      | 0                 | 0                  |
//!
//! The feasible set is `Σ_i E_q[φ^i] <= 0` componentwise.

use crate::corpus::{
    constrained_activities, ActivityId, CandidateStructure, Corpus, GenderTag, Instance, TrainingStats,
};
use crate::distribution::InstancePosterior;
use crate::error::{Error, Result};
use crate::metrics::{dataset_bias, gendered_mass};

/// Margin used when solving; stricter than the evaluation margin.
pub const DEFAULT_GAMMA_SOLVE: f64 = 0.001;

/// Slack used when comparing the expectation and ratio forms of a constraint.
pub const EQUIVALENCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    activities: Vec<ActivityId>,
    b_star: Vec<f64>,
    gamma: f64,
    // activity id -> position j in `activities`
    slot: Vec<Option<usize>>,
}

impl ConstraintSet {
    pub fn new(activities: Vec<ActivityId>, b_star: Vec<f64>, gamma: f64) -> Result<Self> {
        if activities.len() != b_star.len() {
            return Err(Error::Validation("one b* per constrained activity required".into()));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Validation(format!("margin must be finite and nonnegative, got {gamma}")));
        }
        if let Some(b) = b_star.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::Validation(format!("b* = {b} outside [0, 1]")));
        }
        let len = activities.iter().map(|a| a.0 + 1).max().unwrap_or(0);
        let mut slot = vec![None; len];
        for (j, a) in activities.iter().enumerate() {
            if slot[a.0].replace(j).is_some() {
                return Err(Error::Validation(format!("activity {a} constrained twice")));
            }
        }
        Ok(ConstraintSet { activities, b_star, gamma, slot })
    }

    /// Constraints for every activity in the corpus' constrained set, with
    /// `b*` taken from the training stats.
    pub fn from_stats(stats: &TrainingStats, corpus: &Corpus, gamma: f64) -> Result<Self> {
        let activities = constrained_activities(stats, corpus);
        let b_star =
            activities.iter().map(|&a| dataset_bias(stats, corpus.activity_name(a))).collect::<Result<Vec<_>>>()?;
        Self::new(activities, b_star, gamma)
    }

    pub fn activities(&self) -> &[ActivityId] {
        &self.activities
    }

    pub fn b_star(&self) -> &[f64] {
        &self.b_star
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_constraints(&self) -> usize {
        self.activities.len()
    }

    pub fn dimension(&self) -> usize {
        2 * self.activities.len()
    }

    /// Position `j` of `activity` in the constrained list.
    pub fn slot(&self, activity: ActivityId) -> Option<usize> {
        self.slot.get(activity.0).copied().flatten()
    }
}

/// Sparse constraint feature of one candidate: at most the two coordinates
/// of its activity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureValue {
    pair: Option<(usize, f64, f64)>,
}

impl FeatureValue {
    pub const EMPTY: FeatureValue = FeatureValue { pair: None };

    pub fn is_empty(&self) -> bool {
        self.pair.is_none()
    }

    /// Nonzero coordinates as `(index, value)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> {
        self.pair.into_iter().flat_map(|(j, minus, plus)| [(2 * j, minus), (2 * j + 1, plus)])
    }

    pub fn dot(&self, lambda: &[f64]) -> f64 {
        match self.pair {
            Some((j, minus, plus)) => lambda[2 * j] * minus + lambda[2 * j + 1] * plus,
            None => 0.0,
        }
    }

    /// Adds `weight * φ` into a dense vector.
    pub fn add_scaled_to(&self, weight: f64, dense: &mut [f64]) {
        if let Some((j, minus, plus)) = self.pair {
            dense[2 * j] += weight * minus;
            dense[2 * j + 1] += weight * plus;
        }
    }
}

pub fn feature_vector(candidate: &CandidateStructure, cs: &ConstraintSet) -> FeatureValue {
    let Some(j) = cs.slot(candidate.activity) else {
        return FeatureValue::EMPTY;
    };
    let b = cs.b_star[j];
    let g = cs.gamma;
    match candidate.gender {
        GenderTag::Male => FeatureValue { pair: Some((j, 1.0 - b - g, -1.0 + b - g)) },
        GenderTag::Female => FeatureValue { pair: Some((j, -b - g, b - g)) },
        GenderTag::Ungendered => FeatureValue::EMPTY,
    }
}

/// Feature values for every candidate of every instance. They do not depend
/// on the posterior, so solvers compute them once.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: Vec<Vec<FeatureValue>>,
    dimension: usize,
}

impl FeatureTable {
    pub fn new(corpus: &Corpus, cs: &ConstraintSet) -> Self {
        let rows =
            corpus.instances().iter().map(|i| i.candidates.iter().map(|c| feature_vector(c, cs)).collect()).collect();
        FeatureTable { rows, dimension: cs.dimension() }
    }

    pub fn row(&self, instance: usize) -> &[FeatureValue] {
        &self.rows[instance]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

pub fn instance_expectation(instance: &Instance, posterior: &InstancePosterior, cs: &ConstraintSet) -> Vec<f64> {
    let mut out = vec![0.0; cs.dimension()];
    for (c, &q) in instance.candidates.iter().zip(&posterior.probs) {
        feature_vector(c, cs).add_scaled_to(q, &mut out);
    }
    out
}

/// Sum of instance expectations, accumulated in corpus order.
pub fn corpus_expectation(corpus: &Corpus, posteriors: &[InstancePosterior], cs: &ConstraintSet) -> Vec<f64> {
    let mut out = vec![0.0; cs.dimension()];
    for (instance, post) in corpus.instances().iter().zip(posteriors) {
        for (o, e) in out.iter_mut().zip(instance_expectation(instance, post, cs)) {
            *o += e;
        }
    }
    out
}

/// Both forms of one activity's constraint pair, side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceCheck {
    /// Corpus expectations of coordinates `2j` and `2j+1`.
    pub expectation: [f64; 2],
    /// `B - (b* + γ)` and `(b* - γ) - B`; each side is satisfied when `<= 0`.
    pub residual: [f64; 2],
    pub gendered_mass: f64,
    /// Whether the expectation form and the ratio form agree, per side.
    pub agrees: [bool; 2],
}

impl EquivalenceCheck {
    pub fn minus_ok(&self) -> bool {
        self.agrees[0]
    }

    pub fn plus_ok(&self) -> bool {
        self.agrees[1]
    }

    /// Whether the expectation form of each side holds, within slack.
    pub fn satisfied(&self) -> [bool; 2] {
        let tol = EQUIVALENCE_SLACK * self.gendered_mass.max(1.0);
        [self.expectation[0] <= tol, self.expectation[1] <= tol]
    }
}

/// Compares `E_q[φ_{v,±}] <= 0` against the ratio inequalities on `B(q, v)`
/// for the `j`-th constrained activity.
pub fn check_equivalence(
    corpus: &Corpus,
    posteriors: &[InstancePosterior],
    cs: &ConstraintSet,
    j: usize,
) -> Result<EquivalenceCheck> {
    let activity = *cs.activities.get(j).ok_or_else(|| Error::Validation(format!("no constraint at position {j}")))?;
    let (male, total) = gendered_mass(posteriors, corpus, activity);
    if total <= 0.0 {
        return Err(Error::UndefinedBias { activity: corpus.activity_name(activity).to_owned() });
    }
    let bias = male / total;
    let (b, g) = (cs.b_star[j], cs.gamma);
    let residual = [bias - (b + g), (b - g) - bias];

    let mut expectation = [0.0; 2];
    for (instance, post) in corpus.instances().iter().zip(posteriors) {
        for (c, &q) in instance.candidates.iter().zip(&post.probs) {
            if c.activity != activity {
                continue;
            }
            let f = feature_vector(c, cs);
            for (idx, v) in f.entries() {
                expectation[idx - 2 * j] += q * v;
            }
        }
    }

    let tol = EQUIVALENCE_SLACK * total.max(1.0);
    let agrees = [0, 1].map(|s| {
        // E = T·residual once the ratio's denominator is cleared.
        let cleared = total * residual[s];
        if expectation[s].abs() <= tol || cleared.abs() <= tol {
            (expectation[s] - cleared).abs() <= tol
        } else {
            (expectation[s] > 0.0) == (cleared > 0.0)
        }
    });
    Ok(EquivalenceCheck { expectation, residual, gendered_mass: total, agrees })
}
