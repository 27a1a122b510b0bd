//! Derivative-free reference projection for small problems.
//!
//! Maximises the dual by exhaustive grid search over `[0, λ_max]^d`
//! followed by repeated zooming around the best grid point. It evaluates
//! the objective from the raw feature table on its own and never touches
//! gradients, so it can serve as ground truth for the optimiser.

use crate::constraints::{feature_vector, ConstraintSet, FeatureValue};
use crate::corpus::Corpus;
use crate::distribution::{reweighted_posterior, InstancePosterior};
use crate::error::{Error, Result};

pub const MAX_DIMENSION: usize = 4;
pub const MAX_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Grid points per axis on every pass.
    pub resolution: usize,
    pub lambda_max: f64,
    /// Zoom passes after the initial grid.
    pub refinements: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { resolution: 21, lambda_max: 50.0, refinements: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub posteriors: Vec<InstancePosterior>,
}

/// Refuses problems beyond the size limits with [`Error::SizeRefusal`].
pub fn check_oracle_size(corpus: &Corpus, cs: &ConstraintSet) -> Result<()> {
    if cs.dimension() > MAX_DIMENSION {
        return Err(Error::SizeRefusal(format!(
            "oracle handles at most {} constrained activities, got {}",
            MAX_DIMENSION / 2,
            cs.n_constraints()
        )));
    }
    let total: usize = corpus.instances().iter().map(|i| i.candidates.len()).sum();
    if total > MAX_CANDIDATES {
        return Err(Error::SizeRefusal(format!(
            "oracle handles at most {MAX_CANDIDATES} candidates in total, got {total}"
        )));
    }
    Ok(())
}

struct Table {
    // (probability, feature) per candidate, instance by instance
    rows: Vec<Vec<(f64, FeatureValue)>>,
}

impl Table {
    fn objective(&self, lambda: &[f64]) -> f64 {
        let mut total = 0.0;
        for row in &self.rows {
            // Plain sum with a max shift; rows are tiny.
            let exps: Vec<f64> = row.iter().filter(|(p, _)| *p > 0.0).map(|(p, f)| p.ln() - f.dot(lambda)).collect();
            let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = exps.iter().map(|e| (e - m).exp()).sum();
            total -= m + z.ln();
        }
        total
    }
}

/// Enumerates every point of the axis-aligned grid `lo..=hi` with
/// `resolution` points per axis, returning the best objective found.
fn grid_search(table: &Table, lo: &[f64], hi: &[f64], resolution: usize) -> (Vec<f64>, f64) {
    let d = lo.len();
    let mut idx = vec![0usize; d];
    let mut point = lo.to_vec();
    let mut best = (lo.to_vec(), f64::NEG_INFINITY);
    loop {
        for k in 0..d {
            point[k] =
                if resolution == 1 { lo[k] } else { lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (resolution - 1) as f64 };
        }
        let value = table.objective(&point);
        if value > best.1 {
            best = (point.clone(), value);
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == d {
                return best;
            }
            idx[k] += 1;
            if idx[k] < resolution {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn brute_force_project(
    corpus: &Corpus,
    posteriors: &[InstancePosterior],
    cs: &ConstraintSet,
    config: &OracleConfig,
) -> Result<OracleSolution> {
    check_oracle_size(corpus, cs)?;
    if config.resolution < 3 || !(config.lambda_max > 0.0) {
        return Err(Error::Validation("oracle needs resolution >= 3 and a positive lambda_max".into()));
    }
    let rows = corpus
        .instances()
        .iter()
        .zip(posteriors)
        .map(|(inst, post)| inst.candidates.iter().zip(&post.probs).map(|(c, &p)| (p, feature_vector(c, cs))).collect())
        .collect();
    let table = Table { rows };
    let d = cs.dimension();

    let mut lo = vec![0.0; d];
    let mut hi = vec![config.lambda_max; d];
    let (mut best, mut value) = grid_search(&table, &lo, &hi, config.resolution);
    for _ in 0..config.refinements {
        let cell = (hi[0] - lo[0]) / (config.resolution - 1) as f64;
        if cell < 1e-12 {
            break;
        }
        for k in 0..d {
            lo[k] = (best[k] - 2.0 * cell).max(0.0);
            hi[k] = (best[k] + 2.0 * cell).min(config.lambda_max);
        }
        // Keep the box square so `cell` stays meaningful after clipping.
        let width = (0..d).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        for k in 0..d {
            if lo[k] == 0.0 {
                hi[k] = width.min(config.lambda_max);
            } else {
                lo[k] = (hi[k] - width).max(0.0);
            }
        }
        let (p, v) = grid_search(&table, &lo, &hi, config.resolution);
        if v >= value {
            best = p;
            value = v;
        }
    }

    let posteriors = corpus
        .instances()
        .iter()
        .zip(posteriors)
        .zip(&table.rows)
        .map(|((inst, post), row)| {
            let penalty: Vec<f64> = row.iter().map(|(_, f)| f.dot(&best)).collect();
            reweighted_posterior(inst, post, &penalty)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleSolution { lambda: best, objective: value, posteriors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ActivityId, CandidateStructure, GenderTag, Instance};
    use crate::distribution::corpus_posteriors;
    use approx::assert_abs_diff_eq;

    fn toy(scores: &[(usize, GenderTag, f64)]) -> Corpus {
        let candidates = scores
            .iter()
            .map(|&(a, gender, score)| CandidateStructure { activity: ActivityId(a), gender, score })
            .collect();
        Corpus::from_parts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Instance { id: "i".into(), candidates, gold: None }],
        )
        .unwrap()
    }

    #[test]
    fn feasible_input_is_returned_unchanged() {
        let c = toy(&[(0, GenderTag::Male, 0.0), (0, GenderTag::Female, 0.0)]);
        let p = corpus_posteriors(&c);
        let cs = ConstraintSet::new(vec![ActivityId(0)], vec![0.5], 0.001).unwrap();
        let sol = brute_force_project(&c, &p, &cs, &OracleConfig::default()).unwrap();
        assert_eq!(sol.lambda, vec![0.0, 0.0]);
        assert_eq!(sol.posteriors, p);
    }

    #[test]
    fn finds_boundary_of_violated_toy() {
        let c = toy(&[(0, GenderTag::Male, 0.8f64.ln()), (0, GenderTag::Female, 0.2f64.ln())]);
        let p = corpus_posteriors(&c);
        let cs = ConstraintSet::new(vec![ActivityId(0)], vec![0.5], 0.0).unwrap();
        let sol = brute_force_project(&c, &p, &cs, &OracleConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.posteriors[0].probs[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.lambda[0] - sol.lambda[1], 4f64.ln(), epsilon = 1e-5);
    }

    #[test]
    fn refuses_three_activities() {
        let c = toy(&[(0, GenderTag::Male, 0.0), (1, GenderTag::Male, 0.0), (2, GenderTag::Female, 0.0)]);
        let p = corpus_posteriors(&c);
        let cs = ConstraintSet::new(vec![ActivityId(0), ActivityId(1), ActivityId(2)], vec![0.5; 3], 0.0).unwrap();
        let err = brute_force_project(&c, &p, &cs, &OracleConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SizeRefusal(_)));
        assert_eq!(err.exit_code(), 3);
    }
}
