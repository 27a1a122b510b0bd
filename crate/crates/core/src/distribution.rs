//! Per-instance CRF posteriors, penalty reweighting, MAP prediction and KL.
//!
//! All normalisation happens in log space with max-subtraction; linear
//! probabilities are only materialised in [`InstancePosterior`].

use crate::corpus::{Corpus, Instance};
use crate::error::{Error, Result};

/// Normalised distribution over one instance's candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePosterior {
    pub instance_id: String,
    pub probs: Vec<f64>,
}

impl InstancePosterior {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// A point mass on candidate `k`.
    pub fn point_mass(instance_id: impl Into<String>, len: usize, k: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[k] = 1.0;
        InstancePosterior { instance_id: instance_id.into(), probs }
    }
}

/// `ln Σ exp(x)`, stable for any finite inputs. Returns `-inf` when every
/// input is `-inf` or the slice is empty.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Exponentiates and normalises log-weights. `None` when every weight is zero.
fn normalise_log_weights(logits: &[f64]) -> Option<Vec<f64>> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut w: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

/// Softmax of the candidate scores.
pub fn instance_posterior(instance: &Instance) -> InstancePosterior {
    let scores: Vec<f64> = instance.scores().collect();
    InstancePosterior {
        instance_id: instance.id.clone(),
        probs: normalise_log_weights(&scores).expect("finite scores"),
    }
}

/// Posteriors for every instance of the corpus, in corpus order.
pub fn corpus_posteriors(corpus: &Corpus) -> Vec<InstancePosterior> {
    corpus.instances().iter().map(instance_posterior).collect()
}

/// Reweights `base` by `exp(-penalty[k])` and renormalises.
pub fn reweighted_posterior(
    instance: &Instance,
    base: &InstancePosterior,
    penalty: &[f64],
) -> Result<InstancePosterior> {
    debug_assert_eq!(base.len(), penalty.len());
    let logits: Vec<f64> = base
        .probs
        .iter()
        .zip(penalty)
        .map(|(&p, &pen)| if p > 0.0 { p.ln() - pen } else { f64::NEG_INFINITY })
        .collect();
    let probs = normalise_log_weights(&logits).ok_or_else(|| Error::Degenerate { instance: instance.id.clone() })?;
    Ok(InstancePosterior { instance_id: base.instance_id.clone(), probs })
}

/// Index of the most probable candidate; ties go to the lowest index.
pub fn map_predict(posterior: &InstancePosterior) -> usize {
    let mut best = 0;
    for (k, &p) in posterior.probs.iter().enumerate().skip(1) {
        if p > posterior.probs[best] {
            best = k;
        }
    }
    best
}

pub fn map_predictions(posteriors: &[InstancePosterior]) -> Vec<usize> {
    posteriors.iter().map(map_predict).collect()
}

/// `Σ_i Σ_k q_ik ln(q_ik / p_ik)`, summed in instance order.
pub fn kl_divergence(q: &[InstancePosterior], p: &[InstancePosterior]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::Validation(format!("kl_divergence: {} vs {} instances", q.len(), p.len())));
    }
    let mut total = 0.0;
    for (qi, pi) in q.iter().zip(p) {
        if qi.len() != pi.len() {
            return Err(Error::Validation(format!("kl_divergence: candidate lists differ for `{}`", qi.instance_id)));
        }
        for (k, (&qk, &pk)) in qi.probs.iter().zip(&pi.probs).enumerate() {
            if qk == 0.0 {
                continue;
            }
            if pk == 0.0 {
                return Err(Error::InfiniteDivergence { instance: qi.instance_id.clone(), candidate: k });
            }
            total += qk * (qk / pk).ln();
        }
    }
    // Rounding can leave a tiny negative residue when q == p.
    Ok(total.max(0.0))
}

/// Largest total-variation distance between aligned instance posteriors.
pub fn max_total_variation(a: &[InstancePosterior], b: &[InstancePosterior]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| 0.5 * x.probs.iter().zip(&y.probs).map(|(u, v)| (u - v).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
