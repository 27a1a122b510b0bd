//! Synthetic corpora with planted training bias and tunable amplification.
//!
//! Every instance has a gold activity `a`. Its latent male probability
//! `π ~ Beta(κ b*_a, κ (1 - b*_a))` has mean `b*_a`; the gold gender is
//! drawn from `π`, so labels follow the training ratio on average. The
//! model's gender log-odds for the pair `(a, M) / (a, W)` are
//! `logit(π) + boost · sgn(b*_a - 0.5)`, which pushes the posterior toward
//! each activity's majority gender. Remaining candidate slots hold
//! distractor activities built the same way, plus an ungendered candidate
//! when the slot count is odd.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{ActivityId, CandidateStructure, Corpus, GenderTag, Instance, LabelCounts, TrainingStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_activities: usize,
    pub instances_per_activity: usize,
    pub candidates_per_instance: usize,
    /// `b*` for each activity is drawn uniformly from this range.
    pub bias_range: (f64, f64),
    /// Log-odds added toward each activity's majority gender.
    pub amplification_boost: f64,
    /// Probability of flipping a gold gender.
    pub gold_noise: f64,
    pub seed: u64,
    /// Beta concentration of the per-instance male probability.
    pub concentration: f64,
    /// Mean score advantage of the gold activity over distractors.
    pub activity_margin: f64,
    /// Standard deviation of activity scores.
    pub activity_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_activities: 50,
            instances_per_activity: 200,
            candidates_per_instance: 6,
            bias_range: (0.15, 0.85),
            amplification_boost: 1.0,
            gold_noise: 0.0,
            seed: 0,
            concentration: 1.5,
            activity_margin: 0.0,
            activity_noise: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bias_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Validation(format!("bias_range ({lo}, {hi}) must be an ordered pair in [0, 1]")));
        }
        if self.n_activities == 0 || self.instances_per_activity == 0 {
            return Err(Error::Validation("n_activities and instances_per_activity must be positive".into()));
        }
        if self.candidates_per_instance < 2 {
            return Err(Error::Validation("candidates_per_instance must be at least 2".into()));
        }
        if !(self.amplification_boost >= 0.0 && self.amplification_boost.is_finite()) {
            return Err(Error::Validation("amplification_boost must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.gold_noise) {
            return Err(Error::Validation("gold_noise must lie in [0, 1]".into()));
        }
        if !(self.concentration > 0.0) || !(self.activity_noise >= 0.0) || !self.activity_margin.is_finite() {
            return Err(Error::Validation("concentration must be positive, activity_noise nonnegative".into()));
        }
        Ok(())
    }
}

fn sign(b_star: f64) -> f64 {
    if b_star > 0.5 {
        1.0
    } else if b_star < 0.5 {
        -1.0
    } else {
        0.0
    }
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

struct Generator<'a> {
    config: &'a SynthConfig,
    b_star: Vec<f64>,
    rng: ChaCha8Rng,
    activity_score: Normal<f64>,
}

impl Generator<'_> {
    fn male_probability(&mut self, activity: usize) -> f64 {
        let b = self.b_star[activity];
        let p = if b <= 0.0 || b >= 1.0 {
            b
        } else {
            let k = self.config.concentration;
            Beta::new(k * b, k * (1.0 - b)).expect("valid beta").sample(&mut self.rng)
        };
        p.clamp(1e-9, 1.0 - 1e-9)
    }

    /// Male and female candidates of `activity` sharing an activity score.
    fn gendered_pair(&mut self, activity: usize, base: f64, male_probability: f64) -> [CandidateStructure; 2] {
        let logit = (male_probability / (1.0 - male_probability)).ln()
            + self.config.amplification_boost * sign(self.b_star[activity]);
        let id = ActivityId(activity);
        [
            CandidateStructure { activity: id, gender: GenderTag::Male, score: base + log_sigmoid(logit) },
            CandidateStructure { activity: id, gender: GenderTag::Female, score: base + log_sigmoid(-logit) },
        ]
    }
}

/// Draws a corpus and matching training stats. Deterministic in `config`.
pub fn generate(config: &SynthConfig) -> Result<(Corpus, TrainingStats)> {
    config.validate()?;
    let n = config.n_activities;
    let per = config.instances_per_activity;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let names: Vec<String> = (0..n).map(|a| format!("activity_{a:03}")).collect();

    let mut stats = TrainingStats::new();
    let mut b_star = Vec::with_capacity(n);
    for name in &names {
        let (lo, hi) = config.bias_range;
        let drawn = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let male = (drawn * per as f64).round() as u64;
        let counts = LabelCounts { male, female: per as u64 - male };
        b_star.push(male as f64 / per as f64);
        stats.insert(name.clone(), counts);
    }

    let mut g = Generator {
        config,
        b_star,
        rng,
        activity_score: Normal::new(0.0, config.activity_noise).expect("valid normal"),
    };
    let pairs = (config.candidates_per_instance - 2) / 2;
    let odd = config.candidates_per_instance % 2 == 1;
    let others_available = n - 1;

    let mut instances = Vec::with_capacity(n * per);
    for a in 0..n {
        for k in 0..per {
            let mut candidates = Vec::with_capacity(config.candidates_per_instance);

            let pi = g.male_probability(a);
            let mut male = g.rng.random_bool(pi);
            if g.rng.random_bool(config.gold_noise) {
                male = !male;
            }
            let base = config.activity_margin + g.activity_score.sample(&mut g.rng);
            let gold_pair = g.gendered_pair(a, base, pi);
            let gold = gold_pair[if male { 0 } else { 1 }];
            candidates.extend(gold_pair);

            let others: Vec<usize> = (0..n).filter(|&o| o != a).collect();
            let chosen: Vec<usize> = others.choose_multiple(&mut g.rng, pairs.min(others_available)).copied().collect();
            for &o in &chosen {
                let p = g.male_probability(o);
                let base = g.activity_score.sample(&mut g.rng);
                candidates.extend(g.gendered_pair(o, base, p));
            }
            // Too few activities for distinct distractor pairs: pad with
            // ungendered structures of the gold activity.
            let missing = 2 * (pairs - chosen.len()) + usize::from(odd);
            for _ in 0..missing {
                let activity = if others_available > 0 { *others.choose(&mut g.rng).expect("nonempty") } else { a };
                candidates.push(CandidateStructure {
                    activity: ActivityId(activity),
                    gender: GenderTag::Ungendered,
                    score: g.activity_score.sample(&mut g.rng),
                });
            }

            candidates.shuffle(&mut g.rng);
            let gold_index = candidates.iter().position(|c| *c == gold).expect("gold candidate present");
            instances.push(Instance { id: format!("syn-{a:03}-{k:05}"), candidates, gold: Some(gold_index) });
        }
    }
    let corpus = Corpus::from_parts(names, instances)?;
    Ok((corpus, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{constrained_activities, write_corpus, write_training_stats};
    use crate::distribution::corpus_posteriors;
    use crate::metrics::{amplification, bias_in_distribution, dataset_bias, mean_amplification};

    fn small(boost: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n_activities: 4,
            instances_per_activity: 1000,
            amplification_boost: boost,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = SynthConfig { bias_range: (0.8, 0.2), ..SynthConfig::default() };
        assert!(generate(&bad).is_err());
        let bad = SynthConfig { candidates_per_instance: 1, ..SynthConfig::default() };
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn planted_bias_is_exact() {
        let config = SynthConfig { instances_per_activity: 37, ..small(1.0, 3) };
        let (corpus, stats) = generate(&config).unwrap();
        for (name, counts) in stats.iter() {
            assert_eq!(counts.total(), 37);
            let b = dataset_bias(&stats, name).unwrap();
            assert_eq!(b, counts.male as f64 / 37.0);
            assert!((0.15 - 1.0 / 74.0..=0.85 + 1.0 / 74.0).contains(&b));
        }
        assert_eq!(corpus.len(), 4 * 37);
        assert_eq!(constrained_activities(&stats, &corpus).len(), 4);
        assert!(corpus.instances().iter().all(|i| i.candidates.len() == 6 && i.gold.is_some()));
    }

    #[test]
    fn zero_boost_reproduces_training_bias() {
        let (corpus, stats) = generate(&small(0.0, 11)).unwrap();
        let post = corpus_posteriors(&corpus);
        for a in constrained_activities(&stats, &corpus) {
            let b = bias_in_distribution(&post, &corpus, a).unwrap();
            let bs = dataset_bias(&stats, corpus.activity_name(a)).unwrap();
            assert!((b - bs).abs() <= 0.02, "{}: {b} vs {bs}", corpus.activity_name(a));
        }
    }

    #[test]
    fn positive_boost_amplifies_male_leaning_activities() {
        let config = SynthConfig { bias_range: (0.6, 0.9), ..small(1.0, 5) };
        let (corpus, stats) = generate(&config).unwrap();
        let post = corpus_posteriors(&corpus);
        for a in constrained_activities(&stats, &corpus) {
            let b = bias_in_distribution(&post, &corpus, a).unwrap();
            let bs = dataset_bias(&stats, corpus.activity_name(a)).unwrap();
            assert!(amplification(b, bs) > 0.0);
        }
    }

    #[test]
    fn amplification_monotone_in_boost() {
        let mut last = f64::NEG_INFINITY;
        for boost in [0.0, 0.25, 0.5, 1.0] {
            let config = SynthConfig { n_activities: 10, instances_per_activity: 200, ..small(boost, 21) };
            let (corpus, stats) = generate(&config).unwrap();
            let post = corpus_posteriors(&corpus);
            let amps: Vec<f64> = constrained_activities(&stats, &corpus)
                .into_iter()
                .map(|a| {
                    let b = bias_in_distribution(&post, &corpus, a).unwrap();
                    amplification(b, dataset_bias(&stats, corpus.activity_name(a)).unwrap())
                })
                .collect();
            let mean = mean_amplification(&amps).unwrap();
            assert!(mean >= last, "boost {boost}: {mean} < {last}");
            last = mean;
        }
    }

    #[test]
    fn deterministic_bytes() {
        let config = SynthConfig { n_activities: 5, instances_per_activity: 20, ..SynthConfig::default() };
        let render = || {
            let (c, s) = generate(&config).unwrap();
            let mut a = Vec::new();
            write_corpus(&c, &mut a).unwrap();
            write_training_stats(&s, &mut a).unwrap();
            a
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn single_activity_and_odd_slots() {
        let config = SynthConfig {
            n_activities: 1,
            instances_per_activity: 10,
            candidates_per_instance: 5,
            ..SynthConfig::default()
        };
        let (corpus, _) = generate(&config).unwrap();
        for inst in corpus.instances() {
            assert_eq!(inst.candidates.len(), 5);
            let gendered = inst.candidates.iter().filter(|c| c.gender.is_gendered()).count();
            assert_eq!(gendered, 2);
        }
    }
}
