#![allow(dead_code)]

use fairpost::{ActivityId, CandidateStructure, Corpus, GenderTag, Instance, LabelCounts, TrainingStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct RandomCorpus {
    pub corpus: Corpus,
    pub stats: TrainingStats,
}

/// Random corpus over `n_activities` activities with random training
/// counts in `[1, 99]`. Every instance carries at least one ungendered
/// candidate, and draws are repeated until every activity has a male and a
/// female candidate somewhere, so all ratio constraints can be met.
pub fn random_corpus(
    rng: &mut ChaCha8Rng,
    n_activities: usize,
    max_instances: usize,
    max_candidates: usize,
) -> RandomCorpus {
    loop {
        let r = draw(rng, n_activities, max_instances, max_candidates);
        if both_genders_present(&r.corpus) {
            return r;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, n_activities: usize, max_instances: usize, max_candidates: usize) -> RandomCorpus {
    let names: Vec<String> = (0..n_activities).map(|a| format!("v{a}")).collect();
    let n_instances = rng.random_range(1..=max_instances);
    let instances: Vec<Instance> = (0..n_instances)
        .map(|i| {
            let n_cands = rng.random_range(1..=max_candidates);
            let mut candidates: Vec<CandidateStructure> = (0..n_cands)
                .map(|_| CandidateStructure {
                    activity: ActivityId(rng.random_range(0..n_activities)),
                    gender: match rng.random_range(0..3) {
                        0 => GenderTag::Male,
                        1 => GenderTag::Female,
                        _ => GenderTag::Ungendered,
                    },
                    score: rng.random_range(-3.0..3.0),
                })
                .collect();
            if candidates.iter().all(|c| c.gender.is_gendered()) {
                let k = rng.random_range(0..n_cands);
                candidates[k].gender = GenderTag::Ungendered;
            }
            Instance { id: format!("r{i}"), candidates, gold: None }
        })
        .collect();

    let corpus = Corpus::from_parts(names.clone(), instances).unwrap();
    let mut stats = TrainingStats::new();
    for name in names {
        let male = rng.random_range(1..100);
        let female = rng.random_range(1..100);
        stats.insert(name, LabelCounts { male, female });
    }
    RandomCorpus { corpus, stats }
}

/// True when every activity has both a male and a female candidate.
pub fn both_genders_present(corpus: &Corpus) -> bool {
    (0..corpus.vocabulary().len()).all(|a| {
        [GenderTag::Male, GenderTag::Female]
            .iter()
            .all(|&g| corpus.instances().iter().flat_map(|i| &i.candidates).any(|c| c.activity.0 == a && c.gender == g))
    })
}
