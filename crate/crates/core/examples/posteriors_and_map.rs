//! Builds a two-instance corpus by hand, computes softmax posteriors and
//! MAP predictions, then reweights one instance and measures the KL shift.

use fairpost::{
    corpus_posteriors, kl_divergence, map_predictions, reweighted_posterior, CandidateStructure, Corpus, GenderTag,
    Instance,
};

fn main() -> fairpost::Result<()> {
    let mut corpus = Corpus::new();
    let cooking = corpus.intern_activity("cooking");
    let driving = corpus.intern_activity("driving");
    let c = |activity, gender, score| CandidateStructure { activity, gender, score };

    corpus.push_instance(Instance {
        id: "img-1".into(),
        candidates: vec![
            c(cooking, GenderTag::Female, 1.2),
            c(cooking, GenderTag::Male, 0.4),
            c(driving, GenderTag::Male, -0.3),
        ],
        gold: Some(0),
    })?;
    corpus.push_instance(Instance {
        id: "img-2".into(),
        candidates: vec![c(driving, GenderTag::Male, 2.0), c(driving, GenderTag::Female, 1.5)],
        gold: Some(1),
    })?;

    let posteriors = corpus_posteriors(&corpus);
    let predictions = map_predictions(&posteriors);
    for ((inst, post), k) in corpus.instances().iter().zip(&posteriors).zip(&predictions) {
        let probs: Vec<String> = post.probs.iter().map(|p| format!("{p:.3}")).collect();
        println!("{}: p = [{}], MAP candidate {k}", inst.id, probs.join(", "));
    }

    // Penalise the female cooking candidate and see how far the posterior moves.
    let first = &corpus.instances()[0];
    let shifted = reweighted_posterior(first, &posteriors[0], &[1.0, 0.0, 0.0])?;
    let kl = kl_divergence(std::slice::from_ref(&shifted), &posteriors[..1])?;
    println!("after penalty: {:.3?}, KL = {kl:.4}", shifted.probs);
    Ok(())
}
