//! Shows the constraint feature vectors of each candidate and checks that
//! the expectation form of each constraint agrees with the ratio form.

use fairpost::{
    check_equivalence, corpus_posteriors, feature_vector, CandidateStructure, ConstraintSet, Corpus, GenderTag,
    Instance, LabelCounts, TrainingStats,
};

fn main() -> fairpost::Result<()> {
    let mut corpus = Corpus::new();
    let v = corpus.intern_activity("shopping");
    let c = |gender, score| CandidateStructure { activity: v, gender, score };
    corpus.push_instance(Instance {
        id: "a".into(),
        candidates: vec![c(GenderTag::Male, 0.2), c(GenderTag::Female, 1.1), c(GenderTag::Ungendered, 0.0)],
        gold: None,
    })?;
    corpus.push_instance(Instance {
        id: "b".into(),
        candidates: vec![c(GenderTag::Female, 0.9), c(GenderTag::Male, -0.4)],
        gold: None,
    })?;

    let mut stats = TrainingStats::new();
    stats.insert("shopping", LabelCounts { male: 30, female: 70 });
    let cs = ConstraintSet::from_stats(&stats, &corpus, 0.05)?;

    for inst in corpus.instances() {
        for cand in &inst.candidates {
            let f: Vec<String> = feature_vector(cand, &cs).entries().map(|(i, x)| format!("φ[{i}]={x:+.2}")).collect();
            println!("{} {:?}: {}", inst.id, cand.gender, if f.is_empty() { "zero".into() } else { f.join(" ") });
        }
    }

    let posteriors = corpus_posteriors(&corpus);
    let check = check_equivalence(&corpus, &posteriors, &cs, 0)?;
    println!(
        "E[φ] = {:.4?}, ratio residuals = {:.4?}, forms agree: {:?}, satisfied: {:?}",
        check.expectation,
        check.residual,
        check.agrees,
        check.satisfied()
    );
    Ok(())
}
