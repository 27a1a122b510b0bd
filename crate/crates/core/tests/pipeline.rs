mod common;

use std::fs::{self, File};
use std::io::{BufReader, Cursor};
use std::path::Path;
use std::process::Command;

use fairpost::corpus::{write_corpus, write_training_stats};
use fairpost::pipeline::{
    calibrate_corpus, cmd_calibrate, cmd_oracle, cmd_report, cmd_synth, load_posteriors, read_corpus, read_stats,
    RunConfig, CALIBRATED_FILE, CHECKPOINT_FILE, CORPUS_FILE, ORACLE_FILE, REPORT_AFTER_FILE, REPORT_BEFORE_FILE,
    REPORT_FILE, SCATTER_FILE, STATS_FILE,
};
use fairpost::solver::SolverCheckpoint;
use fairpost::{
    build_report, corpus_posteriors, load_corpus, map_predictions, Error, LabelCounts, OracleConfig, SolverConfig,
    SynthConfig, TrainingStats,
};
use proptest::prelude::*;
use serde_json::Value;

fn small_synth() -> SynthConfig {
    SynthConfig { n_activities: 6, instances_per_activity: 60, ..SynthConfig::default() }
}

fn write_inputs(dir: &Path, r: &common::RandomCorpus) {
    write_corpus(&r.corpus, File::create(dir.join(CORPUS_FILE)).unwrap()).unwrap();
    write_training_stats(&r.stats, File::create(dir.join(STATS_FILE)).unwrap()).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn report_writes_versioned_json_and_scatter() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_synth(), dir.path()).unwrap();
    let out = dir.path().join("out");
    let report = cmd_report(&dir.path().join(CORPUS_FILE), &dir.path().join(STATS_FILE), &out, 0.05).unwrap();
    let v = json(&out.join(REPORT_FILE));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["activities"].as_array().unwrap().len(), report.activities.len());
    let csv = fs::read_to_string(out.join(SCATTER_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("activity,b_star,bias_dist,bias_top,violated_dist,violated_top"));
    assert_eq!(lines.count(), report.activities.len());
}

#[test]
fn calibrate_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_synth(), dir.path()).unwrap();
    let out = dir.path().join("cal");
    let config = RunConfig::new(dir.path().join(CORPUS_FILE), dir.path().join(STATS_FILE), &out);
    let summary = cmd_calibrate(&config).unwrap();

    for name in [REPORT_BEFORE_FILE, REPORT_AFTER_FILE, CHECKPOINT_FILE] {
        assert_eq!(json(&out.join(name))["schema_version"], 1, "{name}");
    }
    let cp: SolverCheckpoint = serde_json::from_str(&fs::read_to_string(out.join(CHECKPOINT_FILE)).unwrap()).unwrap();
    assert_eq!(cp.lambda, summary.lambda);
    assert_eq!(cp.config_hash, config.solver.hash());

    // Reloaded calibrated posteriors reproduce the after report.
    let corpus = read_corpus(&config.corpus).unwrap();
    let stats = read_stats(&config.stats).unwrap();
    let reader = BufReader::new(File::open(out.join(CALIBRATED_FILE)).unwrap());
    let q = load_posteriors(reader, &corpus).unwrap();
    for line in fs::read_to_string(out.join(CALIBRATED_FILE)).unwrap().lines() {
        assert_eq!(serde_json::from_str::<Value>(line).unwrap()["schema_version"], 1);
    }
    let after = build_report(&corpus, &stats, &q, &map_predictions(&q), config.gamma_eval).unwrap();
    assert_eq!(after, summary.after);
    assert!(summary.after.mean_amp_dist.abs() < summary.before.mean_amp_dist.abs());
}

#[test]
fn unboosted_synthetic_corpus_shows_few_violations() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        n_activities: 20,
        instances_per_activity: 1000,
        amplification_boost: 0.0,
        seed: 12,
        ..SynthConfig::default()
    };
    cmd_synth(&config, dir.path()).unwrap();
    let report =
        cmd_report(&dir.path().join(CORPUS_FILE), &dir.path().join(STATS_FILE), &dir.path().join("r"), 0.05).unwrap();
    assert!(report.n_violations_dist * 20 <= report.activities.len(), "{}", report.n_violations_dist);
}

#[test]
fn gold_point_masses_show_no_amplification() {
    let config = SynthConfig { n_activities: 20, instances_per_activity: 1000, seed: 13, ..SynthConfig::default() };
    let (corpus, stats) = fairpost::synth::generate(&config).unwrap();
    let gold: Vec<usize> = corpus.instances().iter().map(|i| i.gold.unwrap()).collect();
    let q: Vec<_> = corpus
        .instances()
        .iter()
        .zip(&gold)
        .map(|(i, &k)| fairpost::InstancePosterior::point_mass(i.id.clone(), i.candidates.len(), k))
        .collect();
    let report = build_report(&corpus, &stats, &q, &gold, 0.05).unwrap();
    assert!(report.mean_amp_dist.abs() <= 0.01, "{}", report.mean_amp_dist);
    assert_eq!(report.accuracy, Some(1.0));
}

#[test]
fn feasible_corpus_is_left_alone() {
    let mut c = fairpost::Corpus::new();
    let v = c.intern_activity("cooking");
    let cand = |gender, score| fairpost::CandidateStructure { activity: v, gender, score };
    c.push_instance(fairpost::Instance {
        id: "a".into(),
        candidates: vec![cand(fairpost::GenderTag::Male, 0.0), cand(fairpost::GenderTag::Female, 0.0)],
        gold: Some(0),
    })
    .unwrap();
    let mut stats = TrainingStats::new();
    stats.insert("cooking", LabelCounts { male: 5, female: 5 });
    let s = calibrate_corpus(&c, &stats, 0.05, &SolverConfig::full_batch(), None).unwrap();
    assert_eq!(s.lambda, vec![0.0, 0.0]);
    assert_eq!(s.before, s.after);
}

#[test]
fn no_overlap_with_training_stats_is_an_error() {
    let mut rng = common::rng(3);
    let r = common::random_corpus(&mut rng, 2, 5, 4);
    let mut stats = TrainingStats::new();
    stats.insert("elsewhere", LabelCounts { male: 1, female: 1 });
    let err = calibrate_corpus(&r.corpus, &stats, 0.05, &SolverConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::NoConstrainedActivities));
    assert_eq!(err.to_string(), "no constrained activities");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn oracle_agrees_on_a_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(8);
    let r = common::random_corpus(&mut rng, 1, 5, 5);
    write_inputs(dir.path(), &r);
    let report = cmd_oracle(
        &dir.path().join(CORPUS_FILE),
        &dir.path().join(STATS_FILE),
        dir.path(),
        &SolverConfig::full_batch(),
        &OracleConfig::default(),
    )
    .unwrap();
    assert!(report.max_total_variation <= 1e-4, "{report:?}");
    assert_eq!(json(&dir.path().join(ORACLE_FILE))["schema_version"], 1);
}

#[test]
fn calibration_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_synth(), dir.path()).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        cmd_calibrate(&RunConfig::new(dir.path().join(CORPUS_FILE), dir.path().join(STATS_FILE), &out)).unwrap();
        fs::read(out.join(CALIBRATED_FILE)).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn corpus_round_trips_through_jsonl(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let r = common::random_corpus(&mut rng, 3, 6, 5);
        let mut buf = Vec::new();
        write_corpus(&r.corpus, &mut buf).unwrap();
        let back = load_corpus(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back.len(), r.corpus.len());
        for (a, b) in back.instances().iter().zip(r.corpus.instances()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.candidates.len(), b.candidates.len());
            for (x, y) in a.candidates.iter().zip(&b.candidates) {
                prop_assert_eq!(back.activity_name(x.activity), r.corpus.activity_name(y.activity));
                prop_assert_eq!(x.gender, y.gender);
                prop_assert_eq!(x.score, y.score);
            }
        }
        let p = corpus_posteriors(&back);
        let q = corpus_posteriors(&r.corpus);
        prop_assert_eq!(p, q);
    }
}

fn fairpost() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairpost"))
}

#[test]
fn cli_runs_each_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let status = fairpost()
        .args(["synth", "--n-activities", "4", "--instances-per-activity", "40", "--seed", "5", "--out"])
        .arg(d)
        .status()
        .unwrap();
    assert!(status.success());

    let corpus = d.join(CORPUS_FILE);
    let stats = d.join(STATS_FILE);
    let status = fairpost()
        .arg("report")
        .args(["--corpus".as_ref(), corpus.as_os_str(), "--stats".as_ref(), stats.as_os_str()])
        .args(["--out".as_ref(), d.join("r").as_os_str()])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(d.join("r").join(REPORT_FILE).exists());

    let status = fairpost()
        .args(["--threads", "2", "calibrate", "--mode", "full-batch", "--gamma-solve", "0.002"])
        .args(["--corpus".as_ref(), corpus.as_os_str(), "--stats".as_ref(), stats.as_os_str()])
        .args(["--out".as_ref(), d.join("c").as_os_str()])
        .status()
        .unwrap();
    assert!(status.success());
    let cp: SolverCheckpoint =
        serde_json::from_str(&fs::read_to_string(d.join("c").join(CHECKPOINT_FILE)).unwrap()).unwrap();
    let expected = SolverConfig { gamma_solve: 0.002, ..SolverConfig::full_batch() };
    assert_eq!(cp.config_hash, expected.hash());
}

#[test]
fn cli_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cmd_synth(&SynthConfig { n_activities: 3, instances_per_activity: 30, ..SynthConfig::default() }, d).unwrap();
    let config = d.join("config.json");
    fs::write(&config, r#"{"gamma_eval": 0.1, "solver": {"epochs": 3, "seed": 4}}"#).unwrap();
    let status = fairpost()
        .args(["calibrate", "--seed", "9"])
        .args(["--config".as_ref(), config.as_os_str()])
        .args(["--corpus".as_ref(), d.join(CORPUS_FILE).as_os_str()])
        .args(["--stats".as_ref(), d.join(STATS_FILE).as_os_str()])
        .args(["--out".as_ref(), d.join("c").as_os_str()])
        .status()
        .unwrap();
    assert!(status.success());
    let cp: SolverCheckpoint =
        serde_json::from_str(&fs::read_to_string(d.join("c").join(CHECKPOINT_FILE)).unwrap()).unwrap();
    let expected = SolverConfig { epochs: 3, seed: 9, ..SolverConfig::default() };
    assert_eq!(cp.config_hash, expected.hash());
    assert_eq!(json(&d.join("c").join(REPORT_AFTER_FILE))["gamma_eval"], 0.1);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let status = fairpost().args(["synth", "--bias-min", "0.9", "--bias-max", "0.1", "--out"]).arg(d).status().unwrap();
    assert_eq!(status.code(), Some(1));

    fs::write(d.join("bad.jsonl"), "{not json\n").unwrap();
    fs::write(d.join("stats.json"), "{}").unwrap();
    let status = fairpost()
        .arg("report")
        .args(["--corpus".as_ref(), d.join("bad.jsonl").as_os_str()])
        .args(["--stats".as_ref(), d.join("stats.json").as_os_str()])
        .args(["--out".as_ref(), d.join("o").as_os_str()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    let sub = d.join("big");
    cmd_synth(&SynthConfig { n_activities: 3, instances_per_activity: 5, ..SynthConfig::default() }, &sub).unwrap();
    let status = fairpost()
        .arg("oracle")
        .args(["--corpus".as_ref(), sub.join(CORPUS_FILE).as_os_str()])
        .args(["--stats".as_ref(), sub.join(STATS_FILE).as_os_str()])
        .args(["--out".as_ref(), d.join("o").as_os_str()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn cli_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cmd_synth(&SynthConfig { n_activities: 5, instances_per_activity: 120, ..SynthConfig::default() }, d).unwrap();
    let run = |threads: &str| {
        let out = d.join(format!("t{threads}"));
        let status = fairpost()
            .args(["--threads", threads, "calibrate"])
            .args(["--corpus".as_ref(), d.join(CORPUS_FILE).as_os_str()])
            .args(["--stats".as_ref(), d.join(STATS_FILE).as_os_str()])
            .args(["--out".as_ref(), out.as_os_str()])
            .status()
            .unwrap();
        assert!(status.success());
        [CALIBRATED_FILE, CHECKPOINT_FILE, REPORT_AFTER_FILE].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}
