//! Instances, candidate structures, the activity vocabulary and training
//! label statistics, with the JSONL / JSON loaders that validate them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a corpus' activity vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivityId(pub usize);

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Gender carried by a candidate structure's agent role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenderTag {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "W")]
    Female,
    #[serde(rename = "-")]
    Ungendered,
}

impl GenderTag {
    pub fn is_gendered(self) -> bool {
        !matches!(self, GenderTag::Ungendered)
    }

    /// Swaps Male and Female, leaving Ungendered alone.
    pub fn flipped(self) -> GenderTag {
        match self {
            GenderTag::Male => GenderTag::Female,
            GenderTag::Female => GenderTag::Male,
            GenderTag::Ungendered => GenderTag::Ungendered,
        }
    }
}

/// One scored joint assignment for an instance. `score` is the pre-summed
/// log-potential of the structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateStructure {
    pub activity: ActivityId,
    pub gender: GenderTag,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub candidates: Vec<CandidateStructure>,
    pub gold: Option<usize>,
}

impl Instance {
    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.candidates.iter().map(|c| c.score)
    }
}

/// A validated test corpus: instances plus the activity vocabulary they use.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    instances: Vec<Instance>,
    activities: Vec<String>,
    index: HashMap<String, ActivityId>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, adding it to the vocabulary if absent.
    pub fn intern_activity(&mut self, name: &str) -> ActivityId {
        if let Some(id) = self.index.get(name) {
            return *id;
        }
        let id = ActivityId(self.activities.len());
        self.activities.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    /// Appends an instance after checking every corpus invariant it touches.
    pub fn push_instance(&mut self, instance: Instance) -> Result<()> {
        validate_instance(&instance, self.activities.len())?;
        if self.instances.iter().any(|i| i.id == instance.id) {
            return Err(Error::Validation(format!("duplicate instance id `{}`", instance.id)));
        }
        self.instances.push(instance);
        Ok(())
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.activities
    }

    pub fn activity_name(&self, id: ActivityId) -> &str {
        &self.activities[id.0]
    }

    pub fn activity_id(&self, name: &str) -> Option<ActivityId> {
        self.index.get(name).copied()
    }

    /// True when every instance carries a gold index.
    pub fn fully_labelled(&self) -> bool {
        !self.instances.is_empty() && self.instances.iter().all(|i| i.gold.is_some())
    }

    /// A corpus with the same vocabulary holding only the selected instances.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            activities: self.activities.clone(),
            index: self.index.clone(),
        }
    }

    /// Builds a corpus from already-constructed parts, validating everything.
    pub fn from_parts(activities: Vec<String>, instances: Vec<Instance>) -> Result<Corpus> {
        let mut corpus = Corpus::new();
        for name in &activities {
            if corpus.activity_id(name).is_some() {
                return Err(Error::Validation(format!("duplicate activity `{name}`")));
            }
            corpus.intern_activity(name);
        }
        let mut seen = HashSet::new();
        for instance in &instances {
            validate_instance(instance, corpus.activities.len())?;
            if !seen.insert(instance.id.as_str()) {
                return Err(Error::Validation(format!("duplicate instance id `{}`", instance.id)));
            }
        }
        corpus.instances = instances;
        Ok(corpus)
    }
}

fn validate_instance(instance: &Instance, vocab_len: usize) -> Result<()> {
    if instance.candidates.is_empty() {
        return Err(Error::Validation(format!("instance `{}` has no candidates", instance.id)));
    }
    for (k, c) in instance.candidates.iter().enumerate() {
        if !c.score.is_finite() {
            return Err(Error::Validation(format!("instance `{}` candidate {k} has non-finite score", instance.id)));
        }
        if c.activity.0 >= vocab_len {
            return Err(Error::Validation(format!(
                "instance `{}` candidate {k} references unknown activity {}",
                instance.id, c.activity
            )));
        }
    }
    if let Some(g) = instance.gold {
        if g >= instance.candidates.len() {
            return Err(Error::Validation(format!("instance `{}` gold index {g} out of range", instance.id)));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    #[serde(default)]
    gold: Option<usize>,
    candidates: Vec<RawCandidate>,
}

#[derive(Deserialize)]
struct RawCandidate {
    activity: String,
    gender: GenderTag,
    score: serde_json::Value,
}

#[derive(Serialize)]
struct OutInstance<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold: Option<usize>,
    candidates: Vec<OutCandidate<'a>>,
}

#[derive(Serialize)]
struct OutCandidate<'a> {
    activity: &'a str,
    gender: GenderTag,
    score: f64,
}

fn parse_score(value: &serde_json::Value) -> Option<f64> {
    match value {
        serde_json::Value::Number(n) => n.as_f64(),
        // Non-finite values cannot be JSON numbers; producers write them as strings.
        serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
}

/// Reads a corpus in JSONL form, one instance per line. Blank lines are skipped.
pub fn load_corpus<R: BufRead>(source: R) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for (lineno, line) in source.lines().enumerate() {
        let line_number = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInstance =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_number, message: e.to_string() })?;
        let mut candidates = Vec::with_capacity(raw.candidates.len());
        for (k, rc) in raw.candidates.iter().enumerate() {
            let score = parse_score(&rc.score).ok_or_else(|| Error::Parse {
                line: line_number,
                message: format!("candidate {k}: score is not a number"),
            })?;
            let activity = corpus.intern_activity(&rc.activity);
            candidates.push(CandidateStructure { activity, gender: rc.gender, score });
        }
        corpus.push_instance(Instance { id: raw.id, candidates, gold: raw.gold })?;
    }
    Ok(corpus)
}

/// Writes a corpus in the same JSONL form `load_corpus` reads.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut sink: W) -> Result<()> {
    for instance in corpus.instances() {
        let out = OutInstance {
            id: &instance.id,
            gold: instance.gold,
            candidates: instance
                .candidates
                .iter()
                .map(|c| OutCandidate { activity: corpus.activity_name(c.activity), gender: c.gender, score: c.score })
                .collect(),
        };
        serde_json::to_writer(&mut sink, &out)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Male and female label counts for one activity in the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub male: u64,
    pub female: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.male + self.female
    }
}

/// Per-activity gendered label counts from the training split, keyed by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingStats {
    counts: BTreeMap<String, LabelCounts>,
}

impl TrainingStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, activity: impl Into<String>, counts: LabelCounts) {
        self.counts.insert(activity.into(), counts);
    }

    pub fn get(&self, activity: &str) -> Option<LabelCounts> {
        self.counts.get(activity).copied()
    }

    /// Counts for a corpus activity, zero when the stats file does not list it.
    pub fn counts_for(&self, corpus: &Corpus, activity: ActivityId) -> LabelCounts {
        self.get(corpus.activity_name(activity)).unwrap_or_default()
    }

    pub fn is_constrained(&self, activity: &str) -> bool {
        self.get(activity).is_some_and(|c| c.total() > 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, LabelCounts)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Deserialize)]
struct RawCounts {
    male: i64,
    female: i64,
}

/// Reads training stats: a JSON object mapping activity name to
/// `{"male": int, "female": int}`.
pub fn load_training_stats<R: Read>(source: R) -> Result<TrainingStats> {
    let raw: BTreeMap<String, RawCounts> =
        serde_json::from_reader(source).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    let mut stats = TrainingStats::new();
    for (name, rc) in raw {
        if rc.male < 0 || rc.female < 0 {
            return Err(Error::Validation(format!("activity `{name}` has a negative label count")));
        }
        stats.insert(name, LabelCounts { male: rc.male as u64, female: rc.female as u64 });
    }
    Ok(stats)
}

pub fn write_training_stats<W: Write>(stats: &TrainingStats, mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, &stats.counts)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Why an activity is left out of the constrained set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Stats list the activity with zero gendered labels, or not at all.
    NoGenderedTrainingLabels,
    /// No candidate of the activity in the corpus carries a gender.
    NoGenderedCandidates,
    /// Listed in the stats but never seen in the corpus.
    AbsentFromCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub activity: String,
    pub reason: ExclusionReason,
}

/// The constrained activity set together with every activity left out of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityCoverage {
    pub constrained: Vec<ActivityId>,
    pub excluded: Vec<Exclusion>,
}

/// Activities with a positive gendered training count and at least one
/// gendered candidate in the corpus, ascending by id.
pub fn constrained_activities(stats: &TrainingStats, corpus: &Corpus) -> Vec<ActivityId> {
    activity_coverage(stats, corpus).constrained
}

pub fn activity_coverage(stats: &TrainingStats, corpus: &Corpus) -> ActivityCoverage {
    let mut has_gendered = vec![false; corpus.vocabulary().len()];
    for c in corpus.instances().iter().flat_map(|i| &i.candidates) {
        if c.gender.is_gendered() {
            has_gendered[c.activity.0] = true;
        }
    }
    let mut constrained = Vec::new();
    let mut excluded = Vec::new();
    for (id, name) in corpus.vocabulary().iter().enumerate() {
        if !stats.is_constrained(name) {
            excluded.push(Exclusion { activity: name.clone(), reason: ExclusionReason::NoGenderedTrainingLabels });
        } else if !has_gendered[id] {
            excluded.push(Exclusion { activity: name.clone(), reason: ExclusionReason::NoGenderedCandidates });
        } else {
            constrained.push(ActivityId(id));
        }
    }
    for (name, _) in stats.iter() {
        if corpus.activity_id(name).is_none() {
            excluded.push(Exclusion { activity: name.to_owned(), reason: ExclusionReason::AbsentFromCorpus });
        }
    }
    ActivityCoverage { constrained, excluded }
}
