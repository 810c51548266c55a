//! Data model for paragraphs and task instances, plus the line-delimited
//! JSON readers and writers for every task schema.
//!
//! Each line of a dataset file is one JSON object carrying a `"schema"`
//! version next to the fields of the instance type, e.g.
//! `{"schema":1,"shuffled":["b","a"],"gold_positions":[1,0]}`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version written to, and required from, the `schema` field of every record.
pub const SCHEMA_VERSION: u64 = 1;

/// Label name used for "no prepositional relation" in the NPE inventory.
pub const NONE_PREPOSITION: &str = "NONE";

/// The 28 NPE relations, `NONE` first.
pub const PREPOSITIONS: [&str; 28] = [
    NONE_PREPOSITION,
    "identity-time/date/measurement",
    "at",
    "near",
    "about",
    "with",
    "outside",
    "during",
    "for",
    "between",
    "member(s) of",
    "in",
    "of",
    "against",
    "under",
    "identity-standard",
    "by",
    "from",
    "before",
    "around",
    "over",
    "into",
    "to",
    "among",
    "after",
    "inside",
    "on",
    "identity-idiomatic",
];

/// The seven task families. The five proxy tasks carry the numeric ids
/// 1-5 used in ablation tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sro,
    Isr,
    Drr,
    Npe,
    Nli,
    Scoring,
    Reasoning,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Sro,
        Task::Isr,
        Task::Drr,
        Task::Npe,
        Task::Nli,
        Task::Scoring,
        Task::Reasoning,
    ];

    pub const PROXIES: [Task; 5] = [Task::Sro, Task::Isr, Task::Drr, Task::Npe, Task::Nli];

    pub fn name(self) -> &'static str {
        match self {
            Task::Sro => "sro",
            Task::Isr => "isr",
            Task::Drr => "drr",
            Task::Npe => "npe",
            Task::Nli => "nli",
            Task::Scoring => "scoring",
            Task::Reasoning => "reasoning",
        }
    }

    /// Numeric id for the proxy tasks (1-SRO .. 5-NLI).
    pub fn proxy_id(self) -> Option<u8> {
        Task::PROXIES
            .iter()
            .position(|&t| t == self)
            .map(|i| i as u8 + 1)
    }

    pub fn from_proxy_id(id: u8) -> Option<Task> {
        Task::PROXIES.get((id as usize).checked_sub(1)?).copied()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Ok(id) = lower.parse::<u8>() {
            return Task::from_proxy_id(id)
                .ok_or_else(|| Error::invalid("task", format!("unknown task id {id}")));
        }
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.name() == lower)
            .ok_or_else(|| Error::invalid("task", format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Clinton,
    Enron,
    Yahoo,
    Yelp,
    Fiction,
    Nonfiction,
    #[default]
    Other,
}

/// An ordered sequence of sentences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paragraph {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub sentences: Vec<String>,
    #[serde(default)]
    pub domain: Domain,
}

impl Paragraph {
    pub fn new(id: impl Into<String>, sentences: Vec<String>) -> Self {
        Paragraph {
            id: id.into(),
            title: None,
            sentences,
            domain: Domain::Other,
        }
    }

    /// Sentences joined by single spaces.
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

/// A shuffled paragraph. `gold_positions[i]` is the index in `shuffled` of
/// the i-th sentence of the original order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SroInstance {
    pub shuffled: Vec<String>,
    pub gold_positions: Vec<usize>,
}

impl SroInstance {
    /// The sentences in their original order.
    pub fn ordered(&self) -> Vec<&str> {
        self.gold_positions
            .iter()
            .map(|&p| self.shuffled[p].as_str())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsrInstance {
    pub sentences: Vec<String>,
    pub irrelevant_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrrInstance {
    pub du1: String,
    pub du2: String,
    pub gold_l2: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_connector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_l1: Option<String>,
}

/// Half-open token span `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span(pub usize, pub usize);

impl Span {
    pub fn start(self) -> usize {
        self.0
    }

    pub fn end(self) -> usize {
        self.1
    }
}

/// `(anchor NP index, complement NP index, preposition)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NpLink(pub usize, pub usize, pub String);

impl NpLink {
    pub fn new(anchor: usize, complement: usize, preposition: impl Into<String>) -> Self {
        NpLink(anchor, complement, preposition.into())
    }

    pub fn anchor(&self) -> usize {
        self.0
    }

    pub fn complement(&self) -> usize {
        self.1
    }

    pub fn preposition(&self) -> &str {
        &self.2
    }
}

/// A document with NP spans and the gold prepositional links between them.
/// Gold links labelled `NONE` are accepted and treated as absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpeInstance {
    pub tokens: Vec<String>,
    pub nps: Vec<Span>,
    pub links: Vec<NpLink>,
}

impl NpeInstance {
    pub fn np_text(&self, np: usize) -> String {
        let Span(s, e) = self.nps[np];
        self.tokens[s..e].join(" ")
    }

    /// Preposition for the ordered pair, `NONE` when unlinked.
    pub fn gold_preposition(&self, anchor: usize, complement: usize) -> &str {
        self.links
            .iter()
            .find(|l| l.0 == anchor && l.1 == complement)
            .map(|l| l.2.as_str())
            .unwrap_or(NONE_PREPOSITION)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliInstance {
    pub premise: String,
    pub hypothesis: String,
    pub gold: NliLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    ThreeWay,
    FiveWay,
}

impl Scale {
    pub fn levels(self) -> u8 {
        match self {
            Scale::ThreeWay => 3,
            Scale::FiveWay => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringInstance {
    pub paragraph: Paragraph,
    pub scale: Scale,
    pub gold_score: u8,
}

/// The three coherence conditions judged in the reasoning task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Cohesion,
    Consistency,
    Relevance,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Cohesion, Condition::Consistency, Condition::Relevance];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Cohesion => "cohesion",
            Condition::Consistency => "consistency",
            Condition::Relevance => "relevance",
        }
    }
}

/// `gold` is `[cohesive, consistent, relevant]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningInstance {
    pub prefix: Vec<String>,
    pub new_sentence: String,
    pub gold: [bool; 3],
}

/// One labelled example of any task.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskInstance {
    Sro(SroInstance),
    Isr(IsrInstance),
    Drr(DrrInstance),
    Npe(NpeInstance),
    Nli(NliInstance),
    Scoring(ScoringInstance),
    Reasoning(ReasoningInstance),
}

impl TaskInstance {
    pub fn task(&self) -> Task {
        match self {
            TaskInstance::Sro(_) => Task::Sro,
            TaskInstance::Isr(_) => Task::Isr,
            TaskInstance::Drr(_) => Task::Drr,
            TaskInstance::Npe(_) => Task::Npe,
            TaskInstance::Nli(_) => Task::Nli,
            TaskInstance::Scoring(_) => Task::Scoring,
            TaskInstance::Reasoning(_) => Task::Reasoning,
        }
    }

    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        match self {
            TaskInstance::Sro(x) => x.validate(),
            TaskInstance::Isr(x) => x.validate(),
            TaskInstance::Drr(x) => x.validate(),
            TaskInstance::Npe(x) => x.validate(),
            TaskInstance::Nli(x) => x.validate(),
            TaskInstance::Scoring(x) => x.validate(),
            TaskInstance::Reasoning(x) => x.validate(),
        }
    }

    /// Serializes to one JSONL line (no trailing newline).
    pub fn to_json_line(&self) -> Result<String> {
        match self {
            TaskInstance::Sro(x) => to_json_line(x),
            TaskInstance::Isr(x) => to_json_line(x),
            TaskInstance::Drr(x) => to_json_line(x),
            TaskInstance::Npe(x) => to_json_line(x),
            TaskInstance::Nli(x) => to_json_line(x),
            TaskInstance::Scoring(x) => to_json_line(x),
            TaskInstance::Reasoning(x) => to_json_line(x),
        }
    }
}

/// A record type with a JSONL schema and invariants checked on load.
pub trait Record: Serialize + DeserializeOwned {
    /// Returns the offending field name and a message on violation.
    fn validate(&self) -> Result<(), (&'static str, String)>;
}

fn check_sentences(field: &'static str, sentences: &[String]) -> Result<(), (&'static str, String)> {
    if sentences.is_empty() {
        return Err((field, "must contain at least one sentence".into()));
    }
    if let Some(i) = sentences.iter().position(|s| s.trim().is_empty()) {
        return Err((field, format!("sentence {i} is empty")));
    }
    Ok(())
}

fn check_text(field: &'static str, text: &str) -> Result<(), (&'static str, String)> {
    if text.trim().is_empty() {
        Err((field, "must not be empty".into()))
    } else {
        Ok(())
    }
}

/// Checks that `positions` is a permutation of `0..positions.len()`.
pub fn is_permutation(positions: &[usize]) -> bool {
    let mut seen = vec![false; positions.len()];
    for &p in positions {
        if p >= seen.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

impl Record for Paragraph {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        check_text("id", &self.id)?;
        check_sentences("sentences", &self.sentences)
    }
}

impl Record for SroInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        check_sentences("shuffled", &self.shuffled)?;
        if self.gold_positions.len() != self.shuffled.len() {
            return Err((
                "gold_positions",
                format!(
                    "length {} does not match {} sentences",
                    self.gold_positions.len(),
                    self.shuffled.len()
                ),
            ));
        }
        if !is_permutation(&self.gold_positions) {
            return Err(("gold_positions", "not a permutation".into()));
        }
        Ok(())
    }
}

impl Record for IsrInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        check_sentences("sentences", &self.sentences)?;
        if self.irrelevant_index >= self.sentences.len() {
            return Err((
                "irrelevant_index",
                format!(
                    "{} out of range for {} sentences",
                    self.irrelevant_index,
                    self.sentences.len()
                ),
            ));
        }
        Ok(())
    }
}

impl Record for DrrInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        check_text("du1", &self.du1)?;
        check_text("du2", &self.du2)?;
        if self.gold_l2.is_empty() {
            return Err(("gold_l2", "empty label set".into()));
        }
        if self.gold_l2.iter().any(|l| l.trim().is_empty()) {
            return Err(("gold_l2", "empty label".into()));
        }
        Ok(())
    }
}

impl Record for NpeInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        for (i, span) in self.nps.iter().enumerate() {
            if span.0 >= span.1 || span.1 > self.tokens.len() {
                return Err((
                    "nps",
                    format!("span {i} [{}, {}) outside {} tokens", span.0, span.1, self.tokens.len()),
                ));
            }
        }
        let mut pairs = HashSet::new();
        for link in &self.links {
            if link.0 >= self.nps.len() || link.1 >= self.nps.len() {
                return Err(("links", format!("NP index out of range in {link:?}")));
            }
            if link.0 == link.1 {
                return Err(("links", format!("anchor equals complement in {link:?}")));
            }
            if !PREPOSITIONS.contains(&link.2.as_str()) {
                return Err(("links", format!("unknown preposition {:?}", link.2)));
            }
            if !pairs.insert((link.0, link.1)) {
                return Err(("links", format!("more than one link for pair ({}, {})", link.0, link.1)));
            }
        }
        Ok(())
    }
}

impl Record for NliInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        check_text("premise", &self.premise)?;
        check_text("hypothesis", &self.hypothesis)
    }
}

impl Record for ScoringInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        self.paragraph.validate().map_err(|(_, m)| ("paragraph", m))?;
        if !(1..=self.scale.levels()).contains(&self.gold_score) {
            return Err((
                "gold_score",
                format!("score out of range: {} not in 1..={}", self.gold_score, self.scale.levels()),
            ));
        }
        Ok(())
    }
}

impl Record for ReasoningInstance {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        check_sentences("prefix", &self.prefix)?;
        check_text("new_sentence", &self.new_sentence)
    }
}

/// Serializes a record as a JSONL line with the schema field first.
pub fn to_json_line<R: Record>(record: &R) -> Result<String> {
    let body = serde_json::to_string(record)?;
    let rest = body.strip_prefix('{').unwrap_or(&body);
    if rest == "}" {
        Ok(format!("{{\"schema\":{SCHEMA_VERSION}}}"))
    } else {
        Ok(format!("{{\"schema\":{SCHEMA_VERSION},{rest}"))
    }
}

/// Parses and validates one JSONL line; `line` is 1-based and only used in errors.
pub fn parse_line<R: Record>(text: &str, line: usize) -> Result<R> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Malformed {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object_mut().ok_or_else(|| Error::Malformed {
        line,
        message: "expected a JSON object".into(),
    })?;
    match obj.remove("schema") {
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(Error::InvalidRecord {
                line,
                field: "schema",
                message: format!("unsupported schema version {other}"),
            })
        }
        None => {
            return Err(Error::InvalidRecord {
                line,
                field: "schema",
                message: "missing".into(),
            })
        }
    }
    let record: R = serde_json::from_value(value).map_err(|e| Error::Malformed {
        line,
        message: e.to_string(),
    })?;
    record
        .validate()
        .map_err(|(field, message)| Error::InvalidRecord { line, field, message })?;
    Ok(record)
}

/// Reads every non-blank line of a JSONL file as `R`, preserving order.
pub fn read_records<R: Record>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_records<'a, R: Record + 'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a R>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", to_json_line(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a paragraph corpus, rejecting duplicate ids.
pub fn load_paragraphs(path: impl AsRef<Path>) -> Result<Vec<Paragraph>> {
    let paragraphs: Vec<Paragraph> = read_records(path)?;
    let mut ids = HashSet::new();
    for (i, p) in paragraphs.iter().enumerate() {
        if !ids.insert(p.id.as_str()) {
            return Err(Error::InvalidRecord {
                line: i + 1,
                field: "id",
                message: format!("duplicate id {:?}", p.id),
            });
        }
    }
    Ok(paragraphs)
}

/// Loads a dataset file of the given task.
pub fn load_dataset(path: impl AsRef<Path>, task: Task) -> Result<Vec<TaskInstance>> {
    let path = path.as_ref();
    Ok(match task {
        Task::Sro => read_records(path)?.into_iter().map(TaskInstance::Sro).collect(),
        Task::Isr => read_records(path)?.into_iter().map(TaskInstance::Isr).collect(),
        Task::Drr => read_records(path)?.into_iter().map(TaskInstance::Drr).collect(),
        Task::Npe => read_records(path)?.into_iter().map(TaskInstance::Npe).collect(),
        Task::Nli => read_records(path)?.into_iter().map(TaskInstance::Nli).collect(),
        Task::Scoring => read_records(path)?.into_iter().map(TaskInstance::Scoring).collect(),
        Task::Reasoning => read_records(path)?.into_iter().map(TaskInstance::Reasoning).collect(),
    })
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[TaskInstance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        writeln!(w, "{}", inst.to_json_line()?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// An ordered label set loaded from a sidecar file (one label per line,
/// blank lines and `#` comments ignored).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInventory {
    labels: Vec<String>,
}

impl LabelInventory {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("labels", "empty label inventory"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.trim().is_empty() || !seen.insert(l.as_str()) {
                return Err(Error::invalid("labels", format!("empty or duplicate label {l:?}")));
            }
        }
        Ok(LabelInventory { labels })
    }

    /// The built-in 28-way NPE inventory.
    pub fn prepositions() -> Self {
        LabelInventory {
            labels: PREPOSITIONS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.labels.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Case-insensitive lookup returning the canonical spelling.
    pub fn find_ignore_case(&self, label: &str) -> Option<&str> {
        let label = label.trim();
        self.labels
            .iter()
            .find(|l| l.eq_ignore_ascii_case(label))
            .map(String::as_str)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Checks every DRR gold label against the inventory.
pub fn check_drr_labels(instances: &[DrrInstance], inventory: &LabelInventory) -> Result<()> {
    for (i, inst) in instances.iter().enumerate() {
        if let Some(bad) = inst.gold_l2.iter().find(|l| inventory.index_of(l).is_none()) {
            return Err(Error::InvalidRecord {
                line: i + 1,
                field: "gold_l2",
                message: format!("label {bad:?} not in inventory"),
            });
        }
    }
    Ok(())
}

/// Deterministic train/dev/test split.
///
/// Split sizes are `round(n * train)`, `round(n * dev)` and the remainder;
/// each split keeps the input's relative order.
pub fn split<T: Clone>(
    dataset: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::Precondition("split fractions must be positive".into()));
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "split fractions must sum to 1, got {}",
            a + b + c
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Precondition("cannot split an empty dataset".into()));
    }
    let n = dataset.len();
    let n_train = ((n as f64) * a).round() as usize;
    let n_dev = (((n as f64) * b).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut part = vec![2u8; n];
    for &i in &idx[..n_train] {
        part[i] = 0;
    }
    for &i in &idx[n_train..n_train + n_dev] {
        part[i] = 1;
    }
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (item, p) in dataset.iter().zip(part) {
        match p {
            0 => out.0.push(item.clone()),
            1 => out.1.push(item.clone()),
            _ => out.2.push(item.clone()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sro_line(positions: &[usize]) -> String {
        let shuffled: Vec<String> = (0..positions.len()).map(|i| format!("s{i}")).collect();
        serde_json::json!({"schema": 1, "shuffled": shuffled, "gold_positions": positions}).to_string()
    }

    #[test]
    fn loads_five_sro_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sro.jsonl");
        let lines: Vec<String> = (0..5).map(|_| sro_line(&[1, 3, 2, 0])).collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let data = load_dataset(&path, Task::Sro).unwrap();
        assert_eq!(data.len(), 5);
        assert!(matches!(&data[0], TaskInstance::Sro(x) if x.gold_positions == vec![1, 3, 2, 0]));
    }

    #[test]
    fn rejects_non_permutation() {
        let err = parse_line::<SroInstance>(&sro_line(&[0, 0, 1]), 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not a permutation"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("gold_positions"), "{msg}");
    }

    #[test]
    fn rejects_score_out_of_range() {
        let line = r#"{"schema":1,"paragraph":{"id":"p","sentences":["a b."]},"scale":"three_way","gold_score":5}"#;
        let err = parse_line::<ScoringInstance>(line, 1).unwrap_err();
        assert!(err.to_string().contains("score out of range"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nli.jsonl");
        std::fs::write(
            &path,
            "{\"schema\":1,\"premise\":\"a\",\"hypothesis\":\"b\",\"gold\":\"neutral\"}\n{oops\n",
        )
        .unwrap();
        let err = load_dataset(&path, Task::Nli).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn schema_version_is_checked() {
        let line = r#"{"schema":2,"premise":"a","hypothesis":"b","gold":"neutral"}"#;
        let err = parse_line::<NliInstance>(line, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { field: "schema", .. }));
    }

    #[test]
    fn npe_invariants() {
        let mut inst = NpeInstance {
            tokens: "Mary of Denmark gives birth".split(' ').map(String::from).collect(),
            nps: vec![Span(0, 1), Span(2, 3), Span(4, 5)],
            links: vec![NpLink::new(2, 1, "in")],
        };
        assert!(inst.validate().is_ok());
        inst.links.push(NpLink::new(2, 1, "of"));
        assert_eq!(inst.validate().unwrap_err().0, "links");
        inst.links = vec![NpLink::new(1, 1, "in")];
        assert!(inst.validate().is_err());
        inst.links = vec![NpLink::new(0, 1, "beneath")];
        assert!(inst.validate().is_err());
        inst.links.clear();
        inst.nps.push(Span(4, 9));
        assert_eq!(inst.validate().unwrap_err().0, "nps");
    }

    #[test]
    fn duplicate_paragraph_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let p = Paragraph::new("x", vec!["One.".into()]);
        write_records(&path, [&p, &p]).unwrap();
        assert!(load_paragraphs(&path).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<u32> = (0..100).collect();
        let (a, b, c) = split(&items, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        assert_eq!(split(&items, (0.8, 0.1, 0.1), 7).unwrap(), (a.clone(), b.clone(), c.clone()));
        let mut all: Vec<u32> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        assert_eq!(all, items);
        assert!(split(&items, (0.5, 0.5, 0.5), 7).is_err());
        assert!(split::<u32>(&[], (0.8, 0.1, 0.1), 7).is_err());
    }

    #[test]
    fn label_inventory_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "# senses\nContingency.Cause\n\nComparison.Contrast\n").unwrap();
        let inv = LabelInventory::load(&path).unwrap();
        assert_eq!(inv.len(), 2);
        assert_eq!(inv.index_of("Comparison.Contrast"), Some(1));
        assert_eq!(inv.find_ignore_case("contingency.cause"), Some("Contingency.Cause"));
        assert_eq!(LabelInventory::prepositions().len(), 28);
        assert_eq!(LabelInventory::prepositions().label(0), NONE_PREPOSITION);
    }

    #[test]
    fn task_ids() {
        assert_eq!(Task::Sro.proxy_id(), Some(1));
        assert_eq!(Task::Nli.proxy_id(), Some(5));
        assert_eq!("3".parse::<Task>().unwrap(), Task::Drr);
        assert_eq!("NPE".parse::<Task>().unwrap(), Task::Npe);
        assert!("6".parse::<Task>().is_err());
    }

    fn arb_sentence() -> impl Strategy<Value = String> {
        prop_oneof![
            4 => "[A-Za-z]{1,6}( [a-z]{1,6}){0,4}\\.",
            1 => Just("   ".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn sro_accept_reject_matches_invariant(
            sentences in prop::collection::vec(arb_sentence(), 0..6),
            positions in prop::collection::vec(0usize..6, 0..6),
        ) {
            let inst = SroInstance { shuffled: sentences.clone(), gold_positions: positions.clone() };
            let expected_ok = !sentences.is_empty()
                && sentences.iter().all(|s| !s.trim().is_empty())
                && positions.len() == sentences.len()
                && {
                    let mut p = positions.clone();
                    p.sort();
                    p == (0..positions.len()).collect::<Vec<_>>()
                };
            let line = to_json_line(&inst).unwrap();
            let parsed = parse_line::<SroInstance>(&line, 1);
            prop_assert_eq!(parsed.is_ok(), expected_ok);
            if let Ok(back) = parsed {
                prop_assert_eq!(back, inst);
            }
        }

        #[test]
        fn scoring_round_trip(score in 0u8..7, five in any::<bool>(), title in proptest::option::of("[a-z]{1,8}")) {
            let scale = if five { Scale::FiveWay } else { Scale::ThreeWay };
            let mut paragraph = Paragraph::new("p1", vec!["It rained.".into(), "So we stayed.".into()]);
            paragraph.title = title;
            let inst = ScoringInstance { paragraph, scale, gold_score: score };
            let parsed = parse_line::<ScoringInstance>(&to_json_line(&inst).unwrap(), 1);
            prop_assert_eq!(parsed.is_ok(), score >= 1 && score <= scale.levels());
            if let Ok(back) = parsed {
                prop_assert_eq!(back, inst);
            }
        }
    }
}
