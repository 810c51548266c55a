//! Prompts and targets for the generation-based variant, and tolerant
//! parsing of generated text back into answers.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    Condition, DrrInstance, IsrInstance, LabelInventory, NliInstance, NliLabel, NpeInstance,
    ReasoningInstance, Scale, ScoringInstance, SroInstance, TaskInstance,
};
use crate::decode::{parse_cot, CotTriple};
use crate::error::{Error, Result};

/// Identifies which template and answer grammar a query uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Sro,
    Isr,
    Drr,
    Npe,
    Nli,
    Gcdc,
    Cohesentia,
    Cohesion,
    Consistency,
    Relevance,
}

impl QueryKind {
    pub fn scoring(scale: Scale) -> Self {
        match scale {
            Scale::ThreeWay => QueryKind::Gcdc,
            Scale::FiveWay => QueryKind::Cohesentia,
        }
    }

    pub fn reasoning(condition: Condition) -> Self {
        match condition {
            Condition::Cohesion => QueryKind::Cohesion,
            Condition::Consistency => QueryKind::Consistency,
            Condition::Relevance => QueryKind::Relevance,
        }
    }
}

/// A template with `{name}` placeholders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: QueryKind,
    pub pattern: String,
}

const SRO: &str = "reorder: what is the order of the sentences so that the paragraph is coherent? {sentences}";
const ISR: &str = "relevance: what is the irrelevant sentence in the text? {sentences}";
const DRR: &str = "discourse relation: what is the discourse relation between {du1} {du2}";
const NPE: &str = "coreference text: what are the preposition relations between {anchor} and {complement}? text: {text}";
const NLI: &str = "mnli: does this hypothesis contradict, entail, or neutral with the premise? hypothesis: {hypothesis} premise: {premise}";
const GCDC: &str = "GCDC coherence: what is the coherence score of the text (3 - high, 1 - low)? text: {text}";
const COHESENTIA: &str =
    "CoheSentia coherence: what is the coherence score of the text (5 - high, 1 - low)? title: {title} text: {text}";
const REASONING: &str = "{Name} reasoning: previous data: {previous} new sentence: {sentence}. Task: is the new sentence {adjective} in regard to the previous data? give a yes or no answer to each item";

fn reasoning_pattern(condition: Condition) -> String {
    let (name, adjective) = match condition {
        Condition::Cohesion => ("Cohesion", "cohesive"),
        Condition::Consistency => ("Consistency", "consistent"),
        Condition::Relevance => ("Relevance", "relevant"),
    };
    REASONING.replace("{Name}", name).replace("{adjective}", adjective)
}

/// All templates, in a fixed order.
pub fn templates() -> Vec<PromptTemplate> {
    let fixed = [
        (QueryKind::Sro, SRO),
        (QueryKind::Isr, ISR),
        (QueryKind::Drr, DRR),
        (QueryKind::Npe, NPE),
        (QueryKind::Nli, NLI),
        (QueryKind::Gcdc, GCDC),
        (QueryKind::Cohesentia, COHESENTIA),
    ];
    let mut out: Vec<PromptTemplate> = fixed
        .iter()
        .map(|(task, p)| PromptTemplate {
            task: *task,
            pattern: p.to_string(),
        })
        .collect();
    out.extend(Condition::ALL.iter().map(|&c| PromptTemplate {
        task: QueryKind::reasoning(c),
        pattern: reasoning_pattern(c),
    }));
    out
}

pub fn template(kind: QueryKind) -> PromptTemplate {
    templates()
        .into_iter()
        .find(|t| t.task == kind)
        .expect("every kind has a template")
}

/// Writes the template set as JSON so external tools can render prompts.
pub fn dump_templates(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&templates())?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Substitutes every `{name}` placeholder. Each placeholder must have a
/// value and each value must be used exactly once.
pub fn render(pattern: &str, values: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(pattern.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut used = vec![0usize; values.len()];
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .map(|c| open + c)
            .ok_or_else(|| Error::Template(format!("unclosed placeholder in {pattern:?}")))?;
        let name = &rest[open + 1..close];
        let k = values
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| Error::Template(format!("no value for placeholder {{{name}}}")))?;
        used[k] += 1;
        out.push_str(values[k].1);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    if let Some(k) = used.iter().position(|&u| u != 1) {
        return Err(Error::Template(format!(
            "placeholder {{{}}} used {} times",
            values[k].0, used[k]
        )));
    }
    Ok(out)
}

/// One prompt's worth of an instance. NPE instances yield one query per
/// ordered NP pair and reasoning instances one per condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Query<'a> {
    Sro(&'a SroInstance),
    Isr(&'a IsrInstance),
    Drr(&'a DrrInstance),
    Npe {
        instance: &'a NpeInstance,
        anchor: usize,
        complement: usize,
    },
    Nli(&'a NliInstance),
    Scoring(&'a ScoringInstance),
    Reasoning {
        instance: &'a ReasoningInstance,
        condition: Condition,
    },
}

impl Query<'_> {
    pub fn kind(&self) -> QueryKind {
        match self {
            Query::Sro(_) => QueryKind::Sro,
            Query::Isr(_) => QueryKind::Isr,
            Query::Drr(_) => QueryKind::Drr,
            Query::Npe { .. } => QueryKind::Npe,
            Query::Nli(_) => QueryKind::Nli,
            Query::Scoring(x) => QueryKind::scoring(x.scale),
            Query::Reasoning { condition, .. } => QueryKind::reasoning(*condition),
        }
    }
}

/// The queries an instance expands into, in a fixed order.
pub fn queries(instance: &TaskInstance) -> Vec<Query<'_>> {
    match instance {
        TaskInstance::Sro(x) => vec![Query::Sro(x)],
        TaskInstance::Isr(x) => vec![Query::Isr(x)],
        TaskInstance::Drr(x) => vec![Query::Drr(x)],
        TaskInstance::Npe(x) => {
            let k = x.nps.len();
            let mut out = Vec::with_capacity(k * k.saturating_sub(1));
            for anchor in 0..k {
                for complement in 0..k {
                    if anchor != complement {
                        out.push(Query::Npe {
                            instance: x,
                            anchor,
                            complement,
                        });
                    }
                }
            }
            out
        }
        TaskInstance::Nli(x) => vec![Query::Nli(x)],
        TaskInstance::Scoring(x) => vec![Query::Scoring(x)],
        TaskInstance::Reasoning(x) => Condition::ALL
            .iter()
            .map(|&condition| Query::Reasoning { instance: x, condition })
            .collect(),
    }
}

fn numbered(sentences: &[String], spaced: bool) -> String {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if spaced {
                format!("sentence {}: {}", i + 1, s)
            } else {
                format!("sentence{}: {}", i + 1, s)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the prompt for a query. Sentences are numbered from 1.
pub fn render_prompt(query: &Query<'_>) -> Result<String> {
    let pattern = template(query.kind()).pattern;
    match query {
        Query::Sro(x) => render(&pattern, &[("sentences", &numbered(&x.shuffled, true))]),
        Query::Isr(x) => render(&pattern, &[("sentences", &numbered(&x.sentences, false))]),
        Query::Drr(x) => render(&pattern, &[("du1", &x.du1), ("du2", &x.du2)]),
        Query::Npe {
            instance,
            anchor,
            complement,
        } => render(
            &pattern,
            &[
                ("anchor", &instance.np_text(*anchor)),
                ("complement", &instance.np_text(*complement)),
                ("text", &instance.tokens.join(" ")),
            ],
        ),
        Query::Nli(x) => render(&pattern, &[("hypothesis", &x.hypothesis), ("premise", &x.premise)]),
        Query::Scoring(x) => {
            let text = x.paragraph.text();
            match x.scale {
                Scale::ThreeWay => render(&pattern, &[("text", &text)]),
                Scale::FiveWay => {
                    let title = x
                        .paragraph
                        .title
                        .as_deref()
                        .ok_or_else(|| Error::Template(format!("paragraph {:?} has no title", x.paragraph.id)))?;
                    render(&pattern, &[("title", title), ("text", &text)])
                }
            }
        }
        Query::Reasoning { instance, .. } => render(
            &pattern,
            &[
                ("previous", &instance.prefix.join(" ")),
                ("sentence", &instance.new_sentence),
            ],
        ),
    }
}

/// A parsed generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    /// 0-based positions.
    Positions(Vec<usize>),
    /// 0-based sentence index.
    Index(usize),
    Relation(CotTriple),
    Preposition(String),
    Nli(NliLabel),
    Score(u8),
    YesNo(bool),
    Unparseable(String),
}

impl Answer {
    pub fn is_unparseable(&self) -> bool {
        matches!(self, Answer::Unparseable(_))
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Positions(p) => {
                let items: Vec<String> = p.iter().map(|x| (x + 1).to_string()).collect();
                write!(f, "[{}]", items.join(", "))
            }
            Answer::Index(i) => write!(f, "{}", i + 1),
            Answer::Relation(t) => write!(f, "{t}"),
            Answer::Preposition(p) => f.write_str(p),
            Answer::Nli(NliLabel::Contradiction) => f.write_str("Contradict"),
            Answer::Nli(NliLabel::Entailment) => f.write_str("Entails"),
            Answer::Nli(NliLabel::Neutral) => f.write_str("Neutral"),
            Answer::Score(s) => write!(f, "{s}"),
            Answer::YesNo(true) => f.write_str("Yes"),
            Answer::YesNo(false) => f.write_str("No"),
            Answer::Unparseable(raw) => f.write_str(raw),
        }
    }
}

/// Connective written in a DRR target when the data does not provide one.
pub const DEFAULT_CONNECTOR: &str = "none";

/// Gold CoT triple for a DRR instance; the first gold L2 label is used. A
/// missing L1 is taken from the `L1.L2` label prefix.
pub fn drr_gold_triple(x: &DrrInstance) -> CotTriple {
    let l2 = x.gold_l2[0].clone();
    let l1 = x
        .gold_l1
        .clone()
        .unwrap_or_else(|| l2.split('.').next().unwrap_or(&l2).to_string());
    let connector = x.gold_connector.clone().unwrap_or_else(|| DEFAULT_CONNECTOR.to_string());
    CotTriple { connector, l1, l2 }
}

/// The answer a perfect model would give.
pub fn gold_answer(query: &Query<'_>) -> Answer {
    match query {
        Query::Sro(x) => Answer::Positions(x.gold_positions.clone()),
        Query::Isr(x) => Answer::Index(x.irrelevant_index),
        Query::Drr(x) => Answer::Relation(drr_gold_triple(x)),
        Query::Npe {
            instance,
            anchor,
            complement,
        } => Answer::Preposition(instance.gold_preposition(*anchor, *complement).to_string()),
        Query::Nli(x) => Answer::Nli(x.gold),
        Query::Scoring(x) => Answer::Score(x.gold_score),
        Query::Reasoning { instance, condition } => Answer::YesNo(instance.gold[condition.index()]),
    }
}

/// Gold output text for a query.
pub fn render_target(query: &Query<'_>) -> String {
    gold_answer(query).to_string()
}

fn strip_wrappers(text: &str) -> &str {
    text.trim()
        .trim_end_matches('.')
        .trim_matches(|c| matches!(c, '"' | '\'' | '`'))
        .trim()
}

fn parse_positions(text: &str) -> Option<Vec<usize>> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    let items: Vec<usize> = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
        .collect::<Option<_>>()?;
    (!items.is_empty() && crate::corpus::is_permutation(&items)).then_some(items)
}

fn parse_index(text: &str) -> Option<usize> {
    let t = strip_wrappers(text);
    let lower = t.to_ascii_lowercase();
    let t = lower.strip_prefix("sentence").unwrap_or(&lower).trim();
    let t = t.trim_matches(|c| matches!(c, '(' | ')' | '[' | ']' | ':')).trim();
    t.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1)
}

/// Parses generated text. NPE answers must name an inventory label.
#[derive(Clone, Debug)]
pub struct OutputParser {
    prepositions: LabelInventory,
}

impl Default for OutputParser {
    fn default() -> Self {
        OutputParser {
            prepositions: LabelInventory::prepositions(),
        }
    }
}

impl OutputParser {
    pub fn new(prepositions: LabelInventory) -> Self {
        OutputParser { prepositions }
    }

    /// Case-insensitive, whitespace-tolerant; never fails.
    pub fn parse_output(&self, kind: QueryKind, text: &str) -> Answer {
        let unparseable = || Answer::Unparseable(text.to_string());
        let lower = strip_wrappers(text).to_lowercase();
        match kind {
            QueryKind::Sro => parse_positions(text).map(Answer::Positions).unwrap_or_else(unparseable),
            QueryKind::Isr => parse_index(text).map(Answer::Index).unwrap_or_else(unparseable),
            QueryKind::Drr => parse_cot(text).map(Answer::Relation).unwrap_or_else(|_| unparseable()),
            QueryKind::Npe => self
                .prepositions
                .find_ignore_case(strip_wrappers(text))
                .map(|p| Answer::Preposition(p.to_string()))
                .unwrap_or_else(unparseable),
            QueryKind::Nli => {
                if lower.starts_with("contradict") {
                    Answer::Nli(NliLabel::Contradiction)
                } else if lower.starts_with("entail") {
                    Answer::Nli(NliLabel::Entailment)
                } else if lower == "neutral" {
                    Answer::Nli(NliLabel::Neutral)
                } else {
                    unparseable()
                }
            }
            QueryKind::Gcdc | QueryKind::Cohesentia => {
                let max = if kind == QueryKind::Gcdc { 3 } else { 5 };
                match lower.parse::<u8>() {
                    Ok(s) if (1..=max).contains(&s) => Answer::Score(s),
                    _ => unparseable(),
                }
            }
            QueryKind::Cohesion | QueryKind::Consistency | QueryKind::Relevance => match lower.as_str() {
                "yes" => Answer::YesNo(true),
                "no" => Answer::YesNo(false),
                _ => unparseable(),
            },
        }
    }
}
