//! Experiment specifications.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::backend::BackendConfig;
use crate::corpus::{Domain, Task};
use crate::error::{Error, Result};
use crate::model::TrainConfig;

/// What the joint model is fine-tuned on after the proxy tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneTarget {
    ScoringGcdc,
    ScoringCohesentia,
    ScoringBoth,
    Reasoning,
}

impl FinetuneTarget {
    pub fn scoring_sets(self) -> Vec<ScoringSet> {
        match self {
            FinetuneTarget::ScoringGcdc => vec![ScoringSet::Gcdc],
            FinetuneTarget::ScoringCohesentia => vec![ScoringSet::Cohesentia],
            FinetuneTarget::ScoringBoth => vec![ScoringSet::Gcdc, ScoringSet::Cohesentia],
            FinetuneTarget::Reasoning => vec![],
        }
    }
}

/// The two coherence-scoring benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringSet {
    Gcdc,
    Cohesentia,
}

impl ScoringSet {
    pub const ALL: [ScoringSet; 2] = [ScoringSet::Gcdc, ScoringSet::Cohesentia];

    pub fn name(self) -> &'static str {
        match self {
            ScoringSet::Gcdc => "gcdc",
            ScoringSet::Cohesentia => "cohesentia",
        }
    }
}

/// Dataset files. Each file is split into train/dev/test by the pipeline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sro: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isr: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drr: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npe: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gcdc: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohesentia: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<PathBuf>,
    /// DRR label inventory; derived from the DRR data when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drr_labels: Option<PathBuf>,
    /// NPE preposition inventory; the built-in 28 when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prepositions: Option<PathBuf>,
}

impl DataPaths {
    pub fn task(&self, task: Task) -> Option<&PathBuf> {
        match task {
            Task::Sro => self.sro.as_ref(),
            Task::Isr => self.isr.as_ref(),
            Task::Drr => self.drr.as_ref(),
            Task::Npe => self.npe.as_ref(),
            Task::Nli => self.nli.as_ref(),
            Task::Reasoning => self.reasoning.as_ref(),
            Task::Scoring => None,
        }
    }

    pub fn scoring(&self, set: ScoringSet) -> Option<&PathBuf> {
        match set {
            ScoringSet::Gcdc => self.gcdc.as_ref(),
            ScoringSet::Cohesentia => self.cohesentia.as_ref(),
        }
    }

    /// The directory layout written by the synthetic generator and
    /// `build-datasets`.
    pub fn in_directory(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        DataPaths {
            sro: Some(d.join("sro.jsonl")),
            isr: Some(d.join("isr.jsonl")),
            drr: Some(d.join("drr.jsonl")),
            npe: Some(d.join("npe.jsonl")),
            nli: Some(d.join("nli.jsonl")),
            gcdc: Some(d.join("gcdc.jsonl")),
            cohesentia: Some(d.join("cohesentia.jsonl")),
            reasoning: Some(d.join("reasoning.jsonl")),
            drr_labels: Some(d.join("drr_labels.txt")),
            prepositions: None,
        }
    }
}

fn default_embed() -> usize {
    32
}
fn default_biaffine() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_embed")]
    pub embed: usize,
    #[serde(default = "default_embed")]
    pub hidden: usize,
    #[serde(default = "default_biaffine")]
    pub biaffine: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            embed: default_embed(),
            hidden: default_embed(),
            biaffine: default_biaffine(),
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}
fn default_output() -> PathBuf {
    PathBuf::from("runs/experiment")
}

fn tasks_from_any<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Task>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Item {
        Id(u8),
        Name(String),
    }
    let items = Vec::<Item>::deserialize(d)?;
    let mut out = Vec::new();
    for item in items {
        let task = match item {
            Item::Id(id) => Task::from_proxy_id(id).ok_or_else(|| serde::de::Error::custom(format!("unknown task id {id}"))),
            Item::Name(s) => s.parse::<Task>().map_err(serde::de::Error::custom),
        }?;
        out.push(task);
    }
    Ok(out)
}

/// A full experiment: which proxy tasks to train jointly, what to
/// fine-tune on afterwards, how to predict, and where to write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    /// Proxy tasks trained jointly; empty trains no proxy stage.
    #[serde(default, deserialize_with = "tasks_from_any")]
    pub tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune_target: Option<FinetuneTarget>,
    /// Root seed for splits and initialisation.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub finetune: TrainConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Train/dev/test fractions applied to every dataset file.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// K-fold cross-validation of scoring (0 = off).
    #[serde(default)]
    pub scoring_folds: usize,
    /// Restricts GCDC to one domain; all domains are pooled when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gcdc_domain: Option<Domain>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentSpec {
    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = if path.extension().is_some_and(|e| e == "toml") {
            toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?
        } else {
            let mut s = serde_json::to_string_pretty(self)?;
            s.push('\n');
            s
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Applies `key=value` overrides. Keys are dotted paths (`train.epochs`);
    /// values are parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut slot = &mut value;
            for part in key.trim().split('.') {
                let obj = slot
                    .as_object_mut()
                    .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not inside a table")))?;
                slot = obj.entry(part.to_string()).or_insert(serde_json::Value::Null);
            }
            *slot = parsed;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("after overrides: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tasks.iter().enumerate() {
            if t.proxy_id().is_none() {
                return Err(Error::Config(format!("{t} is not a proxy task")));
            }
            if self.tasks[..i].contains(t) {
                return Err(Error::Config(format!("task {t} listed twice")));
            }
        }
        let [a, b, c] = self.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && ((a + b + c) - 1.0).abs() < 1e-9) {
            return Err(Error::Config(format!("split {:?} must be positive and sum to 1", self.split)));
        }
        if self.scoring_folds == 1 {
            return Err(Error::Config("scoring_folds must be 0 or at least 2".into()));
        }
        if self.model.embed == 0 || self.model.hidden == 0 || self.model.biaffine == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        self.train.validate()?;
        self.finetune.validate()?;
        Ok(())
    }

    /// Row label in result tables: `Ours-None`, `Ours-ALL` or `Ours-1,3`.
    pub fn condition(&self) -> String {
        condition_label(&self.tasks)
    }
}

pub fn condition_label(tasks: &[Task]) -> String {
    if tasks.is_empty() {
        return "Ours-None".into();
    }
    let mut ids: Vec<u8> = tasks.iter().filter_map(|t| t.proxy_id()).collect();
    ids.sort_unstable();
    if ids == [1, 2, 3, 4, 5] {
        "Ours-ALL".into()
    } else {
        format!(
            "Ours-{}",
            ids.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
        )
    }
}
