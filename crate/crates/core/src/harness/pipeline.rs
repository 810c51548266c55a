//! Data loading, training stages, evaluation and artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::{evaluate, merge_accuracy_reports, predictions_jsonl};
use super::spec::{ExperimentSpec, FinetuneTarget, ScoringSet};
use super::tables;
use crate::backend::{build_engine, BackendKind, BuiltinEngine, Engine};
use crate::corpus::{check_drr_labels, load_dataset, split, LabelInventory, Task, TaskInstance};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{
    load_checkpoint, training_examples, train_interleaved, write_log, Model, TaskData, TrainConfig,
    Vocab,
};
use crate::taskgen::derive_seed;

/// One dataset cut into train/dev/test.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<TaskInstance>,
    pub dev: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
}

impl Splits {
    pub fn all(&self) -> Vec<TaskInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test).cloned().collect()
    }
}

/// Which evaluations to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalScope {
    Tasks,
    Coherence,
    Reasoning,
    All,
}

/// Reports of one run directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub name: String,
    pub condition: String,
    pub reports: Vec<EvalReport>,
}

impl ReportBundle {
    pub fn report(&self, dataset: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.task == dataset)
    }

    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self> {
        let path = run_dir.as_ref().join("reports").join("bundle.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct Stamp {
    fingerprint: String,
    checkpoint_sha256: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    name: &'a str,
    condition: String,
    seed: u64,
    engine: &'a str,
    checkpoint: &'a str,
    checkpoint_sha256: Option<String>,
    data_sha256: &'a BTreeMap<String, String>,
    spec: &'a ExperimentSpec,
    version: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn instance_texts(x: &TaskInstance) -> Vec<String> {
    match x {
        TaskInstance::Sro(x) => x.shuffled.clone(),
        TaskInstance::Isr(x) => x.sentences.clone(),
        TaskInstance::Drr(x) => vec![x.du1.clone(), x.du2.clone()],
        TaskInstance::Npe(x) => vec![x.tokens.join(" ")],
        TaskInstance::Nli(x) => vec![x.premise.clone(), x.hypothesis.clone()],
        TaskInstance::Scoring(x) => vec![x.paragraph.text()],
        TaskInstance::Reasoning(x) => x.prefix.iter().chain([&x.new_sentence]).cloned().collect(),
    }
}

/// A validated spec with its data loaded and split.
pub struct Pipeline {
    pub spec: ExperimentSpec,
    pub proxy: BTreeMap<Task, Splits>,
    pub scoring: BTreeMap<ScoringSet, Splits>,
    pub reasoning: Option<Splits>,
    pub drr_labels: LabelInventory,
    pub prepositions: LabelInventory,
    pub data_sha256: BTreeMap<String, String>,
}

impl Pipeline {
    /// Validates the spec and loads every dataset it needs. Missing files
    /// are reported here, before any training.
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let mut needed: Vec<(String, PathBuf, Task)> = Vec::new();
        for &t in &spec.tasks {
            let path = spec
                .data
                .task(t)
                .ok_or_else(|| Error::Config(format!("task {t} has no data path")))?;
            needed.push((t.name().to_string(), path.clone(), t));
        }
        let target_sets = spec.finetune_target.map(FinetuneTarget::scoring_sets).unwrap_or_default();
        for set in ScoringSet::ALL {
            match spec.data.scoring(set) {
                Some(p) => needed.push((set.name().to_string(), p.clone(), Task::Scoring)),
                None if target_sets.contains(&set) => {
                    return Err(Error::Config(format!("fine-tuning needs a {} data path", set.name())))
                }
                None => {}
            }
        }
        match &spec.data.reasoning {
            Some(p) => needed.push(("reasoning".into(), p.clone(), Task::Reasoning)),
            None if spec.finetune_target == Some(FinetuneTarget::Reasoning) => {
                return Err(Error::Config("fine-tuning needs a reasoning data path".into()))
            }
            None => {}
        }
        let missing: Vec<String> = needed
            .iter()
            .map(|(_, p, _)| p)
            .chain(spec.data.drr_labels.iter())
            .chain(spec.data.prepositions.iter())
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing data files: {}", missing.join(", "))));
        }

        let mut data_sha256 = BTreeMap::new();
        let fractions = (spec.split[0], spec.split[1], spec.split[2]);
        let mut loaded: BTreeMap<String, Splits> = BTreeMap::new();
        for (i, (name, path, task)) in needed.iter().enumerate() {
            data_sha256.insert(name.clone(), file_sha256(path)?);
            let mut all = load_dataset(path, *task)?;
            if name == "gcdc" {
                if let Some(domain) = spec.gcdc_domain {
                    all.retain(|x| matches!(x, TaskInstance::Scoring(s) if s.paragraph.domain == domain));
                }
            }
            let (train, dev, test) = split(&all, fractions, derive_seed(spec.seed, 100 + i as u64))
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            loaded.insert(name.clone(), Splits { train, dev, test });
        }

        let drr_labels = match &spec.data.drr_labels {
            Some(p) => {
                data_sha256.insert("drr_labels".into(), file_sha256(p)?);
                LabelInventory::load(p)?
            }
            None => {
                let mut labels: Vec<String> = loaded
                    .get("drr")
                    .map(|s| s.all())
                    .unwrap_or_default()
                    .iter()
                    .filter_map(|x| match x {
                        TaskInstance::Drr(d) => Some(d.gold_l2.clone()),
                        _ => None,
                    })
                    .flatten()
                    .collect();
                labels.sort();
                labels.dedup();
                if labels.is_empty() {
                    labels.push("Expansion.Conjunction".into());
                }
                LabelInventory::new(labels)?
            }
        };
        if let Some(s) = loaded.get("drr") {
            let drr: Vec<_> = s
                .all()
                .into_iter()
                .filter_map(|x| match x {
                    TaskInstance::Drr(d) => Some(d),
                    _ => None,
                })
                .collect();
            check_drr_labels(&drr, &drr_labels)?;
        }
        let prepositions = match &spec.data.prepositions {
            Some(p) => {
                data_sha256.insert("prepositions".into(), file_sha256(p)?);
                LabelInventory::load(p)?
            }
            None => LabelInventory::prepositions(),
        };

        let mut proxy = BTreeMap::new();
        for &t in &spec.tasks {
            proxy.insert(t, loaded.remove(t.name()).expect("loaded above"));
        }
        let mut scoring = BTreeMap::new();
        for set in ScoringSet::ALL {
            if let Some(s) = loaded.remove(set.name()) {
                scoring.insert(set, s);
            }
        }
        let reasoning = loaded.remove("reasoning");
        Ok(Pipeline {
            spec,
            proxy,
            scoring,
            reasoning,
            drr_labels,
            prepositions,
            data_sha256,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.spec.output_dir
    }

    pub fn proxy_checkpoint(&self) -> PathBuf {
        self.output_dir().join("checkpoints").join("proxy.ckpt")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.output_dir().join("checkpoints").join("final.ckpt")
    }

    fn vocab(&self) -> Vocab {
        let mut texts = Vec::new();
        for s in self.proxy.values().chain(self.scoring.values()).chain(self.reasoning.iter()) {
            for x in &s.train {
                texts.extend(instance_texts(x));
            }
        }
        Vocab::build(texts.iter().map(String::as_str))
    }

    fn initial_model(&self) -> Result<Model> {
        let m = &self.spec.model;
        Model::init(
            self.vocab(),
            self.drr_labels.clone(),
            self.prepositions.clone(),
            m.embed,
            m.hidden,
            m.biaffine,
            derive_seed(self.spec.seed, 1),
        )
    }

    fn fingerprint(&self, stage: &str) -> Result<String> {
        let mut spec = self.spec.clone();
        spec.output_dir = PathBuf::new();
        spec.backend = Default::default();
        spec.name = String::new();
        if stage == "proxy" {
            spec.finetune_target = None;
            spec.finetune = TrainConfig::default();
        }
        let payload = serde_json::json!({ "stage": stage, "spec": spec, "data": self.data_sha256 });
        Ok(sha256_hex(serde_json::to_string(&payload)?.as_bytes()))
    }

    fn examples(model: &Model, instances: &[TaskInstance]) -> Result<Vec<crate::model::Example>> {
        let mut out = Vec::new();
        for x in instances {
            out.extend(training_examples(model, x)?);
        }
        Ok(out)
    }

    /// Runs a stage unless a checkpoint with a matching fingerprint exists.
    fn stage(
        &self,
        name: &str,
        start: impl FnOnce() -> Result<Model>,
        data: impl FnOnce(&Model) -> Result<BTreeMap<Task, TaskData>>,
        config: &TrainConfig,
    ) -> Result<Model> {
        let ckpt = self.output_dir().join("checkpoints").join(format!("{name}.ckpt"));
        let stamp_path = ckpt.with_extension("stamp.json");
        let fingerprint = self.fingerprint(name)?;
        if let (Ok(text), true) = (std::fs::read_to_string(&stamp_path), ckpt.is_file()) {
            if let Ok(stamp) = serde_json::from_str::<Stamp>(&text) {
                if stamp.fingerprint == fingerprint && file_sha256(&ckpt)? == stamp.checkpoint_sha256 {
                    return load_checkpoint(&ckpt);
                }
            }
        }
        let mut model = start()?;
        let data = data(&model)?;
        if !data.is_empty() {
            let outcome = train_interleaved(&data, config, model.params)?;
            model.params = outcome.params;
            let log = self.output_dir().join("logs").join(format!("{name}.jsonl"));
            std::fs::create_dir_all(log.parent().expect("has parent")).map_err(|e| Error::io(&log, e))?;
            write_log(&log, &outcome.log)?;
        }
        let bytes = model.to_bytes()?;
        write_file(&ckpt, &bytes)?;
        let stamp = Stamp {
            fingerprint,
            checkpoint_sha256: sha256_hex(&bytes),
        };
        write_file(&stamp_path, serde_json::to_string_pretty(&stamp)?)?;
        Ok(model)
    }

    fn finetune_data(&self, model: &Model, sets: &[ScoringSet]) -> Result<BTreeMap<Task, TaskData>> {
        let mut data = BTreeMap::new();
        match self.spec.finetune_target {
            Some(FinetuneTarget::Reasoning) => {
                let s = self.reasoning.as_ref().expect("checked in new");
                data.insert(
                    Task::Reasoning,
                    TaskData {
                        train: Self::examples(model, &s.train)?,
                        dev: Self::examples(model, &s.dev)?,
                    },
                );
            }
            Some(_) => {
                let mut td = TaskData::default();
                for set in sets {
                    let s = &self.scoring[set];
                    td.train.extend(Self::examples(model, &s.train)?);
                    td.dev.extend(Self::examples(model, &s.dev)?);
                }
                data.insert(Task::Scoring, td);
            }
            None => {}
        }
        Ok(data)
    }

    /// Joint proxy-task training, then optional fine-tuning. Both stages
    /// resume from their checkpoints when nothing they depend on changed.
    pub fn train(&self) -> Result<Model> {
        let proxy = self.stage(
            "proxy",
            || self.initial_model(),
            |m| {
                let mut data = BTreeMap::new();
                for (&t, s) in &self.proxy {
                    data.insert(
                        t,
                        TaskData {
                            train: Self::examples(m, &s.train)?,
                            dev: Self::examples(m, &s.dev)?,
                        },
                    );
                }
                Ok(data)
            },
            &self.spec.train,
        )?;
        let sets = self.spec.finetune_target.map(FinetuneTarget::scoring_sets).unwrap_or_default();
        let final_model = self.stage(
            "final",
            || Ok(proxy.clone()),
            |m| self.finetune_data(m, &sets),
            &self.spec.finetune,
        )?;
        Ok(final_model)
    }

    fn engine(&self, reference: &[TaskInstance]) -> Result<Box<dyn Engine>> {
        let mut config = self.spec.backend.clone();
        if config.kind == BackendKind::Builtin && config.checkpoint_path.is_none() {
            config.checkpoint_path = Some(self.final_checkpoint());
        }
        if config.kind == BackendKind::Builtin && !config.checkpoint_path.as_ref().expect("set").is_file() {
            return Err(Error::Config(format!(
                "no checkpoint at {}; train first",
                config.checkpoint_path.as_ref().expect("set").display()
            )));
        }
        build_engine(&config, reference)
    }

    fn scoring_sets_to_evaluate(&self) -> Vec<ScoringSet> {
        match self.spec.finetune_target {
            Some(FinetuneTarget::Reasoning) => vec![],
            Some(t) => t.scoring_sets(),
            None => self.scoring.keys().copied().collect(),
        }
    }

    fn eval_one(&self, name: &str, instances: &[TaskInstance], out: &mut Vec<(EvalReport, String)>) -> Result<()> {
        let engine = self.engine(instances)?;
        let (report, preds) = evaluate(engine.as_ref(), name, instances)?;
        out.push((report.with_tag("split", "test"), predictions_jsonl(&preds)?));
        Ok(())
    }

    /// K-fold scoring evaluation: each fold is scored by a model fine-tuned
    /// on the other folds, starting from the proxy checkpoint.
    fn eval_folds(&self, set: ScoringSet, out: &mut Vec<(EvalReport, String)>) -> Result<()> {
        let k = self.spec.scoring_folds;
        let all = self.scoring[&set].all();
        if all.len() < k {
            return Err(Error::Config(format!("{} has fewer than {k} instances", set.name())));
        }
        let proxy = load_checkpoint(self.proxy_checkpoint())?;
        let mut parts = Vec::new();
        let mut pred_text = String::new();
        for fold in 0..k {
            let test: Vec<TaskInstance> = all.iter().skip(fold).step_by(k).cloned().collect();
            let train: Vec<TaskInstance> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| i % k != fold)
                .map(|(_, x)| x.clone())
                .collect();
            let engine: Box<dyn Engine> = if self.spec.backend.kind == BackendKind::Builtin {
                let mut model = proxy.clone();
                let data = BTreeMap::from([(
                    Task::Scoring,
                    TaskData {
                        train: Self::examples(&model, &train)?,
                        dev: vec![],
                    },
                )]);
                model.params = train_interleaved(&data, &self.spec.finetune, model.params)?.params;
                Box::new(BuiltinEngine::new(model))
            } else {
                self.engine(&test)?
            };
            let (r, preds) = evaluate(engine.as_ref(), set.name(), &test)?;
            pred_text.push_str(&predictions_jsonl(&preds)?);
            parts.push(r);
        }
        let merged = merge_accuracy_reports(set.name(), &parts)
            .with_tag("split", "cross_validation")
            .with_tag("folds", k.to_string());
        out.push((merged, pred_text));
        Ok(())
    }

    /// Evaluates test splits and returns reports with their predictions.
    pub fn evaluate(&self, scope: EvalScope, scoring_sets: Option<&[ScoringSet]>) -> Result<Vec<(EvalReport, String)>> {
        let mut out = Vec::new();
        if matches!(scope, EvalScope::Tasks | EvalScope::All) {
            for (t, s) in &self.proxy {
                self.eval_one(t.name(), &s.test, &mut out)?;
            }
        }
        if matches!(scope, EvalScope::Coherence | EvalScope::All) {
            let sets = scoring_sets.map(<[_]>::to_vec).unwrap_or_else(|| self.scoring_sets_to_evaluate());
            for set in sets {
                if !self.scoring.contains_key(&set) {
                    return Err(Error::Config(format!("no {} data configured", set.name())));
                }
                if self.spec.scoring_folds >= 2 {
                    self.eval_folds(set, &mut out)?;
                } else {
                    self.eval_one(set.name(), &self.scoring[&set].test, &mut out)?;
                }
            }
        }
        let want_reasoning = matches!(scope, EvalScope::Reasoning)
            || (scope == EvalScope::All && self.spec.finetune_target == Some(FinetuneTarget::Reasoning));
        if want_reasoning {
            let s = self
                .reasoning
                .as_ref()
                .ok_or_else(|| Error::Config("no reasoning data configured".into()))?;
            self.eval_one("reasoning", &s.test, &mut out)?;
        }
        let condition = self.spec.condition();
        Ok(out
            .into_iter()
            .map(|(r, p)| (r.with_tag("condition", condition.clone()), p))
            .collect())
    }

    /// Writes reports, predictions, the spec echo, provenance and text
    /// tables under `<output_dir>/reports`. Reports already present from
    /// earlier evaluations of the same run are kept in the bundle.
    pub fn write_reports(&self, results: &[(EvalReport, String)]) -> Result<ReportBundle> {
        let dir = self.output_dir().join("reports");
        std::fs::create_dir_all(dir.join("predictions")).map_err(|e| Error::io(&dir, e))?;
        for (r, preds) in results {
            let mut text = serde_json::to_string_pretty(r)?;
            text.push('\n');
            write_file(&dir.join(format!("{}.json", r.task)), text)?;
            write_file(&dir.join("predictions").join(format!("{}.jsonl", r.task)), preds)?;
        }
        let mut reports = Vec::new();
        let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|e| e == "json")
                    && !matches!(
                        p.file_stem().and_then(|s| s.to_str()),
                        Some("bundle" | "spec" | "provenance")
                    )
            })
            .collect();
        names.sort();
        for p in names {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            reports.push(serde_json::from_str::<EvalReport>(&text)?);
        }
        let bundle = ReportBundle {
            name: self.spec.name.clone(),
            condition: self.spec.condition(),
            reports,
        };
        let mut text = serde_json::to_string_pretty(&bundle)?;
        text.push('\n');
        write_file(&dir.join("bundle.json"), text)?;
        self.spec.save(dir.join("spec.json"))?;

        let ckpt = self.final_checkpoint();
        let checkpoint_sha256 = if ckpt.is_file() { Some(file_sha256(&ckpt)?) } else { None };
        let provenance = Provenance {
            name: &self.spec.name,
            condition: self.spec.condition(),
            seed: self.spec.seed,
            engine: match self.spec.backend.kind {
                BackendKind::Builtin => "builtin",
                BackendKind::External => "external",
                BackendKind::Mock => "mock",
            },
            checkpoint: "checkpoints/final.ckpt",
            checkpoint_sha256,
            data_sha256: &self.data_sha256,
            spec: &self.spec,
            version: env!("CARGO_PKG_VERSION"),
        };
        let mut text = serde_json::to_string_pretty(&provenance)?;
        text.push('\n');
        write_file(&dir.join("provenance.json"), text)?;
        write_file(
            &dir.join("tables.txt"),
            tables::render_all(&[(bundle.condition.clone(), bundle.reports.clone())]),
        )?;
        Ok(bundle)
    }
}

/// Train, then evaluate everything the spec configures.
pub fn run_pipeline(spec: &ExperimentSpec) -> Result<ReportBundle> {
    let p = Pipeline::new(spec.clone())?;
    p.train()?;
    let results = p.evaluate(EvalScope::All, None)?;
    p.write_reports(&results)
}
