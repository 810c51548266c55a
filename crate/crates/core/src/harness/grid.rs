//! Task-subset ablations and cross-domain runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pipeline::{EvalScope, Pipeline, ReportBundle};
use super::spec::{condition_label, ExperimentSpec, FinetuneTarget, ScoringSet};
use crate::corpus::Task;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

/// Directory-safe name of a subset: `none`, `all` or ids joined by `-`.
pub fn subset_slug(tasks: &[Task]) -> String {
    let mut ids: Vec<u8> = tasks.iter().filter_map(|t| t.proxy_id()).collect();
    ids.sort_unstable();
    match ids.as_slice() {
        [] => "none".into(),
        [1, 2, 3, 4, 5] => "all".into(),
        _ => ids.iter().map(u8::to_string).collect::<Vec<_>>().join("-"),
    }
}

/// Parses `1,2;3;all;none` style subset lists.
pub fn parse_subsets(text: &str) -> Result<Vec<Vec<Task>>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.to_ascii_lowercase().as_str() {
            "none" => Ok(vec![]),
            "all" => Ok(Task::PROXIES.to_vec()),
            _ => s.split(&[',', '+'][..]).map(|t| t.parse::<Task>()).collect(),
        })
        .collect()
}

/// Every single proxy task, then all five together.
pub fn singletons_and_all() -> Vec<Vec<Task>> {
    let mut out: Vec<Vec<Task>> = Task::PROXIES.iter().map(|&t| vec![t]).collect();
    out.push(Task::PROXIES.to_vec());
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: Vec<Task>,
    pub condition: String,
    pub bundle: ReportBundle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// One row per subset; one column per `dataset.metric` seen in any row.
    pub fn to_csv(&self) -> String {
        let mut columns: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.bundle.reports.iter())
            .flat_map(|rep| rep.metrics.keys().map(move |m| format!("{}.{m}", rep.task)))
            .collect();
        columns.sort();
        columns.dedup();
        let mut out = String::from("subset,condition");
        for c in &columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", subset_slug(&row.subset), row.condition);
            for c in &columns {
                let (dataset, metric) = c.split_once('.').expect("dataset.metric");
                match row.bundle.report(dataset).and_then(|r| r.metric(metric)) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn rows_for_tables(&self) -> Vec<(String, Vec<EvalReport>)> {
        self.rows.iter().map(|r| (r.condition.clone(), r.bundle.reports.clone())).collect()
    }
}

/// Runs the full pipeline once per subset with shared seeds. Each cell
/// writes under `<output_dir>/ablation/<subset>`; the CSV goes to
/// `<output_dir>/ablation.csv`.
pub fn run_ablation_grid(base: &ExperimentSpec, subsets: &[Vec<Task>]) -> Result<AblationTable> {
    if subsets.is_empty() {
        return Err(Error::Config("ablation grid needs at least one subset".into()));
    }
    let mut rows = Vec::new();
    for subset in subsets {
        let mut spec = base.clone();
        spec.tasks = subset.clone();
        spec.output_dir = base.output_dir.join("ablation").join(subset_slug(subset));
        let bundle = super::pipeline::run_pipeline(&spec)?;
        rows.push(AblationRow {
            subset: subset.clone(),
            condition: condition_label(subset),
            bundle,
        });
    }
    let table = AblationTable { rows };
    let path = base.output_dir.join("ablation.csv");
    std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainOn {
    Gcdc,
    Cohesentia,
    Both,
}

impl TrainOn {
    pub fn target(self) -> FinetuneTarget {
        match self {
            TrainOn::Gcdc => FinetuneTarget::ScoringGcdc,
            TrainOn::Cohesentia => FinetuneTarget::ScoringCohesentia,
            TrainOn::Both => FinetuneTarget::ScoringBoth,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainOn::Gcdc => "gcdc",
            TrainOn::Cohesentia => "cohesentia",
            TrainOn::Both => "both",
        }
    }

    fn covers(self, set: ScoringSet) -> bool {
        self == TrainOn::Both || self.name() == set.name()
    }
}

impl std::str::FromStr for TrainOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcdc" => Ok(TrainOn::Gcdc),
            "cohesentia" => Ok(TrainOn::Cohesentia),
            "both" => Ok(TrainOn::Both),
            other => Err(Error::Config(format!("unknown training set {other:?}"))),
        }
    }
}

/// Fine-tunes on one scoring set (or both) and evaluates on both test sets,
/// tagging each report in- or out-of-domain.
pub fn cross_domain(spec: &ExperimentSpec, train_on: TrainOn) -> Result<Vec<EvalReport>> {
    for set in ScoringSet::ALL {
        if spec.data.scoring(set).is_none() {
            return Err(Error::Config(format!("cross-domain runs need {} data", set.name())));
        }
    }
    let mut spec = spec.clone();
    spec.finetune_target = Some(train_on.target());
    spec.output_dir = spec.output_dir.join("cross-domain").join(train_on.name());
    let p = Pipeline::new(spec)?;
    p.train()?;
    let results = p.evaluate(EvalScope::Coherence, Some(&ScoringSet::ALL))?;
    let tagged: Vec<(EvalReport, String)> = results
        .into_iter()
        .map(|(r, preds)| {
            let set = if r.task == "gcdc" { ScoringSet::Gcdc } else { ScoringSet::Cohesentia };
            let domain = if train_on.covers(set) { "in_domain" } else { "out_of_domain" };
            (r.with_tag("train_on", train_on.name()).with_tag("domain", domain), preds)
        })
        .collect();
    let bundle = p.write_reports(&tagged)?;
    Ok(bundle.reports)
}
