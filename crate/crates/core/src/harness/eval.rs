//! Scoring engine predictions against gold data.

use serde::Serialize;

use crate::backend::{Engine, Prediction};
use crate::corpus::{TaskInstance, NONE_PREPOSITION};
use crate::error::{Error, Result};
use crate::metrics::{accuracy_report, drr_report, npe_report, order_report, reasoning_report, EvalReport};

fn mismatch(dataset: &str, i: usize) -> Error {
    Error::Precondition(format!("{dataset}: prediction {i} does not match its instance's task"))
}

/// Predicts every instance and scores the predictions. All instances must
/// belong to one task.
pub fn evaluate(engine: &dyn Engine, dataset: &str, instances: &[TaskInstance]) -> Result<(EvalReport, Vec<Prediction>)> {
    if instances.is_empty() {
        return Err(Error::Precondition(format!("{dataset}: nothing to evaluate")));
    }
    let task = instances[0].task();
    if let Some(i) = instances.iter().position(|x| x.task() != task) {
        return Err(Error::Precondition(format!("{dataset}: instance {i} is not a {task} instance")));
    }
    let preds = engine.predict_all(instances)?;
    if preds.len() != instances.len() {
        return Err(Error::backend(format!(
            "{} predictions for {} instances",
            preds.len(),
            instances.len()
        )));
    }
    let report = score(dataset, instances, &preds)?;
    Ok((report.with_tag("dataset", dataset).with_tag("engine", engine.name()), preds))
}

/// Scores predictions that are already available.
pub fn score(dataset: &str, instances: &[TaskInstance], preds: &[Prediction]) -> Result<EvalReport> {
    macro_rules! collect {
        ($variant:ident, $pred:ident => $p:expr, $inst:ident => $g:expr) => {{
            let mut p = Vec::with_capacity(preds.len());
            let mut g = Vec::with_capacity(preds.len());
            for (i, (x, y)) in instances.iter().zip(preds).enumerate() {
                match (x, y) {
                    (TaskInstance::$variant($inst), $pred) => {
                        p.push($p);
                        g.push($g);
                    }
                    _ => return Err(mismatch(dataset, i)),
                }
            }
            (p, g)
        }};
    }
    let mut report = match &instances[0] {
        TaskInstance::Sro(_) => {
            let (p, g) = collect!(Sro, y => match y { Prediction::Order(o) => o.clone(), _ => return Err(mismatch(dataset, 0)) }, x => x.gold_positions.clone());
            order_report(&p, &g)?
        }
        TaskInstance::Isr(_) => {
            let (p, g) = collect!(Isr, y => match y { Prediction::Index(o) => *o, _ => return Err(mismatch(dataset, 0)) }, x => x.irrelevant_index);
            accuracy_report(dataset, &p, &g)?
        }
        TaskInstance::Drr(_) => {
            let (p, g) = collect!(Drr, y => match y { Prediction::Relation(o) => o.clone(), _ => return Err(mismatch(dataset, 0)) }, x => x.gold_l2.clone());
            drr_report(&p, &g)?
        }
        TaskInstance::Npe(_) => {
            let mut unparseable = 0;
            let (p, g) = collect!(Npe, y => match y {
                Prediction::Links { links, unparseable: u } => { unparseable += u; links.clone() }
                _ => return Err(mismatch(dataset, 0))
            }, x => x.links.iter().filter(|l| l.preposition() != NONE_PREPOSITION).cloned().collect::<Vec<_>>());
            npe_report(&p, &g, unparseable)?
        }
        TaskInstance::Nli(_) => {
            let (p, g) = collect!(Nli, y => match y { Prediction::Nli(o) => *o, _ => return Err(mismatch(dataset, 0)) }, x => x.gold);
            accuracy_report(dataset, &p, &g)?
        }
        TaskInstance::Scoring(_) => {
            let (p, g) = collect!(Scoring, y => match y { Prediction::Score(o) => *o, _ => return Err(mismatch(dataset, 0)) }, x => x.gold_score);
            accuracy_report(dataset, &p, &g)?
        }
        TaskInstance::Reasoning(_) => {
            let (p, g) = collect!(Reasoning, y => match y { Prediction::Conditions(o) => *o, _ => return Err(mismatch(dataset, 0)) }, x => x.gold);
            reasoning_report(&p, &g)?
        }
    };
    report.task = dataset.to_string();
    Ok(report)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    index: usize,
    prediction: &'a Prediction,
}

/// Predictions as JSONL, one line per instance in input order.
pub fn predictions_jsonl(preds: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for (index, prediction) in preds.iter().enumerate() {
        out.push_str(&serde_json::to_string(&PredictionLine { index, prediction })?);
        out.push('\n');
    }
    Ok(out)
}

/// Sums the counts of per-fold accuracy reports and recomputes accuracy.
pub fn merge_accuracy_reports(dataset: &str, parts: &[EvalReport]) -> EvalReport {
    let mut merged = EvalReport::new(dataset, parts.iter().map(|r| r.n_instances).sum());
    for r in parts {
        for (k, v) in &r.counts {
            *merged.counts.entry(k.clone()).or_insert(0) += v;
        }
    }
    let total = merged.count("total");
    let correct = merged.count("correct");
    merged
        .metrics
        .insert("accuracy".into(), if total == 0 { 0.0 } else { correct as f64 / total as f64 });
    if let Some(first) = parts.first() {
        merged.tags = first.tags.clone();
    }
    merged
}
