//! Evaluation metrics with exact counts.
//!
//! Every ratio in an [`EvalReport`] can be recomputed from its `counts`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, NpLink, NONE_PREPOSITION};
use crate::error::{Error, Result};

/// Per-task metric bundle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    pub n_instances: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>, n_instances: usize) -> Self {
        EvalReport {
            task: task.into(),
            n_instances,
            ..Default::default()
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn count(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn unparseable(&self) -> u64 {
        self.count("unparseable")
    }

    fn set_count(&mut self, name: &str, value: u64) {
        self.counts.insert(name.to_string(), value);
    }

    fn set_metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn with_tag(mut self, key: &str, value: impl Into<String>) -> Self {
        self.tags.insert(key.to_string(), value.into());
        self
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} predictions for {b} gold items")));
    }
    Ok(())
}

fn check_order_pair(pred: &[usize], gold: &[usize], i: usize) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::invalid("gold_orders", format!("instance {i} has an empty order")));
    }
    if pred.len() != gold.len() {
        return Err(Error::Dimension(format!(
            "instance {i}: predicted order has {} items, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Perfect match ratio: fraction of instances predicted exactly.
pub fn pmr(predicted: &[Vec<usize>], gold: &[Vec<usize>]) -> Result<f64> {
    check_lengths(predicted.len(), gold.len())?;
    let mut exact = 0u64;
    for (i, (p, g)) in predicted.iter().zip(gold).enumerate() {
        check_order_pair(p, g, i)?;
        exact += u64::from(p == g);
    }
    Ok(ratio(exact, gold.len() as u64))
}

/// Sentence accuracy: mean over instances of the fraction of positions
/// holding the gold item.
pub fn sentence_acc(predicted: &[Vec<usize>], gold: &[Vec<usize>]) -> Result<f64> {
    check_lengths(predicted.len(), gold.len())?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (p, g)) in predicted.iter().zip(gold).enumerate() {
        check_order_pair(p, g, i)?;
        let hits = p.iter().zip(g).filter(|(a, b)| a == b).count();
        total += hits as f64 / g.len() as f64;
    }
    Ok(total / gold.len() as f64)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// PMR and sentence accuracy with counts. `None` predictions are
/// unparseable: wrong everywhere and tallied under `unparseable`.
///
/// Sentence accuracy is a mean of per-instance fractions; it is recorded as
/// `acc_scaled_hits / (n_instances * acc_lcm)` where `acc_lcm` is the least
/// common multiple of the instance lengths.
pub fn order_report(predicted: &[Option<Vec<usize>>], gold: &[Vec<usize>]) -> Result<EvalReport> {
    check_lengths(predicted.len(), gold.len())?;
    let mut lcm = 1u64;
    for (i, g) in gold.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::invalid("gold_orders", format!("instance {i} has an empty order")));
        }
        let v = g.len() as u64;
        lcm = (lcm / gcd(lcm, v))
            .checked_mul(v)
            .ok_or_else(|| Error::Precondition("too many distinct order lengths".into()))?;
    }
    let (mut exact, mut scaled, mut hits, mut positions, mut unparseable) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (i, (p, g)) in predicted.iter().zip(gold).enumerate() {
        positions += g.len() as u64;
        let Some(p) = p else {
            unparseable += 1;
            continue;
        };
        check_order_pair(p, g, i)?;
        let k = p.iter().zip(g).filter(|(a, b)| a == b).count() as u64;
        exact += u64::from(p == g);
        hits += k;
        scaled += k * (lcm / g.len() as u64);
    }
    let n = gold.len() as u64;
    let mut r = EvalReport::new("sro", gold.len());
    r.set_count("exact_matches", exact);
    r.set_count("acc_scaled_hits", scaled);
    r.set_count("acc_lcm", lcm);
    r.set_count("sentences_correct", hits);
    r.set_count("sentences_total", positions);
    r.set_count("unparseable", unparseable);
    r.set_metric("pmr", ratio(exact, n));
    r.set_metric("acc", ratio(scaled, n * lcm));
    Ok(r)
}

/// Multi-reference accuracy: a prediction is correct if it is in the gold set.
pub fn drr_accuracy(predictions: &[String], golds: &[Vec<String>]) -> Result<f64> {
    check_lengths(predictions.len(), golds.len())?;
    let mut correct = 0u64;
    for (i, (p, g)) in predictions.iter().zip(golds).enumerate() {
        if g.is_empty() {
            return Err(Error::invalid("gold_l2", format!("instance {i} has an empty gold set")));
        }
        correct += u64::from(g.contains(p));
    }
    Ok(ratio(correct, golds.len() as u64))
}

pub fn drr_report(predictions: &[Option<String>], golds: &[Vec<String>]) -> Result<EvalReport> {
    check_lengths(predictions.len(), golds.len())?;
    let (mut correct, mut unparseable) = (0u64, 0u64);
    for (i, (p, g)) in predictions.iter().zip(golds).enumerate() {
        if g.is_empty() {
            return Err(Error::invalid("gold_l2", format!("instance {i} has an empty gold set")));
        }
        match p {
            Some(p) => correct += u64::from(g.contains(p)),
            None => unparseable += 1,
        }
    }
    let mut r = EvalReport::new("drr", golds.len());
    r.set_count("correct", correct);
    r.set_count("total", golds.len() as u64);
    r.set_count("unparseable", unparseable);
    r.set_metric("accuracy", ratio(correct, golds.len() as u64));
    Ok(r)
}

/// Exact-match fraction.
pub fn accuracy<T: PartialEq>(predictions: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(predictions.len(), golds.len())?;
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count() as u64;
    Ok(ratio(correct, golds.len() as u64))
}

pub fn accuracy_report<T: PartialEq>(task: &str, predictions: &[Option<T>], golds: &[T]) -> Result<EvalReport> {
    check_lengths(predictions.len(), golds.len())?;
    let mut correct = 0u64;
    let mut unparseable = 0u64;
    for (p, g) in predictions.iter().zip(golds) {
        match p {
            Some(p) => correct += u64::from(p == g),
            None => unparseable += 1,
        }
    }
    let mut r = EvalReport::new(task, golds.len());
    r.set_count("correct", correct);
    r.set_count("total", golds.len() as u64);
    r.set_count("unparseable", unparseable);
    r.set_metric("accuracy", ratio(correct, golds.len() as u64));
    Ok(r)
}

/// Raw precision/recall counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrfCounts {
    pub true_positives: u64,
    pub predicted: u64,
    pub gold: u64,
}

impl PrfCounts {
    pub fn add(&mut self, other: PrfCounts) {
        self.true_positives += other.true_positives;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn scores(&self) -> Prf {
        let precision = ratio(self.true_positives, self.predicted);
        let recall = ratio(self.true_positives, self.gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn link_set<'a>(links: &'a [NpLink], side: &str) -> Result<HashSet<&'a NpLink>> {
    let mut set = HashSet::new();
    for l in links.iter().filter(|l| l.2 != NONE_PREPOSITION) {
        if !set.insert(l) {
            return Err(Error::invalid("links", format!("duplicate {side} link {l:?}")));
        }
    }
    Ok(set)
}

/// Counts for one document. `NONE` links on either side are dropped; a
/// correct pair with the wrong preposition is one FP and one FN.
pub fn npe_counts(predicted: &[NpLink], gold: &[NpLink]) -> Result<PrfCounts> {
    let p = link_set(predicted, "predicted")?;
    let g = link_set(gold, "gold")?;
    Ok(PrfCounts {
        true_positives: p.intersection(&g).count() as u64,
        predicted: p.len() as u64,
        gold: g.len() as u64,
    })
}

/// Micro-averaged link P/R/F1 over documents.
pub fn npe_prf(predicted: &[Vec<NpLink>], gold: &[Vec<NpLink>]) -> Result<Prf> {
    Ok(npe_total(predicted, gold)?.scores())
}

fn npe_total(predicted: &[Vec<NpLink>], gold: &[Vec<NpLink>]) -> Result<PrfCounts> {
    check_lengths(predicted.len(), gold.len())?;
    let mut total = PrfCounts::default();
    for (p, g) in predicted.iter().zip(gold) {
        total.add(npe_counts(p, g)?);
    }
    Ok(total)
}

/// `unparseable` counts pair queries whose output could not be read; those
/// pairs are already absent from `predicted`.
pub fn npe_report(predicted: &[Vec<NpLink>], gold: &[Vec<NpLink>], unparseable: u64) -> Result<EvalReport> {
    let c = npe_total(predicted, gold)?;
    let s = c.scores();
    let mut r = EvalReport::new("npe", gold.len());
    r.set_count("true_positives", c.true_positives);
    r.set_count("predicted_links", c.predicted);
    r.set_count("gold_links", c.gold);
    r.set_count("unparseable", unparseable);
    r.set_metric("precision", s.precision);
    r.set_metric("recall", s.recall);
    r.set_metric("f1", s.f1);
    Ok(r)
}

/// Per-condition binary P/R/F1, positive class = condition holds.
pub fn reasoning_prf(predictions: &[[bool; 3]], golds: &[[bool; 3]]) -> Result<BTreeMap<Condition, Prf>> {
    check_lengths(predictions.len(), golds.len())?;
    Ok(reasoning_counts(predictions, golds)
        .into_iter()
        .map(|(c, counts)| (c, counts.scores()))
        .collect())
}

fn reasoning_counts(predictions: &[[bool; 3]], golds: &[[bool; 3]]) -> BTreeMap<Condition, PrfCounts> {
    Condition::ALL
        .iter()
        .map(|&c| {
            let k = c.index();
            let mut counts = PrfCounts::default();
            for (p, g) in predictions.iter().zip(golds) {
                counts.predicted += u64::from(p[k]);
                counts.gold += u64::from(g[k]);
                counts.true_positives += u64::from(p[k] && g[k]);
            }
            (c, counts)
        })
        .collect()
}

/// Reasoning report. Unparseable answers (`None`) are scored as the
/// opposite of gold and tallied under `unparseable`.
pub fn reasoning_report(predictions: &[[Option<bool>; 3]], golds: &[[bool; 3]]) -> Result<EvalReport> {
    check_lengths(predictions.len(), golds.len())?;
    let mut unparseable = 0u64;
    let resolved: Vec<[bool; 3]> = predictions
        .iter()
        .zip(golds)
        .map(|(p, g)| {
            let mut out = [false; 3];
            for k in 0..3 {
                out[k] = p[k].unwrap_or_else(|| {
                    unparseable += 1;
                    !g[k]
                });
            }
            out
        })
        .collect();
    let mut r = EvalReport::new("reasoning", golds.len());
    for (c, counts) in reasoning_counts(&resolved, golds) {
        let s = counts.scores();
        let name = c.name();
        r.set_count(&format!("{name}_true_positives"), counts.true_positives);
        r.set_count(&format!("{name}_predicted"), counts.predicted);
        r.set_count(&format!("{name}_gold"), counts.gold);
        r.set_metric(&format!("{name}_precision"), s.precision);
        r.set_metric(&format!("{name}_recall"), s.recall);
        r.set_metric(&format!("{name}_f1"), s.f1);
    }
    r.set_count("unparseable", unparseable);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(a: usize, c: usize, p: &str) -> NpLink {
        NpLink::new(a, c, p)
    }

    #[test]
    fn worked_order_example() {
        // gold (2,4,3,1) vs predicted (2,3,4,1)
        let gold = vec![vec![2, 4, 3, 1]];
        let pred = vec![vec![2, 3, 4, 1]];
        assert_eq!(pmr(&pred, &gold).unwrap(), 0.0);
        assert_eq!(sentence_acc(&pred, &gold).unwrap(), 0.5);
        assert_eq!(pmr(&gold, &gold).unwrap(), 1.0);
        assert_eq!(sentence_acc(&gold, &gold).unwrap(), 1.0);
        assert!(pmr(&pred, &[]).is_err());
        assert!(pmr(&[vec![0, 1]], &[vec![0, 1, 2]]).is_err());
    }

    #[test]
    fn order_report_counts_recompute() {
        let gold = vec![vec![0, 1, 2], vec![1, 0], vec![3, 2, 1, 0]];
        let pred = vec![Some(vec![0, 2, 1]), Some(vec![1, 0]), None];
        let r = order_report(&pred, &gold).unwrap();
        assert_eq!(r.count("acc_lcm"), 12);
        assert_eq!(r.count("unparseable"), 1);
        let acc = (1.0 / 3.0 + 1.0 + 0.0) / 3.0;
        assert!((r.metric("acc").unwrap() - acc).abs() < 1e-15);
        assert_eq!(
            r.metric("acc").unwrap(),
            r.count("acc_scaled_hits") as f64 / (3 * r.count("acc_lcm")) as f64
        );
        assert_eq!(r.metric("pmr").unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn drr_multi_reference() {
        let g = vec![vec!["Cause".to_string(), "Concession".to_string()], vec!["Cause".to_string()]];
        let p = vec!["Cause".to_string(), "Contrast".to_string()];
        assert_eq!(drr_accuracy(&p, &g).unwrap(), 0.5);
        assert!(drr_accuracy(&p[..1], &[vec![]]).is_err());
    }

    #[test]
    fn npe_examples() {
        // in(birth, Denmark), of(birth, male child): NPs 0=Mary, 1=Denmark, 2=birth, 3=male child
        let gold = vec![link(2, 1, "in"), link(2, 3, "of")];
        let s = npe_counts(&gold, &gold).unwrap().scores();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = npe_counts(&[], &gold).unwrap().scores();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        let c = npe_counts(&[link(2, 1, "of"), link(2, 3, "of")], &gold).unwrap();
        assert_eq!(c, PrfCounts { true_positives: 1, predicted: 2, gold: 2 });

        // NONE predictions are excluded
        let c = npe_counts(&[link(0, 1, NONE_PREPOSITION), link(2, 1, "in")], &gold).unwrap();
        assert_eq!(c.predicted, 1);

        assert!(npe_counts(&[link(2, 1, "in"), link(2, 1, "in")], &gold).is_err());
    }

    #[test]
    fn nli_contradiction_counts_correct() {
        use crate::corpus::NliLabel;
        let r = accuracy_report("nli", &[Some(NliLabel::Contradiction)], &[NliLabel::Contradiction]).unwrap();
        assert_eq!(r.metric("accuracy"), Some(1.0));
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        let r = accuracy_report("isr", &[None, Some(1)], &[0, 1]).unwrap();
        assert_eq!((r.count("correct"), r.unparseable()), (1, 1));
    }

    #[test]
    fn reasoning_examples() {
        let gold = vec![[true, false, true], [false, true, false], [true, true, false], [false, false, true]];
        let perfect = reasoning_prf(&gold, &gold).unwrap();
        assert!(perfect.values().all(|p| p.f1 == 1.0));

        let all_yes = vec![[true; 3]; 4];
        for prf in reasoning_prf(&all_yes, &gold).unwrap().values() {
            assert_eq!(prf.precision, 0.5);
            assert_eq!(prf.recall, 1.0);
        }

        let r = reasoning_report(&[[None, Some(false), Some(true)]], &[[false, false, true]]).unwrap();
        assert_eq!(r.unparseable(), 1);
        assert_eq!(r.metric("cohesion_precision"), Some(0.0));
        assert_eq!(r.count("cohesion_predicted"), 1);
    }
}
