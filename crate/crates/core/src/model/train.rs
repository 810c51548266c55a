//! Interleaved multi-task training.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{loss_and_grad, predict, DropoutSpec, Example, Gradient};
use super::optim::{Optimizer, OptimizerKind};
use super::params::ModelParams;
use crate::corpus::Task;
use crate::error::{Error, Result};
use crate::taskgen::derive_seed;

/// Missing fields take their [`desk`](TrainConfig::desk) values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub dropout_encoder: f64,
    pub dropout_head: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Settings that train the built-in model from scratch in seconds.
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 0.2,
            epochs: 30,
            batch_size: 8,
            grad_accum_steps: 1,
            dropout_encoder: 0.0,
            dropout_head: 0.0,
            seed: 0,
            early_stop_patience: 5,
            optimizer: OptimizerKind::Sgd,
        }
    }

    /// Published proxy-task fine-tuning settings for pretrained encoders.
    pub fn proxy_tasks() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            epochs: 3,
            batch_size: 4,
            grad_accum_steps: 2,
            dropout_encoder: 0.5,
            dropout_head: 0.3,
            seed: 0,
            early_stop_patience: 1,
            optimizer: OptimizerKind::Adam,
        }
    }

    /// Published coherence-assessment fine-tuning settings.
    pub fn coherence() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            epochs: 50,
            batch_size: 4,
            grad_accum_steps: 2,
            dropout_encoder: 0.3,
            dropout_head: 0.1,
            seed: 0,
            early_stop_patience: 3,
            optimizer: OptimizerKind::Adam,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "proxy" | "proxy_tasks" => Ok(Self::proxy_tasks()),
            "coherence" => Ok(Self::coherence()),
            other => Err(Error::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        for (field, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("grad_accum_steps", self.grad_accum_steps),
            ("early_stop_patience", self.early_stop_patience),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        for (field, p) in [("dropout_encoder", self.dropout_encoder), ("dropout_head", self.dropout_head)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(field, format!("{p} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Training and (optional) development examples of one task.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskData {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

/// One single-task batch of training-set indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub task: Task,
    pub indices: Vec<usize>,
}

/// Builds one epoch's schedule.
///
/// Each task's examples are shuffled and cut into batches. Batches are then
/// drawn one at a time: the next task is sampled in proportion to its
/// remaining batch count among the unexhausted tasks other than the
/// previous one (the previous task is only repeated when it is the last
/// one left).
pub fn epoch_schedule(sizes: &BTreeMap<Task, usize>, batch_size: usize, seed: u64) -> Vec<Batch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<(Task, std::collections::VecDeque<Vec<usize>>)> = sizes
        .iter()
        .map(|(&task, &n)| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            (task, idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect())
        })
        .collect();

    let total: usize = queues.iter().map(|(_, q)| q.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut previous: Option<Task> = None;
    while out.len() < total {
        let live: Vec<usize> = (0..queues.len()).filter(|&i| !queues[i].1.is_empty()).collect();
        let candidates: Vec<usize> = if live.len() >= 2 {
            live.into_iter().filter(|&i| Some(queues[i].0) != previous).collect()
        } else {
            live
        };
        let weight: usize = candidates.iter().map(|&i| queues[i].1.len()).sum();
        let mut draw = rng.gen_range(0..weight);
        let mut pick = candidates[0];
        for &i in &candidates {
            let w = queues[i].1.len();
            if draw < w {
                pick = i;
                break;
            }
            draw -= w;
        }
        let (task, queue) = &mut queues[pick];
        out.push(Batch {
            task: *task,
            indices: queue.pop_front().expect("candidate has batches"),
        });
        previous = Some(*task);
    }
    out
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task: Task,
    pub loss: f64,
    pub dev_metric: Option<f64>,
}

pub fn write_log(path: impl AsRef<Path>, records: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Fraction of targets whose argmax matches the label.
pub fn target_accuracy(params: &ModelParams, examples: &[Example]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for ex in examples {
        for &(head, label) in &ex.targets {
            hit += usize::from(predict(params, head, &ex.features)? == label);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Trains on every task jointly with single-task, alternating batches.
///
/// Updates are applied every `grad_accum_steps` batches using the mean of
/// the accumulated batch gradients. When any task has development data the
/// parameters of the epoch with the best mean development accuracy are
/// returned, stopping after `early_stop_patience` epochs without
/// improvement.
pub fn train_interleaved(
    data: &BTreeMap<Task, TaskData>,
    config: &TrainConfig,
    params: ModelParams,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("no task datasets to train on".into()));
    }
    if let Some((task, _)) = data.iter().find(|(_, d)| d.train.is_empty()) {
        return Err(Error::Precondition(format!("empty training set for task {task}")));
    }
    let sizes: BTreeMap<Task, usize> = data.iter().map(|(&t, d)| (t, d.train.len())).collect();
    let has_dev = data.values().any(|d| !d.dev.is_empty());

    let mut params = params;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &params);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut last_epoch = 0;

    for epoch in 0..config.epochs {
        last_epoch = epoch;
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        let schedule = epoch_schedule(&sizes, config.batch_size, epoch_seed);
        let mut losses: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
        let mut pending: Option<Gradient> = None;
        let mut accumulated = 0;

        for (step, batch) in schedule.iter().enumerate() {
            let set = &data[&batch.task].train;
            let examples: Vec<&Example> = batch.indices.iter().map(|&i| &set[i]).collect();
            let dropout = (config.dropout_encoder > 0.0 || config.dropout_head > 0.0).then(|| DropoutSpec {
                encoder: config.dropout_encoder,
                head: config.dropout_head,
                seed: derive_seed(epoch_seed, step as u64),
            });
            let (loss, grad) = loss_and_grad(&params, &examples, dropout)?;
            let entry = losses.entry(batch.task).or_insert((0.0, 0));
            entry.0 += loss;
            entry.1 += 1;
            match &mut pending {
                Some(acc) => acc.accumulate(&grad),
                None => pending = Some(grad),
            }
            accumulated += 1;
            if accumulated == config.grad_accum_steps {
                apply_update(&mut optimizer, &mut params, pending.take(), accumulated);
                accumulated = 0;
            }
        }
        if accumulated > 0 {
            apply_update(&mut optimizer, &mut params, pending.take(), accumulated);
        }
        if !params.is_finite() {
            return Err(Error::Precondition(format!(
                "training diverged in epoch {epoch}; lower the learning rate"
            )));
        }

        let mut dev_scores = Vec::new();
        for (&task, d) in data {
            let dev_metric = if d.dev.is_empty() {
                None
            } else {
                let acc = target_accuracy(&params, &d.dev)?;
                dev_scores.push(acc);
                Some(acc)
            };
            let (sum, n) = losses.get(&task).copied().unwrap_or((0.0, 0));
            log.push(EpochRecord {
                epoch,
                task,
                loss: if n == 0 { 0.0 } else { sum / n as f64 },
                dev_metric,
            });
        }

        if has_dev {
            let score = dev_scores.iter().sum::<f64>() / dev_scores.len() as f64;
            match &best {
                Some((b, _, _)) if score <= *b => {
                    since_best += 1;
                    if since_best >= config.early_stop_patience {
                        stopped_early = epoch + 1 < config.epochs;
                        break;
                    }
                }
                _ => {
                    best = Some((score, epoch, params.clone()));
                    since_best = 0;
                }
            }
        }
    }

    Ok(match best {
        Some((_, best_epoch, best_params)) => TrainOutcome {
            params: best_params,
            log,
            best_epoch,
            stopped_early,
        },
        None => TrainOutcome {
            params,
            log,
            best_epoch: last_epoch,
            stopped_early: false,
        },
    })
}

fn apply_update(optimizer: &mut Optimizer, params: &mut ModelParams, grad: Option<Gradient>, n: usize) {
    if let Some(mut g) = grad {
        if n > 1 {
            g.params.scale(1.0 / n as f64);
        }
        optimizer.step(params, &g);
    }
}
