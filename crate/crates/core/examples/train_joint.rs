//! Trains the shared encoder jointly on all five synthetic proxy tasks,
//! then reports dev accuracy per task and round-trips the checkpoint.
//!
//! cargo run --release --example train_joint

use std::collections::BTreeMap;

use coherence::corpus::{split, LabelInventory, Task, TaskInstance};
use coherence::harness::synth_workspace;
use coherence::model::{
    load_checkpoint, save_checkpoint, target_accuracy, training_examples, train_interleaved, Model, TaskData, TrainConfig,
    Vocab,
};
use coherence::synth::SynthConfig;

fn main() {
    let dir = std::env::temp_dir().join("coherence-train-joint");
    let paths = synth_workspace(&SynthConfig::default(), &dir).unwrap();

    let mut splits = BTreeMap::new();
    for t in Task::PROXIES {
        let all = coherence::corpus::load_dataset(paths.task(t).unwrap(), t).unwrap();
        let (train, dev, _) = split(&all, (0.8, 0.1, 0.1), 5).unwrap();
        splits.insert(t, (train, dev));
    }
    let texts: Vec<String> = splits
        .values()
        .flat_map(|(train, _)| train.iter())
        .flat_map(texts_of)
        .collect();
    let model = Model::init(
        Vocab::build(texts.iter().map(String::as_str)),
        coherence::synth::drr_labels(),
        LabelInventory::prepositions(),
        32,
        32,
        8,
        0,
    )
    .unwrap();

    let mut data = BTreeMap::new();
    for (&t, (train, dev)) in &splits {
        let ex = |xs: &[TaskInstance]| -> Vec<_> { xs.iter().flat_map(|x| training_examples(&model, x).unwrap()).collect() };
        data.insert(t, TaskData { train: ex(train), dev: ex(dev) });
    }
    let config = TrainConfig {
        epochs: 20,
        ..TrainConfig::desk()
    };
    let outcome = train_interleaved(&data, &config, model.params.clone()).unwrap();
    println!("best epoch {} (stopped early: {})", outcome.best_epoch, outcome.stopped_early);
    for (t, d) in &data {
        println!("{:<4} dev accuracy {:.3}", t.name(), target_accuracy(&outcome.params, &d.dev).unwrap());
    }

    let trained = Model {
        params: outcome.params,
        ..model
    };
    let path = dir.join("joint.ckpt");
    save_checkpoint(&trained, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().params, trained.params);
    println!("checkpoint at {}", path.display());
}

fn texts_of(x: &TaskInstance) -> Vec<String> {
    match x {
        TaskInstance::Sro(s) => s.shuffled.clone(),
        TaskInstance::Isr(s) => s.sentences.clone(),
        TaskInstance::Drr(d) => vec![d.du1.clone(), d.du2.clone()],
        TaskInstance::Npe(n) => vec![n.tokens.join(" ")],
        TaskInstance::Nli(n) => vec![n.premise.clone(), n.hypothesis.clone()],
        TaskInstance::Scoring(s) => s.paragraph.sentences.clone(),
        TaskInstance::Reasoning(r) => r.prefix.iter().chain([&r.new_sentence]).cloned().collect(),
    }
}
