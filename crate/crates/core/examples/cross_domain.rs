//! Fine-tunes scoring on each dataset in turn and evaluates on both.
//!
//! cargo run --release --example cross_domain

use coherence::backend::BackendKind;
use coherence::corpus::Task;
use coherence::harness::{cross_domain, synth_workspace, ExperimentSpec, TrainOn};
use coherence::synth::SynthConfig;

fn main() {
    let root = std::env::temp_dir().join("coherence-cross-domain");
    let mut spec = ExperimentSpec {
        tasks: Task::PROXIES.to_vec(),
        output_dir: root.join("run"),
        data: synth_workspace(&SynthConfig::default(), root.join("data")).unwrap(),
        ..Default::default()
    };
    spec.backend.kind = BackendKind::Builtin;

    for train_on in [TrainOn::Gcdc, TrainOn::Cohesentia, TrainOn::Both] {
        for r in cross_domain(&spec, train_on).unwrap() {
            println!(
                "train on {:<10} test on {:<10} {:<13} accuracy {:.3}",
                train_on.name(),
                r.task,
                r.tags["domain"],
                r.metric("accuracy").unwrap()
            );
        }
    }
}
