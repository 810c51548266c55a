//! The full experiment on synthetic data: joint proxy training, scoring
//! fine-tuning, evaluation and report tables.
//!
//! cargo run --release --example experiment_pipeline

use coherence::backend::BackendKind;
use coherence::corpus::Task;
use coherence::harness::{run_pipeline, synth_workspace, ExperimentSpec, FinetuneTarget};
use coherence::synth::SynthConfig;

fn main() {
    let root = std::env::temp_dir().join("coherence-pipeline");
    let mut spec = ExperimentSpec {
        name: "synthetic".into(),
        tasks: Task::PROXIES.to_vec(),
        finetune_target: Some(FinetuneTarget::ScoringBoth),
        output_dir: root.join("run"),
        data: synth_workspace(&SynthConfig::default(), root.join("data")).unwrap(),
        ..Default::default()
    };
    spec.backend.kind = BackendKind::Builtin;

    let bundle = run_pipeline(&spec).unwrap();
    print!("{}", std::fs::read_to_string(spec.output_dir.join("reports/tables.txt")).unwrap());
    println!("{} reports under {}", bundle.reports.len(), spec.output_dir.display());
}
