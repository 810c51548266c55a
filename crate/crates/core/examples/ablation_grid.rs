//! Trains one model per task subset and prints the grid as CSV.
//!
//! cargo run --release --example ablation_grid

use coherence::backend::BackendKind;
use coherence::harness::{run_ablation_grid, singletons_and_all, synth_workspace, tables, ExperimentSpec, FinetuneTarget};
use coherence::synth::SynthConfig;

fn main() {
    let root = std::env::temp_dir().join("coherence-ablation");
    let mut spec = ExperimentSpec {
        finetune_target: Some(FinetuneTarget::ScoringGcdc),
        output_dir: root.join("grid"),
        data: synth_workspace(&SynthConfig::default(), root.join("data")).unwrap(),
        ..Default::default()
    };
    spec.backend.kind = BackendKind::Builtin;
    spec.train.epochs = 10;

    let mut subsets = vec![vec![]];
    subsets.extend(singletons_and_all());
    let table = run_ablation_grid(&spec, &subsets).unwrap();
    print!("{}", table.to_csv());
    print!("\n{}", tables::scoring_table(&table.rows_for_tables()));
}
