//! Experiment orchestration: specs, pipeline stages, ablation grids,
//! cross-domain runs and result tables.

pub mod build;
pub mod eval;
pub mod grid;
pub mod pipeline;
pub mod spec;
pub mod tables;

pub use build::{build_datasets, synth_workspace};
pub use eval::{evaluate, score};
pub use grid::{cross_domain, parse_subsets, run_ablation_grid, singletons_and_all, AblationTable, TrainOn};
pub use pipeline::{run_pipeline, EvalScope, Pipeline, ReportBundle, Splits};
pub use spec::{condition_label, DataPaths, ExperimentSpec, FinetuneTarget, ModelSpec, ScoringSet};
