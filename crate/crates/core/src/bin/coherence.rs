use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coherence::harness::{
    build_datasets, cross_domain, parse_subsets, run_ablation_grid, run_pipeline, singletons_and_all, synth_workspace,
    tables, DataPaths, EvalScope, ExperimentSpec, Pipeline, ReportBundle, ScoringSet, TrainOn,
};
use coherence::synth::SynthConfig;
use coherence::Result;

#[derive(Parser)]
#[command(name = "coherence", version, about = "Coherence proxy-task training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Experiment spec (TOML or JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory holding sro.jsonl, isr.jsonl, ... as written by build-datasets.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(d) = &self.data_dir {
            spec.data = DataPaths::in_directory(d);
        }
        if let Some(o) = &self.output_dir {
            spec.output_dir = o.clone();
        }
        spec.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Derive SRO/ISR sets from a paragraph corpus, or generate a synthetic corpus.
    BuildDatasets {
        #[arg(long, required_unless_present = "synthetic")]
        paragraphs: Option<PathBuf>,
        /// Also generate every synthetic dataset into --out.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        stories: usize,
        #[arg(long, default_value_t = 200)]
        per_task: usize,
        #[arg(long, default_value_t = 50)]
        scoring: usize,
    },
    /// Joint proxy training, then the configured fine-tuning.
    Train(SpecArgs),
    /// Evaluate the proxy tasks on their test splits.
    EvalTask(SpecArgs),
    /// Evaluate coherence scoring.
    EvalCoherence {
        #[command(flatten)]
        spec: SpecArgs,
        /// Restrict to one set (gcdc or cohesentia).
        #[arg(long)]
        only: Option<String>,
    },
    /// Evaluate coherence reasoning.
    EvalReasoning(SpecArgs),
    /// Train and evaluate once per task subset.
    Ablate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Subsets separated by `;`, tasks by `,` (e.g. `1;2,3;all;none`).
        /// Defaults to every singleton plus all five.
        #[arg(long)]
        subsets: Option<String>,
    },
    /// Fine-tune on one scoring set and evaluate on both.
    CrossDomain {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "both")]
        train_on: TrainOn,
    },
    /// Render tables from finished runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Train and evaluate everything in one go.
    Run(SpecArgs),
    /// Write the prompt templates as JSON.
    Templates {
        #[arg(long)]
        out: PathBuf,
    },
}

fn evaluate(args: &SpecArgs, scope: EvalScope, sets: Option<&[ScoringSet]>) -> Result<()> {
    let p = Pipeline::new(args.resolve()?)?;
    let results = p.evaluate(scope, sets)?;
    let bundle = p.write_reports(&results)?;
    let fresh: Vec<_> = results.into_iter().map(|(r, _)| r).collect();
    print!("{}", tables::render_all(&[(bundle.condition, fresh)]));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDatasets {
            paragraphs,
            synthetic,
            out,
            seed,
            stories,
            per_task,
            scoring,
        } => {
            if synthetic {
                let config = SynthConfig {
                    stories,
                    per_task,
                    scoring,
                    seed,
                };
                synth_workspace(&config, &out)?;
            }
            if let Some(p) = paragraphs {
                let summary = build_datasets(p, &out, seed)?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
            }
            println!("datasets written to {}", out.display());
        }
        Command::Train(args) => {
            let p = Pipeline::new(args.resolve()?)?;
            p.train()?;
            println!("{}", p.final_checkpoint().display());
        }
        Command::EvalTask(args) => evaluate(&args, EvalScope::Tasks, None)?,
        Command::EvalCoherence { spec, only } => {
            let sets = match only.as_deref() {
                None => None,
                Some("gcdc") => Some(vec![ScoringSet::Gcdc]),
                Some("cohesentia") => Some(vec![ScoringSet::Cohesentia]),
                Some(other) => return Err(coherence::Error::Config(format!("unknown scoring set {other:?}"))),
            };
            evaluate(&spec, EvalScope::Coherence, sets.as_deref())?
        }
        Command::EvalReasoning(args) => evaluate(&args, EvalScope::Reasoning, None)?,
        Command::Ablate { spec, subsets } => {
            let subsets = match subsets {
                Some(s) => parse_subsets(&s)?,
                None => singletons_and_all(),
            };
            let table = run_ablation_grid(&spec.resolve()?, &subsets)?;
            print!("{}", table.to_csv());
        }
        Command::CrossDomain { spec, train_on } => {
            let spec = spec.resolve()?;
            let reports = cross_domain(&spec, train_on)?;
            let label = format!("{}-{}", spec.condition(), train_on.name());
            print!("{}", tables::scoring_table(&[(label, reports)]));
        }
        Command::Report { runs } => {
            let mut rows = Vec::new();
            for dir in &runs {
                let b = ReportBundle::load(dir)?;
                rows.push((b.condition, b.reports));
            }
            print!("{}", tables::render_all(&rows));
        }
        Command::Run(args) => {
            let bundle = run_pipeline(&args.resolve()?)?;
            print!("{}", tables::render_all(&[(bundle.condition, bundle.reports)]));
        }
        Command::Templates { out } => coherence::prompts::dump_templates(&out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
