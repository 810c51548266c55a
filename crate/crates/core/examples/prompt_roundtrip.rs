//! Renders prompts for every synthetic task family, answers them with a
//! scripted generator and parses the answers back.
//!
//! cargo run --example prompt_roundtrip

use coherence::backend::{Engine, MockGenerator, PromptEngine};
use coherence::corpus::TaskInstance;
use coherence::prompts::{queries, render_prompt, render_target, OutputParser};
use coherence::synth::{generate, SynthConfig};
use coherence::taskgen::build_proxy_sets;

fn main() {
    let corpus = generate(&SynthConfig {
        stories: 4,
        per_task: 2,
        scoring: 2,
        seed: 3,
    })
    .unwrap();
    let (sro, isr, _) = build_proxy_sets(&corpus.paragraphs, 3);
    let instances = vec![
        TaskInstance::Sro(sro[0].clone()),
        TaskInstance::Isr(isr[0].clone()),
        TaskInstance::Drr(corpus.drr[0].clone()),
        TaskInstance::Nli(corpus.nli[0].clone()),
        TaskInstance::Scoring(corpus.gcdc[0].clone()),
        TaskInstance::Reasoning(corpus.reasoning[0].clone()),
    ];

    for x in &instances {
        let q = queries(x)[0];
        println!("[{:?}]\n{}\n=> {}\n", q.kind(), render_prompt(&q).unwrap(), render_target(&q));
    }

    let engine = PromptEngine::new(
        MockGenerator::echo_gold(&instances).unwrap(),
        OutputParser::default(),
        "mock",
    );
    for (x, p) in instances.iter().zip(engine.predict_all(&instances).unwrap()) {
        println!("{:<10} {:?}", x.task().name(), p);
    }
}
