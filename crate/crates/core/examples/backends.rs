//! Runs the same instances through a scripted mock and, when
//! `COHERENCE_ENDPOINT` is set, an external text-generation service.
//!
//! cargo run --example backends
//! COHERENCE_ENDPOINT=http://localhost:8000/generate cargo run --example backends

use coherence::backend::{build_engine, BackendConfig, BackendKind, MockGenerator, PromptEngine};
use coherence::corpus::TaskInstance;
use coherence::harness::score;
use coherence::prompts::{queries, render_prompt, OutputParser};
use coherence::synth::{generate, SynthConfig};

fn main() {
    let corpus = generate(&SynthConfig {
        stories: 2,
        per_task: 6,
        scoring: 2,
        seed: 11,
    })
    .unwrap();
    let nli: Vec<TaskInstance> = corpus.nli.iter().cloned().map(TaskInstance::Nli).collect();

    // A generator that always says "Neutral", except for one scripted prompt.
    let first = render_prompt(&queries(&nli[0])[0]).unwrap();
    let generator = MockGenerator::from_pairs([(first, "Answer: Entailment".to_string())]).with_fallback("Neutral");
    let engine = PromptEngine::new(generator, OutputParser::default(), "scripted");
    let preds = coherence::backend::Engine::predict_all(&engine, &nli).unwrap();
    let r = score("nli", &nli, &preds).unwrap();
    println!("scripted mock accuracy: {:.2}", r.metric("accuracy").unwrap());

    if let Ok(endpoint) = std::env::var("COHERENCE_ENDPOINT") {
        let config = BackendConfig {
            kind: BackendKind::External,
            endpoint: Some(endpoint),
            concurrency: 4,
            transcript_path: Some(std::env::temp_dir().join("coherence-transcript.jsonl")),
            ..Default::default()
        };
        let engine = build_engine(&config, &nli).unwrap();
        let preds = engine.predict_all(&nli).unwrap();
        let r = score("nli", &nli, &preds).unwrap();
        println!("external accuracy: {:.2} ({} unparseable)", r.metric("accuracy").unwrap(), r.unparseable());
    }
}
