use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use coherence::backend::{
    build_engine, BackendConfig, BackendKind, BuiltinEngine, Engine, ExternalGenerator, GenerationRequest,
    MockGenerator, Prediction, PromptEngine, TextGenerator,
};
use coherence::corpus::{
    Condition, DrrInstance, IsrInstance, LabelInventory, NliInstance, NliLabel, NpLink, NpeInstance, Paragraph,
    ReasoningInstance, Scale, ScoringInstance, Span, SroInstance, TaskInstance,
};
use coherence::decode::{isr_select, topological_order};
use coherence::model::{Model, Vocab};
use coherence::prompts::{queries, render_prompt, render_target, OutputParser};
use coherence::Error;

fn sample_instances() -> Vec<TaskInstance> {
    let mut scored = Paragraph::new(
        "g1",
        vec!["Dear team, the meeting moved.".into(), "It is now at noon.".into()],
    );
    scored.title = Some("Meeting".into());
    vec![
        TaskInstance::Sro(SroInstance {
            shuffled: vec!["Then he ate.".into(), "Tom cooked.".into(), "Finally he slept.".into()],
            gold_positions: vec![1, 0, 2],
        }),
        TaskInstance::Isr(IsrInstance {
            sentences: vec!["Ann ran.".into(), "Bees buzz.".into(), "Ann won.".into()],
            irrelevant_index: 1,
        }),
        TaskInstance::Drr(DrrInstance {
            du1: "It rained".into(),
            du2: "the game was cancelled".into(),
            gold_l2: vec!["Contingency.Cause".into()],
            gold_connector: Some("so".into()),
            gold_l1: None,
        }),
        TaskInstance::Npe(NpeInstance {
            tokens: "the roof of the house".split(' ').map(String::from).collect(),
            nps: vec![Span(0, 2), Span(3, 5)],
            links: vec![NpLink::new(0, 1, "of")],
        }),
        TaskInstance::Nli(NliInstance {
            premise: "A man sleeps.".into(),
            hypothesis: "A man is awake.".into(),
            gold: NliLabel::Contradiction,
        }),
        TaskInstance::Scoring(ScoringInstance {
            paragraph: scored.clone(),
            scale: Scale::ThreeWay,
            gold_score: 2,
        }),
        TaskInstance::Scoring(ScoringInstance {
            paragraph: scored,
            scale: Scale::FiveWay,
            gold_score: 5,
        }),
        TaskInstance::Reasoning(ReasoningInstance {
            prefix: vec!["Mia baked bread.".into()],
            new_sentence: "She sold it at the market.".into(),
            gold: [true, true, false],
        }),
    ]
}

fn gold_prediction(x: &TaskInstance) -> Prediction {
    match x {
        TaskInstance::Sro(x) => Prediction::Order(Some(x.gold_positions.clone())),
        TaskInstance::Isr(x) => Prediction::Index(Some(x.irrelevant_index)),
        TaskInstance::Drr(x) => Prediction::Relation(Some(x.gold_l2[0].clone())),
        TaskInstance::Npe(x) => Prediction::Links {
            links: x.links.clone(),
            unparseable: 0,
        },
        TaskInstance::Nli(x) => Prediction::Nli(Some(x.gold)),
        TaskInstance::Scoring(x) => Prediction::Score(Some(x.gold_score)),
        TaskInstance::Reasoning(x) => Prediction::Conditions(x.gold.map(Some)),
    }
}

#[test]
fn mock_echoing_gold_is_always_right() {
    let data = sample_instances();
    let engine = build_engine(&BackendConfig::default(), &data).unwrap();
    let preds = engine.predict_all(&data).unwrap();
    for (x, p) in data.iter().zip(&preds) {
        assert_eq!(*p, gold_prediction(x));
        assert_eq!(engine.predict(x).unwrap(), *p);
    }
}

#[test]
fn mock_script_round_trips_through_a_file() {
    let data = sample_instances();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("script.jsonl");
    MockGenerator::echo_gold(&data).unwrap().save(&path).unwrap();
    let config = BackendConfig {
        mock_script: Some(path),
        ..BackendConfig::default()
    };
    let engine = build_engine(&config, &[]).unwrap();
    let preds = engine.predict_all(&data).unwrap();
    assert_eq!(preds, data.iter().map(gold_prediction).collect::<Vec<_>>());
}

#[test]
fn unparseable_outputs_are_values_not_errors() {
    let data = sample_instances();
    let engine = PromptEngine::new(
        MockGenerator::default().with_fallback("I am not sure."),
        OutputParser::default(),
        "mock",
    );
    let preds = engine.predict_all(&data).unwrap();
    assert_eq!(preds[0], Prediction::Order(None));
    assert_eq!(preds[1], Prediction::Index(None));
    assert_eq!(preds[2], Prediction::Relation(None));
    assert_eq!(
        preds[3],
        Prediction::Links {
            links: vec![],
            unparseable: 2
        }
    );
    assert_eq!(preds[4], Prediction::Nli(None));
    assert_eq!(preds[5], Prediction::Score(None));
    assert_eq!(preds[7], Prediction::Conditions([None; 3]));
}

#[test]
fn missing_mock_answer_is_an_error() {
    let engine = PromptEngine::new(MockGenerator::default(), OutputParser::default(), "mock");
    assert!(matches!(engine.predict(&sample_instances()[0]), Err(Error::Backend { .. })));
}

#[test]
fn config_invariants() {
    let external = BackendConfig {
        kind: BackendKind::External,
        ..BackendConfig::default()
    };
    assert!(external.validate().is_err());
    let builtin = BackendConfig {
        kind: BackendKind::Builtin,
        ..BackendConfig::default()
    };
    assert!(builtin.validate().is_err());
    let zero_tokens = BackendConfig {
        max_new_tokens: 0,
        ..BackendConfig::default()
    };
    assert!(zero_tokens.validate().is_err());
    assert!(GenerationRequest::new("p", 1, -0.5).is_err());
    assert!(GenerationRequest::new("p", 4, 0.0).is_ok());
}

struct TestServer {
    url: String,
    hits: Arc<AtomicUsize>,
    auth: Arc<Mutex<Vec<String>>>,
}

/// Minimal HTTP server answering each POST with `handler(body)`.
fn serve(handler: impl Fn(&str) -> (u16, String) + Send + Sync + 'static) -> TestServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let handler = Arc::new(handler);
    let (h, a) = (hits.clone(), auth.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (handler, hits, auth) = (handler.clone(), h.clone(), a.clone());
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth.lock().unwrap().push(line["authorization:".len()..].trim().to_string());
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                hits.fetch_add(1, Ordering::SeqCst);
                let (code, reply) = handler(std::str::from_utf8(&body).unwrap());
                let _ = write!(
                    stream,
                    "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
            });
        }
    });
    TestServer { url, hits, auth }
}

fn external(url: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::External,
        endpoint: Some(url.to_string()),
        timeout_secs: 5.0,
        max_retries: 2,
        ..BackendConfig::default()
    }
}

#[test]
fn external_engine_matches_gold_over_http_with_concurrency() {
    let data = sample_instances();
    let table: HashMap<String, String> = data
        .iter()
        .flat_map(|x| queries(x).into_iter().map(|q| (render_prompt(&q).unwrap(), render_target(&q))).collect::<Vec<_>>())
        .collect();
    let server = serve(move |body| {
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["temperature"], 0.0);
        assert!(v["max_new_tokens"].as_u64().unwrap() > 0);
        let text = &table[v["prompt"].as_str().unwrap()];
        (200, serde_json::json!({ "text": text, "extra": 1 }).to_string())
    });
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    std::env::set_var("COHERENCE_TEST_TOKEN", "s3cret");
    let config = BackendConfig {
        concurrency: 4,
        transcript_path: Some(transcript.clone()),
        bearer_token_env: Some("COHERENCE_TEST_TOKEN".into()),
        ..external(&server.url)
    };
    let engine = build_engine(&config, &[]).unwrap();
    let preds = engine.predict_all(&data).unwrap();
    assert_eq!(preds, data.iter().map(gold_prediction).collect::<Vec<_>>());
    let n_queries: usize = data.iter().map(|x| queries(x).len()).sum();
    assert_eq!(server.hits.load(Ordering::SeqCst), n_queries);
    assert!(server.auth.lock().unwrap().iter().all(|a| a == "Bearer s3cret"));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&transcript)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), n_queries);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["index"], i);
        assert!(l["text"].is_string());
    }
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = serve(|_| (503, "{}".into()));
    let g = ExternalGenerator::new(&external(&server.url)).unwrap();
    let err = g.generate(&[GenerationRequest::new("hello", 8, 0.0).unwrap()]).unwrap_err();
    assert!(matches!(err, Error::Backend { cause: Some(_), .. }), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn malformed_responses_get_one_retry() {
    let server = serve(|_| (200, "{\"txt\": 1}".into()));
    let g = ExternalGenerator::new(&external(&server.url)).unwrap();
    let err = g.generate(&[GenerationRequest::new("hello", 8, 0.0).unwrap()]).unwrap_err();
    assert!(err.to_string().contains("malformed"), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn malformed_then_good_response_succeeds() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let server = serve(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) == 0 {
            (200, "not json".into())
        } else {
            (200, "{\"text\": \"Yes\"}".into())
        }
    });
    let g = ExternalGenerator::new(&external(&server.url)).unwrap();
    let out = g.generate(&[GenerationRequest::new("hello", 8, 0.0).unwrap()]).unwrap();
    assert_eq!(out, vec!["Yes".to_string()]);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let config = BackendConfig {
        max_retries: 1,
        ..external(&format!("http://127.0.0.1:{port}/generate"))
    };
    let engine = build_engine(&config, &[]).unwrap();
    let err = engine.predict(&sample_instances()[4]).unwrap_err();
    match err {
        Error::Backend { message, cause } => {
            assert!(message.contains("2 attempts"), "{message}");
            assert!(cause.is_some());
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn builtin_engine_is_model_plus_decoder() {
    let data = sample_instances();
    let texts: Vec<String> = data
        .iter()
        .flat_map(|x| queries(x).into_iter().map(|q| render_prompt(&q).unwrap()).collect::<Vec<_>>())
        .collect();
    let vocab = Vocab::build(texts.iter().map(String::as_str));
    let drr = LabelInventory::new(vec!["Contingency.Cause".into(), "Comparison.Contrast".into()]).unwrap();
    let model = Model::init(vocab, drr, LabelInventory::prepositions(), 6, 5, 3, 13).unwrap();
    let engine = BuiltinEngine::new(model);
    for x in &data {
        let p = engine.predict(x).unwrap();
        match (x, &p) {
            (TaskInstance::Sro(s), Prediction::Order(Some(order))) => {
                assert_eq!(*order, topological_order(&engine.order_matrix(&s.shuffled).unwrap()).order);
            }
            (TaskInstance::Isr(s), Prediction::Index(Some(i))) => {
                assert_eq!(*i, isr_select(&engine.relevance_matrix(&s.sentences).unwrap()).unwrap());
            }
            (TaskInstance::Scoring(s), Prediction::Score(Some(v))) => assert!((1..=s.scale.levels()).contains(v)),
            (TaskInstance::Reasoning(_), Prediction::Conditions(c)) => {
                assert!(c.iter().all(Option::is_some));
                assert_eq!(Condition::ALL.len(), c.len());
            }
            (_, Prediction::Order(None) | Prediction::Index(None) | Prediction::Score(None)) => {
                panic!("builtin predictions are always parseable")
            }
            _ => {}
        }
        assert_eq!(engine.predict(x).unwrap(), p);
    }
}
