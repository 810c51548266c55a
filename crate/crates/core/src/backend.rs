//! Prediction engines: the built-in model, an external text-generation
//! service, and a scripted mock.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelInventory, NliLabel, NpLink, TaskInstance, NONE_PREPOSITION};
use crate::decode::{isr_select, topological_order, PairwiseMatrix};
use crate::error::{Error, Result};
use crate::model::{argmax, forward, load_checkpoint, scoring_head, HeadId, Model};
use crate::prompts::{queries, render_prompt, render_target, Answer, OutputParser, Query};

/// One call to a text generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    #[serde(default)]
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_new_tokens: usize, temperature: f64) -> Result<Self> {
        let r = GenerationRequest {
            prompt: prompt.into(),
            max_new_tokens,
            temperature,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens", "must be positive"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid("temperature", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Builtin,
    External,
    #[default]
    Mock,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_concurrency() -> usize {
    1
}
fn default_max_new_tokens() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<PathBuf>,
    /// Maximum in-flight external requests.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Pause before each external request after a worker's first.
    #[serde(default)]
    pub delay_ms: u64,
    /// Name of the environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bearer_token_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
    /// JSONL `{"prompt", "text"}` table for the mock; echoes gold when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub temperature: f64,
    /// Inventory used to parse generated NPE answers (built-in 28 when unset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prepositions_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            checkpoint_path: None,
            concurrency: default_concurrency(),
            delay_ms: 0,
            bearer_token_env: None,
            transcript_path: None,
            mock_script: None,
            max_new_tokens: default_max_new_tokens(),
            temperature: 0.0,
            prepositions_path: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BackendKind::External if self.endpoint.is_none() => {
                return Err(Error::Config("external backend needs an endpoint".into()))
            }
            BackendKind::Builtin if self.checkpoint_path.is_none() => {
                return Err(Error::Config("builtin backend needs a checkpoint path".into()))
            }
            _ => {}
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be positive".into()));
        }
        GenerationRequest {
            prompt: String::new(),
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
        }
        .validate()
    }

    fn parser(&self) -> Result<OutputParser> {
        Ok(match &self.prepositions_path {
            Some(p) => OutputParser::new(LabelInventory::load(p)?),
            None => OutputParser::default(),
        })
    }
}

/// A task-level prediction. `None` marks an unparseable generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// Same convention as `SroInstance::gold_positions`.
    Order(Option<Vec<usize>>),
    Index(Option<usize>),
    /// Predicted L2 relation.
    Relation(Option<String>),
    /// Predicted non-`NONE` links; unparseable pair answers count as `NONE`.
    Links { links: Vec<NpLink>, unparseable: u64 },
    Nli(Option<NliLabel>),
    Score(Option<u8>),
    Conditions([Option<bool>; 3]),
}

/// The contract shared by every engine.
pub trait Engine {
    fn name(&self) -> &'static str;

    fn predict(&self, instance: &TaskInstance) -> Result<Prediction>;

    /// Predictions in input order.
    fn predict_all(&self, instances: &[TaskInstance]) -> Result<Vec<Prediction>> {
        instances.iter().map(|x| self.predict(x)).collect()
    }
}

/// Classification heads of a trained model plus the decoders.
#[derive(Clone, Debug)]
pub struct BuiltinEngine {
    pub model: Model,
}

impl BuiltinEngine {
    pub fn new(model: Model) -> Self {
        BuiltinEngine { model }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_checkpoint(path).map(Self::new)
    }

    fn prob(&self, head: HeadId, a: &str, b: &str, class: usize) -> Result<f64> {
        Ok(forward(&self.model.params, head, &self.model.pair_features(a, b))?[class])
    }

    /// `P(sentence i precedes sentence j)` from the pair-order head, for
    /// every ordered pair.
    pub fn order_matrix(&self, sentences: &[String]) -> Result<PairwiseMatrix> {
        let n = sentences.len();
        let mut raw = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    raw[i][j] = self.prob(HeadId::PairOrder, &sentences[i], &sentences[j], 1)?;
                }
            }
        }
        PairwiseMatrix::from_rows(&raw)
    }

    pub fn relevance_matrix(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
        let n = sentences.len();
        let mut raw = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    raw[i][j] = self.prob(HeadId::PairRelevance, &sentences[i], &sentences[j], 1)?;
                }
            }
        }
        Ok(raw)
    }

    fn classify(&self, head: HeadId, a: &str, b: &str) -> Result<usize> {
        Ok(argmax(&forward(&self.model.params, head, &self.model.pair_features(a, b))?))
    }
}

impl Engine for BuiltinEngine {
    fn name(&self) -> &'static str {
        "builtin"
    }

    fn predict(&self, instance: &TaskInstance) -> Result<Prediction> {
        let m = &self.model;
        Ok(match instance {
            TaskInstance::Sro(x) => Prediction::Order(Some(topological_order(&self.order_matrix(&x.shuffled)?).order)),
            TaskInstance::Isr(x) => Prediction::Index(Some(isr_select(&self.relevance_matrix(&x.sentences)?)?)),
            TaskInstance::Drr(x) => {
                let k = self.classify(HeadId::Drr, &x.du1, &x.du2)?;
                Prediction::Relation(Some(m.drr_labels.label(k).to_string()))
            }
            TaskInstance::Npe(x) => {
                let mut links = Vec::new();
                for a in 0..x.nps.len() {
                    for c in 0..x.nps.len() {
                        if a == c {
                            continue;
                        }
                        let label = m.prepositions.label(self.classify(HeadId::Npe, &x.np_text(a), &x.np_text(c))?);
                        if label != NONE_PREPOSITION {
                            links.push(NpLink::new(a, c, label));
                        }
                    }
                }
                Prediction::Links { links, unparseable: 0 }
            }
            TaskInstance::Nli(x) => {
                Prediction::Nli(Some(NliLabel::ALL[self.classify(HeadId::Nli, &x.premise, &x.hypothesis)?]))
            }
            TaskInstance::Scoring(x) => {
                let probs = forward(&m.params, scoring_head(x.scale), &m.features(&x.paragraph.text()))?;
                Prediction::Score(Some(argmax(&probs) as u8 + 1))
            }
            TaskInstance::Reasoning(x) => {
                let prefix = x.prefix.join(" ");
                let mut out = [None; 3];
                for (slot, head) in out.iter_mut().zip([HeadId::Cohesion, HeadId::Consistency, HeadId::Relevance]) {
                    *slot = Some(self.classify(head, &prefix, &x.new_sentence)? == 1);
                }
                Prediction::Conditions(out)
            }
        })
    }
}

/// Something that turns prompts into text.
pub trait TextGenerator: Sync {
    /// One output per request, in request order.
    fn generate(&self, requests: &[GenerationRequest]) -> Result<Vec<String>>;
}

/// Table-driven generator.
#[derive(Clone, Debug, Default)]
pub struct MockGenerator {
    script: HashMap<String, String>,
    fallback: Option<String>,
    conflicts: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptLine {
    prompt: String,
    text: String,
}

impl MockGenerator {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut g = MockGenerator::default();
        for (p, t) in pairs {
            g.insert(p, t);
        }
        g
    }

    fn insert(&mut self, prompt: String, text: String) {
        match self.script.get(&prompt) {
            Some(existing) if *existing != text => self.conflicts += 1,
            Some(_) => {}
            None => {
                self.script.insert(prompt, text);
            }
        }
    }

    /// Answers every query of `instances` with its gold target. When two
    /// queries share a prompt but not a target the first one wins.
    pub fn echo_gold(instances: &[TaskInstance]) -> Result<Self> {
        let mut g = MockGenerator::default();
        for inst in instances {
            for q in queries(inst) {
                g.insert(render_prompt(&q)?, render_target(&q));
            }
        }
        Ok(g)
    }

    /// Text returned for prompts missing from the table; without one, a
    /// missing prompt is an error.
    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    /// Prompts seen with more than one distinct answer.
    pub fn conflicts(&self) -> usize {
        self.conflicts
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: ScriptLine = serde_json::from_str(line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            pairs.push((l.prompt, l.text));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut entries: Vec<_> = self.script.iter().collect();
        entries.sort();
        let mut out = String::new();
        for (prompt, text) in entries {
            out.push_str(&serde_json::to_string(&ScriptLine {
                prompt: prompt.clone(),
                text: text.clone(),
            })?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl TextGenerator for MockGenerator {
    fn generate(&self, requests: &[GenerationRequest]) -> Result<Vec<String>> {
        requests
            .iter()
            .map(|r| {
                self.script
                    .get(&r.prompt)
                    .or(self.fallback.as_ref())
                    .cloned()
                    .ok_or_else(|| Error::backend(format!("mock has no answer for prompt {:?}", r.prompt)))
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct GenerationResponse {
    text: String,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    index: usize,
    request: &'a GenerationRequest,
    attempts: u32,
    text: Option<&'a str>,
    error: Option<String>,
}

/// HTTP client for a JSON text-generation endpoint: POST
/// `{"prompt", "max_new_tokens", "temperature"}`, reply `{"text"}`.
pub struct ExternalGenerator {
    endpoint: String,
    agent: ureq::Agent,
    max_retries: u32,
    concurrency: usize,
    delay: Duration,
    bearer_token: Option<String>,
    transcript: Option<PathBuf>,
}

enum Failure {
    Transport(Box<dyn std::error::Error + Send + Sync>),
    Malformed(String),
}

impl ExternalGenerator {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config("external backend needs an endpoint".into()))?;
        let bearer_token = match &config.bearer_token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(ExternalGenerator {
            endpoint,
            agent,
            max_retries: config.max_retries,
            concurrency: config.concurrency.max(1),
            delay: Duration::from_millis(config.delay_ms),
            bearer_token,
            transcript: config.transcript_path.clone(),
        })
    }

    fn attempt(&self, request: &GenerationRequest) -> std::result::Result<String, Failure> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(token) = &self.bearer_token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let response = call.send_json(request).map_err(|e| Failure::Transport(Box::new(e)))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Failure::Transport(format!("HTTP status {status}").into()));
        }
        let body = response
            .into_body()
            .read_to_string()
            .map_err(|e| Failure::Transport(Box::new(e)))?;
        serde_json::from_str::<GenerationResponse>(&body)
            .map(|r| r.text)
            .map_err(|e| Failure::Malformed(format!("{e}: {body:.200}")))
    }

    /// Transport failures are retried `max_retries` times; a malformed
    /// body is retried once.
    fn call(&self, request: &GenerationRequest) -> (Result<String>, u32) {
        let (mut transport, mut malformed, mut attempts) = (0u32, 0u32, 0u32);
        loop {
            attempts += 1;
            match self.attempt(request) {
                Ok(text) => return (Ok(text), attempts),
                Err(Failure::Transport(cause)) => {
                    transport += 1;
                    if transport > self.max_retries {
                        return (
                            Err(Error::Backend {
                                message: format!("request to {} failed after {attempts} attempts", self.endpoint),
                                cause: Some(cause),
                            }),
                            attempts,
                        );
                    }
                }
                Err(Failure::Malformed(msg)) => {
                    malformed += 1;
                    if malformed > 1 {
                        return (Err(Error::backend(format!("malformed response: {msg}"))), attempts);
                    }
                }
            }
            if !self.delay.is_zero() {
                std::thread::sleep(self.delay);
            }
        }
    }

    fn write_transcript(&self, requests: &[GenerationRequest], results: &[(Result<String>, u32)]) -> Result<()> {
        let Some(path) = &self.transcript else {
            return Ok(());
        };
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        for (index, (request, (result, attempts))) in requests.iter().zip(results).enumerate() {
            let line = TranscriptLine {
                index,
                request,
                attempts: *attempts,
                text: result.as_ref().ok().map(String::as_str),
                error: result.as_ref().err().map(ToString::to_string),
            };
            writeln!(f, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

impl TextGenerator for ExternalGenerator {
    fn generate(&self, requests: &[GenerationRequest]) -> Result<Vec<String>> {
        for r in requests {
            r.validate()?;
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<(Result<String>, u32)>>> = Mutex::new((0..requests.len()).map(|_| None).collect());
        let workers = self.concurrency.min(requests.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| {
                    let mut first = true;
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= requests.len() {
                            break;
                        }
                        if !first && !self.delay.is_zero() {
                            std::thread::sleep(self.delay);
                        }
                        first = false;
                        let outcome = self.call(&requests[i]);
                        slots.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
                    }
                });
            }
        });
        let results: Vec<(Result<String>, u32)> = slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|s| s.expect("every request handled"))
            .collect();
        self.write_transcript(requests, &results)?;
        results.into_iter().map(|(r, _)| r).collect()
    }
}

/// Renders prompts, generates, and parses the outputs.
pub struct PromptEngine<G> {
    pub generator: G,
    pub parser: OutputParser,
    pub max_new_tokens: usize,
    pub temperature: f64,
    name: &'static str,
}

impl<G: TextGenerator> PromptEngine<G> {
    pub fn new(generator: G, parser: OutputParser, name: &'static str) -> Self {
        PromptEngine {
            generator,
            parser,
            max_new_tokens: default_max_new_tokens(),
            temperature: 0.0,
            name,
        }
    }

    pub fn with_generation(mut self, max_new_tokens: usize, temperature: f64) -> Self {
        self.max_new_tokens = max_new_tokens;
        self.temperature = temperature;
        self
    }

    fn assemble(&self, instance: &TaskInstance, qs: &[Query<'_>], texts: &[String]) -> Prediction {
        let answers: Vec<Answer> = qs
            .iter()
            .zip(texts)
            .map(|(q, t)| self.parser.parse_output(q.kind(), t))
            .collect();
        match instance {
            TaskInstance::Sro(x) => Prediction::Order(match &answers[0] {
                Answer::Positions(p) if p.len() == x.shuffled.len() => Some(p.clone()),
                _ => None,
            }),
            TaskInstance::Isr(x) => Prediction::Index(match answers[0] {
                Answer::Index(i) if i < x.sentences.len() => Some(i),
                _ => None,
            }),
            TaskInstance::Drr(_) => Prediction::Relation(match &answers[0] {
                Answer::Relation(t) => Some(t.l2.clone()),
                _ => None,
            }),
            TaskInstance::Npe(_) => {
                let mut links = Vec::new();
                let mut unparseable = 0;
                for (q, a) in qs.iter().zip(&answers) {
                    let Query::Npe { anchor, complement, .. } = q else { continue };
                    match a {
                        Answer::Preposition(p) if p != NONE_PREPOSITION => {
                            links.push(NpLink::new(*anchor, *complement, p.clone()))
                        }
                        Answer::Preposition(_) => {}
                        _ => unparseable += 1,
                    }
                }
                Prediction::Links { links, unparseable }
            }
            TaskInstance::Nli(_) => Prediction::Nli(match answers[0] {
                Answer::Nli(l) => Some(l),
                _ => None,
            }),
            TaskInstance::Scoring(x) => Prediction::Score(match answers[0] {
                Answer::Score(s) if (1..=x.scale.levels()).contains(&s) => Some(s),
                _ => None,
            }),
            TaskInstance::Reasoning(_) => {
                let mut out = [None; 3];
                for (slot, a) in out.iter_mut().zip(&answers) {
                    if let Answer::YesNo(b) = a {
                        *slot = Some(*b);
                    }
                }
                Prediction::Conditions(out)
            }
        }
    }
}

impl<G: TextGenerator> Engine for PromptEngine<G> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn predict(&self, instance: &TaskInstance) -> Result<Prediction> {
        Ok(self.predict_all(std::slice::from_ref(instance))?.remove(0))
    }

    /// All prompts of the batch go to the generator in one call.
    fn predict_all(&self, instances: &[TaskInstance]) -> Result<Vec<Prediction>> {
        let per: Vec<Vec<Query<'_>>> = instances.iter().map(queries).collect();
        let mut requests = Vec::new();
        for q in per.iter().flatten() {
            requests.push(GenerationRequest::new(render_prompt(q)?, self.max_new_tokens, self.temperature)?);
        }
        let texts = self.generator.generate(&requests)?;
        if texts.len() != requests.len() {
            return Err(Error::backend(format!(
                "generator returned {} outputs for {} prompts",
                texts.len(),
                requests.len()
            )));
        }
        let mut offset = 0;
        let mut out = Vec::with_capacity(instances.len());
        for (inst, qs) in instances.iter().zip(&per) {
            out.push(self.assemble(inst, qs, &texts[offset..offset + qs.len()]));
            offset += qs.len();
        }
        Ok(out)
    }
}

/// Builds the configured engine. A mock without a script echoes the gold
/// answers of `reference`.
pub fn build_engine(config: &BackendConfig, reference: &[TaskInstance]) -> Result<Box<dyn Engine>> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Builtin => Box::new(BuiltinEngine::load(
            config.checkpoint_path.as_ref().expect("validated"),
        )?),
        BackendKind::External => Box::new(
            PromptEngine::new(ExternalGenerator::new(config)?, config.parser()?, "external")
                .with_generation(config.max_new_tokens, config.temperature),
        ),
        BackendKind::Mock => {
            let generator = match &config.mock_script {
                Some(p) => MockGenerator::load(p)?,
                None => MockGenerator::echo_gold(reference)?,
            };
            Box::new(
                PromptEngine::new(generator, config.parser()?, "mock")
                    .with_generation(config.max_new_tokens, config.temperature),
            )
        }
    })
}
