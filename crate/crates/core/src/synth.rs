//! Planted synthetic corpora for every task.
//!
//! All tasks draw on one lexicon, so a shared encoder can reuse what one
//! task teaches it. Each label is a fixed function of cue words:
//!
//! * stories: sentence `k` uses a verb from stage `k`;
//! * DRR: the second unit opens with a cue word of its relation;
//! * NPE: object NPs link to place, material, time and person NPs with a
//!   preposition fixed by the complement's class;
//! * NLI: `never` marks contradiction, `perhaps` marks neutral;
//! * scoring: each replaced nonsense sentence lowers the score by one;
//! * reasoning: `then` marks cohesion, `never` inconsistency, nonsense
//!   nouns irrelevance.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_records, DrrInstance, Domain, LabelInventory, NliInstance, NliLabel, NpLink, NpeInstance, Paragraph,
    ReasoningInstance, Scale, ScoringInstance, Span,
};
use crate::error::{Error, Result};
use crate::taskgen::derive_seed;

const HEROES: [&str; 8] = ["Mara", "Tobin", "Lena", "Oskar", "Ines", "Pavel", "Rhea", "Sami"];
const FRIENDS: [&str; 10] = [
    "Alder", "Brisa", "Corin", "Dalia", "Emrys", "Fenna", "Galen", "Hedda", "Ilse", "Joren",
];
const STAGES: [[&str; 4]; 5] = [
    ["woke", "arrived", "began", "opened"],
    ["gathered", "prepared", "sorted", "measured"],
    ["built", "cooked", "painted", "repaired"],
    ["tested", "served", "showed", "shared"],
    ["rested", "left", "slept", "celebrated"],
];
const TOPICS: [[&str; 5]; 4] = [
    ["bread", "soup", "oven", "pepper", "kettle"],
    ["roses", "hedge", "seeds", "shovel", "pond"],
    ["boat", "nets", "rope", "sail", "dock"],
    ["chair", "plank", "hammer", "lathe", "bolt"],
];
const NONSENSE: [&str; 8] = ["zorb", "quillix", "mendra", "tassik", "vorn", "plimb", "ugrit", "snell"];

/// Relation inventory of the synthetic DRR data, each with two cue words.
pub const DRR_RELATIONS: [(&str, [&str; 2]); 14] = [
    ("Temporal.Synchronous", ["meanwhile", "simultaneously"]),
    ("Temporal.Asynchronous", ["afterwards", "later"]),
    ("Contingency.Cause", ["because", "therefore"]),
    ("Contingency.Cause+Belief", ["evidently", "apparently"]),
    ("Contingency.Condition", ["if", "unless"]),
    ("Contingency.Purpose", ["hoping", "aiming"]),
    ("Comparison.Contrast", ["however", "whereas"]),
    ("Comparison.Concession", ["although", "nevertheless"]),
    ("Expansion.Conjunction", ["also", "additionally"]),
    ("Expansion.Equivalence", ["namely", "equivalently"]),
    ("Expansion.Instantiation", ["example", "specifically"]),
    ("Expansion.Level-of-detail", ["indeed", "precisely"]),
    ("Expansion.Manner", ["thereby", "thus"]),
    ("Expansion.Substitution", ["instead", "rather"]),
];

const NPE_OBJECTS: [&str; 6] = ["lamp", "basket", "ladder", "jar", "crate", "bench"];
/// Complement classes and the preposition each one takes.
const NPE_COMPLEMENTS: [(&str, [&str; 3]); 4] = [
    ("in", ["kitchen", "garden", "harbor"]),
    ("of", ["oak", "iron", "wool"]),
    ("during", ["morning", "evening", "winter"]),
    ("for", ["guests", "children", "neighbors"]),
];

const GCDC_DOMAINS: [Domain; 4] = [Domain::Clinton, Domain::Enron, Domain::Yahoo, Domain::Yelp];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Five-sentence stories (the SRO/ISR source).
    pub stories: usize,
    /// Instances each of DRR, NPE, NLI and reasoning.
    pub per_task: usize,
    /// Instances each of the 3-way and 5-way scoring sets.
    pub scoring: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            stories: 200,
            per_task: 200,
            scoring: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub paragraphs: Vec<Paragraph>,
    pub drr: Vec<DrrInstance>,
    pub npe: Vec<NpeInstance>,
    pub nli: Vec<NliInstance>,
    pub gcdc: Vec<ScoringInstance>,
    pub cohesentia: Vec<ScoringInstance>,
    pub reasoning: Vec<ReasoningInstance>,
    pub drr_labels: LabelInventory,
}

/// Where [`SynthCorpus::write`] put each file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub paragraphs: PathBuf,
    pub drr: PathBuf,
    pub npe: PathBuf,
    pub nli: PathBuf,
    pub gcdc: PathBuf,
    pub cohesentia: PathBuf,
    pub reasoning: PathBuf,
    pub drr_labels: PathBuf,
}

pub fn drr_labels() -> LabelInventory {
    LabelInventory::new(DRR_RELATIONS.iter().map(|(l, _)| l.to_string()).collect()).expect("distinct labels")
}

struct Story {
    hero: &'static str,
    friend: &'static str,
    topic: usize,
}

impl Story {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Story {
            hero: HEROES.choose(rng).expect("non-empty"),
            friend: FRIENDS.choose(rng).expect("non-empty"),
            topic: rng.gen_range(0..TOPICS.len()),
        }
    }

    fn clause(&self, stage: usize, rng: &mut ChaCha8Rng) -> String {
        format!(
            "{} {} the {} with {}",
            self.hero,
            STAGES[stage].choose(rng).expect("non-empty"),
            TOPICS[self.topic].choose(rng).expect("non-empty"),
            self.friend
        )
    }

    fn sentence(&self, stage: usize, rng: &mut ChaCha8Rng) -> String {
        format!("{}.", self.clause(stage, rng))
    }

    fn sentences(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..STAGES.len()).map(|k| self.sentence(k, rng)).collect()
    }
}

fn nonsense_sentence(rng: &mut ChaCha8Rng) -> String {
    let w: Vec<&str> = NONSENSE.choose_multiple(rng, 4).copied().collect();
    let mut first = w[0].to_string();
    first[..1].make_ascii_uppercase();
    format!("{first} {} the {} with {}.", w[1], w[2], w[3])
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

fn story_paragraphs(n: usize, rng: &mut ChaCha8Rng) -> Vec<Paragraph> {
    (0..n)
        .map(|i| {
            let s = Story::draw(rng);
            let mut p = Paragraph::new(format!("story-{i}"), s.sentences(rng));
            p.title = Some(format!("The {}", TOPICS[s.topic][0]));
            p
        })
        .collect()
}

fn drr_instances(n: usize, rng: &mut ChaCha8Rng) -> Vec<DrrInstance> {
    (0..n)
        .map(|_| {
            let s = Story::draw(rng);
            let (label, cues) = DRR_RELATIONS.choose(rng).expect("non-empty");
            let cue = *cues.choose(rng).expect("non-empty");
            let stage = rng.gen_range(0..STAGES.len());
            DrrInstance {
                du1: s.clause(stage, rng),
                du2: format!("{cue} {}", s.clause((stage + 1) % STAGES.len(), rng)),
                gold_l2: vec![label.to_string()],
                gold_connector: Some(cue.to_string()),
                gold_l1: None,
            }
        })
        .collect()
}

fn npe_instances(n: usize, rng: &mut ChaCha8Rng) -> Vec<NpeInstance> {
    (0..n)
        .map(|_| {
            let hero = *HEROES.choose(rng).expect("non-empty");
            let objects: Vec<&str> = NPE_OBJECTS.choose_multiple(rng, 2).copied().collect();
            let classes: Vec<usize> = (0..NPE_COMPLEMENTS.len()).collect::<Vec<_>>().choose_multiple(rng, 2).copied().collect();
            // NP order: object, complement, object, complement.
            let mut nouns = Vec::new();
            let mut prep_of = Vec::new();
            for k in 0..2 {
                nouns.push(objects[k]);
                prep_of.push(None);
                let (prep, words) = NPE_COMPLEMENTS[classes[k]];
                nouns.push(*words.choose(rng).expect("non-empty"));
                prep_of.push(Some(prep));
            }
            let mut tokens = vec![hero.to_string(), "moved".to_string()];
            let mut nps = Vec::new();
            for (i, noun) in nouns.iter().enumerate() {
                if i > 0 {
                    tokens.push(if i % 2 == 1 { "beside" } else { "and" }.to_string());
                }
                let start = tokens.len();
                tokens.push("the".into());
                tokens.push(noun.to_string());
                nps.push(Span(start, tokens.len()));
            }
            let mut links = Vec::new();
            for a in 0..nps.len() {
                if prep_of[a].is_some() {
                    continue;
                }
                for c in 0..nps.len() {
                    if let Some(p) = prep_of[c] {
                        links.push(NpLink::new(a, c, p));
                    }
                }
            }
            NpeInstance { tokens, nps, links }
        })
        .collect()
}

fn nli_instances(n: usize, rng: &mut ChaCha8Rng) -> Vec<NliInstance> {
    (0..n)
        .map(|_| {
            let s = Story::draw(rng);
            let stage = rng.gen_range(0..STAGES.len());
            let verb = *STAGES[stage].choose(rng).expect("non-empty");
            let noun = *TOPICS[s.topic].choose(rng).expect("non-empty");
            let premise = format!("{} {verb} the {noun} with {}.", s.hero, s.friend);
            let gold = *NliLabel::ALL.choose(rng).expect("non-empty");
            let hypothesis = match gold {
                NliLabel::Entailment => format!("{} {verb} the {noun}.", s.hero),
                NliLabel::Contradiction => format!("{} never {verb} the {noun}.", s.hero),
                NliLabel::Neutral => {
                    let other = *TOPICS[(s.topic + 1) % TOPICS.len()].choose(rng).expect("non-empty");
                    format!("{} perhaps {verb} the {other}.", s.hero)
                }
            };
            NliInstance {
                premise,
                hypothesis,
                gold,
            }
        })
        .collect()
}

fn scoring_instances(n: usize, scale: Scale, id_prefix: &str, rng: &mut ChaCha8Rng) -> Vec<ScoringInstance> {
    let levels = scale.levels() as usize;
    (0..n)
        .map(|i| {
            let s = Story::draw(rng);
            let mut sentences = s.sentences(rng);
            let score = rng.gen_range(1..=levels);
            let broken = levels - score;
            let mut slots: Vec<usize> = (0..sentences.len()).collect();
            slots.shuffle(rng);
            for &k in &slots[..broken] {
                sentences[k] = nonsense_sentence(rng);
            }
            let mut p = Paragraph::new(format!("{id_prefix}-{i}"), sentences);
            match scale {
                Scale::ThreeWay => p.domain = GCDC_DOMAINS[i % GCDC_DOMAINS.len()],
                Scale::FiveWay => {
                    p.domain = Domain::Fiction;
                    p.title = Some(format!("The {}", TOPICS[s.topic][0]));
                }
            }
            ScoringInstance {
                paragraph: p,
                scale,
                gold_score: score as u8,
            }
        })
        .collect()
}

fn reasoning_instances(n: usize, rng: &mut ChaCha8Rng) -> Vec<ReasoningInstance> {
    (0..n)
        .map(|_| {
            let s = Story::draw(rng);
            let m = rng.gen_range(1..STAGES.len());
            let prefix: Vec<String> = (0..m).map(|k| s.sentence(k, rng)).collect();
            let gold: [bool; 3] = [rng.gen(), rng.gen(), rng.gen()];
            let verb = *STAGES[m].choose(rng).expect("non-empty");
            let noun = if gold[2] {
                *TOPICS[s.topic].choose(rng).expect("non-empty")
            } else {
                *NONSENSE.choose(rng).expect("non-empty")
            };
            let negation = if gold[1] { "" } else { "never " };
            let body = format!("{} {negation}{verb} the {noun} with {}.", s.hero, s.friend);
            let new_sentence = if gold[0] { format!("Then {body}") } else { body };
            ReasoningInstance {
                prefix,
                new_sentence,
                gold,
            }
        })
        .collect()
}

/// Generates every synthetic dataset. Each dataset has its own stream, so
/// changing one size leaves the others unchanged.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.stories < 2 {
        return Err(Error::invalid("stories", "need at least 2 stories"));
    }
    let seed = config.seed;
    Ok(SynthCorpus {
        paragraphs: story_paragraphs(config.stories, &mut rng_for(seed, 0)),
        drr: drr_instances(config.per_task, &mut rng_for(seed, 1)),
        npe: npe_instances(config.per_task, &mut rng_for(seed, 2)),
        nli: nli_instances(config.per_task, &mut rng_for(seed, 3)),
        gcdc: scoring_instances(config.scoring, Scale::ThreeWay, "gcdc", &mut rng_for(seed, 4)),
        cohesentia: scoring_instances(config.scoring, Scale::FiveWay, "cohesentia", &mut rng_for(seed, 5)),
        reasoning: reasoning_instances(config.per_task, &mut rng_for(seed, 6)),
        drr_labels: drr_labels(),
    })
}

impl SynthCorpus {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SynthFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SynthFiles {
            paragraphs: dir.join("paragraphs.jsonl"),
            drr: dir.join("drr.jsonl"),
            npe: dir.join("npe.jsonl"),
            nli: dir.join("nli.jsonl"),
            gcdc: dir.join("gcdc.jsonl"),
            cohesentia: dir.join("cohesentia.jsonl"),
            reasoning: dir.join("reasoning.jsonl"),
            drr_labels: dir.join("drr_labels.txt"),
        };
        write_records(&files.paragraphs, &self.paragraphs)?;
        write_records(&files.drr, &self.drr)?;
        write_records(&files.npe, &self.npe)?;
        write_records(&files.nli, &self.nli)?;
        write_records(&files.gcdc, &self.gcdc)?;
        write_records(&files.cohesentia, &self.cohesentia)?;
        write_records(&files.reasoning, &self.reasoning)?;
        self.drr_labels.save(&files.drr_labels)?;
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{check_drr_labels, load_dataset, load_paragraphs, Task};

    fn small() -> SynthConfig {
        SynthConfig {
            stories: 12,
            per_task: 30,
            scoring: 20,
            seed: 4,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = generate(&SynthConfig { seed: 5, ..small() }).unwrap();
        assert_ne!(generate(&small()).unwrap().paragraphs, other.paragraphs);
    }

    #[test]
    fn streams_are_independent() {
        let a = generate(&small()).unwrap();
        let b = generate(&SynthConfig { per_task: 31, ..small() }).unwrap();
        assert_eq!(a.paragraphs, b.paragraphs);
        assert_eq!(a.gcdc, b.gcdc);
        assert_eq!(a.drr[..], b.drr[..30]);
    }

    #[test]
    fn written_files_load_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&small()).unwrap();
        let files = c.write(dir.path()).unwrap();
        assert_eq!(load_paragraphs(&files.paragraphs).unwrap().len(), 12);
        for (path, task, n) in [
            (&files.drr, Task::Drr, 30),
            (&files.npe, Task::Npe, 30),
            (&files.nli, Task::Nli, 30),
            (&files.gcdc, Task::Scoring, 20),
            (&files.cohesentia, Task::Scoring, 20),
            (&files.reasoning, Task::Reasoning, 30),
        ] {
            assert_eq!(load_dataset(path, task).unwrap().len(), n, "{}", path.display());
        }
        check_drr_labels(&c.drr, &LabelInventory::load(&files.drr_labels).unwrap()).unwrap();
    }

    #[test]
    fn scores_track_nonsense_sentences() {
        let c = generate(&small()).unwrap();
        for x in c.gcdc.iter().chain(&c.cohesentia) {
            let broken = x
                .paragraph
                .sentences
                .iter()
                .filter(|s| NONSENSE.iter().any(|w| s.contains(w)))
                .count();
            assert_eq!(x.gold_score as usize, x.scale.levels() as usize - broken);
        }
        assert!(c.gcdc.iter().all(|x| x.scale == Scale::ThreeWay));
        assert!(c.cohesentia.iter().all(|x| x.paragraph.domain == Domain::Fiction));
    }

    #[test]
    fn reasoning_cues_match_gold() {
        for x in generate(&small()).unwrap().reasoning {
            assert_eq!(x.new_sentence.starts_with("Then "), x.gold[0]);
            assert_eq!(!x.new_sentence.contains(" never "), x.gold[1]);
        }
    }

    #[test]
    fn too_few_stories_rejected() {
        assert!(generate(&SynthConfig { stories: 1, ..small() }).is_err());
    }
}
