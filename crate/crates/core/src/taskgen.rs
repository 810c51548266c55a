//! Self-supervised SRO and ISR construction, and expansion of both into
//! the sentence-pair examples consumed by the pairwise heads.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{IsrInstance, Paragraph, SroInstance};
use crate::error::{Error, Result};

/// Function words ignored by the fallback overlap test.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "if", "then", "so", "of", "to", "in", "on", "at", "for",
    "with", "by", "from", "as", "is", "was", "are", "were", "be", "been", "it", "its", "he", "she",
    "they", "his", "her", "their", "him", "them", "i", "we", "you", "my", "our", "your", "this",
    "that", "these", "those", "not", "no", "do", "does", "did",
];

fn words(sentence: &str) -> impl Iterator<Item = &str> {
    sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
}

/// Capitalized tokens that do not start their sentence, lowercased.
pub fn entities(sentences: &[String]) -> HashSet<String> {
    sentences
        .iter()
        .flat_map(|s| {
            words(s)
                .skip(1)
                .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
                .map(str::to_lowercase)
        })
        .collect()
}

/// Lowercased tokens that are not stopwords.
pub fn content_tokens(sentences: &[String]) -> HashSet<String> {
    sentences
        .iter()
        .flat_map(|s| words(s).map(str::to_lowercase))
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// The tokens a foreign sentence must share with a story: its entities,
/// or its content tokens when it has none.
pub fn overlap_keys(story: &[String]) -> HashSet<String> {
    let e = entities(story);
    if e.is_empty() {
        content_tokens(story)
    } else {
        e
    }
}

/// Whether `sentence` mentions at least one overlap key of `story`.
pub fn shares_entity(story: &[String], sentence: &str) -> bool {
    let keys = overlap_keys(story);
    words(sentence).any(|w| keys.contains(&w.to_lowercase()))
}

/// Mixes a root seed with an item index into an independent per-item seed.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffles a paragraph into an SRO instance. The identity arrangement is
/// never produced.
pub fn make_sro(paragraph: &Paragraph, seed: u64) -> Result<SroInstance> {
    let n = paragraph.sentences.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "nothing to shuffle: paragraph {:?} has {n} sentence(s)",
            paragraph.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity: Vec<usize> = (0..n).collect();
    let mut perm = identity.clone();
    loop {
        perm.shuffle(&mut rng);
        if perm != identity {
            break;
        }
    }
    // shuffled[k] = original[perm[k]]
    let shuffled = perm.iter().map(|&i| paragraph.sentences[i].clone()).collect();
    let mut gold_positions = vec![0; n];
    for (k, &orig) in perm.iter().enumerate() {
        gold_positions[orig] = k;
    }
    Ok(SroInstance {
        shuffled,
        gold_positions,
    })
}

/// Inserts `sentence` before position `position` (0..=N) of the paragraph.
pub fn inject(paragraph: &Paragraph, sentence: &str, position: usize) -> Result<IsrInstance> {
    let n = paragraph.sentences.len();
    if position > n {
        return Err(Error::Precondition(format!("insert position {position} beyond {n} sentences")));
    }
    let mut sentences = paragraph.sentences.clone();
    sentences.insert(position, sentence.to_string());
    Ok(IsrInstance {
        sentences,
        irrelevant_index: position,
    })
}

/// Injects one foreign sentence sharing an entity with the paragraph at a
/// uniformly random position.
///
/// Candidates are the sentences of pool paragraphs with a different id that
/// do not already occur in the target paragraph.
pub fn make_isr(paragraph: &Paragraph, pool: &[Paragraph], seed: u64) -> Result<IsrInstance> {
    let keys = overlap_keys(&paragraph.sentences);
    let own: HashSet<&str> = paragraph.sentences.iter().map(String::as_str).collect();
    let candidates: Vec<&str> = pool
        .iter()
        .filter(|p| p.id != paragraph.id)
        .flat_map(|p| p.sentences.iter().map(String::as_str))
        .filter(|s| !own.contains(s))
        .filter(|s| words(s).any(|w| keys.contains(&w.to_lowercase())))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Precondition(format!(
            "no candidate: no foreign sentence shares an entity with paragraph {:?}",
            paragraph.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = candidates[rng.gen_range(0..candidates.len())];
    let position = rng.gen_range(0..=paragraph.sentences.len());
    inject(paragraph, sentence, position)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    ABeforeB,
    BBeforeA,
}

impl PairOrder {
    /// Class index used by the pair-order head (1 = a before b).
    pub fn class(self) -> usize {
        match self {
            PairOrder::ABeforeB => 1,
            PairOrder::BBeforeA => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl Relevance {
    /// Class index used by the pair-relevance head (1 = relevant).
    pub fn class(self) -> usize {
        match self {
            Relevance::Relevant => 1,
            Relevance::Irrelevant => 0,
        }
    }
}

/// A sentence pair `(a, b)` taken from positions `a_index < b_index` of the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderedPairExample {
    pub s_a: String,
    pub s_b: String,
    pub a_index: usize,
    pub b_index: usize,
    pub label: PairOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevancePairExample {
    pub s_a: String,
    pub s_b: String,
    pub a_index: usize,
    pub b_index: usize,
    pub label: Relevance,
}

/// One example per unordered pair of shuffled sentences.
pub fn expand_sro_pairs(instance: &SroInstance) -> Vec<OrderedPairExample> {
    let n = instance.shuffled.len();
    let mut rank = vec![0; n];
    for (orig, &pos) in instance.gold_positions.iter().enumerate() {
        rank[pos] = orig;
    }
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(OrderedPairExample {
                s_a: instance.shuffled[i].clone(),
                s_b: instance.shuffled[j].clone(),
                a_index: i,
                b_index: j,
                label: if rank[i] < rank[j] {
                    PairOrder::ABeforeB
                } else {
                    PairOrder::BBeforeA
                },
            });
        }
    }
    out
}

/// One example per unordered pair; pairs touching the injected sentence are irrelevant.
pub fn expand_isr_pairs(instance: &IsrInstance) -> Vec<RelevancePairExample> {
    let n = instance.sentences.len();
    let bad = instance.irrelevant_index;
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(RelevancePairExample {
                s_a: instance.sentences[i].clone(),
                s_b: instance.sentences[j].clone(),
                a_index: i,
                b_index: j,
                label: if i == bad || j == bad {
                    Relevance::Irrelevant
                } else {
                    Relevance::Relevant
                },
            });
        }
    }
    out
}

/// Counts of what [`build_proxy_sets`] produced and skipped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub paragraphs: usize,
    pub sro: usize,
    pub isr: usize,
    pub skipped_too_short: usize,
    pub skipped_no_candidate: usize,
}

/// Builds SRO and ISR instances for every paragraph, seeding paragraph `i`
/// from `derive_seed(root_seed, i)`. The whole corpus is the injection pool.
pub fn build_proxy_sets(
    paragraphs: &[Paragraph],
    root_seed: u64,
) -> (Vec<SroInstance>, Vec<IsrInstance>, BuildSummary) {
    let mut summary = BuildSummary {
        paragraphs: paragraphs.len(),
        ..Default::default()
    };
    let mut sro = Vec::new();
    let mut isr = Vec::new();
    for (i, p) in paragraphs.iter().enumerate() {
        let seed = derive_seed(root_seed, i as u64);
        match make_sro(p, seed) {
            Ok(x) => sro.push(x),
            Err(_) => summary.skipped_too_short += 1,
        }
        match make_isr(p, paragraphs, seed ^ 0x5151) {
            Ok(x) => isr.push(x),
            Err(_) => summary.skipped_no_candidate += 1,
        }
    }
    summary.sro = sro.len();
    summary.isr = isr.len();
    (sro, isr, summary)
}
