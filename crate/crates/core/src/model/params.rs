use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::error::{Error, Result};

/// Model sizes. `drr_labels` and `prepositions` are the class counts of
/// the DRR and NPE heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub biaffine: usize,
    pub drr_labels: usize,
    pub prepositions: usize,
}

/// Task heads on top of the shared encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadId {
    PairOrder,
    PairRelevance,
    Drr,
    Nli,
    Npe,
    Score3,
    Score5,
    Cohesion,
    Consistency,
    Relevance,
}

impl HeadId {
    pub const ALL: [HeadId; 10] = [
        HeadId::PairOrder,
        HeadId::PairRelevance,
        HeadId::Drr,
        HeadId::Nli,
        HeadId::Npe,
        HeadId::Score3,
        HeadId::Score5,
        HeadId::Cohesion,
        HeadId::Consistency,
        HeadId::Relevance,
    ];

    pub fn classes(self, dims: &Dims) -> usize {
        match self {
            HeadId::PairOrder
            | HeadId::PairRelevance
            | HeadId::Cohesion
            | HeadId::Consistency
            | HeadId::Relevance => 2,
            HeadId::Drr => dims.drr_labels,
            HeadId::Nli => 3,
            HeadId::Npe => dims.prepositions,
            HeadId::Score3 => 3,
            HeadId::Score5 => 5,
        }
    }

    /// Whether the head reads two encoded texts (otherwise one).
    pub fn is_pair(self) -> bool {
        !matches!(self, HeadId::Score3 | HeadId::Score5)
    }

    pub fn task(self) -> Task {
        match self {
            HeadId::PairOrder => Task::Sro,
            HeadId::PairRelevance => Task::Isr,
            HeadId::Drr => Task::Drr,
            HeadId::Nli => Task::Nli,
            HeadId::Npe => Task::Npe,
            HeadId::Score3 | HeadId::Score5 => Task::Scoring,
            HeadId::Cohesion | HeadId::Consistency | HeadId::Relevance => Task::Reasoning,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadId::PairOrder => "pair_order",
            HeadId::PairRelevance => "pair_relevance",
            HeadId::Drr => "drr",
            HeadId::Nli => "nli",
            HeadId::Npe => "npe",
            HeadId::Score3 => "score3",
            HeadId::Score5 => "score5",
            HeadId::Cohesion => "cohesion",
            HeadId::Consistency => "consistency",
            HeadId::Relevance => "relevance",
        }
    }
}

/// `y = W x + b`, `W` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Dense {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn random(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (out + inp) as f64).sqrt();
        Dense {
            weight: Array2::from_shape_simple_fn((out, inp), || rng.gen_range(-limit..limit)),
            bias: Array1::zeros(out),
        }
    }
}

/// Biaffine relation scorer: `score_r = (P_a u)^T R_r (P_c v) + b_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct Biaffine {
    /// `B x H`
    pub anchor: Array2<f64>,
    /// `B x H`
    pub complement: Array2<f64>,
    /// `relations x B x B`
    pub relation: Array3<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Linear(Dense),
    Biaffine(Biaffine),
}

/// All trainable parameters: embeddings, the shared encoder layer and one
/// block per head.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    /// `V x E`
    pub embeddings: Array2<f64>,
    /// `H x E`
    pub encoder: Dense,
    pub heads: BTreeMap<HeadId, Head>,
}

/// Which block of parameters a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Block {
    Shared,
    Head(HeadId),
}

impl ModelParams {
    fn build(dims: Dims, mut fill: impl FnMut(usize, usize) -> Dense, rng: Option<&mut ChaCha8Rng>) -> Self {
        let (e, h, b) = (dims.embed, dims.hidden, dims.biaffine);
        let mut heads = BTreeMap::new();
        for head in HeadId::ALL {
            let k = head.classes(&dims);
            if head == HeadId::Npe {
                continue;
            }
            let inp = if head.is_pair() { 2 * h } else { h };
            heads.insert(head, Head::Linear(fill(k, inp)));
        }
        let biaffine = match rng {
            Some(rng) => {
                let proj = (1.0 / h as f64).sqrt();
                let rel = 1.0 / b as f64;
                Biaffine {
                    anchor: Array2::from_shape_simple_fn((b, h), || rng.gen_range(-proj..proj)),
                    complement: Array2::from_shape_simple_fn((b, h), || rng.gen_range(-proj..proj)),
                    relation: Array3::from_shape_simple_fn((dims.prepositions, b, b), || rng.gen_range(-rel..rel)),
                    bias: Array1::zeros(dims.prepositions),
                }
            }
            None => Biaffine {
                anchor: Array2::zeros((b, h)),
                complement: Array2::zeros((b, h)),
                relation: Array3::zeros((dims.prepositions, b, b)),
                bias: Array1::zeros(dims.prepositions),
            },
        };
        heads.insert(HeadId::Npe, Head::Biaffine(biaffine));
        let encoder = fill(h, e);
        ModelParams {
            dims,
            embeddings: Array2::zeros((dims.vocab, e)),
            encoder,
            heads,
        }
    }

    /// All-zero parameters (also the shape of a gradient).
    pub fn zeros(dims: Dims) -> Self {
        Self::build(dims, Dense::zeros, None)
    }

    /// Seeded random initialization: uniform embeddings in `[-0.5, 0.5)`,
    /// Glorot-uniform dense weights, zero biases.
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        check_positive(&dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1CE);
        let mut biaffine_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1AF);
        let mut p = Self::build(dims, |o, i| Dense::random(o, i, &mut dense_rng), Some(&mut biaffine_rng));
        p.embeddings = Array2::from_shape_simple_fn((dims.vocab, dims.embed), || rng.gen_range(-0.5..0.5));
        Ok(p)
    }

    pub fn linear(&self, head: HeadId) -> Option<&Dense> {
        match self.heads.get(&head) {
            Some(Head::Linear(d)) => Some(d),
            _ => None,
        }
    }

    pub fn biaffine(&self) -> Option<&Biaffine> {
        match self.heads.get(&HeadId::Npe) {
            Some(Head::Biaffine(b)) => Some(b),
            _ => None,
        }
    }

    /// Every tensor with its name and block, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Block, &[f64])> {
        let mut out: Vec<(String, Block, &[f64])> = vec![
            ("embeddings".into(), Block::Shared, slice(&self.embeddings)),
            ("encoder.weight".into(), Block::Shared, slice(&self.encoder.weight)),
            ("encoder.bias".into(), Block::Shared, slice(&self.encoder.bias)),
        ];
        for (&id, head) in &self.heads {
            let b = Block::Head(id);
            let n = id.name();
            match head {
                Head::Linear(d) => {
                    out.push((format!("{n}.weight"), b, slice(&d.weight)));
                    out.push((format!("{n}.bias"), b, slice(&d.bias)));
                }
                Head::Biaffine(x) => {
                    out.push((format!("{n}.anchor"), b, slice(&x.anchor)));
                    out.push((format!("{n}.complement"), b, slice(&x.complement)));
                    out.push((format!("{n}.relation"), b, slice(&x.relation)));
                    out.push((format!("{n}.bias"), b, slice(&x.bias)));
                }
            }
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(Block, &mut [f64])> {
        let mut out: Vec<(Block, &mut [f64])> = vec![
            (Block::Shared, slice_mut(&mut self.embeddings)),
            (Block::Shared, slice_mut(&mut self.encoder.weight)),
            (Block::Shared, slice_mut(&mut self.encoder.bias)),
        ];
        for (&id, head) in self.heads.iter_mut() {
            let b = Block::Head(id);
            match head {
                Head::Linear(d) => {
                    out.push((b, slice_mut(&mut d.weight)));
                    out.push((b, slice_mut(&mut d.bias)));
                }
                Head::Biaffine(x) => {
                    out.push((b, slice_mut(&mut x.anchor)));
                    out.push((b, slice_mut(&mut x.complement)));
                    out.push((b, slice_mut(&mut x.relation)));
                    out.push((b, slice_mut(&mut x.bias)));
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// Fails unless these parameters were built for `expected`.
    pub fn check_dims(&self, expected: &Dims) -> Result<()> {
        if &self.dims != expected {
            return Err(Error::Dimension(format!(
                "parameters have {:?}, expected {:?}",
                self.dims, expected
            )));
        }
        let reference = ModelParams::zeros(*expected);
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Dimension("different tensor set".into()));
        }
        for ((name, _, a), (_, _, b)) in ours.iter().zip(&theirs) {
            if a.len() != b.len() {
                return Err(Error::Dimension(format!("tensor {name} has {} values, expected {}", a.len(), b.len())));
            }
        }
        Ok(())
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        let src = other.tensors();
        for ((_, dst), (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += alpha * v;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }
}

fn check_positive(dims: &Dims) -> Result<()> {
    let Dims {
        vocab,
        embed,
        hidden,
        biaffine,
        drr_labels,
        prepositions,
    } = *dims;
    if [vocab, embed, hidden, biaffine, drr_labels, prepositions].contains(&0) {
        return Err(Error::Dimension(format!("all dimensions must be positive: {dims:?}")));
    }
    Ok(())
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}
