//! Forward pass, cross-entropy loss and hand-derived gradients.

use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Biaffine, Dense, Head, HeadId, ModelParams};
use crate::error::{Error, Result};

/// Token ids of one text, or of two texts for pair heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    pub first: Vec<u32>,
    pub second: Option<Vec<u32>>,
}

impl Features {
    pub fn single(ids: Vec<u32>) -> Self {
        Features { first: ids, second: None }
    }

    pub fn pair(a: Vec<u32>, b: Vec<u32>) -> Self {
        Features {
            first: a,
            second: Some(b),
        }
    }
}

/// One training example. Most examples have one target; reasoning examples
/// carry one per condition head. The example loss is the sum over targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub features: Features,
    pub targets: Vec<(HeadId, usize)>,
}

impl Example {
    pub fn new(features: Features, head: HeadId, label: usize) -> Self {
        Example {
            features,
            targets: vec![(head, label)],
        }
    }
}

/// Dropout rates and the seed of the mask stream for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub encoder: f64,
    pub head: f64,
    pub seed: u64,
}

struct Masker {
    encoder: f64,
    head: f64,
    rng: ChaCha8Rng,
}

impl Masker {
    fn new(spec: DropoutSpec) -> Self {
        Masker {
            encoder: spec.encoder,
            head: spec.head,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        }
    }

    /// Inverted-dropout mask: entries are 0 or 1/(1-p).
    fn mask(&mut self, n: usize, p: f64) -> Option<Array1<f64>> {
        if p <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - p);
        Some(Array1::from_shape_fn(n, |_| if self.rng.gen::<f64>() < p { 0.0 } else { keep }))
    }
}

fn apply(mask: &Option<Array1<f64>>, v: Array1<f64>) -> Array1<f64> {
    match mask {
        Some(m) => v * m,
        None => v,
    }
}

struct TextTrace {
    ids: Vec<u32>,
    pooled: Array1<f64>,
    hidden: Array1<f64>,
    mask: Option<Array1<f64>>,
    out: Array1<f64>,
}

fn check_ids(params: &ModelParams, ids: &[u32]) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= params.dims.vocab) {
        return Err(Error::Dimension(format!(
            "token id {bad} outside vocabulary of {}",
            params.dims.vocab
        )));
    }
    Ok(())
}

fn mean_pool(params: &ModelParams, ids: &[u32]) -> Array1<f64> {
    let mut e = Array1::zeros(params.dims.embed);
    if ids.is_empty() {
        return e;
    }
    for &id in ids {
        e += &params.embeddings.row(id as usize);
    }
    e / ids.len() as f64
}

fn encode_trace(params: &ModelParams, ids: &[u32], masker: &mut Option<Masker>) -> TextTrace {
    let pooled = mean_pool(params, ids);
    let hidden = (params.encoder.weight.dot(&pooled) + &params.encoder.bias).mapv(f64::tanh);
    let mask = match masker {
        Some(m) => {
            let p = m.encoder;
            m.mask(hidden.len(), p)
        }
        None => None,
    };
    let out = apply(&mask, hidden.clone());
    TextTrace {
        ids: ids.to_vec(),
        pooled,
        hidden,
        mask,
        out,
    }
}

/// Encodes token ids: mean-pooled embeddings through `tanh(W e + b)`.
/// An empty input pools to the zero vector.
pub fn encode(params: &ModelParams, ids: &[u32]) -> Result<Array1<f64>> {
    check_ids(params, ids)?;
    Ok(encode_trace(params, ids, &mut None).out)
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

fn log_sum_exp(logits: ArrayView1<f64>) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + logits.mapv(|v| (v - max).exp()).sum().ln()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

enum HeadTrace {
    Linear {
        input: Array1<f64>,
        mask: Option<Array1<f64>>,
    },
    Biaffine {
        u: Array1<f64>,
        v: Array1<f64>,
        mask_u: Option<Array1<f64>>,
        mask_v: Option<Array1<f64>>,
        a: Array1<f64>,
        c: Array1<f64>,
    },
}

fn biaffine_logits(b: &Biaffine, a: &Array1<f64>, c: &Array1<f64>) -> Array1<f64> {
    let r = b.bias.len();
    Array1::from_shape_fn(r, |k| a.dot(&b.relation.slice(s![k, .., ..]).dot(c)) + b.bias[k])
}

fn head_logits(
    params: &ModelParams,
    head: HeadId,
    first: &TextTrace,
    second: Option<&TextTrace>,
    masker: &mut Option<Masker>,
) -> Result<(Array1<f64>, HeadTrace)> {
    let block = params
        .heads
        .get(&head)
        .ok_or_else(|| Error::Dimension(format!("model has no {} head", head.name())))?;
    match (head.is_pair(), second) {
        (true, None) => return Err(Error::Dimension(format!("{} head needs a text pair", head.name()))),
        (false, Some(_)) => return Err(Error::Dimension(format!("{} head takes a single text", head.name()))),
        _ => {}
    }
    let head_p = masker.as_ref().map_or(0.0, |m| m.head);
    match block {
        Head::Linear(Dense { weight, bias }) => {
            let mut input = Array1::zeros(weight.ncols());
            let h = first.out.len();
            input.slice_mut(s![..h]).assign(&first.out);
            if let Some(second) = second {
                input.slice_mut(s![h..]).assign(&second.out);
            }
            let mask = masker.as_mut().and_then(|m| m.mask(input.len(), head_p));
            let input = apply(&mask, input);
            Ok((weight.dot(&input) + bias, HeadTrace::Linear { input, mask }))
        }
        Head::Biaffine(b) => {
            let second = second.expect("checked above");
            let mask_u = masker.as_mut().and_then(|m| m.mask(first.out.len(), head_p));
            let mask_v = masker.as_mut().and_then(|m| m.mask(second.out.len(), head_p));
            let u = apply(&mask_u, first.out.clone());
            let v = apply(&mask_v, second.out.clone());
            let a = b.anchor.dot(&u);
            let c = b.complement.dot(&v);
            Ok((
                biaffine_logits(b, &a, &c),
                HeadTrace::Biaffine {
                    u,
                    v,
                    mask_u,
                    mask_v,
                    a,
                    c,
                },
            ))
        }
    }
}

/// Class probabilities of `head` for one input (evaluation mode).
pub fn forward(params: &ModelParams, head: HeadId, features: &Features) -> Result<Vec<f64>> {
    check_ids(params, &features.first)?;
    if let Some(s) = &features.second {
        check_ids(params, s)?;
    }
    let mut none = None;
    let first = encode_trace(params, &features.first, &mut none);
    let second = features.second.as_ref().map(|ids| encode_trace(params, ids, &mut none));
    let (logits, _) = head_logits(params, head, &first, second.as_ref(), &mut none)?;
    Ok(softmax(logits.view()).to_vec())
}

/// Predicted class of `head`, lowest index on ties.
pub fn predict(params: &ModelParams, head: HeadId, features: &Features) -> Result<usize> {
    Ok(argmax(&forward(params, head, features)?))
}

/// Parameter gradient plus the set of heads that received any signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub params: ModelParams,
    pub touched: BTreeSet<HeadId>,
}

impl Gradient {
    pub fn zeros(params: &ModelParams) -> Self {
        Gradient {
            params: ModelParams::zeros(params.dims),
            touched: BTreeSet::new(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradient) {
        self.params.add_scaled(1.0, &other.params);
        self.touched.extend(other.touched.iter().copied());
    }
}

fn add_outer(m: &mut Array2<f64>, alpha: f64, col: &Array1<f64>, row: &Array1<f64>) {
    for (i, &ci) in col.iter().enumerate() {
        let s = alpha * ci;
        if s == 0.0 {
            continue;
        }
        for (j, &rj) in row.iter().enumerate() {
            m[[i, j]] += s * rj;
        }
    }
}

fn backprop_text(params: &ModelParams, grad: &mut ModelParams, trace: &TextTrace, d_out: Array1<f64>) {
    let dh = apply(&trace.mask, d_out);
    let d_pre = dh * trace.hidden.mapv(|h| 1.0 - h * h);
    add_outer(&mut grad.encoder.weight, 1.0, &d_pre, &trace.pooled);
    grad.encoder.bias += &d_pre;
    if trace.ids.is_empty() {
        return;
    }
    let d_pooled = params.encoder.weight.t().dot(&d_pre) / trace.ids.len() as f64;
    for &id in &trace.ids {
        let mut row = grad.embeddings.row_mut(id as usize);
        row += &d_pooled;
    }
}

fn head_grad_mut(grad: &mut ModelParams, head: HeadId) -> &mut Head {
    grad.heads.get_mut(&head).expect("gradient has every head")
}

/// Mean cross-entropy over the batch (summed over each example's targets)
/// and its exact gradient. With `dropout`, masks are drawn from a stream
/// seeded by `dropout.seed` in example order, so repeated calls agree.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[&Example],
    dropout: Option<DropoutSpec>,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::Precondition("loss over an empty batch".into()));
    }
    let mut grad = Gradient::zeros(params);
    let mut masker = dropout.map(Masker::new);
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;

    for ex in batch {
        check_ids(params, &ex.features.first)?;
        if let Some(s) = &ex.features.second {
            check_ids(params, s)?;
        }
        if ex.targets.is_empty() {
            return Err(Error::Precondition("example without targets".into()));
        }
        let first = encode_trace(params, &ex.features.first, &mut masker);
        let second = ex
            .features
            .second
            .as_ref()
            .map(|ids| encode_trace(params, ids, &mut masker));
        let hsize = params.dims.hidden;
        let mut d_first = Array1::<f64>::zeros(hsize);
        let mut d_second = Array1::<f64>::zeros(hsize);

        for &(head, label) in &ex.targets {
            let classes = head.classes(&params.dims);
            if label >= classes {
                return Err(Error::invalid(
                    "label",
                    format!("label {label} out of range for {} classes of {}", classes, head.name()),
                ));
            }
            let (logits, trace) = head_logits(params, head, &first, second.as_ref(), &mut masker)?;
            total += log_sum_exp(logits.view()) - logits[label];
            let mut dz = softmax(logits.view());
            dz[label] -= 1.0;
            dz *= scale;
            grad.touched.insert(head);

            match (trace, &params.heads[&head], head_grad_mut(&mut grad.params, head)) {
                (HeadTrace::Linear { input, mask }, Head::Linear(p), Head::Linear(g)) => {
                    add_outer(&mut g.weight, 1.0, &dz, &input);
                    g.bias += &dz;
                    let d_in = apply(&mask, p.weight.t().dot(&dz));
                    d_first += &d_in.slice(s![..hsize]);
                    if second.is_some() {
                        d_second += &d_in.slice(s![hsize..]);
                    }
                }
                (
                    HeadTrace::Biaffine {
                        u,
                        v,
                        mask_u,
                        mask_v,
                        a,
                        c,
                    },
                    Head::Biaffine(p),
                    Head::Biaffine(g),
                ) => {
                    let bsize = a.len();
                    let mut da = Array1::<f64>::zeros(bsize);
                    let mut dc = Array1::<f64>::zeros(bsize);
                    for (k, &dzk) in dz.iter().enumerate() {
                        g.bias[k] += dzk;
                        let rel = p.relation.slice(s![k, .., ..]);
                        let mut grel = g.relation.slice_mut(s![k, .., ..]);
                        for i in 0..bsize {
                            for j in 0..bsize {
                                grel[[i, j]] += dzk * a[i] * c[j];
                            }
                        }
                        da.scaled_add(dzk, &rel.dot(&c));
                        dc.scaled_add(dzk, &rel.t().dot(&a));
                    }
                    add_outer(&mut g.anchor, 1.0, &da, &u);
                    add_outer(&mut g.complement, 1.0, &dc, &v);
                    d_first += &apply(&mask_u, p.anchor.t().dot(&da));
                    d_second += &apply(&mask_v, p.complement.t().dot(&dc));
                }
                _ => unreachable!("head trace matches parameter kind"),
            }
        }
        backprop_text(params, &mut grad.params, &first, d_first);
        if let Some(second) = &second {
            backprop_text(params, &mut grad.params, second, d_second);
        }
    }
    Ok((total * scale, grad))
}

/// Mean loss only.
pub fn loss(params: &ModelParams, batch: &[&Example], dropout: Option<DropoutSpec>) -> Result<f64> {
    loss_and_grad(params, batch, dropout).map(|(l, _)| l)
}
