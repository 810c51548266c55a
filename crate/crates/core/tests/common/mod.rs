#![allow(dead_code)]

use coherence::model::forward::loss;
use coherence::model::{DropoutSpec, Example, Features, HeadId, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest relative error between the analytic gradient and central
/// differences, over every parameter. Entries whose magnitudes are both
/// below `floor` are compared against `floor`.
pub fn max_fd_error(params: &ModelParams, batch: &[&Example], dropout: Option<DropoutSpec>, eps: f64, floor: f64) -> f64 {
    let (_, grad) = coherence::model::loss_and_grad(params, batch, dropout).unwrap();
    let analytic: Vec<f64> = grad.params.tensors().iter().flat_map(|(_, _, t)| t.iter().copied()).collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut flat = 0;
    let n_tensors = probe.tensors().len();
    for t in 0..n_tensors {
        let len = probe.tensors()[t].2.len();
        for i in 0..len {
            let orig = probe.tensors()[t].2[i];
            probe.tensors_mut()[t].1[i] = orig + eps;
            let up = loss(&probe, batch, dropout).unwrap();
            probe.tensors_mut()[t].1[i] = orig - eps;
            let down = loss(&probe, batch, dropout).unwrap();
            probe.tensors_mut()[t].1[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            flat += 1;
        }
    }
    worst
}

/// Random token ids of random length in `1..=max_len`.
pub fn random_ids(rng: &mut impl Rng, vocab: usize, max_len: usize) -> Vec<u32> {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| rng.gen_range(0..vocab as u32)).collect()
}

/// A random example for `head`.
pub fn random_example(rng: &mut impl Rng, params: &ModelParams, head: HeadId) -> Example {
    let v = params.dims.vocab;
    let features = if head.is_pair() {
        Features::pair(random_ids(rng, v, 4), random_ids(rng, v, 4))
    } else {
        Features::single(random_ids(rng, v, 5))
    };
    let label = rng.gen_range(0..head.classes(&params.dims));
    Example::new(features, head, label)
}

/// Planted pair-order data: every token has a hidden score, a sentence
/// scores the mean of its tokens, and the label says whether the first
/// sentence scores lower. Pairs closer than `margin` are skipped.
pub struct PlantedOrder {
    pub scores: Vec<f64>,
}

impl PlantedOrder {
    pub fn new(vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores = vec![0.0];
        scores.extend((1..vocab).map(|_| rng.gen_range(-1.0..1.0)));
        PlantedOrder { scores }
    }

    pub fn sentence_score(&self, ids: &[u32]) -> f64 {
        ids.iter().map(|&i| self.scores[i as usize]).sum::<f64>() / ids.len() as f64
    }

    pub fn examples(&self, n: usize, margin: f64, head: HeadId, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = self.scores.len() as u32;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let a: Vec<u32> = (0..3).map(|_| rng.gen_range(1..vocab)).collect();
            let b: Vec<u32> = (0..3).map(|_| rng.gen_range(1..vocab)).collect();
            let (sa, sb) = (self.sentence_score(&a), self.sentence_score(&b));
            if (sa - sb).abs() < margin {
                continue;
            }
            out.push(Example::new(Features::pair(a, b), head, usize::from(sa < sb)));
        }
        out
    }
}
