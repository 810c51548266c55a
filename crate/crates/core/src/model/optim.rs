use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::forward::Gradient;
use super::params::{Block, ModelParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain SGD with a fixed learning rate.
    #[default]
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct AdamState {
    m: ModelParams,
    v: ModelParams,
    steps: BTreeMap<Block, i32>,
}

/// Applies gradients. Only the shared block and heads that received a
/// gradient are updated.
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    adam: Option<AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ModelParams) -> Self {
        let adam = (kind == OptimizerKind::Adam).then(|| AdamState {
            m: ModelParams::zeros(params.dims),
            v: ModelParams::zeros(params.dims),
            steps: BTreeMap::new(),
        });
        Optimizer {
            kind,
            learning_rate,
            adam,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &Gradient) {
        let active = |b: &Block| match b {
            Block::Shared => true,
            Block::Head(h) => grad.touched.contains(h),
        };
        let lr = self.learning_rate;
        let g = grad.params.tensors();
        match &mut self.adam {
            None => {
                for ((block, p), (_, _, g)) in params.tensors_mut().into_iter().zip(&g) {
                    if !active(&block) {
                        continue;
                    }
                    for (p, g) in p.iter_mut().zip(g.iter()) {
                        *p -= lr * g;
                    }
                }
            }
            Some(state) => {
                let mut bumped = Vec::new();
                for (_, block, _) in &g {
                    if active(block) && !bumped.contains(block) {
                        bumped.push(*block);
                        *state.steps.entry(*block).or_insert(0) += 1;
                    }
                }
                let m = state.m.tensors_mut();
                let v = state.v.tensors_mut();
                for ((((block, p), (_, g)), (_, m)), (_, v)) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(g.iter().map(|(_, b, t)| (b, t)))
                    .zip(m)
                    .zip(v)
                {
                    if !active(&block) {
                        continue;
                    }
                    let t = state.steps[&block];
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    for i in 0..p.len() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}
