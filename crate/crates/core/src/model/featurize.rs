//! Turns task instances into model inputs and training targets.

use super::checkpoint::Model;
use super::forward::{Example, Features};
use super::params::HeadId;
use crate::corpus::{Scale, TaskInstance};
use crate::error::{Error, Result};
use crate::taskgen::{expand_isr_pairs, expand_sro_pairs};

impl Model {
    pub fn features(&self, text: &str) -> Features {
        Features::single(self.vocab.ids(text))
    }

    pub fn pair_features(&self, a: &str, b: &str) -> Features {
        Features::pair(self.vocab.ids(a), self.vocab.ids(b))
    }

    pub fn drr_label_index(&self, label: &str) -> Result<usize> {
        self.drr_labels
            .index_of(label)
            .ok_or_else(|| Error::invalid("gold_l2", format!("label {label:?} is not in the DRR inventory")))
    }

    pub fn preposition_index(&self, label: &str) -> Result<usize> {
        self.prepositions
            .index_of(label)
            .ok_or_else(|| Error::invalid("links", format!("preposition {label:?} is not in the inventory")))
    }
}

pub fn scoring_head(scale: Scale) -> HeadId {
    match scale {
        Scale::ThreeWay => HeadId::Score3,
        Scale::FiveWay => HeadId::Score5,
    }
}

/// Training examples for one instance.
///
/// SRO and ISR instances expand to one example per sentence pair, NPE
/// instances to one per ordered NP pair (unlinked pairs are `NONE`). A
/// reasoning instance is one example with a target on each condition head.
pub fn training_examples(model: &Model, instance: &TaskInstance) -> Result<Vec<Example>> {
    Ok(match instance {
        TaskInstance::Sro(x) => expand_sro_pairs(x)
            .into_iter()
            .map(|p| Example::new(model.pair_features(&p.s_a, &p.s_b), HeadId::PairOrder, p.label.class()))
            .collect(),
        TaskInstance::Isr(x) => expand_isr_pairs(x)
            .into_iter()
            .map(|p| Example::new(model.pair_features(&p.s_a, &p.s_b), HeadId::PairRelevance, p.label.class()))
            .collect(),
        TaskInstance::Drr(x) => {
            let label = model.drr_label_index(&x.gold_l2[0])?;
            vec![Example::new(model.pair_features(&x.du1, &x.du2), HeadId::Drr, label)]
        }
        TaskInstance::Npe(x) => {
            let mut out = Vec::new();
            for a in 0..x.nps.len() {
                for c in 0..x.nps.len() {
                    if a != c {
                        let label = model.preposition_index(x.gold_preposition(a, c))?;
                        out.push(Example::new(
                            model.pair_features(&x.np_text(a), &x.np_text(c)),
                            HeadId::Npe,
                            label,
                        ));
                    }
                }
            }
            out
        }
        TaskInstance::Nli(x) => vec![Example::new(
            model.pair_features(&x.premise, &x.hypothesis),
            HeadId::Nli,
            x.gold.index(),
        )],
        TaskInstance::Scoring(x) => vec![Example::new(
            model.features(&x.paragraph.text()),
            scoring_head(x.scale),
            usize::from(x.gold_score) - 1,
        )],
        TaskInstance::Reasoning(x) => vec![Example {
            features: model.pair_features(&x.prefix.join(" "), &x.new_sentence),
            targets: vec![
                (HeadId::Cohesion, usize::from(x.gold[0])),
                (HeadId::Consistency, usize::from(x.gold[1])),
                (HeadId::Relevance, usize::from(x.gold[2])),
            ],
        }],
    })
}
