mod common;

use std::collections::BTreeMap;

use coherence::corpus::{LabelInventory, Task};
use coherence::model::checkpoint::FORMAT_VERSION;
use coherence::model::forward::loss;
use coherence::model::{
    encode, epoch_schedule, forward, load_checkpoint, load_checkpoint_expecting, loss_and_grad, save_checkpoint,
    train_interleaved, Dims, DropoutSpec, Example, Features, Head, HeadId, Model, ModelParams, OptimizerKind,
    TaskData, TrainConfig, Vocab,
};
use coherence::Error;
use ndarray::{arr1, arr2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_dims() -> Dims {
    Dims {
        vocab: 3,
        embed: 2,
        hidden: 2,
        biaffine: 2,
        drr_labels: 2,
        prepositions: 2,
    }
}

fn fixture() -> ModelParams {
    let mut p = ModelParams::zeros(tiny_dims());
    p.embeddings = arr2(&[[0.0, 0.0], [0.5, -1.0], [1.5, 0.25]]);
    p.encoder.weight = arr2(&[[0.2, -0.4], [0.7, 0.1]]);
    p.encoder.bias = arr1(&[0.05, -0.1]);
    if let Some(Head::Linear(d)) = p.heads.get_mut(&HeadId::PairOrder) {
        d.weight = arr2(&[[0.3, -0.2, 0.5, 0.1], [-0.6, 0.4, 0.0, 0.9]]);
        d.bias = arr1(&[0.01, -0.02]);
    }
    if let Some(Head::Biaffine(b)) = p.heads.get_mut(&HeadId::Npe) {
        b.anchor = arr2(&[[1.0, 0.5], [-0.5, 2.0]]);
        b.complement = arr2(&[[0.3, -0.7], [0.8, 0.2]]);
        b.relation[[0, 0, 0]] = 0.4;
        b.relation[[0, 1, 1]] = -0.3;
        b.relation[[1, 0, 1]] = 1.2;
        b.relation[[1, 1, 0]] = 0.6;
        b.bias = arr1(&[0.1, -0.2]);
    }
    p
}

// Scalar re-derivation of the fixture's encoder.
fn by_hand_encode(e: [f64; 2]) -> [f64; 2] {
    [
        (0.2 * e[0] - 0.4 * e[1] + 0.05).tanh(),
        (0.7 * e[0] + 0.1 * e[1] - 0.1).tanh(),
    ]
}

fn by_hand_softmax(z0: f64, z1: f64) -> [f64; 2] {
    let m = z0.max(z1);
    let (a, b) = ((z0 - m).exp(), (z1 - m).exp());
    [a / (a + b), b / (a + b)]
}

#[test]
fn pair_head_matches_hand_arithmetic() {
    let p = fixture();
    // text a = tokens 1 and 2 (mean [1.0, -0.375]); text b = token 2.
    let ha = by_hand_encode([1.0, -0.375]);
    let hb = by_hand_encode([1.5, 0.25]);
    let z0 = 0.3 * ha[0] - 0.2 * ha[1] + 0.5 * hb[0] + 0.1 * hb[1] + 0.01;
    let z1 = -0.6 * ha[0] + 0.4 * ha[1] + 0.0 * hb[0] + 0.9 * hb[1] - 0.02;
    let want = by_hand_softmax(z0, z1);
    let got = forward(&p, HeadId::PairOrder, &Features::pair(vec![1, 2], vec![2])).unwrap();
    assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12, "{got:?} vs {want:?}");
}

#[test]
fn biaffine_head_matches_hand_arithmetic() {
    let p = fixture();
    let u = by_hand_encode([0.5, -1.0]);
    let v = by_hand_encode([1.5, 0.25]);
    let a = [1.0 * u[0] + 0.5 * u[1], -0.5 * u[0] + 2.0 * u[1]];
    let c = [0.3 * v[0] - 0.7 * v[1], 0.8 * v[0] + 0.2 * v[1]];
    let z0 = 0.4 * a[0] * c[0] - 0.3 * a[1] * c[1] + 0.1;
    let z1 = 1.2 * a[0] * c[1] + 0.6 * a[1] * c[0] - 0.2;
    let want = by_hand_softmax(z0, z1);
    let got = forward(&p, HeadId::Npe, &Features::pair(vec![1], vec![2])).unwrap();
    assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12, "{got:?} vs {want:?}");
}

#[test]
fn empty_text_encodes_bias_only() {
    let p = fixture();
    let h = encode(&p, &[]).unwrap();
    assert_eq!(h.to_vec(), vec![0.05f64.tanh(), (-0.1f64).tanh()]);
}

#[test]
fn encode_is_deterministic_and_finite() {
    let dims = Dims {
        vocab: 50,
        embed: 8,
        hidden: 8,
        biaffine: 4,
        drr_labels: 14,
        prepositions: 28,
    };
    let p = ModelParams::init(dims, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let ids = common::random_ids(&mut rng, 50, 20);
        let h = encode(&p, &ids).unwrap();
        assert!(h.iter().all(|x| x.is_finite()));
        assert_eq!(h, encode(&p, &ids).unwrap());
    }
}

#[test]
fn zero_biaffine_is_uniform() {
    let dims = Dims {
        vocab: 10,
        embed: 4,
        hidden: 4,
        biaffine: 3,
        drr_labels: 14,
        prepositions: 28,
    };
    let mut p = ModelParams::init(dims, 1).unwrap();
    if let Some(Head::Biaffine(b)) = p.heads.get_mut(&HeadId::Npe) {
        b.relation.fill(0.0);
        b.bias.fill(0.0);
    }
    let probs = forward(&p, HeadId::Npe, &Features::pair(vec![1, 2], vec![3])).unwrap();
    assert_eq!(probs.len(), 28);
    for q in probs {
        assert!((q - 1.0 / 28.0).abs() < 1e-15);
    }
}

#[test]
fn uniform_output_loss_is_log_k() {
    let p = ModelParams::zeros(Dims {
        vocab: 5,
        embed: 3,
        hidden: 3,
        biaffine: 2,
        drr_labels: 14,
        prepositions: 28,
    });
    for head in HeadId::ALL {
        let k = head.classes(&p.dims);
        let f = if head.is_pair() {
            Features::pair(vec![1], vec![2])
        } else {
            Features::single(vec![1, 3])
        };
        let ex = Example::new(f, head, k - 1);
        let l = loss(&p, &[&ex], None).unwrap();
        assert!((l - (k as f64).ln()).abs() < 1e-12, "{head:?}");
    }
}

#[test]
fn duplicated_batch_has_same_loss() {
    let p = ModelParams::init(tiny_dims(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<Example> = (0..4).map(|_| common::random_example(&mut rng, &p, HeadId::PairOrder)).collect();
    let once: Vec<&Example> = batch.iter().collect();
    let twice: Vec<&Example> = batch.iter().chain(batch.iter()).collect();
    let a = loss(&p, &once, None).unwrap();
    let b = loss(&p, &twice, None).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn probabilities_are_a_distribution() {
    let dims = Dims {
        vocab: 20,
        embed: 6,
        hidden: 5,
        biaffine: 3,
        drr_labels: 14,
        prepositions: 28,
    };
    let p = ModelParams::init(dims, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for head in HeadId::ALL {
        for _ in 0..30 {
            let ex = common::random_example(&mut rng, &p, head);
            let probs = forward(&p, head, &ex.features).unwrap();
            assert_eq!(probs.len(), head.classes(&dims));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&q| q > 0.0 && q < 1.0));
        }
    }
}

#[test]
fn arity_and_range_errors() {
    let p = fixture();
    assert!(matches!(
        forward(&p, HeadId::PairOrder, &Features::single(vec![1])),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(
        forward(&p, HeadId::Score3, &Features::pair(vec![1], vec![2])),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(forward(&p, HeadId::Score3, &Features::single(vec![7])), Err(Error::Dimension(_))));
    let ex = Example::new(Features::pair(vec![1], vec![2]), HeadId::PairOrder, 2);
    assert!(matches!(loss_and_grad(&p, &[&ex], None), Err(Error::Invalid { field: "label", .. })));
    assert!(loss_and_grad(&p, &[], None).is_err());
}

#[test]
fn gradients_match_finite_differences_for_every_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut configs = 0;
    for round in 0..3 {
        for head in HeadId::ALL {
            let dims = Dims {
                vocab: rng.gen_range(3..7),
                embed: rng.gen_range(1..4),
                hidden: rng.gen_range(1..4),
                biaffine: rng.gen_range(1..3),
                drr_labels: rng.gen_range(2..5),
                prepositions: rng.gen_range(2..5),
            };
            let p = ModelParams::init(dims, rng.gen()).unwrap();
            let batch: Vec<Example> = (0..3).map(|_| common::random_example(&mut rng, &p, head)).collect();
            let refs: Vec<&Example> = batch.iter().collect();
            let dropout = (round == 2).then(|| DropoutSpec {
                encoder: 0.3,
                head: 0.2,
                seed: rng.gen(),
            });
            let err = common::max_fd_error(&p, &refs, dropout, 1e-5, 1e-6);
            assert!(err < 1e-4, "{head:?} round {round}: relative error {err}");
            configs += 1;
        }
    }
    assert!(configs >= 20);
}

#[test]
fn multi_target_examples_have_correct_gradients() {
    let dims = Dims {
        vocab: 6,
        embed: 3,
        hidden: 3,
        biaffine: 2,
        drr_labels: 3,
        prepositions: 3,
    };
    let p = ModelParams::init(dims, 8).unwrap();
    let ex = Example {
        features: Features::pair(vec![1, 2], vec![3, 4, 5]),
        targets: vec![(HeadId::Cohesion, 1), (HeadId::Consistency, 0), (HeadId::Relevance, 1)],
    };
    assert!(common::max_fd_error(&p, &[&ex], None, 1e-5, 1e-6) < 1e-4);
}

#[test]
fn alternating_schedule_for_two_equal_tasks() {
    let sizes = BTreeMap::from([(Task::Sro, 8), (Task::Nli, 8)]);
    for seed in 0..20 {
        let s = epoch_schedule(&sizes, 4, seed);
        assert_eq!(s.len(), 4);
        for w in s.windows(2) {
            assert_ne!(w[0].task, w[1].task);
        }
    }
}

#[test]
fn single_task_schedule_is_a_plain_epoch() {
    let sizes = BTreeMap::from([(Task::Drr, 10)]);
    let s = epoch_schedule(&sizes, 3, 1);
    assert_eq!(s.iter().map(|b| b.indices.len()).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
    let mut all: Vec<usize> = s.iter().flat_map(|b| b.indices.clone()).collect();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn schedule_property(sizes in proptest::collection::vec(1usize..30, 1..5), batch in 1usize..6, seed in any::<u64>()) {
        let tasks = [Task::Sro, Task::Isr, Task::Drr, Task::Npe, Task::Nli];
        let map: BTreeMap<Task, usize> = tasks.iter().copied().zip(sizes.iter().copied()).collect();
        let s = epoch_schedule(&map, batch, seed);
        let mut remaining: BTreeMap<Task, usize> = map.iter().map(|(&t, &n)| (t, n.div_ceil(batch))).collect();
        let mut prev = None;
        for b in &s {
            let live = remaining.values().filter(|&&r| r > 0).count();
            if live >= 2 {
                prop_assert_ne!(Some(b.task), prev);
            }
            *remaining.get_mut(&b.task).unwrap() -= 1;
            prev = Some(b.task);
        }
        for (&t, &n) in &map {
            let mut seen: Vec<usize> = s.iter().filter(|b| b.task == t).flat_map(|b| b.indices.clone()).collect();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }
}

fn order_data(seed: u64, n_train: usize, n_dev: usize) -> (Vec<Example>, Vec<Example>) {
    let planted = common::PlantedOrder::new(40, seed);
    (
        planted.examples(n_train, 0.1, HeadId::PairOrder, seed + 1),
        planted.examples(n_dev, 0.1, HeadId::PairOrder, seed + 2),
    )
}

fn order_dims() -> Dims {
    Dims {
        vocab: 40,
        embed: 8,
        hidden: 8,
        biaffine: 2,
        drr_labels: 2,
        prepositions: 2,
    }
}

#[test]
fn training_is_deterministic() {
    let (train, dev) = order_data(1, 64, 16);
    let data = BTreeMap::from([(Task::Sro, TaskData { train, dev })]);
    let config = TrainConfig {
        epochs: 3,
        dropout_encoder: 0.2,
        ..TrainConfig::desk()
    };
    let p0 = ModelParams::init(order_dims(), 4).unwrap();
    let a = train_interleaved(&data, &config, p0.clone()).unwrap();
    let b = train_interleaved(&data, &config, p0).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
}

#[test]
fn training_reduces_loss() {
    let (train, dev) = order_data(2, 200, 50);
    let data = BTreeMap::from([(Task::Sro, TaskData { train, dev })]);
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let config = TrainConfig {
            epochs: 10,
            optimizer,
            learning_rate: if optimizer == OptimizerKind::Adam { 0.01 } else { 0.5 },
            early_stop_patience: 10,
            ..TrainConfig::desk()
        };
        let out = train_interleaved(&data, &config, ModelParams::init(order_dims(), 4).unwrap()).unwrap();
        let first = out.log.first().unwrap().loss;
        let last = out.log.last().unwrap().loss;
        assert!(last < first, "{optimizer:?}: {first} -> {last}");
    }
}

#[test]
fn early_stopping_returns_best_epoch() {
    let (train, dev) = order_data(3, 40, 20);
    let data = BTreeMap::from([(Task::Sro, TaskData { train, dev })]);
    let config = TrainConfig {
        epochs: 40,
        early_stop_patience: 2,
        ..TrainConfig::desk()
    };
    let out = train_interleaved(&data, &config, ModelParams::init(order_dims(), 4).unwrap()).unwrap();
    let best = out
        .log
        .iter()
        .map(|r| r.dev_metric.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let at_best = out.log[out.best_epoch].dev_metric.unwrap();
    assert_eq!(at_best, best);
    if out.stopped_early {
        assert!(out.log.len() < 40);
    }
}

#[test]
fn training_preconditions() {
    let config = TrainConfig::desk();
    let p = ModelParams::init(order_dims(), 0).unwrap();
    assert!(train_interleaved(&BTreeMap::new(), &config, p.clone()).is_err());
    let empty = BTreeMap::from([(Task::Sro, TaskData::default())]);
    assert!(train_interleaved(&empty, &config, p.clone()).is_err());
    let (train, _) = order_data(1, 8, 0);
    let data = BTreeMap::from([(Task::Sro, TaskData { train, dev: vec![] })]);
    let bad = TrainConfig {
        dropout_head: 1.0,
        ..TrainConfig::desk()
    };
    assert!(train_interleaved(&data, &bad, p.clone()).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::desk()
    };
    assert!(train_interleaved(&data, &bad, p).is_err());
}

#[test]
fn presets_validate() {
    for name in ["desk", "proxy", "coherence"] {
        TrainConfig::preset(name).unwrap().validate().unwrap();
    }
    assert!(TrainConfig::preset("bert").is_err());
    let proxy = TrainConfig::proxy_tasks();
    assert_eq!((proxy.learning_rate, proxy.batch_size, proxy.grad_accum_steps), (5e-5, 4, 2));
    assert_eq!((proxy.dropout_encoder, proxy.dropout_head), (0.5, 0.3));
    let coh = TrainConfig::coherence();
    assert_eq!((coh.learning_rate, coh.dropout_encoder, coh.dropout_head), (5e-4, 0.3, 0.1));
}

fn sample_model(embed: usize) -> Model {
    let vocab = Vocab::build(["the cat sat", "on a mat"]);
    let drr = LabelInventory::new(vec!["Temporal.Synchronous".into(), "Comparison.Contrast".into()]).unwrap();
    Model::init(vocab, drr, LabelInventory::prepositions(), embed, 4, 3, 7).unwrap()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = sample_model(5);
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    for ((_, _, a), (_, _, b)) in m.params.tensors().iter().zip(back.params.tensors()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"COHRCKPT");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), FORMAT_VERSION);
}

#[test]
fn truncated_or_altered_checkpoints_are_errors() {
    let m = sample_model(3);
    let bytes = m.to_bytes().unwrap();
    for cut in [0, 5, 11, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(Model::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(Model::from_bytes(&longer).is_err());
    let mut version = bytes.clone();
    version[8] = 99;
    assert!(matches!(Model::from_bytes(&version), Err(Error::Checkpoint(m)) if m.contains("version")));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(Model::from_bytes(&magic).is_err());
}

#[test]
fn checkpoint_with_other_dims_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e16.ckpt");
    let m16 = sample_model(16);
    save_checkpoint(&m16, &path).unwrap();
    let want = sample_model(32).dims();
    assert!(matches!(load_checkpoint_expecting(&path, &want), Err(Error::Dimension(_))));
    assert!(load_checkpoint_expecting(&path, &m16.dims()).is_ok());
}

#[test]
fn identical_runs_give_identical_checkpoints() {
    let (train, dev) = order_data(5, 32, 8);
    let data = BTreeMap::from([(Task::Sro, TaskData { train, dev })]);
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::desk()
    };
    let run = || {
        let mut m = Model::init(
            Vocab::from_tokens((0..40).map(|i| format!("t{i}")).collect()),
            LabelInventory::new(vec!["a".into(), "b".into()]).unwrap(),
            LabelInventory::new(vec!["NONE".into(), "of".into()]).unwrap(),
            8,
            8,
            2,
            1,
        )
        .unwrap();
        m.params = train_interleaved(&data, &config, m.params).unwrap().params;
        m.to_bytes().unwrap()
    };
    assert_eq!(run(), run());
}
