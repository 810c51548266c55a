use coherence::corpus::NpLink;
use coherence::metrics::{drr_report, npe_report, order_report, reasoning_report, EvalReport};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn order_batch(seed: u64, n: usize) -> (Vec<Option<Vec<usize>>>, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gold: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut p: Vec<usize> = (0..rng.gen_range(1..7)).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let pred = gold
        .iter()
        .map(|g| match rng.gen_range(0..5) {
            0 => None,
            1 => Some(g.clone()),
            _ => {
                let mut p = g.clone();
                p.shuffle(&mut rng);
                Some(p)
            }
        })
        .collect();
    (pred, gold)
}

fn permuted<T: Clone>(xs: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| xs[i].clone()).collect()
}

fn same_metrics(a: &EvalReport, b: &EvalReport) -> bool {
    a.counts == b.counts && a.metrics.iter().all(|(k, v)| (b.metrics[k] - v).abs() < 1e-12)
}

proptest! {
    #[test]
    fn pmr_bounded_by_acc(seed in any::<u64>(), n in 1usize..20) {
        let (pred, gold) = order_batch(seed, n);
        let r = order_report(&pred, &gold).unwrap();
        let (pmr, acc) = (r.metric("pmr").unwrap(), r.metric("acc").unwrap());
        prop_assert!((0.0..=1.0).contains(&pmr));
        prop_assert!(pmr <= acc + 1e-12 && acc <= 1.0);
        prop_assert_eq!(pmr, r.count("exact_matches") as f64 / n as f64);
        prop_assert_eq!(acc, r.count("acc_scaled_hits") as f64 / (n as u64 * r.count("acc_lcm")) as f64);
    }

    #[test]
    fn order_metrics_ignore_instance_order(seed in any::<u64>(), n in 1usize..20) {
        let (pred, gold) = order_batch(seed, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let a = order_report(&pred, &gold).unwrap();
        let b = order_report(&permuted(&pred, &perm), &permuted(&gold, &perm)).unwrap();
        prop_assert!(same_metrics(&a, &b));
    }

    #[test]
    fn drr_ratio_is_counts(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = ["x", "y", "z"];
        let golds: Vec<Vec<String>> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..3);
                labels.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect()
            })
            .collect();
        let preds: Vec<Option<String>> = (0..n)
            .map(|_| rng.gen_bool(0.8).then(|| labels.choose(&mut rng).unwrap().to_string()))
            .collect();
        let r = drr_report(&preds, &golds).unwrap();
        prop_assert_eq!(r.metric("accuracy").unwrap(), r.count("correct") as f64 / r.count("total") as f64);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        prop_assert!(same_metrics(&r, &drr_report(&permuted(&preds, &perm), &permuted(&golds, &perm)).unwrap()));
    }

    #[test]
    fn npe_ratios_are_counts(seed in any::<u64>(), docs in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..docs {
            let (mut g, mut p) = (Vec::new(), Vec::new());
            for a in 0..4 {
                for c in 0..4 {
                    if a != c && rng.gen_bool(0.3) {
                        g.push(NpLink::new(a, c, ["of", "in"][rng.gen_range(0..2)]));
                    }
                    if a != c && rng.gen_bool(0.3) {
                        p.push(NpLink::new(a, c, ["of", "in"][rng.gen_range(0..2)]));
                    }
                }
            }
            gold.push(g);
            pred.push(p);
        }
        let r = npe_report(&pred, &gold, 0).unwrap();
        let tp = r.count("true_positives") as f64;
        let (np, ng) = (r.count("predicted_links"), r.count("gold_links"));
        if np > 0 {
            prop_assert_eq!(r.metric("precision").unwrap(), tp / np as f64);
        }
        if ng > 0 {
            prop_assert_eq!(r.metric("recall").unwrap(), tp / ng as f64);
        }
        let f1 = r.metric("f1").unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
        pred.reverse();
        gold.reverse();
        prop_assert!(same_metrics(&r, &npe_report(&pred, &gold, 0).unwrap()));
    }

    #[test]
    fn reasoning_ratios_are_counts(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let golds: Vec<[bool; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let preds: Vec<[Option<bool>; 3]> = (0..n).map(|_| [0; 3].map(|_| rng.gen_bool(0.9).then(|| rng.gen()))).collect();
        let r = reasoning_report(&preds, &golds).unwrap();
        for c in ["cohesion", "consistency", "relevance"] {
            let tp = r.count(&format!("{c}_true_positives")) as f64;
            let np = r.count(&format!("{c}_predicted"));
            if np > 0 {
                prop_assert_eq!(r.metric(&format!("{c}_precision")).unwrap(), tp / np as f64);
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        prop_assert!(same_metrics(&r, &reasoning_report(&permuted(&preds, &perm), &permuted(&golds, &perm)).unwrap()));
    }
}
