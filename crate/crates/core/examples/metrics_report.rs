//! Scores a handful of predictions with the order, NPE and reasoning metrics.
//!
//! cargo run --example metrics_report

use coherence::corpus::NpLink;
use coherence::metrics::{npe_report, order_report, reasoning_report};

fn main() {
    let gold = vec![vec![1, 3, 2, 0], vec![0, 1, 2]];
    let predicted = vec![Some(vec![1, 2, 3, 0]), None];
    let r = order_report(&predicted, &gold).unwrap();
    println!("{}", serde_json::to_string_pretty(&r).unwrap());

    let gold = vec![vec![NpLink::new(0, 1, "of"), NpLink::new(0, 3, "in")]];
    let pred = vec![vec![NpLink::new(0, 1, "of"), NpLink::new(2, 3, "in")]];
    let r = npe_report(&pred, &gold, 0).unwrap();
    println!("npe f1 = {:.3}", r.metric("f1").unwrap());

    let golds = [[true, true, false], [false, true, true], [true, false, true]];
    let preds = [
        [Some(true), Some(true), Some(true)],
        [Some(false), None, Some(true)],
        [Some(true), Some(false), Some(false)],
    ];
    let r = reasoning_report(&preds, &golds).unwrap();
    for c in ["cohesion", "consistency", "relevance"] {
        println!("{c:<12} f1 = {:.3}", r.metric(&format!("{c}_f1")).unwrap());
    }
}
