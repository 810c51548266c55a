//! Turns pairwise precedence scores into a sentence order, including a
//! cyclic case, and picks the odd sentence out from relevance scores.
//!
//! cargo run --example decode_order

use coherence::decode::{isr_select, topological_order, PairwiseMatrix};

fn main() {
    // p[i][j] = P(sentence i precedes sentence j).
    let acyclic = PairwiseMatrix::from_rows(&[
        vec![0.0, 0.2, 0.1, 0.3],
        vec![0.8, 0.0, 0.7, 0.9],
        vec![0.9, 0.3, 0.0, 0.6],
        vec![0.7, 0.1, 0.4, 0.0],
    ])
    .unwrap();
    let d = topological_order(&acyclic);
    println!("order {:?} (fallback: {})", d.order, d.used_fallback);

    // 0 -> 1 -> 2 -> 0 with different confidences.
    let cyclic = PairwiseMatrix::from_upper(3, |i, j| match (i, j) {
        (0, 1) => 0.9,
        (1, 2) => 0.6,
        _ => 0.2,
    });
    let d = topological_order(&cyclic);
    println!("cyclic order {:?} (fallback: {})", d.order, d.used_fallback);

    let relevance = vec![
        vec![1.0, 0.9, 0.1, 0.8],
        vec![0.9, 1.0, 0.2, 0.7],
        vec![0.1, 0.3, 1.0, 0.2],
        vec![0.8, 0.6, 0.2, 1.0],
    ];
    println!("irrelevant sentence: {}", isr_select(&relevance).unwrap());
}
