//! Builds SRO and ISR sets from a small paragraph corpus and shows one of each.
//!
//! cargo run --example build_datasets

use coherence::corpus::Paragraph;
use coherence::taskgen::build_proxy_sets;

fn main() {
    let paragraphs = vec![
        Paragraph::new(
            "cooking",
            vec![
                "Mia bought flour with Leo.".into(),
                "She mixed the flour with eggs.".into(),
                "Mia baked the dough for an hour.".into(),
                "Her family ate the bread with Ana.".into(),
            ],
        ),
        Paragraph::new(
            "hiking",
            vec![
                "Leo packed water for Mia.".into(),
                "He climbed the ridge before noon.".into(),
                "Leo rested at the summit.".into(),
            ],
        ),
        Paragraph::new(
            "garage",
            vec![
                "The engine refused to start for Ana.".into(),
                "Ana checked the battery cables.".into(),
                "A loose clamp was the culprit.".into(),
            ],
        ),
    ];
    let (sro, isr, summary) = build_proxy_sets(&paragraphs, 42);
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());

    let x = &sro[0];
    println!("\nshuffled:");
    for s in &x.shuffled {
        println!("  {s}");
    }
    println!("gold positions: {:?}", x.gold_positions);
    println!("recovered: {:?}", x.ordered());

    let y = &isr[0];
    println!("\nwith an injected sentence at {}:", y.irrelevant_index);
    for (i, s) in y.sentences.iter().enumerate() {
        println!("  {i}: {s}");
    }
}
