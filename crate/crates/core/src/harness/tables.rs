//! Plain-text result tables.

use crate::metrics::EvalReport;

fn find<'a>(reports: &'a [EvalReport], dataset: &str) -> Option<&'a EvalReport> {
    reports.iter().find(|r| r.task == dataset)
}

fn pct(report: Option<&EvalReport>, metric: &str) -> String {
    report
        .and_then(|r| r.metric(metric))
        .map(|v| format!("{:.1}", 100.0 * v))
        .unwrap_or_else(|| "-".into())
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Coherence scoring accuracy per condition: GCDC and CoheSentia columns.
pub fn scoring_table(rows: &[(String, Vec<EvalReport>)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| vec![name.clone(), pct(find(r, "gcdc"), "accuracy"), pct(find(r, "cohesentia"), "accuracy")])
        .collect();
    render(&["Model", "GCDC", "CoheSentia"], &body)
}

/// Reasoning precision, recall and F1 for each condition.
pub fn reasoning_table(rows: &[(String, Vec<EvalReport>)]) -> String {
    let mut header = vec!["Model"];
    let names = [
        "Cohesion P", "Cohesion R", "Cohesion F1", "Consistency P", "Consistency R", "Consistency F1", "Relevance P",
        "Relevance R", "Relevance F1",
    ];
    header.extend(names);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let rep = find(r, "reasoning");
            let mut row = vec![name.clone()];
            for cond in ["cohesion", "consistency", "relevance"] {
                for m in ["precision", "recall", "f1"] {
                    row.push(pct(rep, &format!("{cond}_{m}")));
                }
            }
            row
        })
        .collect();
    render(&header, &body)
}

/// Proxy-task results: SRO PMR/Acc, ISR, DRR, NPE P/R/F1 and NLI.
pub fn task_table(rows: &[(String, Vec<EvalReport>)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            vec![
                name.clone(),
                pct(find(r, "sro"), "pmr"),
                pct(find(r, "sro"), "acc"),
                pct(find(r, "isr"), "accuracy"),
                pct(find(r, "drr"), "accuracy"),
                pct(find(r, "npe"), "precision"),
                pct(find(r, "npe"), "recall"),
                pct(find(r, "npe"), "f1"),
                pct(find(r, "nli"), "accuracy"),
            ]
        })
        .collect();
    render(
        &["Model", "SRO PMR", "SRO Acc", "ISR Acc", "DRR Acc", "NPE P", "NPE R", "NPE F1", "NLI Acc"],
        &body,
    )
}

/// Every table that has at least one filled cell.
pub fn render_all(rows: &[(String, Vec<EvalReport>)]) -> String {
    let has = |sets: &[&str]| rows.iter().any(|(_, r)| sets.iter().any(|s| find(r, s).is_some()));
    let mut out = String::new();
    if has(&["gcdc", "cohesentia"]) {
        out.push_str("Coherence scoring (accuracy, %)\n");
        out.push_str(&scoring_table(rows));
        out.push('\n');
    }
    if has(&["reasoning"]) {
        out.push_str("Coherence reasoning (%)\n");
        out.push_str(&reasoning_table(rows));
        out.push('\n');
    }
    if has(&["sro", "isr", "drr", "npe", "nli"]) {
        out.push_str("Proxy tasks (%)\n");
        out.push_str(&task_table(rows));
        out.push('\n');
    }
    out
}
