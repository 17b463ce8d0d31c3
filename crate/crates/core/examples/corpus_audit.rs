//! Audit a corpus: intrinsic metrics, formula-count distribution, chapter
//! expansion, the complexity blueprint fit and the failure taxonomy. Runs
//! on the fault-injection fixture by default, or on any records file given
//! as the first argument.
//!
//! ```bash
//! cargo run -p ipg-core --example corpus_audit
//! cargo run -p ipg-core --example corpus_audit -- out/records.jsonl
//! ```

use ipg::audit::{classify_values, stratify_tiers, AuditReport, ReportOptions};
use ipg::axiom::Curriculum;
use ipg::record::DatasetRecord;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| format!("{FIXTURES}/taxonomy_faults.jsonl"));
    let text = std::fs::read_to_string(&path).unwrap();
    let values: Vec<serde_json::Value> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let records: Vec<DatasetRecord> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| DatasetRecord::from_value(v.clone(), i + 1).ok())
        .collect();

    let cm = Curriculum::classical_mechanics();
    let failures = classify_values(&values, &cm);
    let seeds = cm.dictionary.names().map(|n| (n.to_string(), 1)).collect();
    let report = AuditReport::build(
        &records,
        &failures,
        values.len() - records.len(),
        &ReportOptions::new(seeds),
    )
    .unwrap();

    let m = &report.metrics;
    println!("{path}: {} records", m.total);
    println!(
        "  valid {:.2}%  unique signatures {:.2}%  unique texts {:.2}%",
        m.valid_pct, m.signature_uniqueness_pct, m.text_uniqueness_pct
    );
    println!(
        "  TTR {:.2}  {} formulas  {} unknowns  avg {:.3} formulas ({:?})",
        m.ttr, m.unique_formulas, m.unique_unknowns, m.avg_formulas, m.difficulty
    );

    println!("formulas per problem:");
    for (k, s) in &report.formula_counts {
        println!("  {k}: {:>3} ({:.2}%)", s.n, s.pct);
    }
    println!(
        "top unknowns: {}",
        report
            .unknowns
            .iter()
            .map(|u| format!("{} ({})", u.name, u.n))
            .collect::<Vec<_>>()
            .join(", ")
    );

    match &report.blueprint {
        Some(b) => println!(
            "blueprint: code length = {:.1} * formulas + {:.1}, R^2 {:.3} over {} buckets",
            b.fit.slope,
            b.fit.intercept,
            b.fit.r_squared,
            b.buckets.len()
        ),
        None => println!(
            "blueprint: {}",
            report.blueprint_error.as_deref().unwrap_or("not fitted")
        ),
    }

    println!("taxonomy:");
    for f in failures.iter().filter(|f| !f.is_clean()) {
        let cats: Vec<String> = f
            .categories
            .iter()
            .map(|c| format!("{} {}", c.id(), c.label()))
            .collect();
        println!("  {:<20} {}", f.id, cats.join(", "));
    }
    for (tier, stats) in &stratify_tiers(&failures).tiers {
        println!(
            "  tier {tier:?}: {} records, {:.1}% clean",
            stats.count, stats.clean_pct
        );
    }
}
