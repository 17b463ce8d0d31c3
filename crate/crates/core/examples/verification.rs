//! Three-criteria verification of a drafted problem: the plan must run,
//! return a finite number and pass the physical sanity rules. The last
//! part re-verifies stored records, as `ipg verify` does.
//!
//! ```bash
//! cargo run -p ipg-core --example verification
//! ```

use ipg::axiom::Curriculum;
use ipg::draft::ProblemDraft;
use ipg::record::read_records;
use ipg::sanity::{check_physical_sanity, RuleSet};
use ipg::verify::{reverify_record, verify_text, Reverification};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() {
    let cm = Curriculum::classical_mechanics();
    let library = cm.resolve_library(&["Kinematics", "Newton's Laws"]).unwrap();
    let rules = RuleSet::default_sanity();

    let draft = ProblemDraft::from_document(
        &serde_json::json!({
            "word_problem": "A 1200 kg car at 15 m/s is pushed by 3000 N for 4 s. How far does it go?",
            "formula_ids": ["5_B", "3_A", "3_D"],
            "variables": {
                "m": {"value": 1200.0, "unit": "kg"},
                "F": {"value": 3000.0, "unit": "N"},
                "u": {"value": 15.0, "unit": "m/s"},
                "t": {"value": 4.0, "unit": "s"},
                "s": {"value": "NaN", "unit": "m"}
            }
        }),
        "example",
        0,
    )
    .unwrap();

    let plan = "bind m = 1200.0\nbind F = 3000.0\nbind u = 15.0\nbind t = 4.0\n\
                invoke a = 5_B(F, m)\ninvoke v = 3_A(u, a, t)\ninvoke s = 3_D(u, v, t)\nreturn s";
    let report = verify_text(&draft, plan, &library, &rules);
    println!(
        "good plan: overall={} value={:?} signature_match={:?}",
        report.overall,
        report.value(),
        report.signature_match
    );

    let divides_by_zero = "bind m = 1200.0\nbind F = 3000.0\nbind u = 15.0\nbind t = 4.0\n\
                           invoke a = 5_B(F, 0)\ninvoke v = 3_A(u, a, t)\ninvoke s = 3_D(u, v, t)\nreturn s";
    let report = verify_text(&draft, divides_by_zero, &library, &rules);
    println!(
        "zero mass: overall={} -> {}",
        report.overall,
        report.error_message().unwrap_or_default()
    );

    for (name, value) in [("t", -2.0), ("mu_k", 1.4), ("m", 3.0), ("x", 1e20)] {
        println!(
            "sanity {name} = {value:e}: {:?}",
            check_physical_sanity(name, value, &rules)
        );
    }

    // Stored records may draw on any chapter, so re-verify against all of them.
    let chapters: Vec<&str> = cm.dictionary.names().collect();
    let everything = cm.resolve_library(&chapters).unwrap();
    println!();
    for file in ["worked_examples.jsonl", "dart_python_source.jsonl"] {
        for r in read_records(format!("{FIXTURES}/{file}")).unwrap() {
            let status = match reverify_record(&r, &everything, &rules) {
                Reverification::Consistent { .. } => "consistent".to_string(),
                Reverification::Divergent { differences, .. } => format!("divergent: {}", differences.join("; ")),
                Reverification::Unverifiable { reason } => format!("unverifiable: {reason}"),
            };
            println!("{file} {}: {status}", r.signature);
        }
    }
}
