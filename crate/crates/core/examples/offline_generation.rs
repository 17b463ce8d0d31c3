//! Expand the fixture seeds into verified variations with the offline mock
//! backend. The fixture plants a few faults (garbage replies, a range
//! violation, a broken plan, a fenced reply, a signature collision, a
//! transport error) so the retry paths show up in the rejected attempts.
//!
//! ```bash
//! cargo run -p ipg-core --example offline_generation
//! ```

use ipg::axiom::Curriculum;
use ipg::gateway::mock::{MockBackend, MockFixture};
use ipg::generation::GenerationConfig;
use ipg::pipeline::Pipeline;
use ipg::seed::load_seeds;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() {
    let cm = Curriculum::classical_mechanics();
    let seeds = load_seeds(format!("{FIXTURES}/seeds.jsonl")).unwrap();
    let config = GenerationConfig {
        variations: 6,
        ..GenerationConfig::default()
    };
    let backend = MockBackend::new(
        MockFixture::load(format!("{FIXTURES}/mock_backend.json")).unwrap(),
        config.rng_seed,
    );
    let out = Pipeline::new(&cm, config, &backend).run_session(&seeds).unwrap();

    for s in &out.seeds {
        println!(
            "{:<10} accepted {}  abandoned {}  rejected attempts {}",
            s.seed_id,
            s.accepted.len(),
            s.failures.len(),
            s.rejected.len()
        );
        for a in s.accepted.iter().take(2) {
            let flag = if a.low_complexity { "  [low complexity]" } else { "" };
            println!(
                "    {} = {}{flag}",
                a.signature,
                a.record.execution_result.as_deref().unwrap_or("null")
            );
        }
        for r in s.rejected.iter().take(2) {
            println!("    rejected {} attempt {}: {}", r.template, r.attempt, r.error);
        }
    }
    println!(
        "\n{} accepted in {} calls, {} collisions",
        out.accepted_count(),
        out.calls.total_calls,
        out.collisions
    );
    if let Some((lo, hi)) = out.calls.accepted_range() {
        println!("calls per accepted problem: {lo}..={hi}");
    }

    let first = out.records().next().unwrap();
    println!("\nfirst record:\n{}", serde_json::to_string_pretty(first).unwrap());
}
