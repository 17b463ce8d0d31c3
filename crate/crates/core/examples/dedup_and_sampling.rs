//! The pieces that keep variations distinct: canonical problem signatures,
//! the shared signature registry, range-bounded sampling and the scenario
//! round-robin.
//!
//! ```bash
//! cargo run -p ipg-core --example dedup_and_sampling
//! ```

use ipg::generation::{sample_variables, InsertOutcome, ProblemSignature, RoundRobin, SignatureRegistry};
use ipg::seed::VariableSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let a = ProblemSignature::new(&["5_B", "3_D", "3_A"], "s").unwrap();
    let b = ProblemSignature::new(&["3_A", "5_B", "3_D", "3_A"], "s").unwrap();
    println!("{a}\n{b}\nsame problem: {}", a == b);

    let registry = SignatureRegistry::new();
    for sig in [&a, &b, &ProblemSignature::new(&["5_B", "3_A", "3_D"], "t").unwrap()] {
        let outcome = registry.insert(sig);
        println!(
            "insert {sig}: {}",
            if outcome == InsertOutcome::Fresh {
                "fresh"
            } else {
                "collision"
            }
        );
    }
    println!("{} accepted, {} collisions", registry.len(), registry.collisions());

    let specs = [
        VariableSpec::new("m", "kg", 800.0, 2000.0),
        VariableSpec::new("u", "m/s", 5.0, 30.0),
        VariableSpec::new("mu", "dimensionless", 0.12, 0.12),
        VariableSpec::new("s", "m", 1.0, 1000.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..3 {
        let vars = sample_variables(&specs, "s", &mut rng).unwrap();
        println!("{}", serde_json::to_string(&vars).unwrap());
    }

    let mut scenarios = RoundRobin::new(6, Some(2)).unwrap();
    let order: Vec<usize> = std::iter::from_fn(|| scenarios.next_scenario()).collect();
    println!("scenario order with a quota of 2: {order:?}");
}
