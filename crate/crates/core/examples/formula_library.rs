//! Browse the bundled curriculum, assemble a per-problem library from two
//! chapters and call one of its axioms directly.
//!
//! ```bash
//! cargo run -p ipg-core --example formula_library
//! ```

use ipg::axiom::Curriculum;

fn main() {
    let cm = Curriculum::classical_mechanics();
    println!("curriculum `{}`: {} axioms", cm.name, cm.registry.len());
    for chapter in cm.dictionary.chapters() {
        println!("  {:<24} {} formulas", chapter.name, chapter.formula_ids.len());
    }

    let library = cm.resolve_library(&["Kinematics", "Newton's Laws"]).unwrap();
    println!("\nlibrary for a braking problem: {} formulas", library.len());

    let axiom = library.get("3_A").unwrap();
    let params: Vec<String> = axiom
        .params
        .iter()
        .map(|p| format!("{} [{}]", p.name, p.unit))
        .collect();
    println!(
        "{} {}({}) -> {} [{}]",
        axiom.formula_id,
        axiom.name,
        params.join(", "),
        axiom.output.name,
        axiom.output.unit
    );
    println!("  {} = {}", axiom.output.name, axiom.body_text);
    let v = axiom.invoke(&[15.0, -2.5, 4.0]).unwrap();
    println!("  3_A(u = 15, a = -2.5, t = 4) = {v}");

    // Wrong arity is an error, not a panic.
    println!("  3_A(15) -> {}", axiom.invoke(&[15.0]).unwrap_err());

    // What the generation prompts see.
    let first = &library.to_prompt_json()[0];
    println!("\nprompt entry:\n{}", serde_json::to_string_pretty(first).unwrap());
}
