//! Run the two worked-example plans shipped in `fixtures/`: a restitution
//! problem that needs no library formula and a six-formula rigid-body
//! problem. Also prints the Python transcription of the second.
//!
//! ```bash
//! cargo run -p ipg-core --example solution_plans
//! ```

use ipg::axiom::Curriculum;
use ipg::plan::{execute_plan, parse_solution_plan, to_python_source};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() {
    let cm = Curriculum::classical_mechanics();
    let library = cm
        .resolve_library(&["Centre of Mass", "Rigid Body Dynamics", "Circular Motion"])
        .unwrap();

    for name in ["restitution_plan.txt", "dart_plan.txt"] {
        let text = std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap();
        let plan = parse_solution_plan(&text).unwrap();
        let run = execute_plan(&plan, &library).unwrap();
        println!(
            "{name}: {} = {:?} using {} formulas {:?}",
            plan.target(),
            run.value,
            run.invoked.len(),
            run.invoked
        );
        if name == "dart_plan.txt" {
            println!("\n{}", to_python_source(&plan, &library));
        }
    }

    // Plans are checked before anything runs.
    for broken in [
        "compute y = x + 1\nreturn y",
        "bind x = 1\nbind x = 2\nreturn x",
        "bind m = 2\ninvoke c = 99_Z(m)\nreturn c",
    ] {
        match parse_solution_plan(broken).map(|p| execute_plan(&p, &library)) {
            Err(e) => println!("rejected: {e}"),
            Ok(Err(e)) => println!("failed:   {e}"),
            Ok(Ok(run)) => println!("ran:      {}", run.value),
        }
    }
}
