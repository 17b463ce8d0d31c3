//! Point the pipeline at a live chat-completion endpoint. Configuration comes
//! from `IPG_ENDPOINT`, `IPG_API_KEY` and `IPG_MODEL`; without an endpoint
//! the example prints the stage temperatures and stops.
//!
//! ```bash
//! IPG_ENDPOINT=http://localhost:8000/v1/chat/completions IPG_MODEL=my-model \
//!     cargo run -p ipg-core --example remote_backend
//! ```

use ipg::axiom::Curriculum;
use ipg::gateway::remote::{RemoteBackend, RemoteConfig};
use ipg::gateway::TemplateId;
use ipg::generation::GenerationConfig;
use ipg::pipeline::Pipeline;
use ipg::seed::load_seeds;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn main() {
    let config = match RemoteConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            println!("no remote backend configured ({e})");
            let defaults = RemoteConfig {
                endpoint: String::new(),
                api_key: None,
                model: String::new(),
                timeout_secs: 300,
                temperatures: Default::default(),
            };
            for id in [
                TemplateId::Sufficiency,
                TemplateId::Generate,
                TemplateId::Code,
                TemplateId::Analysis,
            ] {
                println!("  {id:?} temperature {}", defaults.temperature(id));
            }
            return;
        }
    };
    println!("using {} at {}", config.model, config.endpoint);

    let cm = Curriculum::classical_mechanics();
    let seeds = load_seeds(format!("{FIXTURES}/seeds.jsonl")).unwrap();
    let backend = RemoteBackend::new(config);
    let generation = GenerationConfig {
        variations: 1,
        ..GenerationConfig::default()
    };
    match Pipeline::new(&cm, generation, &backend).run_session(&seeds[..1]) {
        Ok(out) => {
            for r in out.records() {
                println!(
                    "{}\n  {} = {}",
                    r.word_problem,
                    r.unknown_var,
                    r.execution_result.as_deref().unwrap_or("null")
                );
            }
            println!("{} accepted in {} calls", out.accepted_count(), out.calls.total_calls);
        }
        Err(e) => println!("session failed: {e}"),
    }
}
