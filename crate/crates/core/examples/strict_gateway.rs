//! Strict JSON handling and the retry loop around a backend. A scripted
//! backend first answers with prose, then with a fenced reply that fails
//! validation, and finally with an acceptable verdict. The failed attempts
//! switch nothing here because the sufficiency stage has no correction
//! prompt; the draft and code stages do.
//!
//! ```bash
//! cargo run -p ipg-core --example strict_gateway
//! ```

use ipg::gateway::{
    parse_strict_json, request_with_retry, Backend, BackendError, CallBudget, ChatRequest, Fields, RawReply,
    TemplateId, TemplateSet,
};

struct Scripted;

impl Backend for Scripted {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, BackendError> {
        let text = match request.attempt {
            1 => "Sure! The chapters look sufficient to me.",
            2 => "```json\n{\"status\": \"MAYBE\"}\n```",
            _ => "{\"status\": \"YES\", \"missing_chapters\": []}",
        };
        Ok(RawReply::text(text))
    }
}

fn main() {
    for reply in [
        "{\"status\": \"YES\"}",
        "```json\n{\"status\": \"NO\", \"missing_chapters\": [\"Friction\"]}\n```",
        "Here you go: {\"status\": \"YES\"}",
        "{\"status\": \"YES\"} Hope this helps!",
        "{\"status\": \"YES\",}",
    ] {
        match parse_strict_json(reply) {
            Ok(j) => println!("accepted (fenced={}): {}", j.fenced, j.document),
            Err(e) => println!("rejected: {e}"),
        }
    }

    let templates = TemplateSet::builtin();
    let fields = Fields::from([
        ("solution".to_string(), "a = F/m, then v = u + a t".to_string()),
        (
            "identified_chapters".to_string(),
            "[\"Kinematics\", \"Newton's Laws\"]".to_string(),
        ),
        ("all_chapters_json".to_string(), "{}".to_string()),
    ]);
    let budget = CallBudget::new(3);
    let outcome = request_with_retry(
        &Scripted,
        &templates,
        TemplateId::Sufficiency,
        &fields,
        "demo",
        &budget,
        None,
        |response| {
            let doc = response
                .document
                .as_ref()
                .ok_or("reply is not a single JSON document")?;
            match doc["status"].as_str() {
                Some(s @ ("YES" | "NO")) => Ok(s.to_string()),
                other => Err(format!("status must be YES or NO, got {other:?}")),
            }
        },
    )
    .unwrap();
    println!("\nverdict {} after {} calls", outcome.value, outcome.calls);
    println!("{:?}", budget.stats());
}
