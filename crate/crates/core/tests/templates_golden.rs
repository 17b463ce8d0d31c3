use std::collections::BTreeMap;

use ipg::gateway::{BraceStyle, PromptTemplate, TemplateId, TemplateSet, CODE_FIX_PYTHON, CODE_PYTHON};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

fn fields() -> BTreeMap<String, String> {
    serde_json::from_str(&std::fs::read_to_string(format!("{GOLDEN}/fields.json")).unwrap()).unwrap()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{GOLDEN}/{name}.txt")).unwrap()
}

#[test]
fn builtin_templates_render_to_golden_text() {
    let set = TemplateSet::builtin();
    let f = fields();
    for id in TemplateId::ALL {
        let rendered = set.render(id, &f).unwrap();
        assert_eq!(rendered, golden(id.name()), "template {id}");
    }
}

#[test]
fn python_code_templates_render_to_golden_text() {
    let f = fields();
    for (id, body, name) in [
        (TemplateId::Code, CODE_PYTHON, "code_python"),
        (TemplateId::CodeFix, CODE_FIX_PYTHON, "code_fix_python"),
    ] {
        let t = PromptTemplate::new(id, body, BraceStyle::Format).unwrap();
        assert_eq!(t.render(&f).unwrap(), golden(name), "{name}");
    }
}

#[test]
fn analysis_leaves_unknown_braces_alone() {
    let rendered = TemplateSet::builtin().render(TemplateId::Analysis, &fields()).unwrap();
    assert!(rendered.contains("{not a field}"));
}
