use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Analysis,
    Sufficiency,
    Generate,
    GenerateFix,
    Code,
    CodeFix,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::Analysis,
        TemplateId::Sufficiency,
        TemplateId::Generate,
        TemplateId::GenerateFix,
        TemplateId::Code,
        TemplateId::CodeFix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Analysis => "analysis",
            TemplateId::Sufficiency => "sufficiency",
            TemplateId::Generate => "generate",
            TemplateId::GenerateFix => "generate_fix",
            TemplateId::Code => "code",
            TemplateId::CodeFix => "code_fix",
        }
    }

    /// The correction template used after a failed attempt, if any.
    pub fn fix(self) -> Option<TemplateId> {
        match self {
            TemplateId::Generate | TemplateId::GenerateFix => Some(TemplateId::GenerateFix),
            TemplateId::Code | TemplateId::CodeFix => Some(TemplateId::CodeFix),
            _ => None,
        }
    }

    /// Code templates answer with plan text; the rest answer with JSON.
    pub fn expects_json(self) -> bool {
        !matches!(self, TemplateId::Code | TemplateId::CodeFix)
    }

    /// Generation templates sample; the others should be deterministic.
    pub fn default_temperature(self) -> f64 {
        match self {
            TemplateId::Generate | TemplateId::GenerateFix => 0.7,
            _ => 0.0,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = TemplateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("missing value for placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("template `{id}`: {message}")]
    Malformed { id: String, message: String },
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

/// How braces in a template body are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BraceStyle {
    /// `str.format` rules: `{{` and `}}` are literal braces, `{name}` is a
    /// placeholder.
    Format,
    /// Only the listed placeholders are substituted; every other brace is
    /// literal text.
    Replace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
    pieces: Vec<Piece>,
}

const ANALYSIS_FIELDS: [&str; 3] = ["chapters_json", "question", "solution"];

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>, style: BraceStyle) -> Result<Self, TemplateError> {
        let body = body.into();
        let pieces = match style {
            BraceStyle::Format => split_format(&body).map_err(|message| TemplateError::Malformed {
                id: id.to_string(),
                message,
            })?,
            BraceStyle::Replace => split_replace(&body, &ANALYSIS_FIELDS),
        };
        Ok(PromptTemplate { id, body, pieces })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Field(f) => Some(f.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder verbatim. Extra fields are ignored.
    pub fn render(&self, fields: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Field(f) => out.push_str(
                    fields
                        .get(f)
                        .ok_or_else(|| TemplateError::MissingPlaceholder(f.clone()))?,
                ),
            }
        }
        Ok(out)
    }
}

fn split_format(body: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(i) = rest.find(['{', '}']) {
        text.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            text.push_str(&tail[..1]);
            rest = &tail[2..];
        } else if tail.starts_with('{') {
            let end = tail.find('}').ok_or("unclosed `{`")?;
            let name = &tail[1..end];
            if !is_ident(name) {
                return Err(format!("`{{{name}}}` is not a placeholder"));
            }
            if !text.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut text)));
            }
            pieces.push(Piece::Field(name.to_string()));
            rest = &tail[end + 1..];
        } else {
            return Err("single `}` outside a placeholder".into());
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

fn split_replace(body: &str, names: &[&str]) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    'outer: while let Some(i) = rest.find('{') {
        text.push_str(&rest[..i]);
        let tail = &rest[i..];
        for name in names {
            let token = format!("{{{name}}}");
            if tail.starts_with(&token) {
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Field(name.to_string()));
                rest = &tail[token.len()..];
                continue 'outer;
            }
        }
        text.push('{');
        rest = &tail[1..];
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    pieces
}

pub const ANALYSIS: &str = include_str!("../../templates/analysis.txt");
pub const SUFFICIENCY: &str = include_str!("../../templates/sufficiency.txt");
pub const GENERATE: &str = include_str!("../../templates/generate.txt");
pub const GENERATE_FIX: &str = include_str!("../../templates/generate_fix.txt");
pub const CODE: &str = include_str!("../../templates/code.txt");
pub const CODE_FIX: &str = include_str!("../../templates/code_fix.txt");
/// The original code-generation prompts, which ask for Python source.
pub const CODE_PYTHON: &str = include_str!("../../templates/code_python.txt");
pub const CODE_FIX_PYTHON: &str = include_str!("../../templates/code_fix_python.txt");

fn style(id: TemplateId) -> BraceStyle {
    if id == TemplateId::Analysis {
        BraceStyle::Replace
    } else {
        BraceStyle::Format
    }
}

/// The six prompts, indexed by id.
#[derive(Debug, Clone)]
pub struct TemplateSet(BTreeMap<TemplateId, PromptTemplate>);

impl TemplateSet {
    pub fn builtin() -> Self {
        let bodies = [ANALYSIS, SUFFICIENCY, GENERATE, GENERATE_FIX, CODE, CODE_FIX];
        TemplateSet(
            TemplateId::ALL
                .into_iter()
                .zip(bodies)
                .map(|(id, body)| {
                    (
                        id,
                        PromptTemplate::new(id, body, style(id)).expect("builtin templates parse"),
                    )
                })
                .collect(),
        )
    }

    /// Loads `<id>.txt` from `dir` where present, builtins otherwise.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::builtin();
        for id in TemplateId::ALL {
            let path = dir.as_ref().join(format!("{id}.txt"));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.0.insert(id, PromptTemplate::new(id, body, style(id))?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.0[&id]
    }

    pub fn render(&self, id: TemplateId, fields: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        self.get(id).render(fields)
    }
}

/// Renders a builtin template looked up by name.
pub fn render_prompt(id: &str, fields: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    TemplateSet::builtin().render(id.parse()?, fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn placeholder_sets() {
        let set = TemplateSet::builtin();
        let names = |id| {
            set.get(id)
                .placeholders()
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>()
        };
        assert_eq!(names(TemplateId::Analysis), ["chapters_json", "question", "solution"]);
        assert_eq!(
            names(TemplateId::Sufficiency),
            ["all_chapters_json", "identified_chapters", "solution"]
        );
        assert_eq!(
            names(TemplateId::GenerateFix),
            [
                "alternate_scenarios",
                "available_formulas",
                "error_message",
                "previous_problems",
                "variables"
            ]
        );
        assert_eq!(
            names(TemplateId::Code),
            ["available_formulas", "formula_ids", "variables_dict", "word_problem"]
        );
    }

    #[test]
    fn missing_and_unknown() {
        let f = fields(&[
            ("available_formulas", "[]"),
            ("alternate_scenarios", "x"),
            ("variables", "{}"),
            ("previous_problems", "[]"),
        ]);
        assert_eq!(
            render_prompt("generate_fix", &f),
            Err(TemplateError::MissingPlaceholder("error_message".into()))
        );
        assert!(render_prompt("generate", &f).is_ok());
        assert!(matches!(
            render_prompt("summarize", &f),
            Err(TemplateError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn brace_styles() {
        let t = PromptTemplate::new(TemplateId::Generate, "{{\"a\": {x}}}", BraceStyle::Format).unwrap();
        assert_eq!(t.render(&fields(&[("x", "{y}")])).unwrap(), "{\"a\": {y}}");
        let t = PromptTemplate::new(TemplateId::Analysis, "{ \"k\": {question} }", BraceStyle::Replace).unwrap();
        assert_eq!(t.render(&fields(&[("question", "q")])).unwrap(), "{ \"k\": q }");
        assert!(PromptTemplate::new(TemplateId::Generate, "a } b", BraceStyle::Format).is_err());
    }
}
