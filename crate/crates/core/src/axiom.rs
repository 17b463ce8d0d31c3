//! Executable axioms, the registry that validates them, and the chapter
//! dictionary used to assemble per-seed formula libraries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, evaluate, infer_dimension, DimensionError, EvalError, Expr, ParseError};
use crate::units::{Dimension, Unit};

#[derive(Debug, Error)]
pub enum AxiomError {
    #[error("formula id `{0}` is already registered")]
    DuplicateFormulaId(String),
    #[error("formula `{formula_id}` declares output {expected} but its body has dimension {found}")]
    DimensionMismatch {
        formula_id: String,
        expected: Dimension,
        found: Dimension,
    },
    #[error("formula `{formula_id}` references undeclared parameter `{name}`")]
    UndeclaredParameter { formula_id: String, name: String },
    #[error("formula `{formula_id}`: {source}")]
    Dimension { formula_id: String, source: DimensionError },
    #[error("formula `{formula_id}` body: {source}")]
    Body { formula_id: String, source: ParseError },
    #[error("malformed formula id `{0}` (expected <chapter>_<LETTERS>)")]
    BadFormulaId(String),
    #[error("formula `{formula_id}` declares parameter `{name}` twice")]
    DuplicateParameter { formula_id: String, name: String },
    #[error("unknown chapter `{0}`")]
    UnknownChapter(String),
    #[error("duplicate chapter `{0}`")]
    DuplicateChapter(String),
    #[error("chapter `{chapter}` lists unregistered formula `{formula_id}`")]
    DanglingFormula { chapter: String, formula_id: String },
    #[error(transparent)]
    Unit(#[from] crate::units::UnitError),
    #[error("reading library: {0}")]
    Io(#[from] std::io::Error),
    #[error("library document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Checks the `<chapter_number>_<letters>` id shape, e.g. `10_A` or `3_AB`.
pub fn is_valid_formula_id(id: &str) -> bool {
    match id.split_once('_') {
        Some((num, letters)) => {
            !num.is_empty()
                && num.bytes().all(|b| b.is_ascii_digit())
                && !letters.is_empty()
                && letters.bytes().all(|b| b.is_ascii_uppercase())
        }
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub unit: Unit,
}

#[derive(Debug, Clone)]
pub struct Axiom {
    pub formula_id: String,
    pub chapter: String,
    pub name: String,
    pub params: Vec<Param>,
    pub output: Param,
    pub body: Expr,
    pub body_text: String,
    pub docstring: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvokeError {
    #[error("`{formula_id}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        formula_id: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Axiom {
    pub fn from_entry(chapter: &str, entry: FormulaEntry) -> Result<Axiom, AxiomError> {
        let body = expr::parse_expression(&entry.body).map_err(|source| AxiomError::Body {
            formula_id: entry.formula_id.clone(),
            source,
        })?;
        Ok(Axiom {
            formula_id: entry.formula_id,
            chapter: chapter.to_string(),
            name: entry.name,
            params: entry.params,
            output: entry.output,
            body,
            body_text: entry.body,
            docstring: entry.docstring,
        })
    }

    pub fn to_entry(&self) -> FormulaEntry {
        FormulaEntry {
            formula_id: self.formula_id.clone(),
            name: self.name.clone(),
            params: self.params.clone(),
            output: self.output.clone(),
            body: self.body_text.clone(),
            docstring: self.docstring.clone(),
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// Evaluates the body with `args` bound positionally to the parameters.
    pub fn invoke(&self, args: &[f64]) -> Result<f64, InvokeError> {
        if args.len() != self.params.len() {
            return Err(InvokeError::ArityMismatch {
                formula_id: self.formula_id.clone(),
                expected: self.params.len(),
                got: args.len(),
            });
        }
        let bindings: Vec<(&str, f64)> = self
            .params
            .iter()
            .zip(args)
            .map(|(p, v)| (p.name.as_str(), *v))
            .collect();
        Ok(evaluate(&self.body, bindings.as_slice())?)
    }

    /// Structural checks run at registration: id shape, declared parameters
    /// and output dimension.
    fn check(&self) -> Result<(), AxiomError> {
        let fid = || self.formula_id.clone();
        if !is_valid_formula_id(&self.formula_id) {
            return Err(AxiomError::BadFormulaId(fid()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(AxiomError::DuplicateParameter {
                    formula_id: fid(),
                    name: p.name.clone(),
                });
            }
        }
        for name in self.body.variables() {
            if !seen.contains(name) {
                return Err(AxiomError::UndeclaredParameter {
                    formula_id: fid(),
                    name: name.to_string(),
                });
            }
        }
        let lookup = |name: &str| self.params.iter().find(|p| p.name == name).map(|p| p.unit.dimension());
        let found = infer_dimension(&self.body, &lookup).map_err(|source| AxiomError::Dimension {
            formula_id: fid(),
            source,
        })?;
        let expected = self.output.unit.dimension();
        if found != expected {
            return Err(AxiomError::DimensionMismatch {
                formula_id: fid(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        write!(
            f,
            "{} {}({}) -> {} = {}",
            self.formula_id,
            self.name,
            params.join(", "),
            self.output.name,
            self.body_text
        )
    }
}

/// All known axioms, keyed by formula id.
#[derive(Debug, Clone, Default)]
pub struct AxiomRegistry {
    axioms: BTreeMap<String, Arc<Axiom>>,
}

impl AxiomRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, axiom: Axiom) -> Result<(), AxiomError> {
        if self.axioms.contains_key(&axiom.formula_id) {
            return Err(AxiomError::DuplicateFormulaId(axiom.formula_id));
        }
        axiom.check()?;
        self.axioms.insert(axiom.formula_id.clone(), Arc::new(axiom));
        Ok(())
    }

    pub fn get(&self, formula_id: &str) -> Option<&Arc<Axiom>> {
        self.axioms.get(formula_id)
    }

    pub fn contains(&self, formula_id: &str) -> bool {
        self.axioms.contains_key(formula_id)
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Axiom>> {
        self.axioms.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<u32>,
    pub description: String,
    pub formula_ids: Vec<String>,
}

/// Curriculum map from chapter name to description and formula ids.
/// Chapter order is significant: lookups that could match several chapters
/// resolve to the first one listed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChapterDictionary {
    chapters: Vec<ChapterEntry>,
}

impl ChapterDictionary {
    pub fn new(chapters: Vec<ChapterEntry>) -> Result<Self, AxiomError> {
        let mut names = BTreeSet::new();
        for c in &chapters {
            if !names.insert(c.name.as_str()) {
                return Err(AxiomError::DuplicateChapter(c.name.clone()));
            }
        }
        Ok(ChapterDictionary { chapters })
    }

    pub fn chapters(&self) -> &[ChapterEntry] {
        &self.chapters
    }

    pub fn chapter(&self, name: &str) -> Option<&ChapterEntry> {
        self.chapters.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.chapters.iter().map(|c| c.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.chapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chapters.is_empty()
    }

    /// First chapter (in dictionary order) that lists `formula_id`.
    pub fn owner_of(&self, formula_id: &str) -> Option<&ChapterEntry> {
        self.chapters
            .iter()
            .find(|c| c.formula_ids.iter().any(|f| f == formula_id))
    }

    /// Union of the formula ids of the named chapters.
    pub fn formula_ids<S: AsRef<str>>(&self, chapters: &[S]) -> Result<BTreeSet<String>, AxiomError> {
        let mut out = BTreeSet::new();
        for name in chapters {
            let c = self
                .chapter(name.as_ref())
                .ok_or_else(|| AxiomError::UnknownChapter(name.as_ref().to_string()))?;
            out.extend(c.formula_ids.iter().cloned());
        }
        Ok(out)
    }

    fn validate_against(&self, registry: &AxiomRegistry) -> Result<(), AxiomError> {
        for c in &self.chapters {
            if let Some(missing) = c.formula_ids.iter().find(|f| !registry.contains(f)) {
                return Err(AxiomError::DanglingFormula {
                    chapter: c.name.clone(),
                    formula_id: missing.clone(),
                });
            }
        }
        Ok(())
    }
}

/// The axioms available to one seed: a union of chapters.
#[derive(Debug, Clone, Default)]
pub struct FormulaLibrary {
    axioms: BTreeMap<String, Arc<Axiom>>,
    chapters: Vec<String>,
}

impl FormulaLibrary {
    pub fn get(&self, formula_id: &str) -> Option<&Arc<Axiom>> {
        self.axioms.get(formula_id)
    }

    pub fn contains(&self, formula_id: &str) -> bool {
        self.axioms.contains_key(formula_id)
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }

    pub fn formula_ids(&self) -> impl Iterator<Item = &str> {
        self.axioms.keys().map(String::as_str)
    }

    pub fn axioms(&self) -> impl Iterator<Item = &Arc<Axiom>> {
        self.axioms.values()
    }

    /// Chapters unioned into this library, sorted.
    pub fn chapters(&self) -> &[String] {
        &self.chapters
    }

    /// JSON rendering used as the `available_formulas` prompt field.
    pub fn to_prompt_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.axioms
                .values()
                .map(|a| serde_json::to_value(a.to_entry()).expect("formula entries serialize"))
                .collect(),
        )
    }
}

/// Registry plus chapter dictionary, loaded together from one library file.
#[derive(Debug, Clone)]
pub struct Curriculum {
    pub name: String,
    pub registry: AxiomRegistry,
    pub dictionary: ChapterDictionary,
}

impl Curriculum {
    pub fn new(
        name: impl Into<String>,
        registry: AxiomRegistry,
        dictionary: ChapterDictionary,
    ) -> Result<Self, AxiomError> {
        dictionary.validate_against(&registry)?;
        Ok(Curriculum {
            name: name.into(),
            registry,
            dictionary,
        })
    }

    pub fn from_document(doc: LibraryDocument) -> Result<Self, AxiomError> {
        let mut registry = AxiomRegistry::new();
        let mut chapters = Vec::with_capacity(doc.chapters.len());
        for chapter in doc.chapters {
            let mut ids = Vec::with_capacity(chapter.formulas.len());
            for entry in chapter.formulas {
                ids.push(entry.formula_id.clone());
                registry.register(Axiom::from_entry(&chapter.name, entry)?)?;
            }
            chapters.push(ChapterEntry {
                name: chapter.name,
                number: chapter.number,
                description: chapter.description,
                formula_ids: ids,
            });
        }
        Curriculum::new(doc.name, registry, ChapterDictionary::new(chapters)?)
    }

    pub fn from_json(text: &str) -> Result<Self, AxiomError> {
        Curriculum::from_document(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AxiomError> {
        Curriculum::from_json(&std::fs::read_to_string(path)?)
    }

    /// The shipped classical-mechanics library.
    pub fn classical_mechanics() -> Self {
        Curriculum::from_json(CLASSICAL_MECHANICS_JSON).expect("bundled library is valid")
    }

    /// Union of the axioms of `chapters`. Idempotent and order-independent.
    pub fn resolve_library<S: AsRef<str>>(&self, chapters: &[S]) -> Result<FormulaLibrary, AxiomError> {
        let ids = self.dictionary.formula_ids(chapters)?;
        let axioms = ids
            .into_iter()
            .map(|id| {
                let a = self.registry.get(&id).expect("dictionary validated at load").clone();
                (id, a)
            })
            .collect();
        let chapters: BTreeSet<String> = chapters.iter().map(|c| c.as_ref().to_string()).collect();
        Ok(FormulaLibrary {
            axioms,
            chapters: chapters.into_iter().collect(),
        })
    }

    /// Prompt rendering of the dictionary: chapter name and description.
    pub fn chapters_prompt_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.dictionary
                .chapters()
                .iter()
                .map(|c| (c.name.clone(), serde_json::Value::String(c.description.clone())))
                .collect(),
        )
    }

    /// Prompt rendering of every formula grouped by chapter.
    pub fn all_chapters_prompt_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.dictionary
                .chapters()
                .iter()
                .map(|c| {
                    let formulas = c
                        .formula_ids
                        .iter()
                        .filter_map(|id| self.registry.get(id))
                        .map(|a| serde_json::to_value(a.to_entry()).expect("formula entries serialize"))
                        .collect();
                    (c.name.clone(), serde_json::Value::Array(formulas))
                })
                .collect(),
        )
    }
}

pub const CLASSICAL_MECHANICS_JSON: &str = include_str!("../data/classical_mechanics.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaEntry {
    pub formula_id: String,
    pub name: String,
    pub params: Vec<Param>,
    pub output: Param,
    pub body: String,
    #[serde(default)]
    pub docstring: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<u32>,
    #[serde(default)]
    pub description: String,
    pub formulas: Vec<FormulaEntry>,
}

/// On-disk library format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryDocument {
    pub name: String,
    pub chapters: Vec<ChapterDocument>,
}


#[cfg(test)]
mod bundled_tests {
    use super::*;

    #[test]
    fn chapter_totals_match_curriculum() {
        let c = Curriculum::classical_mechanics();
        let sizes: Vec<(&str, usize)> = c
            .dictionary
            .chapters()
            .iter()
            .map(|ch| (ch.name.as_str(), ch.formula_ids.len()))
            .collect();
        assert_eq!(
            sizes,
            vec![
                ("Kinematics", 33),
                ("Newton's Laws", 10),
                ("Friction", 2),
                ("Work, Power, Energy", 9),
                ("Circular Motion", 20),
                ("Centre of Mass", 18),
                ("Rigid Body Dynamics", 20),
            ]
        );
        assert_eq!(c.registry.len(), 112);
        assert_eq!(c.resolve_library(&["Friction"]).unwrap().len(), 2);
    }

    #[test]
    fn ids_carry_chapter_numbers() {
        let c = Curriculum::classical_mechanics();
        for ch in c.dictionary.chapters() {
            let prefix = format!("{}_", ch.number.unwrap());
            assert!(ch.formula_ids.iter().all(|id| id.starts_with(&prefix)), "{}", ch.name);
        }
    }
}
