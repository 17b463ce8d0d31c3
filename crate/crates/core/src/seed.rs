//! Seed tuples and their Phase I analysis: relevant chapters, alternate
//! scenarios, the variable dictionary, and the formula-sufficiency loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axiom::{is_valid_formula_id, AxiomError, ChapterDictionary, Curriculum, FormulaLibrary};
use crate::sanity::RuleSet;
use crate::units::Unit;

/// Scenario count the analysis prompt asks for.
pub const SCENARIO_COUNT: usize = 6;
/// Chapter count the analysis prompt asks for.
pub const INITIAL_CHAPTER_COUNT: usize = 2;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("seed #{index}: missing or empty field `{field}`")]
    MissingField { index: usize, field: &'static str },
    #[error("duplicate seed id `{0}`")]
    DuplicateId(String),
    #[error("formula `{0}` exists in no chapter")]
    UnknownFormulaId(String),
    #[error("malformed formula id `{0}`")]
    MalformedFormulaId(String),
    #[error("chapter `{0}` is already part of the analysis")]
    ChapterAlreadyPresent(String),
    #[error("expansion requires an insufficient verdict")]
    NotInsufficient,
    #[error("analysis: {0}")]
    InvalidAnalysis(String),
    #[error("no chapter set covers the seed solution (still missing `{0}`)")]
    CoverageExhausted(String),
    #[error(transparent)]
    Axiom(#[from] AxiomError),
    #[error("reading seeds: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTuple {
    pub id: String,
    pub chapter: String,
    pub question: String,
    pub solution: String,
}

/// Admissible values for one variable: `[min, max]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub unit: String,
    pub min: f64,
    pub max: f64,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, min: f64, max: f64) -> Self {
        VariableSpec {
            name: name.into(),
            unit: unit.into(),
            min,
            max,
        }
    }

    pub fn unit(&self) -> Result<Unit, crate::units::UnitError> {
        Unit::parse(&self.unit)
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

/// Wire form used by the analysis prompt and seed sidecars:
/// `{"name": {"range": [min, max], "unit": "..."}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeEntry {
    pub range: [f64; 2],
    pub unit: String,
}

pub fn specs_from_map(map: &BTreeMap<String, RangeEntry>) -> Vec<VariableSpec> {
    map.iter()
        .map(|(name, e)| VariableSpec::new(name.clone(), e.unit.clone(), e.range[0], e.range[1]))
        .collect()
}

pub fn specs_to_map(specs: &[VariableSpec]) -> BTreeMap<String, RangeEntry> {
    specs
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                RangeEntry {
                    range: [s.min, s.max],
                    unit: s.unit.clone(),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    InvertedRange,
    UnknownUnit(String),
    HardBound(String),
    NonFiniteBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub name: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::InvertedRange => write!(f, "`{}`: minimum exceeds maximum", self.name),
            ViolationKind::UnknownUnit(e) => write!(f, "`{}`: {e}", self.name),
            ViolationKind::HardBound(rule) => write!(f, "`{}`: range breaks {rule}", self.name),
            ViolationKind::NonFiniteBound => write!(f, "`{}`: range bounds must be finite", self.name),
        }
    }
}

/// Flags inverted or non-finite ranges, unresolvable units, and ranges that
/// break the hard physical bounds (m > 0, mu in [0, 1], t >= 0). Output is
/// sorted by name, so it does not depend on input order.
pub fn validate_variable_dictionary(vars: &[VariableSpec]) -> Result<(), Vec<Violation>> {
    validate_with_bounds(vars, &RuleSet::default_hard_bounds())
}

pub fn validate_with_bounds(vars: &[VariableSpec], bounds: &RuleSet) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for v in vars {
        let mut push = |kind| {
            out.push(Violation {
                name: v.name.clone(),
                kind,
            })
        };
        if !v.min.is_finite() || !v.max.is_finite() {
            push(ViolationKind::NonFiniteBound);
            continue;
        }
        if v.min > v.max {
            push(ViolationKind::InvertedRange);
        }
        if let Err(e) = v.unit() {
            push(ViolationKind::UnknownUnit(e.to_string()));
        }
        for rule in bounds.rules() {
            if rule.pattern.matches(&v.name) && !rule.predicate.holds_on_range(v.min, v.max) {
                push(ViolationKind::HardBound(format!("{} {}", v.name, rule.predicate)));
                break;
            }
        }
    }
    out.sort_by(|a, b| {
        a.name
            .cmp(&b.name)
            .then_with(|| format!("{:?}", a.kind).cmp(&format!("{:?}", b.kind)))
    });
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyStatus {
    Sufficient,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub status: SufficiencyStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_chapter: Option<String>,
    #[serde(default)]
    pub reason: String,
}

impl SufficiencyVerdict {
    pub fn sufficient() -> Self {
        SufficiencyVerdict {
            status: SufficiencyStatus::Sufficient,
            missing_chapter: None,
            reason: String::new(),
        }
    }

    pub fn insufficient(chapter: impl Into<String>, reason: impl Into<String>) -> Self {
        SufficiencyVerdict {
            status: SufficiencyStatus::Insufficient,
            missing_chapter: Some(chapter.into()),
            reason: reason.into(),
        }
    }

    pub fn is_sufficient(&self) -> bool {
        self.status == SufficiencyStatus::Sufficient
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub chapters: Vec<String>,
    pub scenarios: Vec<String>,
    pub variables: Vec<VariableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sufficiency: Option<SufficiencyStatus>,
}

impl AnalysisResult {
    /// Builds a fresh analysis as the analysis prompt returns it: exactly two
    /// known chapters, exactly six scenarios, unique variable names.
    pub fn new(
        chapters: Vec<String>,
        scenarios: Vec<String>,
        variables: Vec<VariableSpec>,
        dict: &ChapterDictionary,
    ) -> Result<Self, SeedError> {
        if chapters.len() != INITIAL_CHAPTER_COUNT {
            return Err(SeedError::InvalidAnalysis(format!(
                "expected exactly {INITIAL_CHAPTER_COUNT} chapters, got {}",
                chapters.len()
            )));
        }
        if scenarios.len() != SCENARIO_COUNT {
            return Err(SeedError::InvalidAnalysis(format!(
                "expected exactly {SCENARIO_COUNT} scenarios, got {}",
                scenarios.len()
            )));
        }
        let a = AnalysisResult {
            chapters,
            scenarios,
            variables,
            sufficiency: None,
        };
        a.check(dict)?;
        Ok(a)
    }

    /// Invariants that hold for the whole lifetime of an analysis.
    pub fn check(&self, dict: &ChapterDictionary) -> Result<(), SeedError> {
        let mut seen = BTreeSet::new();
        for c in &self.chapters {
            if dict.chapter(c).is_none() {
                return Err(SeedError::Axiom(AxiomError::UnknownChapter(c.clone())));
            }
            if !seen.insert(c) {
                return Err(SeedError::InvalidAnalysis(format!("chapter `{c}` listed twice")));
            }
        }
        if self.scenarios.is_empty() || self.scenarios.iter().any(|s| s.trim().is_empty()) {
            return Err(SeedError::InvalidAnalysis("scenarios must be non-empty".into()));
        }
        let mut names = BTreeSet::new();
        for v in &self.variables {
            if !names.insert(&v.name) {
                return Err(SeedError::InvalidAnalysis(format!(
                    "variable `{}` listed twice",
                    v.name
                )));
            }
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }
}

/// Sufficient iff every id is in `library`; otherwise names the chapter
/// that owns the first missing id (first listed chapter on ties).
pub fn check_formula_sufficiency<'a, I>(
    formula_ids: I,
    library: &FormulaLibrary,
    dict: &ChapterDictionary,
) -> Result<SufficiencyVerdict, SeedError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut missing = None;
    for id in formula_ids {
        if !is_valid_formula_id(id) {
            return Err(SeedError::MalformedFormulaId(id.to_string()));
        }
        if dict.owner_of(id).is_none() {
            return Err(SeedError::UnknownFormulaId(id.to_string()));
        }
        if missing.is_none() && !library.contains(id) {
            missing = Some(id);
        }
    }
    Ok(match missing {
        None => SufficiencyVerdict::sufficient(),
        Some(id) => {
            let owner = dict.owner_of(id).expect("checked above");
            SufficiencyVerdict::insufficient(
                owner.name.clone(),
                format!("formula {id} is not in the identified chapters"),
            )
        }
    })
}

/// Adds the verdict's missing chapter to the analysis.
pub fn expand_chapters(
    analysis: &AnalysisResult,
    verdict: &SufficiencyVerdict,
    dict: &ChapterDictionary,
) -> Result<AnalysisResult, SeedError> {
    let chapter = match (&verdict.status, &verdict.missing_chapter) {
        (SufficiencyStatus::Insufficient, Some(c)) => c,
        _ => return Err(SeedError::NotInsufficient),
    };
    if dict.chapter(chapter).is_none() {
        return Err(SeedError::Axiom(AxiomError::UnknownChapter(chapter.clone())));
    }
    if analysis.chapters.contains(chapter) {
        return Err(SeedError::ChapterAlreadyPresent(chapter.clone()));
    }
    let mut next = analysis.clone();
    next.chapters.push(chapter.clone());
    next.sufficiency = Some(SufficiencyStatus::Insufficient);
    Ok(next)
}

/// Outcome of running check/expand to a fixpoint.
#[derive(Debug, Clone)]
pub struct Coverage {
    pub analysis: AnalysisResult,
    pub library: FormulaLibrary,
    pub expansions: usize,
}

/// Alternates sufficiency checks and chapter expansion until the reference
/// formula ids are covered. Terminates within the dictionary size.
pub fn ensure_coverage(
    analysis: AnalysisResult,
    reference_ids: &[String],
    curriculum: &Curriculum,
) -> Result<Coverage, SeedError> {
    let dict = &curriculum.dictionary;
    let mut analysis = analysis;
    let mut expansions = 0;
    loop {
        let library = curriculum.resolve_library(&analysis.chapters)?;
        let verdict = check_formula_sufficiency(reference_ids.iter().map(String::as_str), &library, dict)?;
        if verdict.is_sufficient() {
            analysis.sufficiency = Some(SufficiencyStatus::Sufficient);
            return Ok(Coverage {
                analysis,
                library,
                expansions,
            });
        }
        if expansions >= dict.len() {
            return Err(SeedError::CoverageExhausted(
                verdict.missing_chapter.unwrap_or_default(),
            ));
        }
        analysis = expand_chapters(&analysis, &verdict, dict)?;
        expansions += 1;
    }
}

/// Optional hand-authored Phase I annotation stored next to a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSidecar {
    pub chapters: Vec<String>,
    pub scenarios: Vec<String>,
    pub variables: BTreeMap<String, RangeEntry>,
    /// Formula ids the reference solution uses, for offline sufficiency checks.
    #[serde(default)]
    pub solution_formula_ids: Vec<String>,
}

/// One line of a seed file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    #[serde(flatten)]
    pub seed: SeedTuple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSidecar>,
}

#[derive(Deserialize)]
struct LooseSeed {
    id: Option<String>,
    chapter: Option<String>,
    question: Option<String>,
    solution: Option<String>,
    analysis: Option<AnalysisSidecar>,
}

/// Parses JSON-lines seed text. Blank lines are skipped.
pub fn parse_seeds(text: &str) -> Result<Vec<SeedRecord>, SeedError> {
    let mut out: Vec<SeedRecord> = Vec::new();
    let mut ids = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loose: LooseSeed = serde_json::from_str(line).map_err(|e| SeedError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let index = out.len();
        let field = |v: Option<String>, name: &'static str| {
            v.filter(|s| !s.trim().is_empty())
                .ok_or(SeedError::MissingField { index, field: name })
        };
        let seed = SeedTuple {
            id: field(loose.id, "id")?,
            chapter: field(loose.chapter, "chapter")?,
            question: field(loose.question, "question")?,
            solution: field(loose.solution, "solution")?,
        };
        if !ids.insert(seed.id.clone()) {
            return Err(SeedError::DuplicateId(seed.id));
        }
        out.push(SeedRecord {
            seed,
            analysis: loose.analysis,
        });
    }
    Ok(out)
}

pub fn load_seeds(path: impl AsRef<Path>) -> Result<Vec<SeedRecord>, SeedError> {
    parse_seeds(&std::fs::read_to_string(path)?)
}
