//! The automatable part of the failure taxonomy, and tier stratification.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::is_unrealistic;
use crate::axiom::{is_valid_formula_id, Curriculum, FormulaLibrary};
use crate::draft::VarMap;
use crate::generation::ProblemSignature;
use crate::plan::{execute_plan, parse_solution_plan};
use crate::record::{parse_result, DatasetRecord, ValidationResult, REQUIRED_FIELDS};
use crate::verify::variable_issues;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Category {
    ExecutionFailure = 1,
    MissingFields = 2,
    Formatting = 3,
    InsufficientFormulas = 4,
    SyntaxError = 5,
    UnrealisticResult = 6,
    WrongFormulaIds = 7,
    SignatureMismatch = 8,
    VariableIssues = 9,
    LowUniqueness = 13,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::ExecutionFailure,
        Category::MissingFields,
        Category::Formatting,
        Category::InsufficientFormulas,
        Category::SyntaxError,
        Category::UnrealisticResult,
        Category::WrongFormulaIds,
        Category::SignatureMismatch,
        Category::VariableIssues,
        Category::LowUniqueness,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::ExecutionFailure => "execution/validation failure",
            Category::MissingFields => "missing required fields",
            Category::Formatting => "formatting inconsistency",
            Category::InsufficientFormulas => "insufficient formulas (0-1)",
            Category::SyntaxError => "syntax error",
            Category::UnrealisticResult => "null or unrealistic result",
            Category::WrongFormulaIds => "wrong formula ids",
            Category::SignatureMismatch => "signature mismatch",
            Category::VariableIssues => "variable issues",
            Category::LowUniqueness => "low uniqueness",
        }
    }
}

impl From<Category> for u8 {
    fn from(c: Category) -> u8 {
        c.id()
    }
}

impl TryFrom<u8> for Category {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.id() == v)
            .ok_or_else(|| format!("{v} is not an automatable taxonomy category"))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    /// The record's `id` field if it has one, else `#<line>`.
    pub id: String,
    pub formula_count: usize,
    pub categories: BTreeSet<Category>,
    pub details: BTreeMap<Category, String>,
}

impl FailureRecord {
    pub fn is_clean(&self) -> bool {
        self.categories.is_empty()
    }

    fn flag(&mut self, c: Category, detail: impl Into<String>) {
        self.categories.insert(c);
        let detail = detail.into();
        self.details
            .entry(c)
            .and_modify(|d| {
                d.push_str("; ");
                d.push_str(&detail);
            })
            .or_insert(detail);
    }
}

/// Plans start with a plan keyword; anything else (Python source, prose)
/// is opaque to the syntax check.
fn looks_like_plan(code: &str) -> bool {
    code.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .and_then(|l| l.split_whitespace().next())
        .is_some_and(|w| matches!(w, "bind" | "invoke" | "compute" | "return"))
}

struct Context<'a> {
    curriculum: &'a Curriculum,
    library: FormulaLibrary,
    texts: HashMap<&'a str, usize>,
}

fn classify_one(index: usize, v: &serde_json::Value, cx: &Context<'_>) -> FailureRecord {
    let obj = v.as_object();
    let get = |k: &str| obj.and_then(|o| o.get(k));
    let mut out = FailureRecord {
        id: get("id")
            .and_then(|i| i.as_str())
            .map(String::from)
            .unwrap_or_else(|| format!("#{}", index + 1)),
        formula_count: 0,
        categories: BTreeSet::new(),
        details: BTreeMap::new(),
    };
    if obj.is_none() {
        out.flag(Category::MissingFields, "record is not an object");
        return out;
    }
    let missing: Vec<&str> = REQUIRED_FIELDS.iter().copied().filter(|f| get(f).is_none()).collect();
    if !missing.is_empty() {
        out.flag(Category::MissingFields, format!("missing {}", missing.join(", ")));
    }

    // Answer and verdict.
    let validation: Option<ValidationResult> =
        get("validation_result").and_then(|v| serde_json::from_value(v.clone()).ok());
    if get("validation_result").is_some() && validation.is_none() {
        out.flag(Category::Formatting, "validation_result is not {valid, unknown_var}");
    }
    if validation.as_ref().is_some_and(|v| !v.valid) {
        out.flag(Category::ExecutionFailure, "validation_result.valid is false");
    }
    match get("execution_result") {
        Some(serde_json::Value::Null) => {
            out.flag(Category::ExecutionFailure, "execution_result is null");
            out.flag(Category::UnrealisticResult, "no result");
        }
        Some(r) => {
            let value = match r {
                serde_json::Value::String(s) => {
                    let parsed = parse_result(s);
                    if parsed.is_none() {
                        out.flag(Category::Formatting, format!("execution_result `{s}` is not a number"));
                    }
                    parsed
                }
                serde_json::Value::Number(n) => {
                    out.flag(Category::Formatting, "execution_result is a number, not a string");
                    n.as_f64()
                }
                _ => {
                    out.flag(Category::Formatting, "execution_result has the wrong type");
                    None
                }
            };
            if let Some(x) = value {
                if !x.is_finite() {
                    out.flag(Category::UnrealisticResult, format!("non-finite result {x}"));
                } else if is_unrealistic(x) {
                    out.flag(
                        Category::UnrealisticResult,
                        format!("result {x:e} fails the magnitude screen"),
                    );
                }
            }
        }
        None => {}
    }

    // Formula ids.
    let ids: Option<Vec<String>> = get("formula_ids").and_then(|v| serde_json::from_value(v.clone()).ok());
    if get("formula_ids").is_some() && ids.is_none() {
        out.flag(Category::Formatting, "formula_ids is not a list of strings");
    }
    if let Some(ids) = &ids {
        let distinct: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        out.formula_count = distinct.len();
        if distinct.len() < 2 {
            out.flag(Category::InsufficientFormulas, format!("{} formulas", distinct.len()));
        }
        for id in distinct {
            if !is_valid_formula_id(id) || !cx.curriculum.registry.contains(id) {
                out.flag(
                    Category::WrongFormulaIds,
                    format!("`{id}` is not in the formula registry"),
                );
            }
        }
    }

    // Unknown, variables, signature.
    let unknown = get("unknown_var").and_then(|v| v.as_str());
    if get("unknown_var").is_some() && unknown.is_none() {
        out.flag(Category::Formatting, "unknown_var is not a string");
    }
    let variables: Option<VarMap> = get("variables").and_then(|v| serde_json::from_value(v.clone()).ok());
    if get("variables").is_some() && variables.is_none() {
        out.flag(Category::Formatting, "variables is not a map of {value, unit}");
    }
    if let Some(vars) = &variables {
        let nulls: Vec<&str> = vars.unknowns().collect();
        if nulls.len() != 1 {
            out.flag(
                Category::Formatting,
                format!("{} variables have a null value", nulls.len()),
            );
        } else if unknown.is_some_and(|u| u != nulls[0]) {
            out.flag(
                Category::Formatting,
                format!("unknown_var differs from the null variable `{}`", nulls[0]),
            );
        }
    }
    if let (Some(u), Some(v)) = (unknown, &validation) {
        if u != v.unknown_var {
            out.flag(
                Category::Formatting,
                "validation_result.unknown_var differs from unknown_var",
            );
        }
    }
    if let (Some(ids), Some(u), Some(stored)) = (&ids, unknown, get("signature").and_then(|s| s.as_str())) {
        match ProblemSignature::new(ids, u) {
            Ok(sig) if sig.to_string() == stored => {}
            Ok(sig) => out.flag(
                Category::SignatureMismatch,
                format!("stored `{stored}`, expected `{sig}`"),
            ),
            Err(e) => out.flag(Category::SignatureMismatch, e.to_string()),
        }
    }
    if get("signature").is_some_and(|s| !s.is_string()) {
        out.flag(Category::Formatting, "signature is not a string");
    }

    // Plans.
    if let Some(code) = get("code").and_then(|c| c.as_str()).filter(|c| looks_like_plan(c)) {
        match parse_solution_plan(code) {
            Err(e) => out.flag(Category::SyntaxError, e.to_string()),
            Ok(plan) => {
                let invoked: BTreeSet<String> = match execute_plan(&plan, &cx.library) {
                    Ok(run) => run.invoked,
                    Err(_) => plan.referenced_formula_ids().into_iter().map(String::from).collect(),
                };
                if let Some(ids) = &ids {
                    let declared: BTreeSet<String> = ids.iter().cloned().collect();
                    if invoked != declared {
                        out.flag(
                            Category::SignatureMismatch,
                            format!("plan invokes {invoked:?}, record declares {declared:?}"),
                        );
                    }
                }
                if let Some(vars) = &variables {
                    let issues = variable_issues(&plan, vars);
                    if !issues.is_empty() {
                        out.flag(Category::VariableIssues, issues.join("; "));
                    }
                }
            }
        }
    }

    if let Some(text) = get("word_problem").and_then(|t| t.as_str()) {
        let n = cx.texts.get(text).copied().unwrap_or(0);
        if n > 1 {
            out.flag(Category::LowUniqueness, format!("word problem text appears {n} times"));
        }
    } else if get("word_problem").is_some() {
        out.flag(Category::Formatting, "word_problem is not a string");
    }
    if get("chapter").is_some_and(|c| !c.is_string()) {
        out.flag(Category::Formatting, "chapter is not a string");
    }
    if get("code").is_some_and(|c| !c.is_string()) {
        out.flag(Category::Formatting, "code is not a string");
    }
    out
}

/// Classifies raw JSON records, so that missing fields and type deviations
/// can be reported rather than rejected.
pub fn classify_values(values: &[serde_json::Value], curriculum: &Curriculum) -> Vec<FailureRecord> {
    let mut texts: HashMap<&str, usize> = HashMap::new();
    for v in values {
        if let Some(t) = v.get("word_problem").and_then(|t| t.as_str()) {
            *texts.entry(t).or_default() += 1;
        }
    }
    let chapters: Vec<&str> = curriculum.dictionary.names().collect();
    let cx = Context {
        curriculum,
        library: curriculum
            .resolve_library(&chapters)
            .expect("dictionary chapters resolve"),
        texts,
    };
    values
        .iter()
        .enumerate()
        .map(|(i, v)| classify_one(i, v, &cx))
        .collect()
}

pub fn classify_failures(records: &[DatasetRecord], curriculum: &Curriculum) -> Vec<FailureRecord> {
    let values: Vec<serde_json::Value> = records
        .iter()
        .map(|r| serde_json::to_value(r).expect("records serialize"))
        .collect();
    classify_values(&values, curriculum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "0-1")]
    Foundational,
    #[serde(rename = "2-3")]
    Intermediate,
    #[serde(rename = "4-6")]
    Deep,
    #[serde(rename = "7+")]
    Overflow,
}

impl Tier {
    pub fn of(formula_count: usize) -> Tier {
        match formula_count {
            0..=1 => Tier::Foundational,
            2..=3 => Tier::Intermediate,
            4..=6 => Tier::Deep,
            _ => Tier::Overflow,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Tier::Foundational => "0-1",
            Tier::Intermediate => "2-3",
            Tier::Deep => "4-6",
            Tier::Overflow => "7+",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    pub count: usize,
    pub clean: usize,
    pub clean_pct: f64,
    pub incidence: BTreeMap<Category, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub tiers: BTreeMap<Tier, TierStats>,
}

impl TierReport {
    pub fn total(&self) -> usize {
        self.tiers.values().map(|t| t.count).sum()
    }
}

pub fn stratify_tiers(failures: &[FailureRecord]) -> TierReport {
    let mut report = TierReport::default();
    for f in failures {
        let t = report.tiers.entry(Tier::of(f.formula_count)).or_default();
        t.count += 1;
        if f.is_clean() {
            t.clean += 1;
        }
        for c in &f.categories {
            *t.incidence.entry(*c).or_default() += 1;
        }
    }
    for t in report.tiers.values_mut() {
        t.clean_pct = t.clean as f64 / t.count as f64 * 100.0;
    }
    report
}
