//! Name-pattern rules for physical plausibility.
//!
//! Plans and drafts carry no ontology, so rules attach to variable names:
//! `*time*|t|t_*` matches `time_of_flight`, `t` and `t_total`. The same
//! matcher drives two rule sets: sanity rules applied to a solved unknown,
//! and hard bounds applied to the ranges of a variable dictionary.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `|`-separated glob alternatives; `*` matches any run of characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NamePattern(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("empty name pattern")]
pub struct EmptyPattern;

impl NamePattern {
    pub fn new(pattern: impl Into<String>) -> Result<Self, EmptyPattern> {
        let p = pattern.into();
        if p.split('|').any(|alt| alt.trim().is_empty()) {
            return Err(EmptyPattern);
        }
        Ok(NamePattern(p))
    }

    pub fn matches(&self, name: &str) -> bool {
        self.0.split('|').any(|alt| glob(alt.trim(), name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NamePattern {
    type Error = EmptyPattern;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        NamePattern::new(s)
    }
}

impl From<NamePattern> for String {
    fn from(p: NamePattern) -> String {
        p.0
    }
}

fn glob(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Positive,
    Nonnegative,
    Within(f64, f64),
    /// Violated when `|v| > max` or `0 < |v| < min_nonzero`.
    Magnitude {
        max: f64,
        min_nonzero: f64,
    },
}

impl Predicate {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Predicate::Positive => v > 0.0,
            Predicate::Nonnegative => v >= 0.0,
            Predicate::Within(a, b) => (a..=b).contains(&v),
            Predicate::Magnitude { max, min_nonzero } => {
                let m = v.abs();
                m <= max && (m == 0.0 || m >= min_nonzero)
            }
        }
    }

    /// Whether every value of `[min, max]` satisfies the predicate.
    pub fn holds_on_range(&self, min: f64, max: f64) -> bool {
        match *self {
            Predicate::Positive => min > 0.0,
            Predicate::Nonnegative => min >= 0.0,
            Predicate::Within(a, b) => min >= a && max <= b,
            Predicate::Magnitude { .. } => self.holds(min) && self.holds(max),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Positive => f.write_str("> 0"),
            Predicate::Nonnegative => f.write_str(">= 0"),
            Predicate::Within(a, b) => write!(f, "in [{a}, {b}]"),
            Predicate::Magnitude { max, min_nonzero } => write!(f, "|v| <= {max:e} and not 0 < |v| < {min_nonzero:e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Reject,
    Unrealistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityRule {
    pub pattern: NamePattern,
    pub predicate: Predicate,
    pub severity: Severity,
}

impl fmt::Display for SanityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ({:?})", self.pattern.as_str(), self.predicate, self.severity)
    }
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("reading rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("rules document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule {index}: range bounds out of order")]
    BadRange { index: usize },
}

/// An ordered rule list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet(pub Vec<SanityRule>);

pub const TIME_NAMES: &str = "*time*|t|t_*";
pub const MASS_NAMES: &str = "*mass*|m|M|m1|m2|m3";
pub const FRICTION_NAMES: &str = "mu|mu_*|*friction_coefficient*|coefficient_of_friction*";

fn rule(pattern: &str, predicate: Predicate, severity: Severity) -> SanityRule {
    SanityRule {
        pattern: NamePattern::new(pattern).expect("static pattern"),
        predicate,
        severity,
    }
}

impl RuleSet {
    /// t > 0, m > 0, mu in [0, 1], then the magnitude screen for every name.
    pub fn default_sanity() -> RuleSet {
        RuleSet(vec![
            rule(TIME_NAMES, Predicate::Positive, Severity::Reject),
            rule(MASS_NAMES, Predicate::Positive, Severity::Reject),
            rule(FRICTION_NAMES, Predicate::Within(0.0, 1.0), Severity::Reject),
            rule(
                "*",
                Predicate::Magnitude {
                    max: 1e15,
                    min_nonzero: 1e-15,
                },
                Severity::Unrealistic,
            ),
        ])
    }

    /// Bounds a variable range must respect: m > 0, mu in [0, 1], t >= 0.
    pub fn default_hard_bounds() -> RuleSet {
        RuleSet(vec![
            rule(MASS_NAMES, Predicate::Positive, Severity::Reject),
            rule(FRICTION_NAMES, Predicate::Within(0.0, 1.0), Severity::Reject),
            rule(TIME_NAMES, Predicate::Nonnegative, Severity::Reject),
        ])
    }

    pub fn from_json(text: &str) -> Result<RuleSet, RulesError> {
        let rules: RuleSet = serde_json::from_str(text)?;
        for (index, r) in rules.0.iter().enumerate() {
            if let Predicate::Within(a, b) = r.predicate {
                if a > b {
                    return Err(RulesError::BadRange { index });
                }
            }
        }
        Ok(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RuleSet, RulesError> {
        RuleSet::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[SanityRule] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SanityOutcome {
    Pass,
    Reject { rule: String },
    Unrealistic { rule: String },
}

impl SanityOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, SanityOutcome::Pass)
    }
}

/// Applies `rules` in order to a finite value; the first rule whose pattern
/// matches `name` and whose predicate fails decides the outcome.
pub fn check_physical_sanity(name: &str, value: f64, rules: &RuleSet) -> SanityOutcome {
    for r in rules.rules() {
        if r.pattern.matches(name) && !r.predicate.holds(value) {
            let rule = r.to_string();
            return match r.severity {
                Severity::Reject => SanityOutcome::Reject { rule },
                Severity::Unrealistic => SanityOutcome::Unrealistic { rule },
            };
        }
    }
    SanityOutcome::Pass
}
