//! Execution-based acceptance: syntactic validity, numerical solvability and
//! physical sanity, checked in that order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::axiom::FormulaLibrary;
use crate::draft::{ProblemDraft, VarMap, VarValue};
use crate::plan::{execute_plan, parse_solution_plan, SolutionPlan, Step};
use crate::record::{format_result, DatasetRecord};
use crate::sanity::{check_physical_sanity, RuleSet, SanityOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericalFailure {
    NaN,
    Inf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "kind", rename_all = "snake_case")]
pub enum NumericalCheck {
    Pass,
    Fail(NumericalFailure),
}

pub fn check_numerical(value: f64) -> NumericalCheck {
    if value.is_nan() {
        NumericalCheck::Fail(NumericalFailure::NaN)
    } else if value.is_infinite() {
        NumericalCheck::Fail(NumericalFailure::Inf)
    } else {
        NumericalCheck::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntacticResult {
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalResult {
    pub check: NumericalCheck,
    /// Non-finite values serialize as `null`.
    pub value: f64,
}

/// Outcome of all three criteria. Later criteria are `None` when an earlier
/// one failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub syntactic: SyntacticResult,
    pub numerical: Option<NumericalResult>,
    pub sanity: Option<SanityOutcome>,
    pub overall: bool,
    /// Formula ids actually executed; present iff the syntactic check passed.
    pub invoked: Option<BTreeSet<String>>,
    /// Whether `invoked` equals the draft's declared formula ids.
    pub signature_match: Option<bool>,
}

impl VerificationReport {
    fn syntactic_failure(trace: String) -> Self {
        VerificationReport {
            syntactic: SyntacticResult {
                passed: false,
                trace: Some(trace),
            },
            numerical: None,
            sanity: None,
            overall: false,
            invoked: None,
            signature_match: None,
        }
    }

    /// The returned value when execution got that far.
    pub fn value(&self) -> Option<f64> {
        self.numerical.as_ref().map(|n| n.value)
    }

    /// One-line description of the first failing criterion, for re-prompts.
    pub fn error_message(&self) -> Option<String> {
        if !self.syntactic.passed {
            return Some(format!(
                "Execution failed: {}",
                self.syntactic.trace.as_deref().unwrap_or("unknown error")
            ));
        }
        if let Some(n) = &self.numerical {
            if let NumericalCheck::Fail(kind) = n.check {
                return Some(format!("The solution returned a non-finite value ({kind:?})"));
            }
        }
        match &self.sanity {
            Some(SanityOutcome::Reject { rule }) => Some(format!("Physically invalid result: violates {rule}")),
            Some(SanityOutcome::Unrealistic { rule }) => Some(format!("Unrealistic result magnitude: violates {rule}")),
            _ => None,
        }
    }
}

/// Runs the three criteria against a parsed plan. Never fails: every problem
/// ends up in the report.
pub fn verify(
    draft: &ProblemDraft,
    plan: &SolutionPlan,
    library: &FormulaLibrary,
    rules: &RuleSet,
) -> VerificationReport {
    let run = match execute_plan(plan, library) {
        Ok(run) => run,
        Err(e) => return VerificationReport::syntactic_failure(e.to_string()),
    };
    let declared: BTreeSet<String> = draft.formula_ids.iter().cloned().collect();
    let signature_match = Some(run.invoked == declared);
    let check = check_numerical(run.value);
    let mut report = VerificationReport {
        syntactic: SyntacticResult {
            passed: true,
            trace: None,
        },
        numerical: Some(NumericalResult {
            check,
            value: run.value,
        }),
        sanity: None,
        overall: false,
        invoked: Some(run.invoked),
        signature_match,
    };
    if check != NumericalCheck::Pass {
        return report;
    }
    let sanity = check_physical_sanity(draft.unknown(), run.value, rules);
    report.overall = sanity.passed();
    report.sanity = Some(sanity);
    report
}

/// Like [`verify`] but starts from plan text, so parse errors become
/// syntactic failures.
pub fn verify_text(
    draft: &ProblemDraft,
    plan_text: &str,
    library: &FormulaLibrary,
    rules: &RuleSet,
) -> VerificationReport {
    match parse_solution_plan(plan_text) {
        Ok(plan) => verify(draft, &plan, library, rules),
        Err(e) => VerificationReport::syntactic_failure(e.to_string()),
    }
}

/// Disagreements between a plan's `bind` steps and a problem's variables:
/// known variables the plan never binds (or binds to another value), bound
/// names the problem does not declare, and a bound unknown.
pub fn variable_issues(plan: &SolutionPlan, variables: &VarMap) -> Vec<String> {
    let mut issues = Vec::new();
    let binds: Vec<(&str, f64)> = plan
        .steps()
        .iter()
        .filter_map(|s| match s {
            Step::Bind { name, value } => Some((name.as_str(), *value)),
            _ => None,
        })
        .collect();
    for (name, var) in variables.iter() {
        let bound = binds.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
        match (var.value, bound) {
            (VarValue::Known(_), None) => {
                issues.push(format!("declared variable `{name}` is not bound in the solution"))
            }
            (VarValue::Known(x), Some(v)) if x.to_bits() != v.to_bits() => issues.push(format!(
                "`{name}` is bound to {} but declared as {}",
                format_result(v),
                format_result(x)
            )),
            (VarValue::Unknown, Some(_)) => issues.push(format!("the unknown `{name}` is bound to a value")),
            _ => {}
        }
    }
    for (name, _) in &binds {
        if variables.get(name).is_none() {
            issues.push(format!("bound name `{name}` is not a declared variable"));
        }
    }
    issues
}

/// Result of re-running verification on a stored record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Reverification {
    /// The code field is not a solution plan.
    Unverifiable {
        reason: String,
    },
    Consistent {
        report: VerificationReport,
    },
    Divergent {
        report: VerificationReport,
        differences: Vec<String>,
    },
}

/// Verifies `record` afresh and compares with its stored verdict and answer.
pub fn reverify_record(record: &DatasetRecord, library: &FormulaLibrary, rules: &RuleSet) -> Reverification {
    let plan = match parse_solution_plan(&record.code) {
        Ok(p) => p,
        Err(e) => {
            return Reverification::Unverifiable {
                reason: format!("opaque source ({e})"),
            }
        }
    };
    let draft = ProblemDraft {
        word_problem: record.word_problem.clone(),
        formula_ids: record.formula_ids.clone(),
        variables: record.variables.clone(),
        scenario: 0,
        seed_id: String::new(),
    };
    let report = verify(&draft, &plan, library, rules);
    let mut differences = Vec::new();
    if report.overall != record.validation_result.valid {
        differences.push(format!(
            "stored valid={} but verification gives {}",
            record.validation_result.valid, report.overall
        ));
    }
    let computed = report.value().map(format_result);
    if computed != record.execution_result {
        differences.push(format!(
            "stored execution_result {:?} but the plan returns {:?}",
            record.execution_result, computed
        ));
    }
    if differences.is_empty() {
        Reverification::Consistent { report }
    } else {
        Reverification::Divergent { report, differences }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axiom::Curriculum;
    use serde_json::json;

    fn lib() -> FormulaLibrary {
        let c = Curriculum::classical_mechanics();
        c.resolve_library(&c.dictionary.names().collect::<Vec<_>>()).unwrap()
    }

    fn draft(ids: &[&str], unknown: &str) -> ProblemDraft {
        ProblemDraft::from_document(
            &json!({
                "word_problem": "w",
                "formula_ids": ids,
                "variables": {unknown: {"value": null, "unit": "m"}}
            }),
            "s",
            0,
        )
        .unwrap()
    }

    #[test]
    fn numerical_check() {
        assert_eq!(check_numerical(0.5), NumericalCheck::Pass);
        assert_eq!(check_numerical(f64::NAN), NumericalCheck::Fail(NumericalFailure::NaN));
        assert_eq!(
            check_numerical(f64::INFINITY),
            NumericalCheck::Fail(NumericalFailure::Inf)
        );
        assert_eq!(
            check_numerical(f64::NEG_INFINITY),
            NumericalCheck::Fail(NumericalFailure::Inf)
        );
    }

    #[test]
    fn infinite_return_short_circuits() {
        let r = verify_text(
            &draft(&[], "x"),
            "bind x = inf\nreturn x",
            &lib(),
            &RuleSet::default_sanity(),
        );
        assert!(r.syntactic.passed);
        assert_eq!(r.numerical.unwrap().check, NumericalCheck::Fail(NumericalFailure::Inf));
        assert!(r.sanity.is_none());
        assert!(!r.overall);
    }

    #[test]
    fn undeclared_invocation_flags_mismatch() {
        let plan = "bind u = 1\nbind a = 2\nbind t = 3\ninvoke v = 3_A(u, a, t)\nreturn v";
        let r = verify_text(&draft(&[], "v"), plan, &lib(), &RuleSet::default_sanity());
        assert!(r.overall);
        assert_eq!(r.signature_match, Some(false));
        let r = verify_text(&draft(&["3_A"], "v"), plan, &lib(), &RuleSet::default_sanity());
        assert_eq!(r.signature_match, Some(true));
    }

    #[test]
    fn criteria_truth_table() {
        let rules = RuleSet::default_sanity();
        let cases = [
            (
                "compute",
                "bind a = 1\nbind b = 0\ncompute x = a/b\nreturn x",
                "x",
                [false, false, false],
            ),
            ("nan", "bind x = nan\nreturn x", "x", [true, false, false]),
            ("reject", "bind t = -1\nreturn t", "t", [true, true, false]),
            ("unrealistic", "bind x = 1e20\nreturn x", "x", [true, true, false]),
            ("pass", "bind x = 2\nreturn x", "x", [true, true, true]),
        ];
        for (label, plan, unknown, [syn, num, san]) in cases {
            let r = verify_text(&draft(&[], unknown), plan, &lib(), &rules);
            assert_eq!(r.syntactic.passed, syn, "{label}");
            assert_eq!(
                r.numerical
                    .as_ref()
                    .map(|n| n.check == NumericalCheck::Pass)
                    .unwrap_or(false),
                num,
                "{label}"
            );
            assert_eq!(r.sanity.as_ref().map(|s| s.passed()).unwrap_or(false), san, "{label}");
            assert_eq!(r.overall, syn && num && san, "{label}");
            assert_eq!(r.invoked.is_some(), syn, "{label}");
            assert_eq!(r.error_message().is_none(), r.overall, "{label}");
        }
    }

    #[test]
    fn plan_variable_agreement() {
        let vars: VarMap = serde_json::from_value(json!({
            "u": {"value": 2.0, "unit": "m/s"},
            "a": {"value": 1.5, "unit": "m/s^2"},
            "v": {"value": null, "unit": "m/s"}
        }))
        .unwrap();
        let ok = parse_solution_plan("bind u = 2\nbind a = 1.5\ncompute v = u + a\nreturn v").unwrap();
        assert!(variable_issues(&ok, &vars).is_empty());
        let bad = parse_solution_plan("bind u = 2.5\nbind g = 9.8\nbind v = 1\nreturn v").unwrap();
        let issues = variable_issues(&bad, &vars);
        assert_eq!(issues.len(), 4, "{issues:?}");
    }

    #[test]
    fn report_serializes() {
        let r = verify_text(
            &draft(&[], "x"),
            "bind x = inf\nreturn x",
            &lib(),
            &RuleSet::default_sanity(),
        );
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["numerical"]["value"], serde_json::Value::Null);
        assert_eq!(v["numerical"]["check"]["kind"], "inf");
    }
}
