//! Solution plans: the line-oriented program a problem's solution is
//! written in, and its interpreter over an axiom library.
//!
//! ```text
//! # comments and blank lines are ignored
//! bind m = 0.015
//! bind M = 12
//! invoke i_log = 10_A(M, R)
//! compute b = -(m + M)*R
//! return h
//! ```
//!
//! Invoke arguments are names or numeric literals, bound positionally to the
//! axiom's parameters. Every name is bound exactly once, before its first use.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axiom::{is_valid_formula_id, FormulaLibrary, InvokeError};
use crate::expr::{evaluate, parse_expression, EvalError, Expr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Name(String),
    Literal(f64),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Name(n) => f.write_str(n),
            Arg::Literal(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Bind {
        name: String,
        value: f64,
    },
    Invoke {
        name: String,
        formula_id: String,
        args: Vec<Arg>,
    },
    Compute {
        name: String,
        expr: Expr,
    },
    Return {
        name: String,
    },
}

impl Step {
    /// Name the step defines, if any.
    pub fn defines(&self) -> Option<&str> {
        match self {
            Step::Bind { name, .. } | Step::Invoke { name, .. } | Step::Compute { name, .. } => Some(name),
            Step::Return { .. } => None,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Bind { name, value } => write!(f, "bind {name} = {value:?}"),
            Step::Invoke { name, formula_id, args } => {
                write!(f, "invoke {name} = {formula_id}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Step::Compute { name, expr } => write!(f, "compute {name} = {expr}"),
            Step::Return { name } => write!(f, "return {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: `{name}` used before it is defined")]
    UseBeforeDefine { name: String, line: usize },
    #[error("line {line}: `{name}` is already bound")]
    Rebinding { name: String, line: usize },
    #[error("line {line}: more than one return")]
    MultipleReturns { line: usize },
    #[error("line {line}: steps after return")]
    StepAfterReturn { line: usize },
    #[error("plan has no return step")]
    MissingReturn,
}

impl PlanError {
    pub fn line(&self) -> Option<usize> {
        match self {
            PlanError::Syntax { line, .. }
            | PlanError::UseBeforeDefine { line, .. }
            | PlanError::Rebinding { line, .. }
            | PlanError::MultipleReturns { line }
            | PlanError::StepAfterReturn { line } => Some(*line),
            PlanError::MissingReturn => None,
        }
    }
}

/// A checked plan: names are defined before use, never rebound, and the
/// single `return` is the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPlan {
    steps: Vec<Step>,
    lines: Vec<usize>,
}

impl SolutionPlan {
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Name of the value the plan returns.
    pub fn target(&self) -> &str {
        match self.steps.last() {
            Some(Step::Return { name }) => name,
            _ => unreachable!("plans always end in return"),
        }
    }

    /// Formula ids named by invoke steps, in order of first appearance.
    pub fn referenced_formula_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Invoke { formula_id, .. } if seen.insert(formula_id.as_str()) => Some(formula_id.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Source line of step `index` (1-based).
    pub fn line_of(&self, index: usize) -> usize {
        self.lines[index]
    }

    pub fn from_steps(steps: Vec<Step>) -> Result<Self, PlanError> {
        let lines: Vec<usize> = (1..=steps.len()).collect();
        check(&steps, &lines)?;
        Ok(SolutionPlan { steps, lines })
    }
}

impl fmt::Display for SolutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

const KEYWORDS: [&str; 4] = ["bind", "invoke", "compute", "return"];

/// Parses plan text. Columns in errors are 1-based character offsets.
pub fn parse_solution_plan(text: &str) -> Result<SolutionPlan, PlanError> {
    let mut steps = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        steps.push(parse_step(body.trim(), line, indent)?);
        lines.push(line);
    }
    check(&steps, &lines)?;
    Ok(SolutionPlan { steps, lines })
}

fn parse_step(s: &str, line: usize, indent: usize) -> Result<Step, PlanError> {
    let syntax = |offset: usize, message: String| PlanError::Syntax {
        line,
        column: indent + offset + 1,
        message,
    };
    let (keyword, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
    let rest_offset = s.len() - rest.len();
    if keyword == "return" {
        let name = rest.trim();
        if !is_name(name) {
            return Err(syntax(
                rest_offset,
                format!("expected a name after `return`, found `{name}`"),
            ));
        }
        return Ok(Step::Return { name: name.to_string() });
    }
    if !KEYWORDS.contains(&keyword) {
        return Err(syntax(
            0,
            format!("expected one of bind, invoke, compute, return; found `{keyword}`"),
        ));
    }
    let Some((lhs, rhs)) = rest.split_once('=') else {
        return Err(syntax(rest_offset, "expected `<name> = ...`".into()));
    };
    let name = lhs.trim();
    if !is_name(name) || KEYWORDS.contains(&name) {
        return Err(syntax(rest_offset, format!("`{name}` is not a valid name")));
    }
    let rhs_offset = rest_offset + lhs.len() + 1;
    let rhs_text = rhs.trim();
    let rhs_offset = rhs_offset + (rhs.len() - rhs.trim_start().len());
    let name = name.to_string();
    match keyword {
        "bind" => {
            let value =
                parse_number(rhs_text).ok_or_else(|| syntax(rhs_offset, format!("`{rhs_text}` is not a number")))?;
            Ok(Step::Bind { name, value })
        }
        "compute" => {
            let expr = parse_expression(rhs_text).map_err(|e| syntax(rhs_offset + e.position(), e.to_string()))?;
            Ok(Step::Compute { name, expr })
        }
        _ => {
            let open = rhs_text
                .find('(')
                .ok_or_else(|| syntax(rhs_offset, "expected `<formula_id>(...)`".into()))?;
            let formula_id = rhs_text[..open].trim();
            if !is_valid_formula_id(formula_id) {
                return Err(syntax(rhs_offset, format!("`{formula_id}` is not a formula id")));
            }
            let Some(inner) = rhs_text[open + 1..].strip_suffix(')') else {
                return Err(syntax(
                    rhs_offset + rhs_text.len(),
                    "expected `)` at end of invoke".into(),
                ));
            };
            let mut args = Vec::new();
            if !inner.trim().is_empty() {
                let mut at = rhs_offset + open + 1;
                for piece in inner.split(',') {
                    let a = piece.trim();
                    let arg = if is_name(a) {
                        Arg::Name(a.to_string())
                    } else if let Some(v) = parse_number(a) {
                        Arg::Literal(v)
                    } else {
                        return Err(syntax(at, format!("`{a}` is neither a name nor a number")));
                    };
                    args.push(arg);
                    at += piece.len() + 1;
                }
            }
            Ok(Step::Invoke {
                name,
                formula_id: formula_id.to_string(),
                args,
            })
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    // Accepts `inf` and `nan` too, so a bind can hold a non-finite value.
    s.parse::<f64>().ok()
}

fn check(steps: &[Step], lines: &[usize]) -> Result<(), PlanError> {
    let mut defined: HashSet<&str> = HashSet::new();
    let mut returned = false;
    for (step, &line) in steps.iter().zip(lines) {
        if returned {
            return Err(match step {
                Step::Return { .. } => PlanError::MultipleReturns { line },
                _ => PlanError::StepAfterReturn { line },
            });
        }
        let use_name = |name: &str| {
            if defined.contains(name) {
                Ok(())
            } else {
                Err(PlanError::UseBeforeDefine {
                    name: name.to_string(),
                    line,
                })
            }
        };
        match step {
            Step::Bind { .. } => {}
            Step::Invoke { args, .. } => {
                for a in args {
                    if let Arg::Name(n) = a {
                        use_name(n)?;
                    }
                }
            }
            Step::Compute { expr, .. } => {
                for v in expr.variables() {
                    use_name(v)?;
                }
            }
            Step::Return { name } => {
                use_name(name)?;
                returned = true;
            }
        }
        if let Some(name) = step.defines() {
            if !defined.insert(name) {
                return Err(PlanError::Rebinding {
                    name: name.to_string(),
                    line,
                });
            }
        }
    }
    if returned {
        Ok(())
    } else {
        Err(PlanError::MissingReturn)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecErrorKind {
    #[error("unknown formula id `{0}`")]
    UnknownFormulaId(String),
    #[error("{formula_id} takes {expected} arguments, got {got}")]
    ArityMismatch {
        formula_id: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step} (line {line}): {kind}")]
pub struct ExecError {
    /// 0-based index into [`SolutionPlan::steps`].
    pub step: usize,
    pub line: usize,
    pub kind: ExecErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    /// The returned value. May be non-finite only when bound directly.
    pub value: f64,
    pub invoked: BTreeSet<String>,
    pub bindings: BTreeMap<String, f64>,
}

/// Runs `plan` against `library`. Pure: the result depends only on the plan
/// and the library.
pub fn execute_plan(plan: &SolutionPlan, library: &FormulaLibrary) -> Result<Execution, ExecError> {
    let mut env: BTreeMap<String, f64> = BTreeMap::new();
    let mut invoked = BTreeSet::new();
    for (index, step) in plan.steps.iter().enumerate() {
        let fail = |kind: ExecErrorKind| ExecError {
            step: index,
            line: plan.lines[index],
            kind,
        };
        match step {
            Step::Bind { name, value } => {
                env.insert(name.clone(), *value);
            }
            Step::Compute { name, expr } => {
                let v = evaluate(expr, &env).map_err(|e| fail(e.into()))?;
                env.insert(name.clone(), v);
            }
            Step::Invoke { name, formula_id, args } => {
                let axiom = library
                    .get(formula_id)
                    .ok_or_else(|| fail(ExecErrorKind::UnknownFormulaId(formula_id.clone())))?;
                let values: Vec<f64> = args
                    .iter()
                    .map(|a| match a {
                        Arg::Name(n) => env[n],
                        Arg::Literal(v) => *v,
                    })
                    .collect();
                let v = axiom.invoke(&values).map_err(|e| {
                    fail(match e {
                        InvokeError::ArityMismatch {
                            formula_id,
                            expected,
                            got,
                        } => ExecErrorKind::ArityMismatch {
                            formula_id,
                            expected,
                            got,
                        },
                        InvokeError::Eval(e) => ExecErrorKind::Eval(e),
                    })
                })?;
                invoked.insert(formula_id.clone());
                env.insert(name.clone(), v);
            }
            Step::Return { name } => {
                return Ok(Execution {
                    value: env[name],
                    invoked,
                    bindings: env,
                });
            }
        }
    }
    unreachable!("checked plans end in return")
}

/// Renders a plan as a Python `solve()` function, preceded by the invoked
/// axioms as Python functions. Presentation only; never executed here.
pub fn to_python_source(plan: &SolutionPlan, library: &FormulaLibrary) -> String {
    let mut out = String::from("import math\n\n");
    let mut fn_names = BTreeMap::new();
    for id in plan.referenced_formula_ids() {
        let Some(axiom) = library.get(id) else { continue };
        let params: Vec<&str> = axiom.params.iter().map(|p| p.name.as_str()).collect();
        out.push_str(&format!(
            "# {id}\ndef {}({}):\n    return {}\n\n",
            axiom.name,
            params.join(", "),
            axiom.body.to_python()
        ));
        fn_names.insert(id, axiom.name.as_str());
    }
    out.push_str("def solve():\n    try:\n");
    for step in &plan.steps {
        let line = match step {
            Step::Bind { name, value } => format!("{name} = {value:?}"),
            Step::Compute { name, expr } => format!("{name} = {}", expr.to_python()),
            Step::Invoke { name, formula_id, args } => {
                let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                let f = fn_names
                    .get(formula_id.as_str())
                    .copied()
                    .unwrap_or(formula_id.as_str());
                format!("{name} = {f}({})", args.join(", "))
            }
            Step::Return { name } => format!("return {name}"),
        };
        out.push_str("        ");
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("    except Exception as e:\n        return None\n");
    out
}
