use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{BinOp, Cond, Expr, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {function}({argument})")]
    DomainError { function: String, argument: f64 },
    #[error("non-finite intermediate value in `{0}`")]
    NonFinite(String),
}

/// Name lookup used during evaluation.
pub trait Bindings {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Bindings for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Bindings for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

fn finite(v: f64, what: impl FnOnce() -> String) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(what()))
    }
}

/// Evaluates `expr` in IEEE-754 double precision.
///
/// Every intermediate must be finite. Operations are applied in tree order
/// with no reassociation, so results are bit-reproducible.
pub fn evaluate<B: Bindings + ?Sized>(expr: &Expr, bindings: &B) -> Result<f64, EvalError> {
    match expr {
        Expr::Num(v) => finite(*v, || v.to_string()),
        Expr::Var(name) => {
            let v = bindings
                .lookup(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
            finite(v, || name.clone())
        }
        Expr::Neg(e) => Ok(-evaluate(e, bindings)?),
        Expr::Binary(op, a, b) => {
            let x = evaluate(a, bindings)?;
            let y = evaluate(b, bindings)?;
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
                BinOp::Pow => {
                    if x < 0.0 && y.fract() != 0.0 {
                        return Err(EvalError::DomainError {
                            function: "pow".into(),
                            argument: x,
                        });
                    }
                    if x == 0.0 && y < 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x.powf(y)
                }
            };
            finite(v, || expr.to_string())
        }
        Expr::Call(func, args) => {
            let x = evaluate(&args[0], bindings)?;
            let v = match func {
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(EvalError::DomainError {
                            function: "sqrt".into(),
                            argument: x,
                        });
                    }
                    x.sqrt()
                }
                Func::Abs => x.abs(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Min => x.min(evaluate(&args[1], bindings)?),
                Func::Max => x.max(evaluate(&args[1], bindings)?),
            };
            finite(v, || expr.to_string())
        }
        Expr::Select(cond, a, b) => {
            if test(cond, bindings)? {
                evaluate(a, bindings)
            } else {
                evaluate(b, bindings)
            }
        }
    }
}

fn test<B: Bindings + ?Sized>(cond: &Cond, bindings: &B) -> Result<bool, EvalError> {
    match cond {
        Cond::Compare(op, a, b) => Ok(op.apply(evaluate(a, bindings)?, evaluate(b, bindings)?)),
        Cond::And(a, b) => Ok(test(a, bindings)? && test(b, bindings)?),
        Cond::Or(a, b) => Ok(test(a, bindings)? || test(b, bindings)?),
    }
}
