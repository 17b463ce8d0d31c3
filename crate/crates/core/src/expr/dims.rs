use thiserror::Error;

use super::{evaluate, BinOp, Cond, Expr, Func};
use crate::units::Dimension;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DimensionError {
    #[error("no unit declared for `{0}`")]
    Undeclared(String),
    #[error("incompatible dimensions in `{context}`: {left} vs {right}")]
    Incompatible {
        context: String,
        left: Dimension,
        right: Dimension,
    },
    #[error("`{0}` requires a dimensionless argument")]
    NotDimensionless(String),
    #[error("cannot raise {base} to the power in `{context}`")]
    BadPower { context: String, base: Dimension },
}

/// A literal-only subtree has no dimension of its own and adopts whatever
/// its sibling requires.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Free,
    Known(Dimension),
}

impl Term {
    fn dim(self) -> Dimension {
        match self {
            Term::Free => Dimension::NONE,
            Term::Known(d) => d,
        }
    }
}

/// Infers the dimension of `expr` from the dimensions of its variables.
///
/// Exponent arithmetic is exact on integers; a power needs either a
/// dimensionless base or a literal exponent whose result has integral
/// exponents (so `x^0.5` is allowed for `m^2`).
pub fn infer_dimension(expr: &Expr, lookup: &dyn Fn(&str) -> Option<Dimension>) -> Result<Dimension, DimensionError> {
    Ok(infer(expr, lookup)?.dim())
}

fn unify(context: &Expr, a: Term, b: Term) -> Result<Term, DimensionError> {
    match (a, b) {
        (Term::Free, t) | (t, Term::Free) => Ok(t),
        (Term::Known(x), Term::Known(y)) if x == y => Ok(a),
        (Term::Known(x), Term::Known(y)) => Err(DimensionError::Incompatible {
            context: context.to_string(),
            left: x,
            right: y,
        }),
    }
}

fn require_dimensionless(context: &Expr, t: Term) -> Result<(), DimensionError> {
    if t.dim().is_dimensionless() {
        Ok(())
    } else {
        Err(DimensionError::NotDimensionless(context.to_string()))
    }
}

fn infer(expr: &Expr, lookup: &dyn Fn(&str) -> Option<Dimension>) -> Result<Term, DimensionError> {
    match expr {
        Expr::Num(_) => Ok(Term::Free),
        Expr::Var(name) => lookup(name)
            .map(Term::Known)
            .ok_or_else(|| DimensionError::Undeclared(name.clone())),
        Expr::Neg(e) => infer(e, lookup),
        Expr::Binary(op, a, b) => {
            let ta = infer(a, lookup)?;
            match op {
                BinOp::Add | BinOp::Sub => unify(expr, ta, infer(b, lookup)?),
                BinOp::Mul | BinOp::Div => {
                    let tb = infer(b, lookup)?;
                    Ok(match (ta, tb) {
                        (Term::Free, Term::Free) => Term::Free,
                        _ if *op == BinOp::Mul => Term::Known(ta.dim() + tb.dim()),
                        _ => Term::Known(ta.dim() - tb.dim()),
                    })
                }
                BinOp::Pow => power(expr, ta, b, lookup),
            }
        }
        Expr::Call(func, args) => match func {
            Func::Sqrt => match infer(&args[0], lookup)? {
                Term::Free => Ok(Term::Free),
                Term::Known(d) => d.sqrt().map(Term::Known).ok_or(DimensionError::BadPower {
                    context: expr.to_string(),
                    base: d,
                }),
            },
            Func::Abs => infer(&args[0], lookup),
            Func::Sin | Func::Cos | Func::Tan => {
                require_dimensionless(expr, infer(&args[0], lookup)?)?;
                Ok(Term::Known(Dimension::NONE))
            }
            Func::Min | Func::Max => unify(expr, infer(&args[0], lookup)?, infer(&args[1], lookup)?),
        },
        Expr::Select(cond, a, b) => {
            check_cond(cond, lookup)?;
            unify(expr, infer(a, lookup)?, infer(b, lookup)?)
        }
    }
}

fn power(
    expr: &Expr,
    base: Term,
    exponent: &Expr,
    lookup: &dyn Fn(&str) -> Option<Dimension>,
) -> Result<Term, DimensionError> {
    let te = infer(exponent, lookup)?;
    require_dimensionless(expr, te)?;
    let d = match base {
        Term::Free => return Ok(Term::Free),
        Term::Known(d) if d.is_dimensionless() => return Ok(base),
        Term::Known(d) => d,
    };
    let bad = || DimensionError::BadPower {
        context: expr.to_string(),
        base: d,
    };
    if te != Term::Free {
        return Err(bad());
    }
    let e = evaluate(exponent, &[] as &[(&str, f64)]).map_err(|_| bad())?;
    for denom in 1..=3i8 {
        let scaled = e * f64::from(denom);
        if scaled.fract() == 0.0 && scaled.abs() <= 64.0 {
            return d
                .powi(scaled as i32)
                .and_then(|p| p.root(denom))
                .map(Term::Known)
                .ok_or_else(bad);
        }
    }
    Err(bad())
}

fn check_cond(cond: &Cond, lookup: &dyn Fn(&str) -> Option<Dimension>) -> Result<(), DimensionError> {
    match cond {
        Cond::Compare(_, a, b) => {
            let ta = infer(a, lookup)?;
            let tb = infer(b, lookup)?;
            match (ta, tb) {
                (Term::Known(x), Term::Known(y)) if x != y => Err(DimensionError::Incompatible {
                    context: cond.to_string(),
                    left: x,
                    right: y,
                }),
                _ => Ok(()),
            }
        }
        Cond::And(a, b) | Cond::Or(a, b) => {
            check_cond(a, lookup)?;
            check_cond(b, lookup)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_expression;
    use super::*;
    use crate::units::Unit;

    fn dims(text: &str, vars: &[(&str, &str)]) -> Result<Dimension, DimensionError> {
        let table: Vec<(String, Dimension)> = vars
            .iter()
            .map(|(n, u)| (n.to_string(), Unit::parse(u).unwrap().dimension()))
            .collect();
        let lookup = move |name: &str| table.iter().find(|(n, _)| n == name).map(|(_, d)| *d);
        infer_dimension(&parse_expression(text).unwrap(), &lookup)
    }

    fn unit(u: &str) -> Dimension {
        Unit::parse(u).unwrap().dimension()
    }

    #[test]
    fn kinematics() {
        assert_eq!(
            dims("u + a*t", &[("u", "m/s"), ("a", "m/s^2"), ("t", "s")]),
            Ok(unit("m/s"))
        );
        assert_eq!(
            dims("u*t + (1/2)*a*t^2", &[("u", "m/s"), ("a", "m/s^2"), ("t", "s")]),
            Ok(unit("m"))
        );
    }

    #[test]
    fn mismatched_sum() {
        assert!(matches!(
            dims("m + v", &[("m", "kg"), ("v", "m/s")]),
            Err(DimensionError::Incompatible { .. })
        ));
    }

    #[test]
    fn roots_and_powers() {
        assert_eq!(dims("sqrt(2*g*h)", &[("g", "m/s^2"), ("h", "m")]), Ok(unit("m/s")));
        assert_eq!(dims("(g*h)^0.5", &[("g", "m/s^2"), ("h", "m")]), Ok(unit("m/s")));
        assert!(dims("sqrt(h)", &[("h", "m")]).is_err());
        assert!(dims("h^n", &[("h", "m"), ("n", "dimensionless")]).is_err());
        assert_eq!(
            dims("x^n", &[("x", "dimensionless"), ("n", "dimensionless")]),
            Ok(Dimension::NONE)
        );
    }

    #[test]
    fn trig_needs_angle() {
        assert_eq!(dims("u*sin(theta)", &[("u", "m/s"), ("theta", "rad")]), Ok(unit("m/s")));
        assert!(matches!(
            dims("sin(t)", &[("t", "s")]),
            Err(DimensionError::NotDimensionless(_))
        ));
    }

    #[test]
    fn literals_adopt_sibling_dimension() {
        assert_eq!(dims("select(x > 0, x, 0)", &[("x", "m")]), Ok(unit("m")));
        assert_eq!(dims("max(x, 0)", &[("x", "m")]), Ok(unit("m")));
        assert!(dims("select(x > t, x, 0)", &[("x", "m"), ("t", "s")]).is_err());
    }

    #[test]
    fn undeclared_variable() {
        assert_eq!(dims("q", &[]), Err(DimensionError::Undeclared("q".into())));
    }
}
