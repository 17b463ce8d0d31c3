use std::fmt;

use thiserror::Error;

use super::{BinOp, CmpOp, Cond, Expr, Func};

/// Parse failure with a byte offset into the source text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {position}: expected {}", ExpectedList(.expected))]
    Syntax { position: usize, expected: Vec<String> },
    #[error("unknown function `{name}` at {position}")]
    UnknownFunction { name: String, position: usize },
    #[error("`{name}` takes {expected} argument(s), got {got} (at {position})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        position: usize,
    },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::UnknownFunction { position, .. }
            | ParseError::Arity { position, .. } => *position,
        }
    }
}

struct ExpectedList<'a>(&'a [String]);

impl fmt::Display for ExpectedList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" | "))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let v: f64 = text[start..i].parse().map_err(|_| ParseError::Syntax {
                position: start,
                expected: vec!["number".into()],
            })?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
            continue;
        }
        let two = text.get(i..i + 2).unwrap_or("");
        let (tok, len) = match two {
            "**" => (Tok::Op("^"), 2),
            "<=" => (Tok::Op("<="), 2),
            ">=" => (Tok::Op(">="), 2),
            "==" => (Tok::Op("="), 2),
            _ => match c {
                b'+' => (Tok::Op("+"), 1),
                b'-' => (Tok::Op("-"), 1),
                b'*' => (Tok::Op("*"), 1),
                b'/' => (Tok::Op("/"), 1),
                b'^' => (Tok::Op("^"), 1),
                b'<' => (Tok::Op("<"), 1),
                b'>' => (Tok::Op(">"), 1),
                b'=' => (Tok::Op("="), 1),
                b'(' => (Tok::LParen, 1),
                b')' => (Tok::RParen, 1),
                b',' => (Tok::Comma, 1),
                _ => {
                    // Unicode comparison glyphs are accepted as aliases.
                    let rest = &text[i..];
                    if let Some(stripped) = rest.strip_prefix('≤') {
                        (Tok::Op("<="), rest.len() - stripped.len())
                    } else if let Some(stripped) = rest.strip_prefix('≥') {
                        (Tok::Op(">="), rest.len() - stripped.len())
                    } else {
                        return Err(ParseError::Syntax {
                            position: i,
                            expected: vec!["operator".into(), "operand".into()],
                        });
                    }
                }
            },
        };
        out.push((tok, start));
        i += len;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(&[label])
        }
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        if let Tok::Op(op) = self.peek() {
            if let Some(found) = ops.iter().find(|o| *o == op) {
                self.bump();
                return Some(found);
            }
        }
        None
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let rhs = self.product()?;
            let op = if op == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if op == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op(&["^"]).is_some() {
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    self.call(name, start)
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => self.error(&["number", "identifier", "`(`", "`-`"]),
        }
    }

    fn call(&mut self, name: String, start: usize) -> Result<Expr, ParseError> {
        if name == "select" {
            let cond = self.cond()?;
            self.expect(Tok::Comma, "`,`")?;
            let a = self.sum()?;
            self.expect(Tok::Comma, "`,`")?;
            let b = self.sum()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Select(Box::new(cond), Box::new(a), Box::new(b)));
        }
        let func = Func::from_name(&name).ok_or_else(|| ParseError::UnknownFunction {
            name: name.clone(),
            position: start,
        })?;
        let mut args = vec![self.sum()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.sum()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != func.arity() {
            return Err(ParseError::Arity {
                name,
                expected: func.arity(),
                got: args.len(),
                position: start,
            });
        }
        Ok(Expr::Call(func, args))
    }

    fn cond(&mut self) -> Result<Cond, ParseError> {
        let mut lhs = self.conj()?;
        while self.eat_keyword("or") {
            let rhs = self.conj()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Cond, ParseError> {
        let mut lhs = self.compare()?;
        while self.eat_keyword("and") {
            let rhs = self.compare()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn compare(&mut self) -> Result<Cond, ParseError> {
        let a = self.sum()?;
        let op = match self.eat_op(&["<", "<=", "=", ">=", ">"]) {
            Some("<") => CmpOp::Lt,
            Some("<=") => CmpOp::Le,
            Some("=") => CmpOp::Eq,
            Some(">=") => CmpOp::Ge,
            Some(">") => CmpOp::Gt,
            _ => return self.error(&["`<`", "`<=`", "`=`", "`>=`", "`>`"]),
        };
        let b = self.sum()?;
        Ok(Cond::Compare(op, a, b))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == kw) {
            self.bump();
            true
        } else {
            false
        }
    }
}

/// Parses one expression; the whole input must be consumed.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Syntax {
            position: 0,
            expected: vec!["expression".into()],
        });
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return p.error(&["operator", "end of input"]);
    }
    Ok(e)
}
