//! SI dimension vectors and the unit strings that name them.
//!
//! Units are metadata only: values are never rescaled. A unit string is a
//! product/quotient of known SI symbols with optional integer exponents,
//! e.g. `kg*m^2/s`, `m/s^2`, `N*m`, or the literal `dimensionless`.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exponents over the seven SI base dimensions, in the order
/// length, mass, time, current, temperature, amount, luminosity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dimension(pub [i8; 7]);

impl Dimension {
    pub const NONE: Dimension = Dimension([0; 7]);
    pub const LENGTH: Dimension = Dimension([1, 0, 0, 0, 0, 0, 0]);
    pub const MASS: Dimension = Dimension([0, 1, 0, 0, 0, 0, 0]);
    pub const TIME: Dimension = Dimension([0, 0, 1, 0, 0, 0, 0]);
    pub const CURRENT: Dimension = Dimension([0, 0, 0, 1, 0, 0, 0]);
    pub const TEMPERATURE: Dimension = Dimension([0, 0, 0, 0, 1, 0, 0]);
    pub const AMOUNT: Dimension = Dimension([0, 0, 0, 0, 0, 1, 0]);
    pub const LUMINOSITY: Dimension = Dimension([0, 0, 0, 0, 0, 0, 1]);

    pub fn is_dimensionless(&self) -> bool {
        *self == Self::NONE
    }

    /// Raises to an integer power. `None` on exponent overflow.
    pub fn powi(self, n: i32) -> Option<Dimension> {
        let mut out = [0i8; 7];
        for (o, e) in out.iter_mut().zip(self.0) {
            *o = i8::try_from(i32::from(e).checked_mul(n)?).ok()?;
        }
        Some(Dimension(out))
    }

    /// Square root; `None` unless every exponent is even.
    pub fn sqrt(self) -> Option<Dimension> {
        self.root(2)
    }

    pub fn root(self, n: i8) -> Option<Dimension> {
        if n == 0 {
            return None;
        }
        let mut out = [0i8; 7];
        for (o, e) in out.iter_mut().zip(self.0) {
            if e % n != 0 {
                return None;
            }
            *o = e / n;
        }
        Some(Dimension(out))
    }
}

impl Add for Dimension {
    type Output = Dimension;
    fn add(self, rhs: Dimension) -> Dimension {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Dimension(out)
    }
}

impl Sub for Dimension {
    type Output = Dimension;
    fn sub(self, rhs: Dimension) -> Dimension {
        self + (-rhs)
    }
}

impl Neg for Dimension {
    type Output = Dimension;
    fn neg(self) -> Dimension {
        let mut out = self.0;
        for o in out.iter_mut() {
            *o = -*o;
        }
        Dimension(out)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const BASES: [&str; 7] = ["m", "kg", "s", "A", "K", "mol", "cd"];
        if self.is_dimensionless() {
            return f.write_str("dimensionless");
        }
        let mut first = true;
        for (sym, e) in BASES.iter().zip(self.0) {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "{sym}")?;
            } else {
                write!(f, "{sym}^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("unknown unit symbol `{0}`")]
    UnknownSymbol(String),
    #[error("malformed unit `{0}`")]
    Malformed(String),
}

/// A named unit together with its dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Unit {
    name: String,
    dim: Dimension,
}

impl Unit {
    pub fn dimensionless() -> Unit {
        Unit {
            name: "dimensionless".to_string(),
            dim: Dimension::NONE,
        }
    }

    pub fn parse(text: &str) -> Result<Unit, UnitError> {
        let name = text.trim();
        let dim = parse_dimension(name)?;
        Ok(Unit {
            name: name.to_string(),
            dim,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn is_compatible(&self, other: &Unit) -> bool {
        self.dim == other.dim
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl std::str::FromStr for Unit {
    type Err = UnitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Unit::parse(s)
    }
}

impl Serialize for Unit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

impl<'de> Deserialize<'de> for Unit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Unit::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn symbol_dimension(sym: &str) -> Option<Dimension> {
    let d = |a: [i8; 7]| Some(Dimension(a));
    match sym {
        "1" | "dimensionless" | "rad" | "sr" | "deg" | "rev" => d([0; 7]),
        "m" => d([1, 0, 0, 0, 0, 0, 0]),
        "kg" => d([0, 1, 0, 0, 0, 0, 0]),
        "s" => d([0, 0, 1, 0, 0, 0, 0]),
        "A" => d([0, 0, 0, 1, 0, 0, 0]),
        "K" => d([0, 0, 0, 0, 1, 0, 0]),
        "mol" => d([0, 0, 0, 0, 0, 1, 0]),
        "cd" => d([0, 0, 0, 0, 0, 0, 1]),
        "N" => d([1, 1, -2, 0, 0, 0, 0]),
        "J" => d([2, 1, -2, 0, 0, 0, 0]),
        "W" => d([2, 1, -3, 0, 0, 0, 0]),
        "Pa" => d([-1, 1, -2, 0, 0, 0, 0]),
        "Hz" => d([0, 0, -1, 0, 0, 0, 0]),
        "C" => d([0, 0, 1, 1, 0, 0, 0]),
        "V" => d([2, 1, -3, -1, 0, 0, 0]),
        _ => None,
    }
}

/// Parses `a*b^2/c*d` style unit expressions. Everything after the first `/`
/// is in the denominator; `(...)` groups are not supported.
fn parse_dimension(text: &str) -> Result<Dimension, UnitError> {
    if text.is_empty() {
        return Err(UnitError::Malformed(text.to_string()));
    }
    let mut total = Dimension::NONE;
    let mut denominator = false;
    let mut token = String::new();
    let flush = |token: &mut String, denom: bool, total: &mut Dimension| -> Result<(), UnitError> {
        let t = token.trim();
        if t.is_empty() {
            return Err(UnitError::Malformed(text.to_string()));
        }
        let (sym, exp) = match t.split_once('^') {
            Some((s, e)) => {
                let e: i32 = e.trim().parse().map_err(|_| UnitError::Malformed(text.to_string()))?;
                (s.trim(), e)
            }
            None => (t, 1),
        };
        let base = symbol_dimension(sym).ok_or_else(|| UnitError::UnknownSymbol(sym.to_string()))?;
        let exp = if denom { -exp } else { exp };
        let part = base.powi(exp).ok_or_else(|| UnitError::Malformed(text.to_string()))?;
        *total = *total + part;
        token.clear();
        Ok(())
    };
    for ch in text.chars() {
        match ch {
            '*' | '·' => flush(&mut token, denominator, &mut total)?,
            '/' => {
                flush(&mut token, denominator, &mut total)?;
                denominator = true;
            }
            _ => token.push(ch),
        }
    }
    flush(&mut token, denominator, &mut total)?;
    Ok(total)
}
