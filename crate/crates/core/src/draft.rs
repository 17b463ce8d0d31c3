//! Problem drafts as produced by the generation prompt, and the ordered
//! variable map shared with dataset records.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::axiom::FormulaLibrary;
use crate::seed::VariableSpec;

/// A variable's value: a number, or the marker for the quantity to solve for.
///
/// On the wire the marker is `null` (records) or the string `"NaN"`
/// (generation output). It is never the float NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarValue {
    Known(f64),
    Unknown,
}

impl VarValue {
    pub fn known(&self) -> Option<f64> {
        match self {
            VarValue::Known(v) => Some(*v),
            VarValue::Unknown => None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, VarValue::Unknown)
    }
}

impl Serialize for VarValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            VarValue::Known(v) => s.serialize_f64(*v),
            VarValue::Unknown => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for VarValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = VarValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, null, or \"NaN\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<VarValue, E> {
                Ok(VarValue::Known(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<VarValue, E> {
                Ok(VarValue::Known(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<VarValue, E> {
                Ok(VarValue::Known(v as f64))
            }
            fn visit_unit<E: de::Error>(self) -> Result<VarValue, E> {
                Ok(VarValue::Unknown)
            }
            fn visit_none<E: de::Error>(self) -> Result<VarValue, E> {
                Ok(VarValue::Unknown)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<VarValue, E> {
                if v.trim().eq_ignore_ascii_case("nan") {
                    Ok(VarValue::Unknown)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub value: VarValue,
    pub unit: String,
}

/// Name → variable, in document order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarMap(pub Vec<(String, Variable)>);

impl VarMap {
    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Variable)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn unknowns(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(_, v)| v.value.is_unknown()).map(|(n, _)| n)
    }

    /// The variables as the code prompt shows them, unknown as `"NaN"`.
    pub fn to_prompt_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (name, v) in self.iter() {
            let value = match v.value {
                VarValue::Known(x) => serde_json::json!(x),
                VarValue::Unknown => serde_json::json!("NaN"),
            };
            m.insert(name.to_string(), serde_json::json!({"value": value, "unit": v.unit}));
        }
        serde_json::Value::Object(m)
    }
}

impl Serialize for VarMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for VarMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = VarMap;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of variables")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> Result<VarMap, A::Error> {
                let mut out: Vec<(String, Variable)> = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, Variable>()? {
                    if out.iter().any(|(n, _)| *n == k) {
                        return Err(de::Error::custom(format!("duplicate variable `{k}`")));
                    }
                    out.push((k, v));
                }
                Ok(VarMap(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DraftError {
    #[error("draft document: {0}")]
    Schema(String),
    #[error("expected exactly one unknown variable, found {0}")]
    UnknownCount(usize),
    #[error("variable `{name}` = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("variable `{0}` is not in the variable dictionary")]
    Unspecified(String),
    #[error("formula `{0}` is not in the available library")]
    FormulaNotAvailable(String),
}

/// A generated problem before verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDraft {
    pub word_problem: String,
    pub formula_ids: Vec<String>,
    pub variables: VarMap,
    #[serde(default)]
    pub scenario: usize,
    #[serde(default)]
    pub seed_id: String,
}

#[derive(Deserialize)]
struct DraftDocument {
    word_problem: String,
    formula_ids: Vec<String>,
    variables: VarMap,
}

impl ProblemDraft {
    /// Reads the generation prompt's output document and checks that exactly
    /// one variable is marked unknown.
    pub fn from_document(doc: &serde_json::Value, seed_id: &str, scenario: usize) -> Result<Self, DraftError> {
        let d = DraftDocument::deserialize(doc).map_err(|e| DraftError::Schema(e.to_string()))?;
        let draft = ProblemDraft {
            word_problem: d.word_problem,
            formula_ids: d.formula_ids,
            variables: d.variables,
            scenario,
            seed_id: seed_id.to_string(),
        };
        let n = draft.variables.unknowns().count();
        if n != 1 {
            return Err(DraftError::UnknownCount(n));
        }
        Ok(draft)
    }

    pub fn unknown(&self) -> &str {
        self.variables.unknowns().next().unwrap_or("")
    }

    pub fn formula_set(&self) -> BTreeSet<&str> {
        self.formula_ids.iter().map(String::as_str).collect()
    }

    /// Checks values against the variable dictionary and formula ids against
    /// the active library.
    pub fn check(&self, specs: &[VariableSpec], library: &FormulaLibrary) -> Result<(), DraftError> {
        for id in &self.formula_ids {
            if !library.contains(id) {
                return Err(DraftError::FormulaNotAvailable(id.clone()));
            }
        }
        for (name, var) in self.variables.iter() {
            let spec = specs
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| DraftError::Unspecified(name.to_string()))?;
            if let VarValue::Known(v) = var.value {
                if !spec.contains(v) {
                    return Err(DraftError::OutOfRange {
                        name: name.to_string(),
                        value: v,
                        min: spec.min,
                        max: spec.max,
                    });
                }
            }
        }
        Ok(())
    }
}
