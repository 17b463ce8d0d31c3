//! Dataset records and line-delimited JSON I/O.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::draft::VarMap;
use crate::gateway::CallStats;
use crate::generation::ProblemSignature;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record at line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub valid: bool,
    pub unknown_var: String,
}

/// One problem. Field order matches the published samples; fields this
/// type does not know are kept in `extra` and written back after them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub chapter: String,
    pub word_problem: String,
    /// Exact decimal text of the answer, or null when execution failed.
    pub execution_result: Option<String>,
    pub signature: String,
    pub formula_ids: Vec<String>,
    pub unknown_var: String,
    pub variables: VarMap,
    pub code: String,
    pub validation_result: ValidationResult,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub const REQUIRED_FIELDS: [&str; 9] = [
    "chapter",
    "word_problem",
    "execution_result",
    "signature",
    "formula_ids",
    "unknown_var",
    "variables",
    "code",
    "validation_result",
];

impl DatasetRecord {
    /// The answer as a double, if present and parseable.
    pub fn execution_value(&self) -> Option<f64> {
        self.execution_result.as_deref().and_then(parse_result)
    }

    /// The signature implied by `formula_ids` and `unknown_var`.
    pub fn computed_signature(&self) -> Option<ProblemSignature> {
        ProblemSignature::new(&self.formula_ids, &self.unknown_var).ok()
    }

    /// Converts a JSON document, naming the first offending field.
    pub fn from_value(value: serde_json::Value, line: usize) -> Result<Self, RecordError> {
        let Some(obj) = value.as_object() else {
            return Err(RecordError::Json {
                line,
                message: "record is not a JSON object".into(),
            });
        };
        for field in REQUIRED_FIELDS {
            if !obj.contains_key(field) {
                return Err(RecordError::Malformed {
                    line,
                    field: field.into(),
                    message: "missing".into(),
                });
            }
        }
        for field in REQUIRED_FIELDS {
            if let Err(e) = check_field(field, &obj[field]) {
                return Err(RecordError::Malformed {
                    line,
                    field: field.into(),
                    message: e.to_string(),
                });
            }
        }
        serde_json::from_value(value).map_err(|e| RecordError::Json {
            line,
            message: e.to_string(),
        })
    }
}

fn check_field(field: &str, v: &serde_json::Value) -> Result<(), serde_json::Error> {
    use serde_json::from_value as fv;
    let v = v.clone();
    match field {
        "execution_result" => fv::<Option<String>>(v).map(drop),
        "formula_ids" => fv::<Vec<String>>(v).map(drop),
        "variables" => fv::<VarMap>(v).map(drop),
        "validation_result" => fv::<ValidationResult>(v).map(drop),
        _ => fv::<String>(v).map(drop),
    }
}

/// Python-style shortest round-trip rendering of a double: `0.5`, `16.0`,
/// `1e+20`, `1.5e-07`, `inf`, `nan`.
pub fn format_result(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    let sci = format!("{v:e}");
    let (mantissa, exp) = sci.split_once('e').expect("`e` in scientific format");
    let exp: i32 = exp.parse().expect("integral exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if (-4..16).contains(&exp) {
        let point = exp + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
        } else {
            let (a, b) = digits.split_at(point as usize);
            format!("{a}.{b}")
        };
        format!("{sign}{body}")
    } else {
        let m = if digits.len() == 1 {
            digits
        } else {
            format!("{}.{}", &digits[..1], &digits[1..])
        };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{m}e{esign}{:02}", exp.abs())
    }
}

/// Reads a stored answer string, accepting Python's `inf`/`nan` spellings.
pub fn parse_result(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Parses line-delimited records. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_records(text: &str) -> Result<Vec<DatasetRecord>, RecordError> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())))
}

fn parse_lines<I>(lines: I) -> Result<Vec<DatasetRecord>, RecordError>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_text = line?;
        if line_text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line_text).map_err(|e| RecordError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(DatasetRecord::from_value(value, i + 1)?);
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, RecordError> {
    parse_lines(BufReader::new(File::open(path)?).lines())
}

pub fn records_to_string(records: &[DatasetRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn write_records(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<(), RecordError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Normalizes a downloaded corpus: a JSON array, an object wrapping one
/// (`data`, `records`, `train` or `rows`, whose items may nest the record
/// under `row`), or line-delimited records.
pub fn import_records(text: &str) -> Result<Vec<DatasetRecord>, RecordError> {
    let trimmed = text.trim_start();
    if !(trimmed.starts_with('[') || trimmed.starts_with('{')) {
        return parse_records(text);
    }
    let doc: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        // Several objects on separate lines: treat as JSON lines.
        Err(_) => return parse_records(text),
    };
    let items = match doc {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(mut obj) => {
            let key = ["data", "records", "train", "rows"]
                .into_iter()
                .find(|k| obj.get(*k).is_some_and(|v| v.is_array()));
            match key {
                Some(k) => match obj.remove(k) {
                    Some(serde_json::Value::Array(items)) => items,
                    _ => unreachable!(),
                },
                None => vec![serde_json::Value::Object(obj)],
            }
        }
        _ => {
            return Err(RecordError::Json {
                line: 1,
                message: "expected an array or object".into(),
            })
        }
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, mut item)| {
            if let Some(inner) = item.get_mut("row").filter(|r| r.is_object()) {
                item = inner.take();
            }
            DatasetRecord::from_value(item, i + 1)
        })
        .collect()
}

/// Summary of one generation session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub config: serde_json::Value,
    pub seed_file_sha256: String,
    pub accepted_per_seed: BTreeMap<String, usize>,
    pub rejected_attempts: usize,
    pub low_complexity: usize,
    pub calls: CallStats,
    pub started_at: u64,
    pub finished_at: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_float_repr() {
        let cases = [
            (0.5, "0.5"),
            (0.12492187503051848, "0.12492187503051848"),
            (16.0, "16.0"),
            (-2.5, "-2.5"),
            (0.0, "0.0"),
            (-0.0, "-0.0"),
            (1e16, "1e+16"),
            (1234567890123456.0, "1234567890123456.0"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (1.5e-7, "1.5e-07"),
            (2e15, "2000000000000000.0"),
            (1.7976931348623157e308, "1.7976931348623157e+308"),
            (5e-324, "5e-324"),
            (0.1 + 0.2, "0.30000000000000004"),
            (f64::INFINITY, "inf"),
            (f64::NAN, "nan"),
        ];
        for (v, want) in cases {
            assert_eq!(format_result(v), want, "{v:e}");
            if v.is_finite() {
                assert_eq!(parse_result(want).unwrap().to_bits(), v.to_bits());
            }
        }
    }

    fn sample_line() -> String {
        r#"{"chapter":"9.Centre of Mass","word_problem":"w","execution_result":"0.5","signature":"fids=[]|unknown=e","formula_ids":[],"unknown_var":"e","variables":{"u":{"value":2.5,"unit":"m/s"},"e":{"value":null,"unit":"dimensionless"}},"code":"x","validation_result":{"valid":true,"unknown_var":"e"}}"#.to_string()
    }

    #[test]
    fn round_trip_preserves_bytes_and_extras() {
        let line = sample_line();
        let recs = parse_records(&line).unwrap();
        assert_eq!(recs[0].execution_value(), Some(0.5));
        assert_eq!(records_to_string(&recs), format!("{line}\n"));

        let with_extra = format!("{}{}", &line[..line.len() - 1], r#","id":7,"source":"hf"}"#);
        let recs = parse_records(&with_extra).unwrap();
        assert_eq!(recs[0].extra["id"], 7);
        assert_eq!(records_to_string(&recs), format!("{with_extra}\n"));
    }

    #[test]
    fn missing_field_is_named() {
        let line = sample_line().replace(r#""unknown_var":"e","variables""#, r#""variables""#);
        match parse_records(&line) {
            Err(RecordError::Malformed { line: 1, field, .. }) => assert_eq!(field, "unknown_var"),
            other => panic!("{other:?}"),
        }
        let line = sample_line().replace(r#""formula_ids":[]"#, r#""formula_ids":"3_A""#);
        assert!(
            matches!(parse_records(&line), Err(RecordError::Malformed { ref field, .. }) if field == "formula_ids")
        );
    }

    #[test]
    fn import_shapes() {
        let line = sample_line();
        let array = format!("[{line},{line}]");
        assert_eq!(import_records(&array).unwrap().len(), 2);
        let wrapped = format!(r#"{{"data":[{line}]}}"#);
        assert_eq!(import_records(&wrapped).unwrap().len(), 1);
        let rows = format!(r#"{{"rows":[{{"row_idx":0,"row":{line}}}]}}"#);
        assert_eq!(import_records(&rows).unwrap().len(), 1);
        assert_eq!(import_records(&format!("{line}\n{line}\n")).unwrap().len(), 2);
        assert!(import_records("").unwrap().is_empty());
    }
}
