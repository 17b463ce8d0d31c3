//! The combined audit report, its CSV tables, and expectation checks.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::taxonomy::{stratify_tiers, Category, FailureRecord, TierReport};
use super::{
    chapter_report, compute_intrinsic_metrics, fit_complexity_blueprint, formula_count, formula_count_distribution,
    unknown_variable_frequencies, AuditError, ChapterRow, ComplexityFit, CountShare, DatasetMetrics, FitMode,
};
use crate::record::DatasetRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Known chapters in report order, with their seed counts.
    pub seed_counts: Vec<(String, usize)>,
    pub top_unknowns: usize,
    pub bucket_range: (usize, usize),
    pub fit_mode: FitMode,
    /// Records below this many formulas are counted as low-complexity.
    pub prune_threshold: usize,
}

impl ReportOptions {
    pub fn new(seed_counts: Vec<(String, usize)>) -> Self {
        ReportOptions {
            seed_counts,
            top_unknowns: 7,
            bucket_range: (2, 5),
            fit_mode: FitMode::BucketMeans,
            prune_threshold: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownCount {
    pub name: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomySummary {
    pub records: usize,
    pub clean: usize,
    pub categories: BTreeMap<Category, usize>,
    pub tiers: TierReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metrics: DatasetMetrics,
    /// Lines that could not be read as records; they still count in the
    /// taxonomy.
    pub malformed_records: usize,
    pub formula_counts: BTreeMap<usize, CountShare>,
    pub chapters: BTreeMap<String, ChapterRow>,
    pub unknowns: Vec<UnknownCount>,
    pub blueprint: Option<ComplexityFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blueprint_error: Option<String>,
    /// Records below the pruning threshold, reported but kept.
    pub low_complexity: usize,
    pub taxonomy: TaxonomySummary,
}

impl AuditReport {
    pub fn build(
        records: &[DatasetRecord],
        failures: &[FailureRecord],
        malformed_records: usize,
        opts: &ReportOptions,
    ) -> Result<Self, AuditError> {
        let metrics = compute_intrinsic_metrics(records)?;
        let chapters = chapter_report(records, &opts.seed_counts)?
            .into_iter()
            .map(|row| (row.chapter.clone(), row))
            .collect();
        let unknowns = unknown_variable_frequencies(records, opts.top_unknowns)?
            .into_iter()
            .map(|(name, n)| UnknownCount { name, n })
            .collect();
        let (blueprint, blueprint_error) = match fit_complexity_blueprint(records, opts.bucket_range, opts.fit_mode) {
            Ok(fit) => (Some(fit), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut categories = BTreeMap::new();
        for f in failures {
            for c in &f.categories {
                *categories.entry(*c).or_default() += 1;
            }
        }
        Ok(AuditReport {
            metrics,
            malformed_records,
            formula_counts: formula_count_distribution(records),
            chapters,
            unknowns,
            blueprint,
            blueprint_error,
            low_complexity: records
                .iter()
                .filter(|r| formula_count(r) < opts.prune_threshold)
                .count(),
            taxonomy: TaxonomySummary {
                records: failures.len(),
                clean: failures.iter().filter(|f| f.is_clean()).count(),
                categories,
                tiers: stratify_tiers(failures),
            },
        })
    }
}

/// One expected value at a JSON pointer into the report. Exactly one of
/// `equals`, `value` or `min`/`max` is normally given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Absolute tolerance around `value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Tolerance around `value` in percent of `value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationMiss {
    pub path: String,
    pub expected: String,
    pub actual: Option<serde_json::Value>,
}

impl std::fmt::Display for ExpectationMiss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.actual {
            Some(a) => write!(f, "{}: expected {}, got {a}", self.path, self.expected),
            None => write!(
                f,
                "{}: expected {}, but the report has no such value",
                self.path, self.expected
            ),
        }
    }
}

fn describe(e: &Expectation) -> String {
    let mut parts = Vec::new();
    if let Some(v) = &e.equals {
        parts.push(format!("= {v}"));
    }
    if let Some(v) = e.value {
        match (e.tolerance, e.tolerance_pct) {
            (Some(t), _) => parts.push(format!("{v} ± {t}")),
            (None, Some(p)) => parts.push(format!("{v} ± {p}%")),
            (None, None) => parts.push(format!("{v}")),
        }
    }
    if let Some(m) = e.min {
        parts.push(format!(">= {m}"));
    }
    if let Some(m) = e.max {
        parts.push(format!("<= {m}"));
    }
    parts.join(" and ")
}

fn json_equal(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

/// Compares `report` against every expectation and returns the misses.
pub fn check_expectations(report: &AuditReport, expectations: &Expectations) -> Vec<ExpectationMiss> {
    let doc = serde_json::to_value(report).expect("reports serialize");
    let mut misses = Vec::new();
    for e in &expectations.expectations {
        let actual = doc.pointer(&e.path).filter(|v| !v.is_null());
        let ok = actual.is_some_and(|a| {
            let num = a.as_f64();
            e.equals.as_ref().is_none_or(|x| json_equal(a, x))
                && e.value.is_none_or(|v| {
                    let tol = e
                        .tolerance
                        .or(e.tolerance_pct.map(|p| v.abs() * p / 100.0))
                        .unwrap_or(0.0);
                    num.is_some_and(|n| (n - v).abs() <= tol + 1e-12 * v.abs().max(1.0))
                })
                && e.min.is_none_or(|m| num.is_some_and(|n| n >= m))
                && e.max.is_none_or(|m| num.is_some_and(|n| n <= m))
        });
        if !ok {
            misses.push(ExpectationMiss {
                path: e.path.clone(),
                expected: describe(e),
                actual: actual.cloned(),
            });
        }
    }
    misses
}

fn io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_formula_counts_csv<W: Write>(w: W, dist: &BTreeMap<usize, CountShare>) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["formula_count", "n", "pct"]).map_err(io)?;
    for (k, s) in dist {
        out.write_record([k.to_string(), s.n.to_string(), format!("{:.2}", s.pct)])
            .map_err(io)?;
    }
    out.flush()
}

pub fn write_chapters_csv<'a, W: Write>(w: W, rows: impl IntoIterator<Item = &'a ChapterRow>) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["chapter", "generated", "pct", "seeds", "ratio"])
        .map_err(io)?;
    for r in rows {
        out.write_record([
            r.chapter.clone(),
            r.generated.to_string(),
            format!("{:.2}", r.pct),
            r.seeds.to_string(),
            r.ratio.map(|x| format!("{x:.2}")).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    out.flush()
}

pub fn write_unknowns_csv<W: Write>(w: W, unknowns: &[UnknownCount]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["unknown_var", "frequency"]).map_err(io)?;
    for u in unknowns {
        out.write_record([u.name.clone(), u.n.to_string()]).map_err(io)?;
    }
    out.flush()
}

pub fn write_blueprint_csv<W: Write>(w: W, fit: &ComplexityFit) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["formula_count", "mean_code_length", "fitted_value"])
        .map_err(io)?;
    for b in &fit.buckets {
        out.write_record([
            b.formula_count.to_string(),
            b.mean_code_length.to_string(),
            fit.fit.predict(b.formula_count as f64).to_string(),
        ])
        .map_err(io)?;
    }
    out.flush()
}

pub fn write_taxonomy_csv<W: Write>(w: W, failures: &[FailureRecord]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["record_id", "categories"]).map_err(io)?;
    for f in failures {
        let cats: Vec<String> = f.categories.iter().map(ToString::to_string).collect();
        out.write_record([f.id.clone(), cats.join(";")]).map_err(io)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::super::tests::rec;
    use super::*;

    fn report() -> AuditReport {
        let rs = vec![
            rec("3.Kinematics", "one", &["3_A", "3_B"], "v", "aa", Some("1.0")),
            rec("Kinematics", "two", &["3_A", "3_B", "3_C"], "v", "aaaa", Some("2.0")),
        ];
        AuditReport::build(&rs, &[], 0, &ReportOptions::new(vec![("Kinematics".into(), 2)])).unwrap()
    }

    fn exp(json: serde_json::Value) -> Expectations {
        serde_json::from_value(json).unwrap()
    }

    #[test]
    fn expectations_hit_and_miss() {
        let r = report();
        let ok = exp(serde_json::json!({"expectations": [
            {"path": "/metrics/total", "equals": 2},
            {"path": "/chapters/Kinematics/ratio", "value": 1.0, "tolerance": 0.01},
            {"path": "/unknowns/0/name", "equals": "v"},
            {"path": "/blueprint/fit/slope", "min": 1.0, "max": 3.0},
            {"path": "/formula_counts/3/n", "equals": 1}
        ]}));
        assert!(check_expectations(&r, &ok).is_empty());
        let bad = exp(serde_json::json!({"expectations": [
            {"path": "/metrics/total", "equals": 3},
            {"path": "/metrics/ttr", "value": 5.94, "tolerance": 0.05},
            {"path": "/nope", "equals": 1}
        ]}));
        let misses = check_expectations(&r, &bad);
        assert_eq!(misses.len(), 3);
        assert!(misses[2].actual.is_none());
    }

    #[test]
    fn csv_tables() {
        let r = report();
        let mut buf = Vec::new();
        write_blueprint_csv(&mut buf, r.blueprint.as_ref().unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("formula_count,mean_code_length,fitted_value"));
        assert_eq!(text.lines().count(), 3);
        let mut buf = Vec::new();
        write_chapters_csv(&mut buf, r.chapters.values()).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("Kinematics,2,100.00,2,1.00"));
    }
}
