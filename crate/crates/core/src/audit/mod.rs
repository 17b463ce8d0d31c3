//! Corpus statistics: intrinsic metrics, distributions, the code-length fit
//! and low-complexity pruning.

mod report;
mod taxonomy;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::DatasetRecord;

pub use report::{
    check_expectations, write_blueprint_csv, write_chapters_csv, write_formula_counts_csv, write_taxonomy_csv,
    write_unknowns_csv, AuditReport, Expectation, ExpectationMiss, Expectations, ReportOptions,
};
pub use taxonomy::{
    classify_failures, classify_values, stratify_tiers, Category, FailureRecord, Tier, TierReport, TierStats,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("the dataset is empty")]
    EmptyDataset,
    #[error("chapter label `{0}` does not name a known chapter")]
    UnknownChapterLabel(String),
    #[error("need at least two non-empty formula-count buckets, found {0}")]
    InsufficientBuckets(usize),
    #[error("top-k needs k >= 1")]
    ZeroK,
}

/// Lowercase, split on anything that is not alphanumeric, drop empties.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Type-token ratio in percent over every token of `texts`.
pub fn type_token_ratio<'a>(texts: impl IntoIterator<Item = &'a str>) -> Option<f64> {
    let mut total = 0usize;
    let mut types = BTreeSet::new();
    for t in texts {
        for tok in tokenize(t) {
            total += 1;
            types.insert(tok);
        }
    }
    (total > 0).then(|| types.len() as f64 / total as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    /// Easy below 2 formulas on average, Hard above 3, Medium between.
    pub fn from_average(avg: f64) -> Self {
        if avg < 2.0 {
            Difficulty::Easy
        } else if avg <= 3.0 {
            Difficulty::Medium
        } else {
            Difficulty::Hard
        }
    }
}

/// Outside the magnitude screen: `|v| > 1e15`, or nonzero with `|v| < 1e-15`.
pub fn is_unrealistic(v: f64) -> bool {
    let m = v.abs();
    m > 1e15 || (m != 0.0 && m < 1e-15)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 / total as f64 * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub total: usize,
    /// Share of records whose answer is a finite number.
    pub valid_pct: f64,
    pub valid: usize,
    pub non_finite: usize,
    pub unrealistic: usize,
    pub signature_uniqueness_pct: f64,
    pub text_uniqueness_pct: f64,
    pub duplicate_texts: usize,
    pub ttr: f64,
    pub unique_formulas: usize,
    pub unique_unknowns: usize,
    pub avg_formulas: f64,
    pub difficulty: Difficulty,
    pub avg_words: f64,
    pub avg_code_length: f64,
}

/// Number of distinct formula ids a record uses.
pub fn formula_count(r: &DatasetRecord) -> usize {
    r.formula_ids.iter().collect::<BTreeSet<_>>().len()
}

pub fn compute_intrinsic_metrics(records: &[DatasetRecord]) -> Result<DatasetMetrics, AuditError> {
    if records.is_empty() {
        return Err(AuditError::EmptyDataset);
    }
    let total = records.len();
    let values: Vec<Option<f64>> = records.iter().map(DatasetRecord::execution_value).collect();
    let valid = values.iter().filter(|v| v.is_some_and(f64::is_finite)).count();
    let non_finite = values.iter().filter(|v| v.is_some_and(|x| !x.is_finite())).count();
    let unrealistic = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite() && is_unrealistic(**v))
        .count();
    let signatures: BTreeSet<&str> = records.iter().map(|r| r.signature.as_str()).collect();
    let texts: BTreeSet<&str> = records.iter().map(|r| r.word_problem.as_str()).collect();
    let formulas: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.formula_ids.iter().map(String::as_str))
        .collect();
    let unknowns: BTreeSet<&str> = records.iter().map(|r| r.unknown_var.as_str()).collect();
    let words: usize = records.iter().map(|r| tokenize(&r.word_problem).count()).sum();
    let avg_formulas = records.iter().map(formula_count).sum::<usize>() as f64 / total as f64;
    Ok(DatasetMetrics {
        total,
        valid_pct: pct(valid, total),
        valid,
        non_finite,
        unrealistic,
        signature_uniqueness_pct: pct(signatures.len(), total),
        text_uniqueness_pct: pct(texts.len(), total),
        duplicate_texts: total - texts.len(),
        ttr: type_token_ratio(records.iter().map(|r| r.word_problem.as_str())).unwrap_or(0.0),
        unique_formulas: formulas.len(),
        unique_unknowns: unknowns.len(),
        avg_formulas,
        difficulty: Difficulty::from_average(avg_formulas),
        avg_words: words as f64 / total as f64,
        avg_code_length: records.iter().map(|r| r.code.chars().count()).sum::<usize>() as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountShare {
    pub n: usize,
    /// Percent of the whole, rounded to 2 decimals.
    pub pct: f64,
}

pub fn formula_count_distribution(records: &[DatasetRecord]) -> BTreeMap<usize, CountShare> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(formula_count(r)).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(k, n)| {
            (
                k,
                CountShare {
                    n,
                    pct: round2(pct(n, records.len())),
                },
            )
        })
        .collect()
}

/// Strips a leading chapter number (`"9.Centre of Mass"`), surrounding
/// whitespace and typographic apostrophes.
pub fn normalize_chapter_label(label: &str) -> String {
    let trimmed = label.trim();
    let rest = trimmed.trim_start_matches(|c: char| c.is_ascii_digit());
    let rest = if rest.len() < trimmed.len() {
        rest.trim_start_matches(['.', ')', ':']).trim_start()
    } else {
        trimmed
    };
    rest.replace(['\u{2019}', '\u{2018}'], "'")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterRow {
    pub chapter: String,
    pub generated: usize,
    pub pct: f64,
    pub seeds: usize,
    /// Generated problems per seed, rounded to 2 decimals.
    pub ratio: Option<f64>,
}

/// Per-chapter counts. `seed_counts` names the known chapters (in report
/// order) and how many seeds each had.
pub fn chapter_report(
    records: &[DatasetRecord],
    seed_counts: &[(String, usize)],
) -> Result<Vec<ChapterRow>, AuditError> {
    let canonical: HashMap<String, usize> = seed_counts
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (normalize_chapter_label(name).to_lowercase(), i))
        .collect();
    let mut counts = vec![0usize; seed_counts.len()];
    for r in records {
        let key = normalize_chapter_label(&r.chapter).to_lowercase();
        let i = canonical
            .get(&key)
            .ok_or_else(|| AuditError::UnknownChapterLabel(r.chapter.clone()))?;
        counts[*i] += 1;
    }
    Ok(seed_counts
        .iter()
        .zip(counts)
        .map(|((name, seeds), generated)| ChapterRow {
            chapter: normalize_chapter_label(name),
            generated,
            pct: round2(pct(generated, records.len())),
            seeds: *seeds,
            ratio: (*seeds > 0).then(|| round2(generated as f64 / *seeds as f64)),
        })
        .collect())
}

/// The `k` most frequent unknowns, most frequent first, ties by name.
pub fn unknown_variable_frequencies(records: &[DatasetRecord], k: usize) -> Result<Vec<(String, usize)>, AuditError> {
    if k == 0 {
        return Err(AuditError::ZeroK);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.unknown_var.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Regress the per-bucket mean code lengths.
    #[default]
    BucketMeans,
    /// Regress every record's code length.
    PerRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub formula_count: usize,
    pub records: usize,
    pub mean_code_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityFit {
    pub buckets: Vec<Bucket>,
    pub fit: LinearFit,
    pub mode: FitMode,
    pub range: (usize, usize),
}

/// Ordinary least squares of `y` on `x`, with R² = SSreg / SStot. Needs at
/// least two distinct x values. A perfectly flat `y` gives R² = 1.
pub fn least_squares(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_reg: f64 = points.iter().map(|p| (slope * p.0 + intercept - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (ss_reg / ss_tot).clamp(0.0, 1.0)
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Mean code length per formula count over `range` (inclusive), and a
/// straight-line fit of length on count.
pub fn fit_complexity_blueprint(
    records: &[DatasetRecord],
    range: (usize, usize),
    mode: FitMode,
) -> Result<ComplexityFit, AuditError> {
    let mut sums: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut points = Vec::new();
    for r in records {
        let k = formula_count(r);
        if k < range.0 || k > range.1 {
            continue;
        }
        let len = r.code.chars().count();
        let e = sums.entry(k).or_default();
        e.0 += 1;
        e.1 += len;
        points.push((k as f64, len as f64));
    }
    let buckets: Vec<Bucket> = sums
        .into_iter()
        .map(|(k, (n, total))| Bucket {
            formula_count: k,
            records: n,
            mean_code_length: total as f64 / n as f64,
        })
        .collect();
    if buckets.len() < 2 {
        return Err(AuditError::InsufficientBuckets(buckets.len()));
    }
    if mode == FitMode::BucketMeans {
        points = buckets
            .iter()
            .map(|b| (b.formula_count as f64, b.mean_code_length))
            .collect();
    }
    let fit = least_squares(&points).expect("two distinct buckets");
    Ok(ComplexityFit {
        buckets,
        fit,
        mode,
        range,
    })
}

/// Splits off records with fewer than `threshold` distinct formulas,
/// keeping order on both sides.
pub fn prune_low_complexity(records: Vec<DatasetRecord>, threshold: usize) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    records.into_iter().partition(|r| formula_count(r) >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draft::VarMap;
    use crate::record::ValidationResult;

    pub(crate) fn rec(
        chapter: &str,
        text: &str,
        ids: &[&str],
        unknown: &str,
        code: &str,
        result: Option<&str>,
    ) -> DatasetRecord {
        DatasetRecord {
            chapter: chapter.into(),
            word_problem: text.into(),
            execution_result: result.map(String::from),
            signature: crate::generation::ProblemSignature::new(ids, unknown)
                .unwrap()
                .to_string(),
            formula_ids: ids.iter().map(|s| s.to_string()).collect(),
            unknown_var: unknown.into(),
            variables: VarMap(vec![]),
            code: code.into(),
            validation_result: ValidationResult {
                valid: true,
                unknown_var: unknown.into(),
            },
            extra: Default::default(),
        }
    }

    #[test]
    fn ttr_of_repeated_word() {
        let ttr = type_token_ratio(["mass mass mass"]).unwrap();
        assert!((ttr - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(type_token_ratio(["A ball; a BALL!"]), Some(50.0));
        assert_eq!(type_token_ratio([""]), None);
    }

    #[test]
    fn difficulty_labels() {
        assert_eq!(Difficulty::from_average(1.99), Difficulty::Easy);
        assert_eq!(Difficulty::from_average(2.0), Difficulty::Medium);
        assert_eq!(Difficulty::from_average(3.0), Difficulty::Medium);
        assert_eq!(Difficulty::from_average(3.01), Difficulty::Hard);
    }

    #[test]
    fn metrics_over_small_corpus() {
        let rs = vec![
            rec("Kinematics", "a car", &["3_A", "3_B"], "v", "xx", Some("1.0")),
            rec("Kinematics", "a car", &["3_A"], "t", "xxxx", Some("inf")),
            rec("Kinematics", "a cart", &[], "t", "", Some("1e-20")),
            rec("Kinematics", "a bus", &["3_A", "3_A"], "v", "x", None),
        ];
        let m = compute_intrinsic_metrics(&rs).unwrap();
        assert_eq!(m.valid, 2);
        assert_eq!(m.non_finite, 1);
        assert_eq!(m.unrealistic, 1);
        assert_eq!(m.duplicate_texts, 1);
        assert_eq!(m.unique_formulas, 2);
        assert_eq!(m.unique_unknowns, 2);
        assert_eq!(m.avg_formulas, 1.0);
        assert_eq!(m.avg_code_length, 7.0 / 4.0);
        assert_eq!(compute_intrinsic_metrics(&[]), Err(AuditError::EmptyDataset));
    }

    #[test]
    fn chapter_labels_and_ratio() {
        let rs: Vec<_> = (0..10)
            .map(|i| rec("9.Centre of Mass", &format!("p{i}"), &[], "x", "", None))
            .collect();
        let rows = chapter_report(&rs, &[("Centre of Mass".into(), 5), ("Friction".into(), 0)]).unwrap();
        assert_eq!(rows[0].ratio, Some(2.0));
        assert_eq!(rows[0].pct, 100.0);
        assert_eq!(rows[1].ratio, None);
        let bad = [rec("Optics", "x", &[], "x", "", None)];
        assert_eq!(
            chapter_report(&bad, &[("Friction".into(), 1)]),
            Err(AuditError::UnknownChapterLabel("Optics".into()))
        );
        assert_eq!(normalize_chapter_label("5. Newton\u{2019}s Laws"), "Newton's Laws");
    }

    #[test]
    fn unknown_ranking_breaks_ties_by_name() {
        let rs: Vec<_> = ["b", "a", "c", "c"]
            .iter()
            .map(|u| rec("K", "t", &[], u, "", None))
            .collect();
        let top = unknown_variable_frequencies(&rs, 2).unwrap();
        assert_eq!(top, [("c".to_string(), 2), ("a".to_string(), 1)]);
        assert_eq!(unknown_variable_frequencies(&rs, 0), Err(AuditError::ZeroK));
    }

    #[test]
    fn collinear_buckets_fit_exactly() {
        let f = least_squares(&[(2.0, 100.0), (3.0, 200.0), (4.0, 300.0)]).unwrap();
        assert!((f.slope - 100.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(least_squares(&[(2.0, 1.0)]).is_none());
    }

    #[test]
    fn blueprint_needs_two_buckets() {
        let rs = [rec("K", "t", &["3_A", "3_B"], "v", "abc", None)];
        assert_eq!(
            fit_complexity_blueprint(&rs, (2, 5), FitMode::BucketMeans),
            Err(AuditError::InsufficientBuckets(1))
        );
    }

    #[test]
    fn pruning_is_an_ordered_partition() {
        let rs = vec![
            rec("K", "a", &[], "v", "", None),
            rec("K", "b", &["3_A", "3_B"], "v", "", None),
            rec("K", "c", &["3_A"], "v", "", None),
        ];
        let (kept, pruned) = prune_low_complexity(rs.clone(), 2);
        assert_eq!(kept.iter().map(|r| r.word_problem.as_str()).collect::<Vec<_>>(), ["b"]);
        assert_eq!(
            pruned.iter().map(|r| r.word_problem.as_str()).collect::<Vec<_>>(),
            ["a", "c"]
        );
        assert_eq!(prune_low_complexity(rs, 0).1.len(), 0);
    }
}
