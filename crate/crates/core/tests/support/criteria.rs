//! One check per acceptance criterion. Each returns a short detail line on
//! success and the reason on failure; dataset checks are blocked when the
//! corpus file is not configured.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ipg::audit::{classify_values, least_squares, AuditReport, Category, ExpectationMiss, Expectations, ReportOptions};
use ipg::axiom::{Curriculum, FormulaLibrary};
use ipg::gateway::mock::{MockBackend, MockFixture};
use ipg::generation::GenerationConfig;
use ipg::pipeline::{Pipeline, SessionOutput, LOW_COMPLEXITY_THRESHOLD};
use ipg::plan::{execute_plan, parse_solution_plan};
use ipg::record::{import_records, read_records, DatasetRecord};
use ipg::sanity::RuleSet;
use ipg::seed::load_seeds;
use ipg::verify::{reverify_record, Reverification};

pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

/// Environment variable naming a local copy of the released corpus.
pub const CORPUS_ENV: &str = "IPG_CMV1_PATH";

pub enum Verdict {
    Pass(String),
    Fail(String),
    Blocked(String),
}

pub fn verdict(r: Result<String, String>) -> Verdict {
    match r {
        Ok(d) => Verdict::Pass(d),
        Err(e) => Verdict::Fail(e),
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn full_library(cm: &Curriculum) -> FormulaLibrary {
    let chapters: Vec<&str> = cm.dictionary.names().collect();
    cm.resolve_library(&chapters).unwrap()
}

// Corpus statistics.

pub struct Corpus {
    pub report: AuditReport,
    pub elapsed: f64,
}

/// Imports and audits the corpus named by `IPG_CMV1_PATH`, if set.
pub fn load_corpus() -> Option<Result<Corpus, String>> {
    let path = std::env::var_os(CORPUS_ENV)?;
    Some((|| {
        let start = Instant::now();
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
        let records = import_records(&text).map_err(|e| e.to_string())?;
        let counts: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&std::fs::read_to_string(format!("{DATA}/cmv1_seed_counts.json")).unwrap()).unwrap();
        let counts = counts
            .into_iter()
            .map(|(k, v)| (k, v.as_u64().unwrap() as usize))
            .collect();
        let values: Vec<serde_json::Value> = records.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
        let failures = classify_values(&values, &Curriculum::classical_mechanics());
        let report =
            AuditReport::build(&records, &failures, 0, &ReportOptions::new(counts)).map_err(|e| e.to_string())?;
        Ok(Corpus {
            report,
            elapsed: start.elapsed().as_secs_f64(),
        })
    })())
}

fn expectations_under(prefixes: &[&str]) -> Expectations {
    let all: Expectations =
        serde_json::from_str(&std::fs::read_to_string(format!("{DATA}/cmv1_expectations.json")).unwrap()).unwrap();
    Expectations {
        expectations: all
            .expectations
            .into_iter()
            .filter(|e| prefixes.iter().any(|p| e.path.starts_with(p)))
            .collect(),
    }
}

fn check_group(corpus: &Option<Result<Corpus, String>>, prefixes: &[&str]) -> Verdict {
    let Some(corpus) = corpus else {
        return Verdict::Blocked(format!("dataset absent; set {CORPUS_ENV}"));
    };
    let corpus = match corpus {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(e.clone()),
    };
    let exps = expectations_under(prefixes);
    let misses: Vec<ExpectationMiss> = ipg::audit::check_expectations(&corpus.report, &exps);
    if misses.is_empty() {
        Verdict::Pass(format!(
            "{} expectations met in {:.2}s",
            exps.expectations.len(),
            corpus.elapsed
        ))
    } else {
        Verdict::Fail(misses.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("; "))
    }
}

pub fn corpus_statistics(corpus: &Option<Result<Corpus, String>>) -> Verdict {
    let v = check_group(
        corpus,
        &[
            "/metrics/total",
            "/chapters",
            "/formula_counts",
            "/unknowns",
            "/metrics/unique_formulas",
            "/metrics/valid_pct",
        ],
    );
    match (v, corpus) {
        (Verdict::Pass(d), Some(Ok(c))) if c.elapsed >= 10.0 => Verdict::Fail(format!("{d}, but over the 10 s budget")),
        (v, _) => v,
    }
}

pub fn blueprint_oracle() -> Result<String, String> {
    let fit = least_squares(&[(2.0, 2420.0), (3.0, 2635.0), (4.0, 3277.0), (5.0, 4011.0)]).ok_or("no fit")?;
    ensure!((fit.slope - 541.5).abs() <= 0.1, "slope {}", fit.slope);
    ensure!((fit.intercept - 1190.5).abs() <= 0.1, "intercept {}", fit.intercept);
    ensure!((fit.r_squared - 0.9526).abs() <= 0.0005, "R^2 {}", fit.r_squared);
    Ok(format!(
        "slope {:.2}, intercept {:.2}, R^2 {:.4}",
        fit.slope, fit.intercept, fit.r_squared
    ))
}

pub fn complexity_blueprint(corpus: &Option<Result<Corpus, String>>) -> Verdict {
    check_group(corpus, &["/blueprint"])
}

pub fn type_token_ratio(corpus: &Option<Result<Corpus, String>>) -> Verdict {
    check_group(corpus, &["/metrics/ttr"])
}

// Worked examples.

pub fn worked_examples() -> Result<String, String> {
    let cm = Curriculum::classical_mechanics();
    let lib = full_library(&cm);
    let rules = RuleSet::default_sanity();
    let plan = |name: &str| {
        parse_solution_plan(&std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap()).map_err(|e| e.to_string())
    };
    let d1 = execute_plan(&plan("restitution_plan.txt")?, &lib).map_err(|e| e.to_string())?;
    ensure!(d1.value == 0.5, "restitution plan gave {}", d1.value);
    let d2 = execute_plan(&plan("dart_plan.txt")?, &lib).map_err(|e| e.to_string())?;
    let expected = 0.12492187503051848_f64;
    let rel = ((d2.value - expected) / expected).abs();
    ensure!(rel <= 1e-12, "dart plan gave {} (relative error {rel:e})", d2.value);
    let records = read_records(format!("{FIXTURES}/worked_examples.jsonl")).map_err(|e| e.to_string())?;
    for r in &records {
        match reverify_record(r, &lib, &rules) {
            Reverification::Consistent { report } if report.overall => {}
            other => return Err(format!("{}: {other:?}", r.signature)),
        }
    }
    Ok(format!(
        "0.5 exact; {} (rel err {rel:.1e}); both verdicts pass",
        d2.value
    ))
}

// Offline pipeline.

pub fn mock_session(cm: &Curriculum, config: GenerationConfig) -> SessionOutput {
    let seeds = load_seeds(format!("{FIXTURES}/seeds.jsonl")).unwrap();
    let fixture = MockFixture::load(format!("{FIXTURES}/mock_backend.json")).unwrap();
    let backend = MockBackend::new(fixture, config.rng_seed);
    Pipeline::new(cm, config, &backend).run_session(&seeds).unwrap()
}

/// Variable ranges per seed, read from the analysis replies in the fixture.
pub fn fixture_ranges() -> BTreeMap<String, BTreeMap<String, (f64, f64)>> {
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{FIXTURES}/mock_backend.json")).unwrap()).unwrap();
    doc["seeds"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(id, s)| {
            let vars = s["analysis"]["variables"]
                .as_object()
                .unwrap()
                .iter()
                .map(|(n, v)| {
                    (
                        n.clone(),
                        (v["range"][0].as_f64().unwrap(), v["range"][1].as_f64().unwrap()),
                    )
                })
                .collect();
            (id.clone(), vars)
        })
        .collect()
}

pub fn check_session(cm: &Curriculum, out: &SessionOutput) -> Result<String, String> {
    ensure!(out.seeds.len() >= 5, "only {} seeds", out.seeds.len());
    for s in &out.seeds {
        ensure!(!s.accepted.is_empty(), "seed {} produced nothing", s.seed_id);
    }
    let lib = full_library(cm);
    let rules = RuleSet::default_sanity();
    let ranges = fixture_ranges();
    let mut signatures = BTreeSet::new();
    let records: Vec<&DatasetRecord> = out.records().collect();
    for r in &records {
        match reverify_record(r, &lib, &rules) {
            Reverification::Consistent { .. } => {}
            other => return Err(format!("{}: {other:?}", r.signature)),
        }
        ensure!(
            signatures.insert(r.signature.clone()),
            "duplicate signature {}",
            r.signature
        );
        let seed = r.extra["seed_id"].as_str().ok_or("record without seed_id")?;
        for (name, var) in r.variables.iter() {
            if let Some(v) = var.value.known() {
                let (lo, hi) = ranges[seed][name];
                ensure!(lo <= v && v <= hi, "{name} = {v} outside [{lo}, {hi}]");
            }
        }
        let n = r.formula_ids.iter().collect::<BTreeSet<_>>().len();
        let low = r.extra.get("low_complexity").and_then(|v| v.as_bool()).unwrap_or(false);
        ensure!(
            low == (n < LOW_COMPLEXITY_THRESHOLD),
            "{}: low-complexity flag disagrees with {n} formulas",
            r.signature
        );
        ensure!(low || (3..=5).contains(&n), "{} uses {n} formulas", r.signature);
    }
    Ok(format!(
        "{} records over {} seeds, {} flagged low-complexity",
        records.len(),
        out.seeds.len(),
        out.low_complexity()
    ))
}

pub fn offline_pipeline() -> Result<String, String> {
    let cm = Curriculum::classical_mechanics();
    let config = GenerationConfig::default();
    ensure!(config.variations == 10, "default N is {}", config.variations);
    let first = mock_session(&cm, config.clone());
    let detail = check_session(&cm, &first)?;
    let second = mock_session(&cm, config);
    let a: Vec<&DatasetRecord> = first.records().collect();
    let b: Vec<&DatasetRecord> = second.records().collect();
    ensure!(a == b, "two runs with the same seed differ");
    Ok(format!("{detail}; identical across two runs"))
}

// Taxonomy.

pub fn taxonomy_fixture() -> Result<String, String> {
    let values: Vec<serde_json::Value> = std::fs::read_to_string(format!("{FIXTURES}/taxonomy_faults.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    ensure!(values.len() == 20, "fixture has {} records", values.len());
    let failures = classify_values(&values, &Curriculum::classical_mechanics());
    let mut seen = BTreeSet::new();
    for (v, f) in values.iter().zip(&failures) {
        let planted: BTreeSet<Category> = v["planted"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| Category::try_from(c.as_u64().unwrap() as u8).unwrap())
            .collect();
        ensure!(
            f.categories == planted,
            "{}: planted {planted:?}, got {:?} ({:?})",
            f.id,
            f.categories,
            f.details
        );
        seen.extend(planted);
    }
    let ids: Vec<u8> = seen.iter().map(|c| c.id()).collect();
    ensure!(ids == [1, 4, 6, 7, 8, 9, 13], "planted set is {ids:?}");
    Ok(format!("categories {ids:?} exactly, no spurious assignments"))
}
