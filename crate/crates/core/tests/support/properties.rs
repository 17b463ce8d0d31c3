//! Property suites as plain functions, so both the test harness and the
//! acceptance report can run them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::sample::Index;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ipg::audit::least_squares;
use ipg::draft::{VarMap, VarValue, Variable};
use ipg::expr::{evaluate, parse_expression, BinOp, CmpOp, Cond, Expr, Func};
use ipg::gateway::{parse_strict_json, strip_fence};
use ipg::generation::{sample_variables, InsertOutcome, ProblemSignature, RoundRobin, SignatureRegistry};
use ipg::record::{parse_records, records_to_string, DatasetRecord, ValidationResult};
use ipg::seed::VariableSpec;

pub type Outcome = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn formula_id() -> impl Strategy<Value = String> {
    "[1-9][0-9]?_[A-Z]"
}

pub fn signature_canonicalization(cases: u32) -> Outcome {
    let s = (
        prop::collection::vec(formula_id(), 0..8),
        "[a-z][a-z_0-9]{0,8}",
        any::<u64>(),
    );
    run(cases, s, |(ids, unknown, seed)| {
        let mut shuffled = ids.clone();
        shuffled.extend(ids.iter().take(seed as usize % (ids.len() + 1)).cloned());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = ProblemSignature::new(&ids, &unknown).unwrap();
        let b = ProblemSignature::new(&shuffled, &unknown).unwrap();
        prop_assert_eq!(a.to_string(), b.to_string());
        let again = ProblemSignature::new(a.formula_ids(), a.unknown()).unwrap();
        prop_assert_eq!(&again, &a);
        let distinct: BTreeSet<&String> = ids.iter().collect();
        prop_assert_eq!(a.formula_ids().len(), distinct.len());
        Ok(())
    })
}

/// Four threads insert the same 50 signatures each case.
pub fn registry_single_acceptance(cases: u32) -> Outcome {
    let s = (
        prop::collection::btree_set(formula_id(), 4..10),
        prop::collection::vec(any::<Index>(), 50),
    );
    run(cases, s, |(pool, picks)| {
        let pool: Vec<String> = pool.into_iter().collect();
        let sigs: Vec<ProblemSignature> = picks
            .iter()
            .map(|i| {
                let k = i.index(pool.len());
                ProblemSignature::new(&pool[k..(k + 2).min(pool.len())], "x").unwrap()
            })
            .collect();
        let distinct: BTreeSet<String> = sigs.iter().map(|s| s.to_string()).collect();
        let registry = Arc::new(SignatureRegistry::new());
        let sigs = Arc::new(sigs);
        let fresh: usize = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    let (r, sigs) = (registry.clone(), sigs.clone());
                    s.spawn(move || sigs.iter().filter(|sig| r.insert(sig) == InsertOutcome::Fresh).count())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        });
        prop_assert_eq!(fresh, distinct.len());
        prop_assert_eq!(registry.len(), distinct.len());
        prop_assert_eq!(registry.inserted() + registry.collisions(), 4 * sigs.len() as u64);
        Ok(())
    })
}

pub fn sampling_containment(cases: u32) -> Outcome {
    let width = prop_oneof![Just(0.0), 0.0f64..1e-3, 0.0f64..1.0, 0.0f64..1e6];
    run(cases, (-1e6f64..1e6, width, any::<u64>()), |(lo, width, seed)| {
        let hi = lo + width;
        let specs = [
            VariableSpec::new("x", "m", lo, hi),
            VariableSpec::new("y", "m", 0.0, 1.0),
        ];
        let vars = sample_variables(&specs, "y", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let x = vars.get("x").unwrap().value.known().unwrap();
        prop_assert!(lo <= x && x <= hi, "{} not in [{}, {}]", x, lo, hi);
        prop_assert!(vars.get("y").unwrap().value.is_unknown());
        Ok(())
    })
}

pub fn round_robin_fairness(cases: u32) -> Outcome {
    run(cases, (1usize..12, 0usize..12, 0usize..12), |(len, quota, extra)| {
        let mut rr = RoundRobin::new(len, Some(quota)).unwrap();
        let mut counts = vec![0usize; len];
        let mut order = Vec::new();
        while let Some(i) = rr.next_scenario() {
            counts[i] += 1;
            order.push(i);
        }
        prop_assert!(counts.iter().all(|&c| c == quota));
        prop_assert!(order.iter().enumerate().all(|(k, &i)| i == k % len));

        let mut open = RoundRobin::new(len, None).unwrap();
        let mut counts = vec![0usize; len];
        for _ in 0..len * quota + extra {
            counts[open.next_scenario().unwrap()] += 1;
        }
        let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(max - min <= 1);
        Ok(())
    })
}

const NAMES: [&str; 4] = ["a", "b", "c", "d"];

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-1e3f64..1e3).prop_map(Expr::num),
        (0usize..4).prop_map(|i| Expr::var(NAMES[i]))
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow)
        ];
        let unary = prop_oneof![
            Just(Func::Sqrt),
            Just(Func::Abs),
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Tan)
        ];
        let binary_fn = prop_oneof![Just(Func::Min), Just(Func::Max)];
        let cmp = prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Ge), Just(CmpOp::Gt)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (unary, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (binary_fn, inner.clone(), inner.clone()).prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
            (cmp, inner.clone(), inner.clone(), inner.clone(), inner).prop_map(|(c, x, y, a, b)| Expr::Select(
                Box::new(Cond::Compare(c, x, y)),
                Box::new(a),
                Box::new(b)
            )),
        ]
    })
}

fn same_outcome<E: PartialEq>(a: &Result<f64, E>, b: &Result<f64, E>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits(),
        (Err(x), Err(y)) => x == y,
        _ => false,
    }
}

/// Evaluating twice, or after printing and re-parsing, gives identical bits.
pub fn evaluator_determinism(cases: u32) -> Outcome {
    run(cases, (expr(), prop::array::uniform4(-50f64..50.0)), |(e, values)| {
        let bindings: BTreeMap<String, f64> = NAMES.iter().map(|n| n.to_string()).zip(values).collect();
        let first = evaluate(&e, &bindings);
        let second = evaluate(&e, &bindings);
        prop_assert!(same_outcome(&first, &second), "{:?} vs {:?}", first, second);
        let reparsed = parse_expression(&e.to_string()).unwrap();
        let third = evaluate(&reparsed, &bindings);
        prop_assert!(same_outcome(&first, &third), "{} gave {:?} then {:?}", e, first, third);
        Ok(())
    })
}

pub fn ols_matches_normal_equations(cases: u32) -> Outcome {
    let s = (
        prop::collection::btree_set(-200i32..200, 3..30),
        -1e3f64..1e3,
        -1e4f64..1e4,
        prop::collection::vec(-100f64..100.0, 30),
    );
    run(cases, s, |(xs, slope, intercept, noise)| {
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(&noise)
            .map(|(&x, &e)| (x as f64, slope * x as f64 + intercept + e))
            .collect();
        let fit = least_squares(&pts).unwrap();

        let n = pts.len() as f64;
        let (sx, sy): (f64, f64) = (pts.iter().map(|p| p.0).sum(), pts.iter().map(|p| p.1).sum());
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        let b = (n * sxy - sx * sy) / det;
        let a = (sxx * sy - sx * sxy) / det;
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1.0);
        prop_assert!(close(fit.slope, b), "slope {} vs {}", fit.slope, b);
        prop_assert!(close(fit.intercept, a), "intercept {} vs {}", fit.intercept, a);
        Ok(())
    })
}

fn json_value() -> impl Strategy<Value = serde_json::Value> {
    use serde_json::Value;
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        (-1e6f64..1e6).prop_map(|f| serde_json::json!(f)),
        any::<i32>().prop_map(|i| serde_json::json!(i)),
        "[a-zA-Z0-9 _{}\\[\\]:,\"]{0,12}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

#[derive(Debug, Clone)]
enum Corruption {
    Insert(Index, char),
    Delete(Index),
    Truncate(Index),
    Prefix(String),
    Suffix(String),
    Fence(String),
}

fn corruption() -> impl Strategy<Value = Corruption> {
    let ch = prop::sample::select(vec!['{', '}', '[', ']', '"', ',', ':', 'x', '`', '\\']);
    prop_oneof![
        (any::<Index>(), ch).prop_map(|(i, c)| Corruption::Insert(i, c)),
        any::<Index>().prop_map(Corruption::Delete),
        any::<Index>().prop_map(Corruption::Truncate),
        "[A-Za-z :`]{1,10}".prop_map(Corruption::Prefix),
        "[A-Za-z :`}\\]]{1,10}".prop_map(Corruption::Suffix),
        "(json|JSON|)".prop_map(Corruption::Fence),
    ]
}

fn corrupt(text: &str, c: &Corruption) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = chars.clone();
    match c {
        Corruption::Insert(i, ch) => out.insert(i.index(chars.len() + 1), *ch),
        Corruption::Delete(i) if !chars.is_empty() => {
            out.remove(i.index(chars.len()));
        }
        Corruption::Delete(_) => {}
        Corruption::Truncate(i) => out.truncate(i.index(chars.len().max(1))),
        Corruption::Prefix(p) => return format!("{p}{text}"),
        Corruption::Suffix(s) => return format!("{text}{s}"),
        Corruption::Fence(tag) => return format!("```{tag}\n{text}\n```"),
    }
    out.into_iter().collect()
}

/// Whatever the strict parser accepts is exactly one JSON document, and a
/// prose prefix is never accepted.
pub fn strict_json_fuzz(cases: u32) -> Outcome {
    run(cases, (json_value(), corruption()), |(doc, c)| {
        let text = corrupt(&serde_json::to_string(&doc).unwrap(), &c);
        if let Ok(parsed) = parse_strict_json(&text) {
            let body = if parsed.fenced {
                strip_fence(&text).unwrap()
            } else {
                text.as_str()
            };
            let reference: serde_json::Value = serde_json::from_str(body)
                .map_err(|e| TestCaseError::fail(format!("accepted {text:?}, serde_json says {e}")))?;
            prop_assert_eq!(parsed.document, reference);
        }
        if let Corruption::Prefix(p) = &c {
            if !p.trim().is_empty() && !p.trim_start().starts_with("```") {
                prop_assert!(parse_strict_json(&text).is_err(), "accepted prose prefix {:?}", text);
            }
        }
        Ok(())
    })
}

fn record() -> impl Strategy<Value = DatasetRecord> {
    let value = prop_oneof![
        Just(None),
        (-1e9f64..1e9).prop_map(Some),
        any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Some),
    ];
    let var = (value, "[a-z/^*0-9]{0,6}");
    let result = prop::option::of(prop_oneof![
        (-1e9f64..1e9).prop_map(|v| v.to_string()),
        Just("nan".to_string())
    ]);
    (
        "[0-9]{1,2}\\.[A-Z][a-z ]{0,12}",
        "\\PC{0,60}",
        result,
        prop::collection::vec(formula_id(), 0..6),
        "[a-z_]{1,10}",
        prop::collection::btree_map("[a-zA-Z_][a-zA-Z0-9_]{0,6}", var, 0..6),
        "\\PC{0,80}",
        any::<bool>(),
        prop::collection::btree_map("x_[a-z]{1,5}", any::<i64>(), 0..3),
    )
        .prop_map(|(chapter, text, result, ids, unknown, vars, code, valid, extra)| {
            let signature = ProblemSignature::new(&ids, &unknown).unwrap().to_string();
            let variables = vars
                .into_iter()
                .map(|(n, (v, unit))| {
                    (
                        n,
                        Variable {
                            value: v.map_or(VarValue::Unknown, VarValue::Known),
                            unit,
                        },
                    )
                })
                .collect();
            DatasetRecord {
                chapter,
                word_problem: text,
                execution_result: result,
                signature,
                formula_ids: ids,
                unknown_var: unknown.clone(),
                variables: VarMap(variables),
                code,
                validation_result: ValidationResult {
                    valid,
                    unknown_var: unknown,
                },
                extra: extra.into_iter().map(|(k, v)| (k, v.into())).collect(),
            }
        })
}

pub fn record_round_trip(cases: u32) -> Outcome {
    run(cases, prop::collection::vec(record(), 1..4), |records| {
        let back = parse_records(&records_to_string(&records)).unwrap();
        prop_assert_eq!(back, records);
        Ok(())
    })
}

/// Every suite with the case counts the acceptance report asks for.
pub fn all() -> Vec<(&'static str, Outcome)> {
    vec![
        ("signature canonicalization x10^4", signature_canonicalization(10_000)),
        (
            "registry single acceptance x12800 inserts",
            registry_single_acceptance(64),
        ),
        ("sampling containment x10^4", sampling_containment(10_000)),
        ("round-robin fairness", round_robin_fairness(256)),
        ("evaluator determinism x10^3", evaluator_determinism(1_000)),
        ("OLS vs normal equations x10^3", ols_matches_normal_equations(1_000)),
        ("strict JSON fuzz x10^4", strict_json_fuzz(10_000)),
        ("record round trip x10^3", record_round_trip(1_000)),
    ]
}
