//! Problem identity, deduplication, constrained sampling and scenario
//! rotation.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::draft::{VarMap, VarValue, Variable};
use crate::gateway::BackendKind;
use crate::seed::VariableSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("the unknown variable name is empty")]
    EmptyUnknown,
    #[error("malformed signature `{0}`")]
    Malformed(String),
}

/// The identity of a problem: which formulas it uses and what it asks for.
/// Renders as `fids=[<sorted ids>]|unknown=<name>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProblemSignature {
    formula_ids: Vec<String>,
    unknown: String,
}

impl ProblemSignature {
    pub fn new<S: AsRef<str>>(formula_ids: &[S], unknown: &str) -> Result<Self, SignatureError> {
        if unknown.trim().is_empty() {
            return Err(SignatureError::EmptyUnknown);
        }
        let ids: BTreeSet<String> = formula_ids.iter().map(|s| s.as_ref().to_string()).collect();
        Ok(ProblemSignature {
            formula_ids: ids.into_iter().collect(),
            unknown: unknown.to_string(),
        })
    }

    pub fn formula_ids(&self) -> &[String] {
        &self.formula_ids
    }

    pub fn unknown(&self) -> &str {
        &self.unknown
    }
}

pub fn compute_signature<S: AsRef<str>>(formula_ids: &[S], unknown: &str) -> Result<ProblemSignature, SignatureError> {
    ProblemSignature::new(formula_ids, unknown)
}

impl fmt::Display for ProblemSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fids=[{}]|unknown={}", self.formula_ids.join(","), self.unknown)
    }
}

impl FromStr for ProblemSignature {
    type Err = SignatureError;

    /// Parses a canonical rendering. Non-canonical id order is rejected so
    /// that parse and display are inverse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SignatureError::Malformed(s.to_string());
        let rest = s.strip_prefix("fids=[").ok_or_else(bad)?;
        let (ids, unknown) = rest.split_once("]|unknown=").ok_or_else(bad)?;
        let ids: Vec<&str> = if ids.is_empty() {
            vec![]
        } else {
            ids.split(',').collect()
        };
        let sig = ProblemSignature::new(&ids, unknown)?;
        if sig.to_string() != s {
            return Err(bad());
        }
        Ok(sig)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Fresh,
    Collision,
}

/// The set of accepted signatures. Insertion is an atomic test-and-set, so
/// concurrent duplicate inserts see exactly one `Fresh`.
#[derive(Debug, Default)]
pub struct SignatureRegistry {
    seen: Mutex<HashSet<String>>,
    inserted: AtomicU64,
    collisions: AtomicU64,
}

impl SignatureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, sig: &ProblemSignature) -> InsertOutcome {
        let fresh = self.seen.lock().expect("registry lock").insert(sig.to_string());
        if fresh {
            self.inserted.fetch_add(1, Ordering::SeqCst);
            InsertOutcome::Fresh
        } else {
            self.collisions.fetch_add(1, Ordering::SeqCst);
            InsertOutcome::Collision
        }
    }

    pub fn contains(&self, sig: &ProblemSignature) -> bool {
        self.seen.lock().expect("registry lock").contains(&sig.to_string())
    }

    pub fn len(&self) -> usize {
        self.seen.lock().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inserted(&self) -> u64 {
        self.inserted.load(Ordering::SeqCst)
    }

    pub fn collisions(&self) -> u64 {
        self.collisions.load(Ordering::SeqCst)
    }

    /// Counts a collision found by a lookup rather than an insert.
    pub fn note_collision(&self) {
        self.collisions.fetch_add(1, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("unknown `{0}` is not in the variable dictionary")]
    UnknownNotInSpecs(String),
    #[error("variable `{0}` has an empty or non-finite range")]
    BadRange(String),
}

/// Rounds to four significant digits.
pub fn round_sig4(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.3e}").parse().expect("formatted float parses")
}

/// Draws every variable but `unknown` uniformly from its range, rounded to
/// four significant digits and kept inside the range. Output follows the
/// order of `specs`.
pub fn sample_variables<R: Rng + ?Sized>(
    specs: &[VariableSpec],
    unknown: &str,
    rng: &mut R,
) -> Result<VarMap, SamplingError> {
    if !specs.iter().any(|s| s.name == unknown) {
        return Err(SamplingError::UnknownNotInSpecs(unknown.to_string()));
    }
    let mut out = Vec::with_capacity(specs.len());
    for s in specs {
        let value = if s.name == unknown {
            VarValue::Unknown
        } else {
            if !(s.min.is_finite() && s.max.is_finite() && s.min <= s.max) {
                return Err(SamplingError::BadRange(s.name.clone()));
            }
            let raw = if s.min == s.max {
                s.min
            } else {
                rng.gen_range(s.min..=s.max)
            };
            VarValue::Known(round_sig4(raw).clamp(s.min, s.max))
        };
        out.push((
            s.name.clone(),
            Variable {
                value,
                unit: s.unit.clone(),
            },
        ));
    }
    Ok(VarMap(out))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("the scenario list is empty")]
    EmptyScenarioList,
}

/// Cycles through scenario indices `0, 1, ..., len-1, 0, ...`, optionally
/// stopping once every scenario has been handed out `quota` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRobin {
    len: usize,
    issued: usize,
    quota: Option<usize>,
}

impl RoundRobin {
    pub fn new(len: usize, quota: Option<usize>) -> Result<Self, ScenarioError> {
        if len == 0 {
            return Err(ScenarioError::EmptyScenarioList);
        }
        Ok(RoundRobin { len, issued: 0, quota })
    }

    pub fn next_scenario(&mut self) -> Option<usize> {
        if let Some(q) = self.quota {
            if self.issued >= q * self.len {
                return None;
            }
        }
        let i = self.issued % self.len;
        self.issued += 1;
        Some(i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid generation config: {0}")]
pub struct ConfigError(pub String);

/// Knobs for one generation session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Target problems per seed.
    pub variations: usize,
    pub min_formulas: usize,
    pub max_formulas: usize,
    /// Draft/solve rounds per problem slot.
    pub retry_budget: u32,
    /// Backend attempts per request inside one round.
    pub attempts_per_request: u32,
    pub rng_seed: u64,
    pub scenario_quota: Option<usize>,
    /// Seeds processed concurrently.
    pub jobs: usize,
    pub backend: BackendKind,
    /// Fixture file for the mock backend.
    pub mock_fixture: Option<PathBuf>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            variations: 10,
            min_formulas: 3,
            max_formulas: 5,
            retry_budget: 4,
            attempts_per_request: 3,
            rng_seed: 42,
            scenario_quota: None,
            jobs: 1,
            backend: BackendKind::Mock,
            mock_fixture: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.variations < 1 {
            return Err(ConfigError("variations must be at least 1".into()));
        }
        if self.min_formulas < 1 || self.min_formulas > self.max_formulas {
            return Err(ConfigError("formula bounds must satisfy 1 <= min <= max".into()));
        }
        if self.retry_budget < 1 || self.attempts_per_request < 1 {
            return Err(ConfigError("retry budgets must be at least 1".into()));
        }
        if self.jobs < 1 {
            return Err(ConfigError("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Upper bound on backend calls for one problem slot: each round makes
    /// one draft request and one solution request.
    pub fn max_calls_per_problem(&self) -> u64 {
        u64::from(self.retry_budget) * 2 * u64::from(self.attempts_per_request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn signature_rendering() {
        let empty: [&str; 0] = [];
        assert_eq!(
            compute_signature(&empty, "coefficient_of_restitution_e")
                .unwrap()
                .to_string(),
            "fids=[]|unknown=coefficient_of_restitution_e"
        );
        assert_eq!(
            compute_signature(&["10_I", "10_A"], "h").unwrap(),
            compute_signature(&["10_A", "10_I", "10_A"], "h").unwrap()
        );
        assert_ne!(
            compute_signature(&["8_C", "9_K"], "h").unwrap(),
            compute_signature(&["8_C", "9_K"], "v").unwrap()
        );
        assert_eq!(compute_signature(&["3_A"], " "), Err(SignatureError::EmptyUnknown));
        let s = compute_signature(&["9_K", "8_C", "10_A"], "h").unwrap();
        assert_eq!(s.to_string(), "fids=[10_A,8_C,9_K]|unknown=h");
        assert_eq!(s.to_string().parse::<ProblemSignature>().unwrap(), s);
        assert!("fids=[9_K,8_C]|unknown=h".parse::<ProblemSignature>().is_err());
    }

    #[test]
    fn registry_fresh_then_collision() {
        let r = SignatureRegistry::new();
        let s = compute_signature(&["3_A"], "v").unwrap();
        assert_eq!(r.insert(&s), InsertOutcome::Fresh);
        assert_eq!(r.insert(&s), InsertOutcome::Collision);
        assert_eq!((r.len(), r.inserted(), r.collisions()), (1, 1, 1));
    }

    #[test]
    fn sampling_basics() {
        let specs = [
            VariableSpec::new("t", "s", 1.0, 1.0),
            VariableSpec::new("mu", "dimensionless", 0.0, 1.0),
            VariableSpec::new("v", "m/s", 0.0, 10.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let vars = sample_variables(&specs, "v", &mut rng).unwrap();
        assert_eq!(vars.get("t").unwrap().value, VarValue::Known(1.0));
        assert!(vars.get("v").unwrap().value.is_unknown());
        let again = sample_variables(&specs, "v", &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(vars, again);
        assert_eq!(
            sample_variables(&specs, "x", &mut rng),
            Err(SamplingError::UnknownNotInSpecs("x".into()))
        );
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig4(1.23456), 1.235);
        assert_eq!(round_sig4(0.000123456), 0.0001235);
        assert_eq!(round_sig4(98766.0), 98770.0);
        assert_eq!(round_sig4(-5.55555), -5.556);
    }

    #[test]
    fn round_robin_counts() {
        let mut rr = RoundRobin::new(6, None).unwrap();
        let mut counts = [0; 6];
        for _ in 0..10 {
            counts[rr.next_scenario().unwrap()] += 1;
        }
        assert!(counts.iter().all(|c| (1..=2).contains(c)));
        assert_eq!(counts.iter().sum::<i32>(), 10);
        let mut one = RoundRobin::new(1, None).unwrap();
        assert!((0..5).all(|_| one.next_scenario() == Some(0)));
        assert_eq!(RoundRobin::new(0, None), Err(ScenarioError::EmptyScenarioList));
        let mut q = RoundRobin::new(2, Some(1)).unwrap();
        assert_eq!(
            (q.next_scenario(), q.next_scenario(), q.next_scenario()),
            (Some(0), Some(1), None)
        );
    }

    #[test]
    fn config_validation() {
        assert!(GenerationConfig::default().validate().is_ok());
        let bad = GenerationConfig {
            min_formulas: 6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg: GenerationConfig = toml::from_str("variations = 3\nrng_seed = 7\nbackend = \"remote\"").unwrap();
        assert_eq!((cfg.variations, cfg.rng_seed, cfg.max_formulas), (3, 7, 5));
        assert_eq!(cfg.backend, BackendKind::Remote);
        assert!(toml::from_str::<GenerationConfig>("n = 3").is_err());
    }
}
