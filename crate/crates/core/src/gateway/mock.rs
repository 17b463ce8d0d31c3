//! An offline backend that answers from a fixture file.
//!
//! Analysis replies come straight from the fixture. Sufficiency replies are
//! computed from the seed's reference formula ids and the chapters in the
//! prompt. Drafts pick the first problem template whose signature is not in
//! the prompt's previous problems and sample its variables from the ranges in
//! the prompt. Solutions fill the matching plan template with the draft's
//! values. Fault rules replace chosen replies with scripted misbehaviour.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, ChatRequest, RawReply, TemplateId};
use crate::draft::{VarMap, VarValue};
use crate::generation::{sample_variables, ProblemSignature};
use crate::record::format_result;
use crate::seed::{RangeEntry, VariableSpec};

/// One problem shape a seed can produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemTemplate {
    /// Word problem text; `{scenario}` and `{<variable>}` are filled in.
    pub text: String,
    pub formula_ids: Vec<String>,
    /// Variables the problem mentions, in order, including the unknown.
    pub variables: Vec<String>,
    pub unknown: String,
    /// Plan text; `{<variable>}` is replaced by the known value.
    pub plan: String,
}

impl ProblemTemplate {
    pub fn signature(&self) -> ProblemSignature {
        ProblemSignature::new(&self.formula_ids, &self.unknown).expect("fixture unknowns are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSeed {
    /// Returned verbatim for the analysis prompt.
    pub analysis: serde_json::Value,
    /// Formula ids the reference solution needs.
    #[serde(default)]
    pub solution_formula_ids: Vec<String>,
    pub problems: Vec<ProblemTemplate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    /// Prose before the JSON document.
    Garbage,
    /// Prose after the JSON document.
    Trailing,
    /// The reply wrapped in a markdown fence.
    Fenced,
    /// A draft with one value outside its range.
    RangeViolation,
    /// A draft repeating an earlier signature.
    Collision,
    /// A solution that does not parse.
    BadPlan,
    /// An HTTP 503.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    /// Seed id, or `*` for every seed.
    pub seed: String,
    /// `generate` also matches `generate_fix`, `code` also matches `code_fix`.
    pub stage: TemplateId,
    /// 1-based call numbers of that stage for that seed.
    pub calls: Vec<u32>,
    pub mode: FaultMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub seeds: BTreeMap<String, MockSeed>,
    #[serde(default)]
    pub faults: Vec<FaultRule>,
}

impl MockFixture {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text).map_err(|e| BackendError::Config(format!("mock fixture: {e}")))
    }
}

fn stage(t: TemplateId) -> TemplateId {
    match t {
        TemplateId::GenerateFix => TemplateId::Generate,
        TemplateId::CodeFix => TemplateId::Code,
        other => other,
    }
}

#[derive(Debug)]
pub struct MockBackend {
    fixture: MockFixture,
    rng_seed: u64,
    calls: Mutex<HashMap<(String, TemplateId), u32>>,
}

impl MockBackend {
    pub fn new(fixture: MockFixture, rng_seed: u64) -> Self {
        MockBackend {
            fixture,
            rng_seed,
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    fn rng(&self, seed_id: &str, call: u32) -> ChaCha8Rng {
        let digest = Sha256::new()
            .chain_update(self.rng_seed.to_le_bytes())
            .chain_update(seed_id.as_bytes())
            .chain_update(call.to_le_bytes())
            .finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(bytes)
    }

    fn fault(&self, seed_id: &str, stage: TemplateId, call: u32) -> Option<FaultMode> {
        self.fixture
            .faults
            .iter()
            .find(|f| (f.seed == "*" || f.seed == seed_id) && f.stage == stage && f.calls.contains(&call))
            .map(|f| f.mode)
    }
}

fn field<'a>(r: &'a ChatRequest<'_>, name: &str) -> Result<&'a str, BackendError> {
    r.fields
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| BackendError::Config(format!("mock: request lacks field `{name}`")))
}

fn json_field<T: serde::de::DeserializeOwned>(r: &ChatRequest<'_>, name: &str) -> Result<T, BackendError> {
    serde_json::from_str(field(r, name)?).map_err(|e| BackendError::Config(format!("mock: field `{name}`: {e}")))
}

fn fill(template: &str, values: &VarMap, scenario: Option<&str>) -> String {
    let mut out = template.to_string();
    if let Some(s) = scenario {
        out = out.replace("{scenario}", s);
    }
    for (name, v) in values.iter() {
        if let VarValue::Known(x) = v.value {
            out = out.replace(&format!("{{{name}}}"), &format_result(x));
        }
    }
    out
}

impl MockBackend {
    fn sufficiency(&self, seed: &MockSeed, r: &ChatRequest<'_>) -> Result<String, BackendError> {
        let identified: Vec<String> = json_field(r, "identified_chapters")?;
        let all: serde_json::Map<String, serde_json::Value> = json_field(r, "all_chapters_json")?;
        let ids_of = |chapter: &serde_json::Value| -> Vec<String> {
            chapter
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|f| f["formula_id"].as_str().map(String::from))
                .collect()
        };
        let covered: Vec<String> = identified.iter().filter_map(|c| all.get(c)).flat_map(ids_of).collect();
        let missing = seed.solution_formula_ids.iter().find(|id| !covered.contains(id));
        Ok(match missing {
            None => serde_json::json!({"status": "YES"}),
            Some(id) => {
                let owner = all
                    .iter()
                    .find(|(_, v)| ids_of(v).contains(id))
                    .map(|(k, _)| k.clone())
                    .unwrap_or_default();
                serde_json::json!({
                    "status": "NO",
                    "missing_chapter": owner,
                    "reason": format!("The solution needs formula {id}, which is in none of the identified chapters.")
                })
            }
        }
        .to_string())
    }

    fn draft(
        &self,
        seed: &MockSeed,
        r: &ChatRequest<'_>,
        call: u32,
        fault: Option<FaultMode>,
    ) -> Result<String, BackendError> {
        let ranges: serde_json::Map<String, serde_json::Value> = json_field(r, "variables")?;
        let previous: Vec<String> = json_field(r, "previous_problems")?;
        let used = |p: &&ProblemTemplate| previous.contains(&p.signature().to_string());
        let problem = match fault {
            Some(FaultMode::Collision) => seed.problems.iter().find(used),
            _ => seed.problems.iter().find(|p| !used(p)),
        }
        .or_else(|| seed.problems.first())
        .ok_or_else(|| BackendError::NoFixture {
            seed: r.seed_id.into(),
            template: r.template,
        })?;
        let mut specs = Vec::new();
        for name in &problem.variables {
            let entry: RangeEntry = ranges
                .get(name)
                .cloned()
                .and_then(|v| serde_json::from_value(v).ok())
                .ok_or_else(|| BackendError::Config(format!("mock: no range for `{name}`")))?;
            specs.push(VariableSpec::new(
                name.clone(),
                entry.unit,
                entry.range[0],
                entry.range[1],
            ));
        }
        let mut values = sample_variables(&specs, &problem.unknown, &mut self.rng(r.seed_id, call))
            .map_err(|e| BackendError::Config(format!("mock: {e}")))?;
        if fault == Some(FaultMode::RangeViolation) {
            if let Some((name, var)) = values.0.iter_mut().find(|(_, v)| !v.value.is_unknown()) {
                let spec = specs.iter().find(|s| &s.name == name).expect("sampled from specs");
                var.value = VarValue::Known(spec.max + (spec.max - spec.min) + 1.0);
            }
        }
        let scenario = field(r, "alternate_scenarios")?;
        Ok(serde_json::json!({
            "word_problem": fill(&problem.text, &values, Some(scenario)),
            "formula_ids": problem.formula_ids,
            "variables": values.to_prompt_json(),
        })
        .to_string())
    }

    fn solution(&self, seed: &MockSeed, r: &ChatRequest<'_>) -> Result<String, BackendError> {
        let ids: Vec<String> = json_field(r, "formula_ids")?;
        let values: VarMap = json_field(r, "variables_dict")?;
        let unknown = values.unknowns().next().unwrap_or_default().to_string();
        let wanted = ProblemSignature::new(&ids, &unknown).ok();
        let problem = seed
            .problems
            .iter()
            .find(|p| Some(p.signature()) == wanted)
            .ok_or_else(|| BackendError::NoFixture {
                seed: r.seed_id.into(),
                template: r.template,
            })?;
        Ok(fill(&problem.plan, &values, None))
    }
}

impl Backend for MockBackend {
    fn complete(&self, r: &ChatRequest<'_>) -> Result<RawReply, BackendError> {
        let seed = self
            .fixture
            .seeds
            .get(r.seed_id)
            .ok_or_else(|| BackendError::NoFixture {
                seed: r.seed_id.into(),
                template: r.template,
            })?;
        let stage = stage(r.template);
        let call = {
            let mut calls = self.calls.lock().expect("mock lock");
            let n = calls.entry((r.seed_id.to_string(), stage)).or_default();
            *n += 1;
            *n
        };
        let fault = self.fault(r.seed_id, stage, call);
        if fault == Some(FaultMode::Transport) {
            return Err(BackendError::Transport {
                status: Some(503),
                message: "service unavailable (scripted)".into(),
            });
        }
        let body = match stage {
            TemplateId::Analysis => seed.analysis.to_string(),
            TemplateId::Sufficiency => self.sufficiency(seed, r)?,
            TemplateId::Generate => self.draft(seed, r, call, fault)?,
            _ => self.solution(seed, r)?,
        };
        let text = match fault {
            Some(FaultMode::Garbage) => format!("Sure! Here is the JSON you asked for:\n{body}"),
            Some(FaultMode::Trailing) => format!("{body}\nLet me know if you need anything else."),
            Some(FaultMode::Fenced) => format!("```json\n{body}\n```"),
            Some(FaultMode::BadPlan) if stage == TemplateId::Code => "def solve():\n    return None".to_string(),
            _ => body,
        };
        Ok(RawReply::text(text))
    }
}
