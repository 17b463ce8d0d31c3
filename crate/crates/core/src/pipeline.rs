//! The generate-then-verify loop: seed analysis, chapter coverage, drafting,
//! solving, verification and signature deduplication.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axiom::{AxiomError, ChapterDictionary, Curriculum, FormulaLibrary};
use crate::draft::ProblemDraft;
use crate::gateway::{
    request_with_retry, AttemptLog, Backend, BackendError, BackendResponse, CallBudget, CallStats, Fields,
    GatewayError, TemplateError, TemplateId, TemplateSet,
};
use crate::generation::{GenerationConfig, InsertOutcome, ProblemSignature, RoundRobin, SignatureRegistry};
use crate::plan::parse_solution_plan;
use crate::record::{format_result, DatasetRecord, ValidationResult};
use crate::sanity::RuleSet;
use crate::seed::{
    ensure_coverage, specs_from_map, validate_with_bounds, AnalysisResult, RangeEntry, SeedError, SeedRecord,
    SufficiencyStatus, SufficiencyVerdict, VariableSpec,
};
use crate::verify::{variable_issues, verify};

/// Drafts with fewer formulas than this are accepted but flagged.
pub const LOW_COMPLEXITY_THRESHOLD: usize = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Axiom(#[from] AxiomError),
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Backend(b) => PipelineError::Backend(b),
            GatewayError::Template(t) => PipelineError::Template(t),
            GatewayError::BudgetExhausted { stage, .. } => {
                unreachable!("budget exhaustion of `{stage}` is handled by the caller")
            }
        }
    }
}

/// Why a seed produced nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedFailure {
    Analysis { attempts: Vec<AttemptLog> },
    Sufficiency { attempts: Vec<AttemptLog> },
    Coverage { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// The last round ended on a signature collision.
    RepeatedCollision,
    /// The last round's solution never passed verification.
    VerificationFailed,
    /// The last round's draft never passed validation.
    DraftRejected,
}

/// A problem slot abandoned after its retry budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub seed_id: String,
    pub scenario: usize,
    pub reason: FailureReason,
    pub rounds: u32,
    pub calls: u64,
    pub collisions: u32,
    pub attempts: Vec<AttemptLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    pub record: DatasetRecord,
    pub signature: ProblemSignature,
    pub low_complexity: bool,
    pub calls: u64,
    /// Failed attempts on the way to this acceptance.
    pub attempts: Vec<AttemptLog>,
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("problem slot abandoned after {} rounds ({:?})", .0.rounds, .0.reason)]
    Exhausted(Box<GenerationFailure>),
    #[error(transparent)]
    Fatal(#[from] PipelineError),
}

/// The prepared state of one seed: its analysis and formula library.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: SeedRecord,
    pub analysis: AnalysisResult,
    pub library: FormulaLibrary,
    pub expansions: usize,
}

/// One rejected attempt with its position in the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedAttempt {
    pub seed_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<usize>,
    pub template: TemplateId,
    pub attempt: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SeedOutput {
    pub seed_id: String,
    pub accepted: Vec<Accepted>,
    pub failures: Vec<GenerationFailure>,
    pub seed_failure: Option<SeedFailure>,
    pub rejected: Vec<RejectedAttempt>,
}

/// Everything a session produced, in seed order.
#[derive(Debug, Clone, Default)]
pub struct SessionOutput {
    pub seeds: Vec<SeedOutput>,
    pub calls: CallStats,
    pub collisions: u64,
}

impl SessionOutput {
    pub fn records(&self) -> impl Iterator<Item = &DatasetRecord> {
        self.seeds.iter().flat_map(|s| s.accepted.iter().map(|a| &a.record))
    }

    pub fn accepted_count(&self) -> usize {
        self.seeds.iter().map(|s| s.accepted.len()).sum()
    }

    pub fn accepted_per_seed(&self) -> BTreeMap<String, usize> {
        self.seeds
            .iter()
            .map(|s| (s.seed_id.clone(), s.accepted.len()))
            .collect()
    }

    pub fn low_complexity(&self) -> usize {
        self.seeds
            .iter()
            .flat_map(|s| &s.accepted)
            .filter(|a| a.low_complexity)
            .count()
    }

    pub fn rejected(&self) -> impl Iterator<Item = &RejectedAttempt> {
        self.seeds.iter().flat_map(|s| &s.rejected)
    }
}

fn json_string(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("prompt fields serialize")
}

fn fields<const N: usize>(pairs: [(&str, String); N]) -> Fields {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Variable ranges as the drafting prompt shows them, in analysis order.
fn ranges_json(specs: &[VariableSpec]) -> serde_json::Value {
    serde_json::Value::Object(
        specs
            .iter()
            .map(|s| {
                let entry = RangeEntry {
                    range: [s.min, s.max],
                    unit: s.unit.clone(),
                };
                (s.name.clone(), serde_json::to_value(entry).expect("ranges serialize"))
            })
            .collect(),
    )
}

fn parse_analysis(
    doc: &serde_json::Value,
    dict: &ChapterDictionary,
    bounds: &RuleSet,
) -> Result<AnalysisResult, String> {
    let strings = |key: &str| -> Result<Vec<String>, String> {
        doc.get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| format!("`{key}` must be a list of strings"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(String::from)
                    .ok_or_else(|| format!("`{key}` must be a list of strings"))
            })
            .collect()
    };
    let chapters = strings("relevant_chapters")?;
    let scenarios = strings("alternate_scenarios")?;
    let vars = doc
        .get("variables")
        .and_then(|v| v.as_object())
        .ok_or("`variables` must be an object")?;
    let mut specs = Vec::with_capacity(vars.len());
    for (name, v) in vars {
        let entry: RangeEntry = serde_json::from_value(v.clone()).map_err(|e| format!("variable `{name}`: {e}"))?;
        specs.push(VariableSpec::new(
            name.clone(),
            entry.unit,
            entry.range[0],
            entry.range[1],
        ));
    }
    let analysis = AnalysisResult::new(chapters, scenarios, specs, dict).map_err(|e| e.to_string())?;
    validate_with_bounds(&analysis.variables, bounds).map_err(|violations| {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        format!("invalid variable dictionary: {}", list.join("; "))
    })?;
    Ok(analysis)
}

fn parse_verdict(
    doc: &serde_json::Value,
    analysis: &AnalysisResult,
    dict: &ChapterDictionary,
) -> Result<SufficiencyVerdict, String> {
    match doc.get("status").and_then(|s| s.as_str()) {
        Some("YES") => Ok(SufficiencyVerdict::sufficient()),
        Some("NO") => {
            let chapter = doc
                .get("missing_chapter")
                .and_then(|c| c.as_str())
                .ok_or("`missing_chapter` is required when status is NO")?;
            if dict.chapter(chapter).is_none() {
                return Err(format!("`{chapter}` is not a chapter in the dictionary"));
            }
            if analysis.chapters.iter().any(|c| c == chapter) {
                return Err(format!("`{chapter}` is already one of the identified chapters"));
            }
            let reason = doc.get("reason").and_then(|r| r.as_str()).unwrap_or_default();
            Ok(SufficiencyVerdict::insufficient(chapter, reason))
        }
        _ => Err("`status` must be \"YES\" or \"NO\"".into()),
    }
}

/// Shared state for one generation session.
pub struct Pipeline<'a> {
    pub curriculum: &'a Curriculum,
    pub config: GenerationConfig,
    pub backend: &'a dyn Backend,
    pub templates: TemplateSet,
    pub budget: CallBudget,
    pub registry: SignatureRegistry,
    pub sanity: RuleSet,
    pub bounds: RuleSet,
}

enum Round {
    Accepted(Box<Accepted>),
    Retry { reason: FailureReason, error: String },
}

impl<'a> Pipeline<'a> {
    pub fn new(curriculum: &'a Curriculum, config: GenerationConfig, backend: &'a dyn Backend) -> Self {
        Pipeline {
            curriculum,
            budget: CallBudget::new(config.attempts_per_request),
            config,
            backend,
            templates: TemplateSet::builtin(),
            registry: SignatureRegistry::new(),
            sanity: RuleSet::default_sanity(),
            bounds: RuleSet::default_hard_bounds(),
        }
    }

    fn request<T>(
        &self,
        template: TemplateId,
        fields: &Fields,
        seed_id: &str,
        last_error: Option<String>,
        validate: impl FnMut(&BackendResponse) -> Result<T, String>,
    ) -> Result<Result<(T, u32), Vec<AttemptLog>>, PipelineError> {
        match request_with_retry(
            self.backend,
            &self.templates,
            template,
            fields,
            seed_id,
            &self.budget,
            last_error,
            validate,
        ) {
            Ok(out) => Ok(Ok((out.value, out.calls))),
            Err(GatewayError::BudgetExhausted { attempts, .. }) => Ok(Err(attempts)),
            Err(e) => Err(e.into()),
        }
    }

    /// Runs analysis and the sufficiency loop for one seed.
    ///
    /// A seed with a hand-written analysis skips the analysis call. If that
    /// analysis also lists the reference formula ids, coverage is settled
    /// offline as well.
    pub fn prepare_seed(&self, seed: &SeedRecord) -> Result<Result<SeedContext, SeedFailure>, PipelineError> {
        let dict = &self.curriculum.dictionary;
        let id = seed.seed.id.as_str();
        let mut analysis = match &seed.analysis {
            Some(side) => {
                let specs = specs_from_map(&side.variables);
                match AnalysisResult::new(side.chapters.clone(), side.scenarios.clone(), specs, dict) {
                    Ok(a) => a,
                    Err(e) => return Ok(Err(SeedFailure::Coverage { message: e.to_string() })),
                }
            }
            None => {
                let f = fields([
                    ("chapters_json", json_string(&self.curriculum.chapters_prompt_json())),
                    ("question", seed.seed.question.clone()),
                    ("solution", seed.seed.solution.clone()),
                ]);
                let doc = |r: &BackendResponse| {
                    parse_analysis(r.document.as_ref().expect("json template"), dict, &self.bounds)
                };
                match self.request(TemplateId::Analysis, &f, id, None, doc)? {
                    Ok((a, _)) => a,
                    Err(attempts) => return Ok(Err(SeedFailure::Analysis { attempts })),
                }
            }
        };
        if let Some(side) = seed.analysis.as_ref().filter(|s| !s.solution_formula_ids.is_empty()) {
            return Ok(
                match ensure_coverage(analysis, &side.solution_formula_ids, self.curriculum) {
                    Ok(c) => Ok(SeedContext {
                        seed: seed.clone(),
                        analysis: c.analysis,
                        library: c.library,
                        expansions: c.expansions,
                    }),
                    Err(e) => Err(SeedFailure::Coverage { message: e.to_string() }),
                },
            );
        }
        let all = json_string(&self.curriculum.all_chapters_prompt_json());
        let mut expansions = 0;
        loop {
            let f = fields([
                ("solution", seed.seed.solution.clone()),
                ("identified_chapters", json_string(&analysis.chapters)),
                ("all_chapters_json", all.clone()),
            ]);
            let verdict =
                |r: &BackendResponse| parse_verdict(r.document.as_ref().expect("json template"), &analysis, dict);
            let verdict = match self.request(TemplateId::Sufficiency, &f, id, None, verdict)? {
                Ok((v, _)) => v,
                Err(attempts) => return Ok(Err(SeedFailure::Sufficiency { attempts })),
            };
            if verdict.is_sufficient() {
                analysis.sufficiency = Some(SufficiencyStatus::Sufficient);
                let library = self.curriculum.resolve_library(&analysis.chapters)?;
                return Ok(Ok(SeedContext {
                    seed: seed.clone(),
                    analysis,
                    library,
                    expansions,
                }));
            }
            if expansions >= dict.len() {
                let e = SeedError::CoverageExhausted(verdict.missing_chapter.unwrap_or_default());
                return Ok(Err(SeedFailure::Coverage { message: e.to_string() }));
            }
            analysis = match crate::seed::expand_chapters(&analysis, &verdict, dict) {
                Ok(a) => a,
                Err(e) => return Ok(Err(SeedFailure::Coverage { message: e.to_string() })),
            };
            expansions += 1;
        }
    }

    fn check_draft(&self, ctx: &SeedContext, draft: &ProblemDraft) -> Result<bool, String> {
        draft
            .check(&ctx.analysis.variables, &ctx.library)
            .map_err(|e| e.to_string())?;
        let n = draft.formula_set().len();
        if n < LOW_COMPLEXITY_THRESHOLD {
            return Ok(true);
        }
        let (lo, hi) = (self.config.min_formulas, self.config.max_formulas);
        if n < lo || n > hi {
            return Err(format!("Select between {lo} and {hi} formulas; the problem uses {n}."));
        }
        Ok(false)
    }

    /// One draft-then-solve round.
    fn round(
        &self,
        ctx: &SeedContext,
        scenario: usize,
        previous: &mut Vec<String>,
        last_error: Option<String>,
        calls: &mut u64,
        log: &mut Vec<AttemptLog>,
    ) -> Result<Round, PipelineError> {
        let id = ctx.seed.seed.id.as_str();
        let available = json_string(&ctx.library.to_prompt_json());
        let draft_fields = fields([
            ("available_formulas", available.clone()),
            ("alternate_scenarios", ctx.analysis.scenarios[scenario].clone()),
            ("variables", json_string(&ranges_json(&ctx.analysis.variables))),
            ("previous_problems", json_string(previous)),
        ]);
        let validate_draft = |r: &BackendResponse| {
            let draft = ProblemDraft::from_document(r.document.as_ref().expect("json template"), id, scenario)
                .map_err(|e| e.to_string())?;
            let low = self.check_draft(ctx, &draft)?;
            Ok((draft, low))
        };
        let (draft, low) = match self.request(TemplateId::Generate, &draft_fields, id, last_error, validate_draft)? {
            Ok((value, n)) => {
                *calls += u64::from(n);
                value
            }
            Err(attempts) => {
                *calls += attempts.len() as u64;
                let error = attempts.last().map(|a| a.error.clone()).unwrap_or_default();
                log.extend(attempts);
                return Ok(Round::Retry {
                    reason: FailureReason::DraftRejected,
                    error,
                });
            }
        };
        let signature = ProblemSignature::new(&draft.formula_ids, draft.unknown()).expect("drafts have one unknown");
        let rendered = signature.to_string();
        if self.registry.contains(&signature) || previous.contains(&rendered) {
            self.registry.note_collision();
            previous.push(rendered.clone());
            return Ok(Round::Retry {
                reason: FailureReason::RepeatedCollision,
                error: format!("Duplicate problem signature {rendered}; choose a different formula set or unknown."),
            });
        }

        let code_fields = fields([
            ("word_problem", draft.word_problem.clone()),
            ("formula_ids", json_string(&draft.formula_ids)),
            ("variables_dict", json_string(&draft.variables.to_prompt_json())),
            ("available_formulas", available),
        ]);
        let validate_code = |r: &BackendResponse| {
            let plan = parse_solution_plan(r.body()).map_err(|e| format!("The solution plan does not parse: {e}"))?;
            let issues = variable_issues(&plan, &draft.variables);
            if !issues.is_empty() {
                return Err(format!(
                    "The plan does not match the problem's variables: {}",
                    issues.join("; ")
                ));
            }
            let report = verify(&draft, &plan, &ctx.library, &self.sanity);
            if let Some(message) = report.error_message() {
                return Err(message);
            }
            if report.signature_match != Some(true) {
                let used: Vec<&String> = report.invoked.iter().flatten().collect();
                return Err(format!(
                    "The plan invokes {used:?} but the problem declares {:?}; invoke exactly the declared formulas.",
                    draft.formula_ids
                ));
            }
            let value = report.value().expect("passed reports carry a value");
            Ok((r.body().trim().to_string(), value))
        };
        let (code, value) = match self.request(TemplateId::Code, &code_fields, id, None, validate_code)? {
            Ok((value, n)) => {
                *calls += u64::from(n);
                value
            }
            Err(attempts) => {
                *calls += attempts.len() as u64;
                let error = attempts.last().map(|a| a.error.clone()).unwrap_or_default();
                log.extend(attempts);
                return Ok(Round::Retry {
                    reason: FailureReason::VerificationFailed,
                    error: format!("The previous problem could not be solved: {error}"),
                });
            }
        };
        if self.registry.insert(&signature) == InsertOutcome::Collision {
            previous.push(rendered.clone());
            return Ok(Round::Retry {
                reason: FailureReason::RepeatedCollision,
                error: format!("Duplicate problem signature {rendered}; choose a different formula set or unknown."),
            });
        }
        previous.push(rendered.clone());
        let mut extra = serde_json::Map::new();
        extra.insert("seed_id".into(), id.into());
        extra.insert("scenario".into(), scenario.into());
        if low {
            extra.insert("low_complexity".into(), true.into());
        }
        let unknown = draft.unknown().to_string();
        let record = DatasetRecord {
            chapter: ctx.seed.seed.chapter.clone(),
            word_problem: draft.word_problem,
            execution_result: Some(format_result(value)),
            signature: rendered,
            formula_ids: draft.formula_ids,
            unknown_var: unknown.clone(),
            variables: draft.variables,
            code,
            validation_result: ValidationResult {
                valid: true,
                unknown_var: unknown,
            },
            extra,
        };
        Ok(Round::Accepted(Box::new(Accepted {
            record,
            signature,
            low_complexity: low,
            calls: 0,
            attempts: Vec::new(),
        })))
    }

    /// Fills one problem slot, spending at most `retry_budget` rounds.
    ///
    /// `previous` holds the signatures this seed has already produced or
    /// collided with; it is shown to the drafting prompt and grows on
    /// acceptance and on collisions.
    pub fn generate_problem(
        &self,
        ctx: &SeedContext,
        scenario: usize,
        previous: &mut Vec<String>,
    ) -> Result<Accepted, GenerationError> {
        let mut calls = 0;
        let mut log = Vec::new();
        let mut last_error = None;
        let mut reason = FailureReason::DraftRejected;
        let mut collisions = 0;
        for _ in 0..self.config.retry_budget {
            match self.round(ctx, scenario, previous, last_error.take(), &mut calls, &mut log)? {
                Round::Accepted(mut a) => {
                    a.calls = calls;
                    a.attempts = log;
                    return Ok(*a);
                }
                Round::Retry { reason: r, error } => {
                    if r == FailureReason::RepeatedCollision {
                        collisions += 1;
                    }
                    reason = r;
                    last_error = Some(error);
                }
            }
        }
        Err(GenerationError::Exhausted(Box::new(GenerationFailure {
            seed_id: ctx.seed.seed.id.clone(),
            scenario,
            reason,
            rounds: self.config.retry_budget,
            calls,
            collisions,
            attempts: log,
        })))
    }

    /// Prepares one seed and fills its `variations` slots in scenario
    /// round-robin order.
    pub fn run_seed(&self, seed: &SeedRecord) -> Result<SeedOutput, PipelineError> {
        let mut out = SeedOutput {
            seed_id: seed.seed.id.clone(),
            ..SeedOutput::default()
        };
        let ctx = match self.prepare_seed(seed)? {
            Ok(ctx) => ctx,
            Err(failure) => {
                let attempts = match &failure {
                    SeedFailure::Analysis { attempts } | SeedFailure::Sufficiency { attempts } => attempts.clone(),
                    SeedFailure::Coverage { .. } => Vec::new(),
                };
                out.rejected.extend(attempts.into_iter().map(|a| RejectedAttempt {
                    seed_id: out.seed_id.clone(),
                    scenario: None,
                    template: a.template,
                    attempt: a.attempt,
                    error: a.error,
                }));
                out.seed_failure = Some(failure);
                return Ok(out);
            }
        };
        let mut rr = RoundRobin::new(ctx.analysis.scenarios.len(), self.config.scenario_quota)
            .expect("analyses have six scenarios");
        let mut previous = Vec::new();
        for _ in 0..self.config.variations {
            let Some(scenario) = rr.next_scenario() else { break };
            let attempts = match self.generate_problem(&ctx, scenario, &mut previous) {
                Ok(a) => {
                    let log = a.attempts.clone();
                    out.accepted.push(a);
                    log
                }
                Err(GenerationError::Exhausted(f)) => {
                    let log = f.attempts.clone();
                    out.failures.push(*f);
                    log
                }
                Err(GenerationError::Fatal(e)) => return Err(e),
            };
            out.rejected.extend(attempts.into_iter().map(|a| RejectedAttempt {
                seed_id: out.seed_id.clone(),
                scenario: Some(scenario),
                template: a.template,
                attempt: a.attempt,
                error: a.error,
            }));
        }
        Ok(out)
    }

    /// Runs every seed, `config.jobs` at a time. Results come back in seed
    /// order whatever the interleaving.
    pub fn run_session(&self, seeds: &[SeedRecord]) -> Result<SessionOutput, PipelineError> {
        let jobs = self.config.jobs.max(1);
        let mut results: Vec<Option<Result<SeedOutput, PipelineError>>> = (0..seeds.len()).map(|_| None).collect();
        if jobs == 1 {
            for (slot, seed) in results.iter_mut().zip(seeds) {
                *slot = Some(self.run_seed(seed));
            }
        } else {
            let next = std::sync::atomic::AtomicUsize::new(0);
            let done = std::sync::Mutex::new(&mut results);
            std::thread::scope(|scope| {
                for _ in 0..jobs.min(seeds.len()) {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        let Some(seed) = seeds.get(i) else { break };
                        let r = self.run_seed(seed);
                        done.lock().expect("results lock")[i] = Some(r);
                    });
                }
            });
        }
        let mut output = SessionOutput::default();
        for r in results {
            output.seeds.push(r.expect("every seed ran")?);
        }
        output.calls = self.budget.stats();
        output.calls.calls_per_accepted = output
            .seeds
            .iter()
            .flat_map(|s| s.accepted.iter().map(|a| a.calls))
            .collect();
        output.collisions = self.registry.collisions();
        Ok(output)
    }
}
