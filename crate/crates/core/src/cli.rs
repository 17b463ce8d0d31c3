//! The `ipg` command line: `generate`, `audit`, `verify`, `stats`, `import`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::audit::{
    check_expectations, classify_values, write_blueprint_csv, write_chapters_csv, write_formula_counts_csv,
    write_taxonomy_csv, write_unknowns_csv, AuditError, AuditReport, Expectations, FitMode, ReportOptions,
};
use crate::axiom::{Curriculum, FormulaLibrary};
use crate::gateway::mock::{MockBackend, MockFixture};
use crate::gateway::remote::{RemoteBackend, RemoteConfig};
use crate::gateway::{Backend, BackendError, BackendKind, TemplateSet};
use crate::generation::GenerationConfig;
use crate::pipeline::{Pipeline, PipelineError};
use crate::plan::{parse_solution_plan, to_python_source};
use crate::record::{import_records, read_records, write_records, DatasetRecord, RecordError, SessionManifest};
use crate::sanity::RuleSet;
use crate::seed::load_seeds;
use crate::verify::{reverify_record, Reverification};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_NO_ACCEPTANCES: i32 = 4;
pub const EXIT_EXPECTATIONS: i32 = 5;
pub const EXIT_DIVERGENCE: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "ipg", version, about = "Generate, verify and audit physics word problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand seed problems into verified variations.
    Generate(GenerateArgs),
    /// Compute corpus metrics, distributions and the failure taxonomy.
    Audit(AuditArgs),
    /// Re-run verification on every record and report divergences.
    Verify(VerifyArgs),
    /// Print a short summary of a dataset file.
    Stats(StatsArgs),
    /// Normalize a downloaded corpus file to one record per line.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct LibraryArg {
    /// Formula library file; defaults to the bundled classical-mechanics library.
    #[arg(long)]
    pub library: Option<PathBuf>,
}

impl LibraryArg {
    fn load(&self) -> Result<Curriculum, String> {
        match &self.library {
            Some(p) => Curriculum::load(p).map_err(|e| format!("{}: {e}", p.display())),
            None => Ok(Curriculum::classical_mechanics()),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seeds: PathBuf,
    #[command(flatten)]
    pub library: LibraryArg,
    /// TOML file with generation settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Fixture for the mock backend.
    #[arg(long)]
    pub mock_fixture: Option<PathBuf>,
    /// Variations per seed.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rng: Option<u64>,
    #[arg(long)]
    pub min_formulas: Option<usize>,
    #[arg(long)]
    pub max_formulas: Option<usize>,
    /// Draft/solve rounds per problem slot.
    #[arg(long)]
    pub retry_budget: Option<u32>,
    /// Backend attempts per request.
    #[arg(long)]
    pub attempts: Option<u32>,
    #[arg(long)]
    pub scenario_quota: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory of prompt template overrides (`<template>.txt`).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Sanity rules JSON replacing the defaults.
    #[arg(long)]
    pub sanity_rules: Option<PathBuf>,
    /// Output directory for records.jsonl, rejected.jsonl and manifest.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also store a Python transcription of each plan under `source`.
    #[arg(long)]
    pub emit_source: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub library: LibraryArg,
    /// JSON object of chapter name to seed count, in report order.
    #[arg(long)]
    pub seed_counts: Option<PathBuf>,
    /// Expectations file; misses exit with status 5.
    #[arg(long)]
    pub check: Option<PathBuf>,
    /// Directory for metrics.json and the CSV tables; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value = "bucket-means")]
    pub fit_mode: FitModeArg,
    #[arg(long, default_value_t = 2)]
    pub bucket_min: usize,
    #[arg(long, default_value_t = 5)]
    pub bucket_max: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FitModeArg {
    BucketMeans,
    PerRecord,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub library: LibraryArg,
    #[arg(long)]
    pub sanity_rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn config_err(message: impl Into<String>) -> Failure {
    fail(EXIT_CONFIG, message)
}

/// Parses `args` and runs the command, printing to stdout and stderr.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Audit(a) => audit(&a),
        Command::Verify(a) => verify(&a),
        Command::Stats(a) => stats(&a),
        Command::Import(a) => import(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn rules(path: Option<&Path>, default: RuleSet) -> Result<RuleSet, Failure> {
    match path {
        Some(p) => RuleSet::load(p).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => Ok(default),
    }
}

fn full_library(cm: &Curriculum) -> FormulaLibrary {
    let chapters: Vec<&str> = cm.dictionary.names().collect();
    cm.resolve_library(&chapters).expect("dictionary chapters resolve")
}

/// Reads the generation config file (if any) and applies flag overrides.
pub fn resolve_config(a: &GenerateArgs) -> Result<GenerationConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => GenerationConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag.clone() { cfg.$field = v.into(); }
        )*};
    }
    set!(n => variations, rng => rng_seed, min_formulas => min_formulas, max_formulas => max_formulas,
         retry_budget => retry_budget, attempts => attempts_per_request, jobs => jobs, backend => backend);
    if a.scenario_quota.is_some() {
        cfg.scenario_quota = a.scenario_quota;
    }
    if a.mock_fixture.is_some() {
        cfg.mock_fixture = a.mock_fixture.clone();
    }
    cfg.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(cfg)
}

fn make_backend(cfg: &GenerationConfig) -> Result<Box<dyn Backend>, Failure> {
    match cfg.backend {
        BackendKind::Mock => {
            let path = cfg
                .mock_fixture
                .as_ref()
                .ok_or_else(|| config_err("the mock backend needs --mock-fixture"))?;
            let fixture = MockFixture::load(path).map_err(|e| config_err(e.to_string()))?;
            Ok(Box::new(MockBackend::new(fixture, cfg.rng_seed)))
        }
        BackendKind::Remote => {
            let config = RemoteConfig::from_env().map_err(|e| config_err(e.to_string()))?;
            Ok(Box::new(RemoteBackend::new(config)))
        }
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Backend(BackendError::Config(m)) => config_err(m),
        PipelineError::Backend(b) => fail(EXIT_BACKEND, b.to_string()),
        other => config_err(other.to_string()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), Failure> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| config_err(e.to_string()))?;
        writeln!(w).map_err(|e| config_err(e.to_string()))?;
    }
    w.flush().map_err(|e| config_err(e.to_string()))
}

pub fn generate(a: &GenerateArgs) -> Result<(), Failure> {
    let started_at = now();
    let cfg = resolve_config(a)?;
    let curriculum = a.library.load().map_err(config_err)?;
    let seed_text = fs::read(&a.seeds).map_err(|e| config_err(format!("{}: {e}", a.seeds.display())))?;
    let seeds = load_seeds(&a.seeds).map_err(|e| config_err(format!("{}: {e}", a.seeds.display())))?;
    let backend = make_backend(&cfg)?;
    let mut pipeline = Pipeline::new(&curriculum, cfg.clone(), backend.as_ref());
    if let Some(dir) = &a.templates {
        pipeline.templates = TemplateSet::with_overrides(dir).map_err(|e| config_err(e.to_string()))?;
    }
    pipeline.sanity = rules(a.sanity_rules.as_deref(), RuleSet::default_sanity())?;
    let output = pipeline.run_session(&seeds).map_err(pipeline_failure)?;

    fs::create_dir_all(&a.out).map_err(|e| config_err(format!("{}: {e}", a.out.display())))?;
    let library = full_library(&curriculum);
    let mut records: Vec<DatasetRecord> = output.records().cloned().collect();
    if a.emit_source {
        for r in &mut records {
            if let Ok(plan) = parse_solution_plan(&r.code) {
                r.extra
                    .insert("source".into(), to_python_source(&plan, &library).into());
            }
        }
    }
    write_records(&records, a.out.join("records.jsonl")).map_err(|e| config_err(e.to_string()))?;
    write_jsonl(&a.out.join("rejected.jsonl"), output.rejected())?;
    let manifest = SessionManifest {
        config: serde_json::to_value(&cfg).expect("config serializes"),
        seed_file_sha256: hex::encode(Sha256::digest(&seed_text)),
        accepted_per_seed: output.accepted_per_seed(),
        rejected_attempts: output.rejected().count(),
        low_complexity: output.low_complexity(),
        calls: output.calls.clone(),
        started_at,
        finished_at: now(),
    };
    let mut w = create(&a.out.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| config_err(e.to_string()))?;
    writeln!(w).map_err(|e| config_err(e.to_string()))?;

    let accepted = output.accepted_count();
    println!(
        "{accepted} problems accepted from {} seeds in {} backend calls; {} slots abandoned",
        seeds.len(),
        output.calls.total_calls,
        output.seeds.iter().map(|s| s.failures.len()).sum::<usize>()
    );
    if let Some((lo, hi)) = output.calls.accepted_range() {
        println!("calls per accepted problem: {lo}..={hi}");
    }
    for s in &output.seeds {
        if let Some(f) = &s.seed_failure {
            println!("seed {}: no problems ({f:?})", s.seed_id);
        }
    }
    if accepted == 0 {
        return Err(fail(EXIT_NO_ACCEPTANCES, "no problem was accepted"));
    }
    Ok(())
}

/// Reads every line as JSON; lines that are not records are kept for the
/// taxonomy and counted as malformed.
fn read_for_audit(path: &Path) -> Result<(Vec<DatasetRecord>, Vec<serde_json::Value>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| config_err(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if let Ok(r) = DatasetRecord::from_value(v.clone(), i + 1) {
            records.push(r);
        }
        values.push(v);
    }
    Ok((records, values))
}

/// Chapter seed counts from a JSON object, keeping file order.
pub fn load_seed_counts(path: &Path) -> Result<Vec<(String, usize)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    map.into_iter()
        .map(|(k, v)| {
            v.as_u64()
                .map(|n| (k.clone(), n as usize))
                .ok_or_else(|| format!("{}: seed count for `{k}` is not a number", path.display()))
        })
        .collect()
}

pub fn audit(a: &AuditArgs) -> Result<(), Failure> {
    let curriculum = a.library.load().map_err(config_err)?;
    let seed_counts = match &a.seed_counts {
        Some(p) => load_seed_counts(p).map_err(config_err)?,
        None => curriculum.dictionary.names().map(|n| (n.to_string(), 0)).collect(),
    };
    let (records, values) = read_for_audit(&a.data)?;
    let failures = classify_values(&values, &curriculum);
    let mut opts = ReportOptions::new(seed_counts);
    opts.top_unknowns = a.top_k;
    opts.bucket_range = (a.bucket_min, a.bucket_max);
    opts.fit_mode = match a.fit_mode {
        FitModeArg::BucketMeans => FitMode::BucketMeans,
        FitModeArg::PerRecord => FitMode::PerRecord,
    };
    let report = AuditReport::build(&records, &failures, values.len() - records.len(), &opts).map_err(|e| match e {
        AuditError::EmptyDataset => config_err(format!("{}: the dataset is empty", a.data.display())),
        other => config_err(other.to_string()),
    })?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
            fs::write(dir.join("metrics.json"), format!("{json}\n")).map_err(|e| config_err(e.to_string()))?;
            let io = |e: std::io::Error| config_err(e.to_string());
            write_formula_counts_csv(create(&dir.join("formula_counts.csv"))?, &report.formula_counts).map_err(io)?;
            write_chapters_csv(create(&dir.join("chapters.csv"))?, report.chapters.values()).map_err(io)?;
            write_unknowns_csv(create(&dir.join("unknowns.csv"))?, &report.unknowns).map_err(io)?;
            if let Some(fit) = &report.blueprint {
                write_blueprint_csv(create(&dir.join("blueprint.csv"))?, fit).map_err(io)?;
            }
            write_taxonomy_csv(create(&dir.join("taxonomy.csv"))?, &failures).map_err(io)?;
            let m = &report.metrics;
            println!(
                "{} records: valid {:.2}%, TTR {:.2}, {} unique formulas, avg {:.3} formulas ({:?})",
                m.total, m.valid_pct, m.ttr, m.unique_formulas, m.avg_formulas, m.difficulty
            );
        }
        None => println!("{json}"),
    }
    if let Some(path) = &a.check {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let expectations: Expectations =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let misses = check_expectations(&report, &expectations);
        for m in &misses {
            eprintln!("miss: {m}");
        }
        if !misses.is_empty() {
            return Err(fail(
                EXIT_EXPECTATIONS,
                format!(
                    "{} of {} expectations missed",
                    misses.len(),
                    expectations.expectations.len()
                ),
            ));
        }
        eprintln!("all {} expectations met", expectations.expectations.len());
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<DatasetRecord>, Failure> {
    read_records(path).map_err(|e| match e {
        RecordError::Io(io) => config_err(format!("{}: {io}", path.display())),
        other => config_err(format!("{}: {other}", path.display())),
    })
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let curriculum = a.library.load().map_err(config_err)?;
    let library = full_library(&curriculum);
    let rules = rules(a.sanity_rules.as_deref(), RuleSet::default_sanity())?;
    let records = read(&a.data)?;
    let (mut consistent, mut divergent, mut opaque) = (0, 0, 0);
    for (i, r) in records.iter().enumerate() {
        match reverify_record(r, &library, &rules) {
            Reverification::Consistent { .. } => consistent += 1,
            Reverification::Unverifiable { .. } => {
                opaque += 1;
                println!("record {}: unverifiable: opaque source", i + 1);
            }
            Reverification::Divergent { differences, .. } => {
                divergent += 1;
                println!("record {}: divergent: {}", i + 1, differences.join("; "));
            }
        }
    }
    println!("{consistent} consistent, {divergent} divergent, {opaque} unverifiable");
    if divergent > 0 {
        return Err(fail(EXIT_DIVERGENCE, format!("{divergent} divergent records")));
    }
    Ok(())
}

pub fn stats(a: &StatsArgs) -> Result<(), Failure> {
    let records = read(&a.data)?;
    let mut chapters = std::collections::BTreeMap::<&str, usize>::new();
    for r in &records {
        *chapters.entry(r.chapter.as_str()).or_default() += 1;
    }
    let signatures: std::collections::BTreeSet<&str> = records.iter().map(|r| r.signature.as_str()).collect();
    println!("records: {}", records.len());
    println!("distinct signatures: {}", signatures.len());
    println!(
        "valid: {}",
        records.iter().filter(|r| r.validation_result.valid).count()
    );
    println!("chapters:");
    for (c, n) in chapters {
        println!("  {c}: {n}");
    }
    println!("formulas per problem:");
    for (k, s) in crate::audit::formula_count_distribution(&records) {
        println!("  {k}: {} ({:.2}%)", s.n, s.pct);
    }
    Ok(())
}

pub fn import(a: &ImportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.input).map_err(|e| config_err(format!("{}: {e}", a.input.display())))?;
    let records = import_records(&text).map_err(|e| config_err(format!("{}: {e}", a.input.display())))?;
    write_records(&records, &a.output).map_err(|e| config_err(e.to_string()))?;
    println!("imported {} records into {}", records.len(), a.output.display());
    Ok(())
}
