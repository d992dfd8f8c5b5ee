//! Pipeline driver: manifest loading with overrides, one function per stage,
//! run logs, and exit-code mapping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{build_mdd_pool, train_infiller, MlmInfiller, ParaphraseProvider, ProviderKind, SynonymProvider};
use crate::corpus::{
    extract_pairs, load_benchmark, load_dialogues, load_labeled_pairs, load_pool, save_pool, BenchmarkRecord,
    ContextResponsePair, Dialogue, LabeledPair,
};
use crate::encoder::{Checkpoint, EncoderModel};
use crate::error::Error;
use crate::evalharness::{render_table, report_from_scores, CorrelationReport};
use crate::metric::{load_scores, save_scores, score_batch, MetricScore};
use crate::pipeline::{vocabulary, PipelineConfig};
use crate::selftrain::{filter_and_balance, load_annotated, pseudo_label, save_annotated, train_student};
use crate::teacher::{train_teacher, StudentInit, TrainConfig};
use crate::tokenizer::Vocabulary;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Failure classes that map onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing artifact: {0}")]
    Missing(PathBuf),
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing(_) => EXIT_MISSING,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => CliError::Missing(path),
            Error::NonFinite(m) => CliError::Numerical(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub name: String,
    pub kind: ProviderKind,
    /// JSON `{word: [substitute, ...]}` table.
    pub table: PathBuf,
    #[serde(default = "default_swap_prob")]
    pub swap_prob: f64,
}

fn default_swap_prob() -> f64 {
    0.5
}

/// Input locations and the output directory. Relative paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub base: PathBuf,
    pub base_domain: String,
    /// Domain name → dialogue JSONL.
    pub corpora: BTreeMap<String, PathBuf>,
    /// Domain name → benchmark JSONL.
    pub benchmarks: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub providers: Vec<ProviderSpec>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub paths: Paths,
    #[serde(flatten)]
    pub config: PipelineConfig,
}

/// Apply one `a.b.c = value` override to a TOML table. The value is parsed
/// as TOML when possible and taken as a string otherwise.
fn set_path(table: &mut toml::Table, path: &[String], raw: &str) -> CliResult<()> {
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().ok_or_else(|| invalid("empty override key"))?;
    let mut cur = table;
    for key in parents {
        cur = cur
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override path {} crosses a non-table value", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

const SECTIONS: &[&str] = &["paths", "vocab", "teacher", "infiller", "augment", "student"];

/// `STAGE__FIELD[__SUBFIELD]` environment variables whose first segment
/// names a manifest section, plus the top-level `MAX_CONTEXT` and
/// `PARALLELISM` keys written as `PIPELINE__MAX_CONTEXT` and so on.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(Vec<String>, String)> {
    let mut out: Vec<(Vec<String>, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let parts: Vec<String> = k.split("__").map(|p| p.to_ascii_lowercase()).collect();
            if parts.len() < 2 {
                return None;
            }
            if parts[0] == "pipeline" {
                return Some((parts[1..].to_vec(), v));
            }
            SECTIONS.contains(&parts[0].as_str()).then_some((parts, v))
        })
        .collect();
    out.sort();
    out
}

impl Manifest {
    /// Parse `text`, apply env-style then `--set` overrides, resolve paths
    /// against `dir`, and validate.
    pub fn from_str_with(
        text: &str,
        dir: &Path,
        env: &[(Vec<String>, String)],
        sets: &[String],
    ) -> CliResult<Manifest> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| invalid(format!("manifest: {e}")))?;
        for (path, v) in env {
            set_path(&mut table, path, v)?;
        }
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| invalid(format!("--set expects key=value, got `{s}`")))?;
            let path: Vec<String> = k.trim().split('.').map(String::from).collect();
            set_path(&mut table, &path, v.trim())?;
        }
        let mut m: Manifest = table.try_into().map_err(|e| invalid(format!("manifest: {e}")))?;
        m.resolve(dir);
        m.config.validate()?;
        if !m.paths.corpora.contains_key(&m.paths.base_domain) {
            return Err(invalid(format!("base_domain `{}` has no corpus entry", m.paths.base_domain)));
        }
        Ok(m)
    }

    pub fn load(path: &Path, sets: &[String]) -> CliResult<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Manifest::from_str_with(&text, dir, &env_overrides(std::env::vars()), sets)
    }

    fn resolve(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.base);
        fix(&mut paths.out_dir);
        paths.corpora.values_mut().for_each(fix);
        paths.benchmarks.values_mut().for_each(fix);
        paths.providers.iter_mut().for_each(|p| fix(&mut p.table));
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.artifact("vocab.json")
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.artifact("teacher.ckpt.json")
    }

    pub fn infiller_path(&self) -> PathBuf {
        self.artifact("infiller.ckpt.json")
    }

    pub fn pool_path(&self) -> PathBuf {
        self.artifact("pool.jsonl")
    }

    pub fn annotated_path(&self) -> PathBuf {
        self.artifact("annotated.jsonl")
    }

    pub fn student_path(&self, name: &str) -> PathBuf {
        self.artifact(&format!("{name}.ckpt.json"))
    }

    pub fn scores_dir(&self, model: &str) -> PathBuf {
        self.artifact("scores").join(model)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a stage's effective configuration (canonical JSON).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("config serializes").as_bytes())
}

fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunLog {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

struct Stage<'a> {
    manifest: &'a Manifest,
    name: String,
    config_hash: String,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
    details: serde_json::Value,
}

impl<'a> Stage<'a> {
    fn new<T: Serialize>(manifest: &'a Manifest, name: &str, config: &T, seed: u64) -> Self {
        info!("stage {name}");
        Stage {
            manifest,
            name: name.to_string(),
            config_hash: config_hash(config),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            details: serde_json::Value::Null,
        }
    }

    fn input(&mut self, p: &Path) -> CliResult<PathBuf> {
        require(p)?;
        self.inputs.push(p.to_path_buf());
        Ok(p.to_path_buf())
    }

    fn output(&mut self, p: PathBuf) -> PathBuf {
        self.outputs.push(p.clone());
        p
    }

    fn finish(self) -> CliResult<RunLog> {
        let rel = |p: &Path| p.display().to_string();
        let hashes = |ps: &[PathBuf]| -> CliResult<BTreeMap<String, String>> {
            ps.iter().map(|p| Ok((rel(p), file_hash(p)?))).collect()
        };
        let log = RunLog {
            stage: self.name.clone(),
            config_hash: self.config_hash,
            seed: self.seed,
            inputs: hashes(&self.inputs)?,
            outputs: hashes(&self.outputs)?,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            details: self.details,
        };
        let path = self.manifest.artifact("runlog").join(format!("{}.json", self.name));
        write_text(&path, &(serde_json::to_string_pretty(&log).map_err(Error::from)? + "\n"))?;
        Ok(log)
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n"))
}

/// Load a checkpoint and refuse it if it was trained under a different
/// configuration or vocabulary, unless `allow_mismatch` is set.
fn load_checkpoint(path: &Path, expected_config: &str, vocab: &Vocabulary, allow_mismatch: bool) -> CliResult<EncoderModel> {
    let ck = Checkpoint::load(path)?;
    if ck.vocab_hash != vocab.content_hash() {
        return Err(invalid(format!("{}: checkpoint was trained with a different vocabulary", path.display())));
    }
    if ck.config_hash != expected_config {
        if !allow_mismatch {
            return Err(invalid(format!(
                "{}: config hash {} does not match the manifest ({}); rerun the stage or pass --allow-config-mismatch",
                path.display(),
                ck.config_hash,
                expected_config
            )));
        }
        log::warn!("{}: config hash mismatch accepted by override", path.display());
    }
    Ok(ck.model)
}

fn save_checkpoint(path: &Path, model: &EncoderModel, vocab: &Vocabulary, config_hash: &str) -> CliResult<()> {
    Checkpoint {
        model: model.clone(),
        vocab_hash: vocab.content_hash(),
        config_hash: config_hash.to_string(),
    }
    .save(path)?;
    Ok(())
}

fn load_inputs_base(m: &Manifest, stage: &mut Stage) -> CliResult<Vec<LabeledPair>> {
    let p = stage.input(&m.paths.base)?;
    Ok(load_labeled_pairs(&p, &m.paths.base_domain)?)
}

fn load_inputs_dialogues(m: &Manifest, stage: &mut Stage) -> CliResult<Vec<Dialogue>> {
    let mut all = Vec::new();
    for (domain, path) in &m.paths.corpora {
        let p = stage.input(path)?;
        all.extend(load_dialogues(&p, domain)?);
    }
    Ok(all)
}

fn load_inputs_benchmarks(m: &Manifest, stage: &mut Stage) -> CliResult<BTreeMap<String, Vec<BenchmarkRecord>>> {
    m.paths
        .benchmarks
        .iter()
        .map(|(domain, path)| {
            let p = stage.input(path)?;
            Ok((domain.clone(), load_benchmark(&p, domain)?))
        })
        .collect()
}

fn originals(m: &Manifest, dialogues: &[Dialogue]) -> CliResult<Vec<ContextResponsePair>> {
    Ok(extract_pairs(dialogues, m.config.max_context)?)
}

fn load_vocab(m: &Manifest, stage: &mut Stage) -> CliResult<Vocabulary> {
    let p = stage.input(&m.vocab_path())?;
    Ok(Vocabulary::load(&p)?)
}

/// Teacher config plus what the vocabulary depends on.
fn teacher_hash(m: &Manifest) -> String {
    config_hash(&(&m.config.teacher, &m.config.vocab, m.config.max_context))
}

fn student_hash(m: &Manifest, student: &TrainConfig) -> String {
    config_hash(&(student, &m.config.augment, &m.config.infiller, teacher_hash(m)))
}

pub fn train_teacher_stage(m: &Manifest) -> CliResult<RunLog> {
    let mut stage = Stage::new(m, "train-teacher", &(&m.config.teacher, &m.config.vocab), m.config.teacher.seed);
    let base = load_inputs_base(m, &mut stage)?;
    let dialogues = load_inputs_dialogues(m, &mut stage)?;
    let vocab = vocabulary(&base, &originals(m, &dialogues)?, &m.config.vocab)?;
    let vocab_path = stage.output(m.vocab_path());
    vocab.save(&vocab_path)?;
    let trained = train_teacher(&base, &vocab, &m.config.teacher)?;
    let ck = stage.output(m.teacher_path());
    save_checkpoint(&ck, &trained.model, &vocab, &teacher_hash(m))?;
    let report = stage.output(m.artifact("teacher_report.json"));
    write_json(&report, &trained.report)?;
    stage.details = serde_json::json!({
        "vocab_size": vocab.len(),
        "best_val_accuracy": trained.report.best_val_accuracy,
        "best_step": trained.report.best_step,
    });
    stage.finish()
}

fn providers(m: &Manifest, stage: &mut Stage) -> CliResult<Vec<SynonymProvider>> {
    m.paths
        .providers
        .iter()
        .map(|spec| {
            let p = stage.input(&spec.table)?;
            let mut prov = SynonymProvider::load(spec.name.clone(), spec.kind, &p)?;
            prov.swap_prob = spec.swap_prob;
            Ok(prov)
        })
        .collect()
}

pub fn augment_stage(m: &Manifest) -> CliResult<RunLog> {
    let cfg = (&m.config.augment, &m.config.infiller, m.config.max_context);
    let mut stage = Stage::new(m, "augment", &cfg, m.config.augment.rng_seed);
    let vocab = load_vocab(m, &mut stage)?;
    let dialogues = load_inputs_dialogues(m, &mut stage)?;
    let provs = providers(m, &mut stage)?;
    let originals = originals(m, &dialogues)?;
    let infiller_model = train_infiller(&originals, &vocab, &m.config.infiller.train, m.config.infiller.span_max)?;
    let ck = stage.output(m.infiller_path());
    save_checkpoint(&ck, &infiller_model, &vocab, &config_hash(&m.config.infiller))?;
    let infiller = MlmInfiller::new(&infiller_model, &vocab)?;
    let prov_refs: Vec<&dyn ParaphraseProvider> = provs.iter().map(|p| p as &dyn ParaphraseProvider).collect();
    let pool = build_mdd_pool(&originals, &m.config.augment, &prov_refs, Some(&infiller))?;
    let pool_path = stage.output(m.pool_path());
    save_pool(&pool_path, &pool)?;
    let mut by_origin: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &pool {
        *by_origin.entry(p.origin.as_str()).or_default() += 1;
    }
    stage.details = serde_json::json!({ "originals": originals.len(), "pool": pool.len(), "by_origin": by_origin });
    stage.finish()
}

pub fn pseudo_label_stage(m: &Manifest, allow_mismatch: bool) -> CliResult<RunLog> {
    let cfg = (&m.config.student.confidence_threshold, m.config.student.target_size, teacher_hash(m));
    let mut stage = Stage::new(m, "pseudo-label", &cfg, m.config.student.seed);
    let vocab = load_vocab(m, &mut stage)?;
    let ck = stage.input(&m.teacher_path())?;
    let teacher = load_checkpoint(&ck, &teacher_hash(m), &vocab, allow_mismatch)?;
    let pool_path = stage.input(&m.pool_path())?;
    let pool = load_pool(&pool_path)?;
    let annotated = pseudo_label(&teacher, &vocab, &pool)?;
    let balanced = filter_and_balance(
        &annotated,
        m.config.student.confidence_threshold,
        m.config.student.target_size,
        m.config.student.seed,
    )?;
    let out = stage.output(m.annotated_path());
    save_annotated(&out, &balanced.pairs)?;
    stage.details = serde_json::json!({
        "pool": pool.len(),
        "above_threshold": balanced.above_threshold,
        "counts": balanced.counts,
        "shortfall": balanced.shortfall,
    });
    stage.finish()
}

pub fn train_student_stage(m: &Manifest, name: &str, allow_mismatch: bool) -> CliResult<RunLog> {
    let cfg = &m.config.student;
    let mut stage = Stage::new(m, &format!("train-student-{name}"), &student_hash(m, cfg), cfg.seed);
    let vocab = load_vocab(m, &mut stage)?;
    let data_path = stage.input(&m.annotated_path())?;
    let data = load_annotated(&data_path)?;
    let teacher = match cfg.init {
        StudentInit::FromTeacher => {
            let ck = stage.input(&m.teacher_path())?;
            Some(load_checkpoint(&ck, &teacher_hash(m), &vocab, allow_mismatch)?)
        }
        StudentInit::FromScratch => None,
    };
    let trained = train_student(&data, &vocab, cfg, teacher.as_ref())?;
    let ck = stage.output(m.student_path(name));
    save_checkpoint(&ck, &trained.model, &vocab, &student_hash(m, cfg))?;
    let report = stage.output(m.artifact(&format!("{name}_report.json")));
    write_json(&report, &trained.report)?;
    stage.finish()
}

/// Checkpoint path and expected config hash for a model name.
fn model_source(m: &Manifest, model: &str) -> (PathBuf, String) {
    if model == "teacher" {
        (m.teacher_path(), teacher_hash(m))
    } else {
        (m.student_path(model), student_hash(m, &m.config.student))
    }
}

pub fn score_stage(m: &Manifest, model: &str, allow_mismatch: bool) -> CliResult<RunLog> {
    let mut stage = Stage::new(m, &format!("score-{model}"), &m.config.parallelism, 0);
    let vocab = load_vocab(m, &mut stage)?;
    let (path, expected) = model_source(m, model);
    let ck = stage.input(&path)?;
    let net = load_checkpoint(&ck, &expected, &vocab, allow_mismatch)?;
    let benchmarks = load_inputs_benchmarks(m, &mut stage)?;
    for (domain, records) in &benchmarks {
        let pairs: Vec<ContextResponsePair> = records.iter().map(|r| r.pair.clone()).collect();
        let scores = score_batch(&net, &vocab, &pairs, m.config.parallelism)?;
        let out = stage.output(m.scores_dir(model).join(format!("{domain}.jsonl")));
        save_scores(&out, &scores)?;
    }
    stage.finish()
}

pub fn evaluate_stage(m: &Manifest, models: &[String]) -> CliResult<(RunLog, Vec<(String, CorrelationReport)>)> {
    let mut stage = Stage::new(m, "evaluate", &models, 0);
    let benchmarks = load_inputs_benchmarks(m, &mut stage)?;
    let mut columns = Vec::new();
    for model in models {
        let mut scores: BTreeMap<String, Vec<MetricScore>> = BTreeMap::new();
        for domain in benchmarks.keys() {
            let p = stage.input(&m.scores_dir(model).join(format!("{domain}.jsonl")))?;
            scores.insert(domain.clone(), load_scores(&p)?);
        }
        columns.push((model.clone(), report_from_scores(&benchmarks, &scores)?));
    }
    let json_path = stage.output(m.artifact("report.json"));
    let as_map: BTreeMap<&str, &CorrelationReport> = columns.iter().map(|(k, v)| (k.as_str(), v)).collect();
    write_json(&json_path, &as_map)?;
    let txt_path = stage.output(m.artifact("report.txt"));
    write_text(&txt_path, &render_table(&columns))?;
    Ok((stage.finish()?, columns))
}

/// Check that every declared input exists and parses.
pub fn validate_data_stage(m: &Manifest) -> CliResult<RunLog> {
    let mut stage = Stage::new(m, "validate-data", &m.paths, 0);
    let base = load_inputs_base(m, &mut stage)?;
    let present: std::collections::BTreeSet<_> = base.iter().map(|p| p.label).collect();
    if present.len() < 3 {
        return Err(Error::MissingClasses(
            crate::corpus::PairLabel::ALL.into_iter().filter(|l| !present.contains(l)).collect(),
        )
        .into());
    }
    let dialogues = load_inputs_dialogues(m, &mut stage)?;
    let benchmarks = load_inputs_benchmarks(m, &mut stage)?;
    for (domain, records) in &benchmarks {
        if records.len() < crate::evalharness::MIN_BENCHMARK_SIZE {
            return Err(invalid(format!("benchmark {domain} has only {} records", records.len())));
        }
    }
    providers(m, &mut stage)?;
    stage.details = serde_json::json!({
        "base_pairs": base.len(),
        "dialogues": dialogues.len(),
        "benchmark_records": benchmarks.values().map(Vec::len).sum::<usize>(),
    });
    stage.finish()
}

#[derive(Debug, Parser)]
#[command(name = "mdd-eval", version, about = "Self-trained multi-domain dialogue response evaluator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pipeline manifest (TOML).
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Override a manifest value, e.g. `--set teacher.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Accept checkpoints whose recorded config hash differs from the manifest.
    #[arg(long)]
    pub allow_config_mismatch: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary and train the teacher on the labeled base set.
    TrainTeacher(Common),
    /// Train the infiller and build the augmented multi-domain pool.
    Augment(Common),
    /// Annotate the pool with the teacher, then filter and balance it.
    PseudoLabel(Common),
    /// Train a student on the annotated data.
    TrainStudent {
        #[command(flatten)]
        common: Common,
        /// Artifact name for the checkpoint.
        #[arg(long, default_value = "student")]
        name: String,
    },
    /// Score every benchmark with a trained model.
    Score {
        #[command(flatten)]
        common: Common,
        /// `teacher` or a student name.
        #[arg(long, default_value = "student")]
        model: String,
    },
    /// Correlate persisted scores with human judgments.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Models whose scores to report, in column order.
        #[arg(long, value_delimiter = ',', default_value = "teacher,student")]
        models: Vec<String>,
    },
    /// Check that all declared inputs exist and parse.
    ValidateData(Common),
    /// Write the bundled synthetic corpus and a matching manifest to a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let load = |c: &Common| Manifest::load(&c.manifest, &c.sets);
    let log = match cli.command {
        Command::TrainTeacher(c) => train_teacher_stage(&load(&c)?)?,
        Command::Augment(c) => augment_stage(&load(&c)?)?,
        Command::PseudoLabel(c) => pseudo_label_stage(&load(&c)?, c.allow_config_mismatch)?,
        Command::TrainStudent { common, name } => train_student_stage(&load(&common)?, &name, common.allow_config_mismatch)?,
        Command::Score { common, model } => score_stage(&load(&common)?, &model, common.allow_config_mismatch)?,
        Command::Evaluate { common, models } => {
            let (log, columns) = evaluate_stage(&load(&common)?, &models)?;
            print!("{}", render_table(&columns));
            log
        }
        Command::ValidateData(c) => validate_data_stage(&load(&c)?)?,
        Command::Synth { out } => {
            write_synthetic(&out)?;
            println!("wrote {}", out.display());
            return Ok(());
        }
    };
    println!("{}", serde_json::to_string_pretty(&log).map_err(Error::from)?);
    Ok(())
}

/// Generate the default synthetic corpus under `dir` with `manifest.toml`.
pub fn write_synthetic(dir: &Path) -> CliResult<()> {
    let corpus = crate::synthetic::generate(&crate::synthetic::SyntheticConfig::default())?;
    corpus.write_to(dir)?;
    write_text(&dir.join("manifest.toml"), &default_manifest_text(&corpus.config.domains))?;
    Ok(())
}

/// Manifest for a directory laid out by [`crate::synthetic::SyntheticCorpus::write_to`].
pub fn default_manifest_text(domains: &[String]) -> String {
    let config = toml::Table::try_from(PipelineConfig::default()).expect("config serializes");
    // bare keys must precede the first table header
    let (scalars, tables): (toml::Table, toml::Table) = config.into_iter().partition(|(_, v)| !v.is_table());
    let mut s = String::new();
    s.push_str("# Desk-scale pipeline over the synthetic corpus. Paths are relative to this file.\n\n");
    s.push_str(&toml::to_string(&scalars).expect("scalars serialize"));
    s.push_str("\n[paths]\nbase = \"base.jsonl\"\n");
    s.push_str(&format!("base_domain = \"{}\"\nout_dir = \"runs/default\"\n", domains[0]));
    s.push_str("providers = [\n");
    s.push_str("  { name = \"synonyms\", kind = \"paraphrase\", table = \"paraphrase.json\" },\n");
    s.push_str("  { name = \"drift\", kind = \"generative\", table = \"generative.json\" },\n]\n\n");
    s.push_str("[paths.corpora]\n");
    for d in domains {
        s.push_str(&format!("{d} = \"corpora/{d}.jsonl\"\n"));
    }
    s.push_str("\n[paths.benchmarks]\n");
    for d in domains {
        s.push_str(&format!("{d} = \"benchmarks/{d}.jsonl\"\n"));
    }
    s.push('\n');
    s.push_str(&toml::to_string(&tables).expect("tables serialize"));
    s
}
