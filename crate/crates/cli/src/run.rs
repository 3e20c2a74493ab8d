//! Subcommand execution: output locking, atomic artifact promotion and
//! run manifests.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use xling_core::corpus::{balance_by_class, corpus_stats, filter_corpus, parse_documents, InputFormat};
use xling_core::encoder::{init_encoder, read_checkpoint, sidecar, write_checkpoint};
use xling_core::evalsts::{evaluate_sts, load_sts};
use xling_core::mining::mock::{MockGenerator, MockJudge};
use xling_core::mining::{mine_triplets, parse_triplets, write_triplets, GenerationClient, JudgeClient};
use xling_core::tokaudit::{coverage_report, load_vocab, write_coverage_csv};
use xling_core::trainer::train;

use crate::config::{ClientSection, LoadedConfig};
use crate::error::CliError;
use crate::http::HttpClient;
use crate::report;

pub const FILTERED: &str = "filtered.jsonl";
pub const CORPUS_STATS: &str = "corpus_stats.csv";
pub const TRIPLETS: &str = "triplets.jsonl";
pub const MINING_STATS: &str = "mining_stats.csv";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const CHECKPOINT_META: &str = "checkpoint.json";
pub const TRAIN_METRICS: &str = "train_metrics.csv";
pub const EVAL_RESULTS: &str = "eval_results.csv";
pub const COVERAGE: &str = "korean_coverage.csv";
pub const RHO_TABLE: &str = "rho_before_after.csv";
pub const DELTA_TABLE: &str = "delta_summary.csv";
pub const COVERAGE_TABLE: &str = "coverage_summary.csv";

const LOCK_FILE: &str = ".xling-adapt.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Filter,
    Mine,
    Train,
    Eval,
    Tokaudit,
    Report,
}

impl Command {
    pub const PIPELINE: [Command; 6] = [
        Command::Filter,
        Command::Mine,
        Command::Train,
        Command::Eval,
        Command::Tokaudit,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Filter => "filter",
            Command::Mine => "mine",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Tokaudit => "tokaudit",
            Command::Report => "report",
        }
    }

    pub fn manifest_name(self) -> String {
        format!("manifest_{}.json", self.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Where a recorded input lives: relative to the config file or inside
/// the output directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    Config,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub base: Base,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub name: String,
    pub sha256: String,
}

/// Written next to the artifacts of each subcommand. Holds no timestamps
/// or absolute paths, so reruns reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: Command,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
}

/// Shared state of one subcommand run.
pub struct RunContext {
    pub loaded: LoadedConfig,
    pub out_dir: PathBuf,
}

/// Accumulates inputs and in-memory artifacts until the run succeeds.
struct Stage<'a> {
    ctx: &'a RunContext,
    inputs: Vec<InputRecord>,
    outputs: Vec<(String, Vec<u8>)>,
}

impl<'a> Stage<'a> {
    fn new(ctx: &'a RunContext) -> Self {
        Stage {
            ctx,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Reads an input named in the config and records its digest.
    fn read_config_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let resolved = self.ctx.loaded.resolve(path);
        let bytes = fs::read(&resolved).map_err(|e| CliError::data(format!("cannot read {}: {e}", resolved.display())))?;
        self.record(path.display().to_string(), Base::Config, &bytes);
        Ok(bytes)
    }

    /// Reads an artifact of an earlier subcommand and records its digest.
    fn read_output_input(&mut self, name: &str, producer: Command) -> Result<Vec<u8>, CliError> {
        let path = self.ctx.out_dir.join(name);
        let bytes = fs::read(&path).map_err(|e| {
            CliError::data(format!(
                "cannot read {} (run `{}` first): {e}",
                path.display(),
                producer.as_str()
            ))
        })?;
        self.record(name.to_string(), Base::Output, &bytes);
        Ok(bytes)
    }

    fn record(&mut self, path: String, base: Base, bytes: &[u8]) {
        self.inputs.push(InputRecord {
            path,
            base,
            sha256: sha256_hex(bytes),
        });
    }

    fn emit(&mut self, name: &str, bytes: Vec<u8>) {
        self.outputs.push((name.to_string(), bytes));
    }

    /// Writes every artifact plus the manifest into a temp directory, then
    /// renames each into place. Nothing is touched on earlier failure.
    fn commit(self, command: Command) -> Result<Vec<PathBuf>, CliError> {
        let manifest = RunManifest {
            subcommand: command,
            config_sha256: config_digest(&self.ctx.loaded)?,
            seed: self.ctx.loaded.config.seed,
            versions: versions(),
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|(name, bytes)| OutputRecord {
                    name: name.clone(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
        };
        let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        manifest_bytes.push(b'\n');
        let mut files = self.outputs;
        files.push((command.manifest_name(), manifest_bytes));

        let tmp = self.ctx.out_dir.join(format!(".tmp-{}-{}", command.as_str(), std::process::id()));
        let io = |what: &str, p: &Path, e: std::io::Error| CliError::runtime(format!("{what} {}: {e}", p.display()));
        fs::create_dir_all(&tmp).map_err(|e| io("cannot create", &tmp, e))?;
        for (name, bytes) in &files {
            let p = tmp.join(name);
            let mut f = fs::File::create(&p).map_err(|e| io("cannot create", &p, e))?;
            f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io("cannot write", &p, e))?;
        }
        let mut written = Vec::new();
        for (name, _) in &files {
            let dest = self.ctx.out_dir.join(name);
            fs::rename(tmp.join(name), &dest).map_err(|e| io("cannot promote", &dest, e))?;
            written.push(dest);
        }
        fs::remove_dir(&tmp).map_err(|e| io("cannot remove", &tmp, e))?;
        Ok(written)
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("xling-adapt".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("xling-core".to_string(), xling_core::VERSION.to_string()),
    ])
}

/// Digest of the effective config. The output directory is excluded so the
/// same run into another directory produces the same manifest.
pub fn config_digest(loaded: &LoadedConfig) -> Result<String, CliError> {
    let mut value = serde_json::to_value(&loaded.config).expect("config serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output_dir");
    }
    Ok(sha256_hex(&serde_json::to_vec(&value).expect("value serializes")))
}

/// Exclusive lock on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::runtime(format!("cannot create output directory {}: {e}", out_dir.display())))?;
        let path = out_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::runtime(format!(
                "{} is locked by another run; remove {} if no run is active",
                out_dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::runtime(format!("cannot create lock {}: {e}", path.display()))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Runs one subcommand under the output lock and returns the written paths.
pub fn dispatch(command: Command, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let _lock = OutputLock::acquire(&ctx.out_dir)?;
    let mut stage = Stage::new(ctx);
    let summary = match command {
        Command::Filter => run_filter(&mut stage)?,
        Command::Mine => run_mine(&mut stage)?,
        Command::Train => run_train(&mut stage)?,
        Command::Eval => run_eval(&mut stage)?,
        Command::Tokaudit => run_tokaudit(&mut stage)?,
        Command::Report => run_report(&mut stage)?,
    };
    let written = stage.commit(command)?;
    eprintln!("{}: {summary}", command.as_str());
    Ok(written)
}

fn run_filter(stage: &mut Stage) -> Result<String, CliError> {
    let cfg = &stage.ctx.loaded.config;
    let bytes = stage.read_config_input(&cfg.corpus.input)?;
    let docs = parse_documents(&bytes, cfg.corpus.format).map_err(|e| CliError::from(e).context("corpus"))?;
    let read = docs.len();
    let filter = cfg.filter_config();
    let outcome = filter_corpus(docs, &filter)?;
    let mut stats = outcome.stats;
    let kept = if cfg.corpus.balance && !outcome.kept.is_empty() {
        let balanced = balance_by_class(&outcome.kept, filter.seed)?;
        let dropped = std::mem::take(&mut stats.dropped_by_reason);
        stats = corpus_stats(&balanced);
        stats.dropped_by_reason = dropped;
        balanced
    } else {
        outcome.kept
    };
    stage.emit(FILTERED, to_bytes(|b| xling_core::corpus::write_documents(b, &kept)));
    stage.emit(CORPUS_STATS, to_bytes(|b| stats.write_csv(b)));
    Ok(format!("{read} records read, {} kept", kept.len()))
}

fn run_mine(stage: &mut Stage) -> Result<String, CliError> {
    let cfg = stage.ctx.loaded.config.clone();
    let bytes = stage.read_output_input(FILTERED, Command::Filter)?;
    let docs = parse_documents(&bytes, InputFormat::Jsonl)?;
    let mining = cfg.mining_config();
    let out = match &cfg.mining.client {
        ClientSection::Mock {} => {
            let gen = MockGenerator::new(mining.seed);
            mine_triplets(&docs, &gen, &MockJudge, &mining)?
        }
        ClientSection::Http {
            base_url,
            auth_token_env,
            model,
            judge_model,
            timeout_ms,
        } => {
            let token = match auth_token_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    CliError::new(
                        crate::error::ErrorKind::Client,
                        format!("environment variable `{var}` named by /mining/client/auth_token_env is not set"),
                    )
                })?),
                None => None,
            };
            let client = HttpClient::new(
                base_url,
                token,
                model.clone(),
                judge_model.clone(),
                Duration::from_millis(*timeout_ms),
            );
            let gen: &dyn GenerationClient = &client;
            let judge: &dyn JudgeClient = &client;
            mine_triplets(&docs, gen, judge, &mining)?
        }
    };
    stage.emit(TRIPLETS, to_bytes(|b| write_triplets(b, &out.triplets)));
    stage.emit(MINING_STATS, to_bytes(|b| out.stats.write_csv(b)));
    Ok(format!("{} documents, {} triplets", docs.len(), out.triplets.len()))
}

fn run_train(stage: &mut Stage) -> Result<String, CliError> {
    let cfg = stage.ctx.loaded.config.clone();
    let bytes = stage.read_output_input(TRIPLETS, Command::Mine)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::data(format!("{TRIPLETS} is not UTF-8")))?;
    let triplets =
        parse_triplets(&text).map_err(|(line, msg)| CliError::data(format!("{TRIPLETS} line {line}: {msg}")))?;
    let params = init_encoder(cfg.encoder_config(), cfg.encoder_seed())?;
    let train_cfg = cfg.train_config();
    let (trained, state, metrics) = train(&triplets, params, &train_cfg)?;
    let checkpoint = {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &trained)?;
        buf
    };
    let mut meta = serde_json::to_vec_pretty(&sidecar(&trained)).expect("sidecar serializes");
    meta.push(b'\n');
    stage.emit(CHECKPOINT, checkpoint);
    stage.emit(CHECKPOINT_META, meta);
    stage.emit(TRAIN_METRICS, to_bytes(|b| metrics.write_csv(b, &train_cfg)));
    let last = metrics.steps.last().map(|s| s.loss).unwrap_or(f64::NAN);
    Ok(format!("{} triplets, {} steps, final batch loss {last:.4}", triplets.len(), state.step))
}

fn run_eval(stage: &mut Stage) -> Result<String, CliError> {
    let cfg = stage.ctx.loaded.config.clone();
    if cfg.eval.datasets.is_empty() {
        return Err(CliError::config("/eval/datasets", "no datasets configured"));
    }
    let bytes = stage.read_output_input(CHECKPOINT, Command::Train)?;
    let after = read_checkpoint(bytes.as_slice())?;
    let before = init_encoder(after.config, after.seed)?;
    let mut rows = Vec::new();
    for (i, d) in cfg.eval.datasets.iter().enumerate() {
        stage.read_config_input(&d.path)?;
        let pairs = load_sts(&stage.ctx.loaded.resolve(&d.path))
            .map_err(|e| CliError::from(e).context(&format!("/eval/datasets/{i} ({})", d.suite)))?;
        let b = evaluate_sts(&d.suite, &pairs, &before).map_err(|e| CliError::from(e).context(&d.suite))?;
        let a = evaluate_sts(&d.suite, &pairs, &after).map_err(|e| CliError::from(e).context(&d.suite))?;
        rows.push(report::EvalRow {
            model: cfg.eval.model.clone(),
            suite: d.suite.clone(),
            n_pairs: pairs.len(),
            spearman_before: b.spearman,
            spearman_after: a.spearman,
            pearson_before: b.pearson,
            pearson_after: a.pearson,
        });
    }
    stage.emit(EVAL_RESULTS, to_bytes(|b| report::write_eval_results(b, &rows)));
    let parts: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.4} -> {:.4}", r.suite, r.spearman_before, r.spearman_after))
        .collect();
    Ok(parts.join("; "))
}

fn run_tokaudit(stage: &mut Stage) -> Result<String, CliError> {
    let cfg = stage.ctx.loaded.config.clone();
    if cfg.tokaudit.vocabs.is_empty() {
        return Err(CliError::config("/tokaudit/vocabs", "no vocabularies configured"));
    }
    let audit = cfg.audit_config();
    let mut rows = Vec::new();
    for (i, v) in cfg.tokaudit.vocabs.iter().enumerate() {
        stage.read_config_input(&v.path)?;
        let vocab = load_vocab(&stage.ctx.loaded.resolve(&v.path), v.format)
            .map_err(|e| CliError::from(e).context(&format!("/tokaudit/vocabs/{i} ({})", v.model)))?;
        let r = coverage_report(&vocab, &audit).map_err(|e| CliError::from(e).context(&v.model))?;
        rows.push((v.model.clone(), r));
    }
    stage.emit(COVERAGE, to_bytes(|b| write_coverage_csv(b, &rows)));
    let parts: Vec<String> = rows.iter().map(|(m, r)| format!("{m} {}%", r.pct_display())).collect();
    Ok(parts.join("; "))
}

fn run_report(stage: &mut Stage) -> Result<String, CliError> {
    let cfg = stage.ctx.loaded.config.clone();
    let mut scores = report::ScoreTable::default();
    let eval_path = stage.ctx.out_dir.join(EVAL_RESULTS);
    if eval_path.is_file() {
        let bytes = stage.read_output_input(EVAL_RESULTS, Command::Eval)?;
        scores.merge_eval_results(&bytes)?;
    }
    if let Some(path) = &cfg.report.external_scores {
        let bytes = stage.read_config_input(path)?;
        scores.merge_external(&bytes)?;
    }
    if scores.is_empty() {
        return Err(CliError::data(format!(
            "no scores to report: {} is missing and /report/external_scores is not set",
            eval_path.display()
        )));
    }
    let coverage = if stage.ctx.out_dir.join(COVERAGE).is_file() {
        let bytes = stage.read_output_input(COVERAGE, Command::Tokaudit)?;
        Some(report::parse_coverage(&bytes)?)
    } else {
        None
    };
    stage.emit(RHO_TABLE, to_bytes(|b| scores.write_rho_table(b)));
    stage.emit(DELTA_TABLE, to_bytes(|b| scores.write_delta_table(b, coverage.as_ref())));
    if let Some(cov) = &coverage {
        stage.emit(COVERAGE_TABLE, to_bytes(|b| report::write_coverage_table(b, cov)));
    }
    Ok(format!("{} models", scores.models().len()))
}

/// Result of re-checking the manifests in an output directory.
#[derive(Debug, Default)]
pub struct Verification {
    pub manifests: usize,
    pub mismatches: Vec<String>,
}

/// Recomputes every digest recorded in the manifests found in the output
/// directory, including the config digest.
pub fn verify(ctx: &RunContext) -> Result<Verification, CliError> {
    let mut report = Verification::default();
    let config_sha = config_digest(&ctx.loaded)?;
    for command in Command::PIPELINE {
        let path = ctx.out_dir.join(command.manifest_name());
        let Ok(bytes) = fs::read(&path) else { continue };
        let manifest: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::data(format!("{}: malformed manifest: {e}", path.display())))?;
        report.manifests += 1;
        let name = command.as_str();
        if manifest.config_sha256 != config_sha {
            report.mismatches.push(format!("{name}: config digest differs"));
        }
        let digest_of = |p: &Path| fs::read(p).map(|b| sha256_hex(&b)).ok();
        for input in &manifest.inputs {
            let p = match input.base {
                Base::Config => ctx.loaded.resolve(Path::new(&input.path)),
                Base::Output => ctx.out_dir.join(&input.path),
            };
            if digest_of(&p).as_deref() != Some(input.sha256.as_str()) {
                report.mismatches.push(format!("{name}: input {} changed or missing", input.path));
            }
        }
        for output in &manifest.outputs {
            if digest_of(&ctx.out_dir.join(&output.name)).as_deref() != Some(output.sha256.as_str()) {
                report.mismatches.push(format!("{name}: output {} changed or missing", output.name));
            }
        }
    }
    if report.manifests == 0 {
        return Err(CliError::data(format!("no manifests found in {}", ctx.out_dir.display())));
    }
    Ok(report)
}
