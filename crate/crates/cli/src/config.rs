//! Pipeline configuration: one JSON file shared by every subcommand.
//!
//! Absent optional keys take the library defaults, unknown keys are
//! rejected, and every error carries a JSON pointer. Relative paths are
//! resolved against the directory holding the config file. Section `seed`
//! fields fall back to the global `seed`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use xling_core::corpus::{FilterConfig, InputFormat};
use xling_core::encoder::EncoderConfig;
use xling_core::mining::MiningConfig;
use xling_core::tokaudit::{AuditConfig, VocabFormat};
use xling_core::trainer::{TrainConfig, TrainError};

use crate::error::CliError;

/// JSON Schema for the config file.
pub const SCHEMA: &str = include_str!("../config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub mining: MiningSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub tokaudit: TokauditSection,
    #[serde(default)]
    pub report: ReportSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub input: PathBuf,
    #[serde(default = "default_format")]
    pub format: InputFormat,
    #[serde(default)]
    pub filter: FilterSection,
    /// Down-sample every source domain to the smallest one after filtering.
    #[serde(default)]
    pub balance: bool,
}

fn default_format() -> InputFormat {
    InputFormat::Jsonl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub min_tokens: u64,
    pub max_tokens: u64,
    pub max_html_marker_ratio: f64,
    pub max_typo_entropy: f64,
    pub seed: Option<u64>,
}

impl Default for FilterSection {
    fn default() -> Self {
        let d = FilterConfig::default();
        FilterSection {
            min_tokens: d.min_tokens,
            max_tokens: d.max_tokens,
            max_html_marker_ratio: d.max_html_marker_ratio,
            max_typo_entropy: d.max_typo_entropy,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningSection {
    pub neg_threshold: f64,
    pub pos_threshold: f64,
    pub positive_mode_ratio: f64,
    pub max_inflight: usize,
    pub retry_limit: u32,
    pub backoff_base_ms: u64,
    pub seed: Option<u64>,
    pub client: ClientSection,
}

impl Default for MiningSection {
    fn default() -> Self {
        let d = MiningConfig::default();
        MiningSection {
            neg_threshold: d.neg_threshold,
            pos_threshold: d.pos_threshold,
            positive_mode_ratio: d.positive_mode_ratio,
            max_inflight: d.max_inflight,
            retry_limit: d.retry_limit,
            backoff_base_ms: d.backoff_base_ms,
            seed: None,
            client: ClientSection::Mock {},
        }
    }
}

/// Generation and judge backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientSection {
    /// Deterministic lexicon-backed mocks.
    Mock {},
    /// JSON-over-HTTP service. The token is read at run time from the
    /// environment variable named by `auth_token_env`.
    Http {
        base_url: String,
        #[serde(default)]
        auth_token_env: Option<String>,
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        judge_model: Option<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub dim: usize,
    pub num_buckets: usize,
    pub ngram: usize,
    pub seed: Option<u64>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let d = EncoderConfig::default();
        EncoderSection {
            dim: d.dim,
            num_buckets: d.num_buckets,
            ngram: d.ngram,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub tau: f64,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: Option<u64>,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainerSection {
            tau: d.tau,
            base_lr: d.base_lr,
            warmup_fraction: d.warmup_fraction,
            batch_size: d.batch_size,
            epochs: d.epochs,
            weight_decay: d.weight_decay,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Row label for this run in the reports.
    pub model: String,
    pub datasets: Vec<DatasetEntry>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            model: "reference-encoder".into(),
            datasets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub suite: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokauditSection {
    pub vocabs: Vec<VocabEntry>,
    pub strip_prefixes: Vec<String>,
    pub include_jamo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub model: String,
    pub path: PathBuf,
    #[serde(default = "default_vocab_format")]
    pub format: VocabFormat,
}

fn default_vocab_format() -> VocabFormat {
    VocabFormat::Lines
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Extra `model,suite,before,after` rows merged into the reports,
    /// e.g. scores measured outside this toolkit.
    pub external_scores: Option<PathBuf>,
}

/// A parsed and validated config with its location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

impl PipelineConfig {
    pub fn filter_config(&self) -> FilterConfig {
        let f = &self.corpus.filter;
        FilterConfig {
            min_tokens: f.min_tokens,
            max_tokens: f.max_tokens,
            max_html_marker_ratio: f.max_html_marker_ratio,
            max_typo_entropy: f.max_typo_entropy,
            seed: f.seed.unwrap_or(self.seed),
        }
    }

    pub fn mining_config(&self) -> MiningConfig {
        let m = &self.mining;
        MiningConfig {
            neg_threshold: m.neg_threshold,
            pos_threshold: m.pos_threshold,
            positive_mode_ratio: m.positive_mode_ratio,
            max_inflight: m.max_inflight,
            retry_limit: m.retry_limit,
            backoff_base_ms: m.backoff_base_ms,
            seed: m.seed.unwrap_or(self.seed),
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.encoder.dim,
            num_buckets: self.encoder.num_buckets,
            ngram: self.encoder.ngram,
        }
    }

    pub fn encoder_seed(&self) -> u64 {
        self.encoder.seed.unwrap_or(self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.trainer;
        TrainConfig {
            tau: t.tau,
            base_lr: t.base_lr,
            warmup_fraction: t.warmup_fraction,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            seed: t.seed.unwrap_or(self.seed),
        }
    }

    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            strip_prefixes: self.tokaudit.strip_prefixes.clone(),
            include_jamo: self.tokaudit.include_jamo,
        }
    }

    /// Applies per-module invariants; paths are checked by [`check_paths`].
    pub fn validate(&self) -> Result<(), CliError> {
        self.filter_config()
            .validate()
            .map_err(|e| CliError::config("/corpus/filter", e.to_string()))?;
        self.mining_config()
            .validate()
            .map_err(|e| CliError::config("/mining", e.to_string()))?;
        if let ClientSection::Http { base_url, auth_token_env, .. } = &self.mining.client {
            if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
                return Err(CliError::config("/mining/client/base_url", "must start with http:// or https://"));
            }
            if auth_token_env.as_deref().is_some_and(|v| v.trim().is_empty()) {
                return Err(CliError::config("/mining/client/auth_token_env", "must name an environment variable"));
            }
        }
        self.encoder_config()
            .validate()
            .map_err(|e| CliError::config("/encoder", e.to_string()))?;
        self.train_config().validate().map_err(|e| match e {
            TrainError::Temperature(_) => CliError::config("/trainer/tau", e.to_string()),
            other => CliError::config("/trainer", other.to_string()),
        })?;
        check_labels(
            "/eval/datasets",
            self.eval.datasets.iter().map(|d| d.suite.as_str()),
            "suite",
        )?;
        check_labels("/eval/model", std::iter::once(self.eval.model.as_str()), "model")?;
        check_labels(
            "/tokaudit/vocabs",
            self.tokaudit.vocabs.iter().map(|v| v.model.as_str()),
            "model",
        )?;
        Ok(())
    }
}

/// Labels end up as CSV cells, so they must be non-empty, unique and free
/// of separators.
fn check_labels<'a>(pointer: &str, labels: impl Iterator<Item = &'a str>, what: &str) -> Result<(), CliError> {
    let mut seen = BTreeSet::new();
    for (i, label) in labels.enumerate() {
        let at = if pointer.ends_with("/model") {
            pointer.to_string()
        } else {
            format!("{pointer}/{i}/{what}")
        };
        if label.trim().is_empty() || label.contains([',', '\n', '\r', '"']) {
            return Err(CliError::config(at, format!("`{label}` must be non-empty without commas, quotes or newlines")));
        }
        if !seen.insert(label) {
            return Err(CliError::config(at, format!("duplicate {what} `{label}`")));
        }
    }
    Ok(())
}

/// Converts a serde path such as `eval.datasets[0].path` to `/eval/datasets/0/path`.
fn pointer_from_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push('/');
                out.push_str(&key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse_config_str(text: &str) -> Result<PipelineConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: PipelineConfig =
        serde_path_to_error::deserialize(de).map_err(|e| CliError::config(pointer_from_path(e.path()), e.inner().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("/", format!("cannot read config {}: {e}", path.display())))?;
    let config = parse_config_str(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = LoadedConfig { config, base_dir };
    check_paths(&loaded)?;
    Ok(loaded)
}

/// Every input path named in the config must exist.
pub fn check_paths(loaded: &LoadedConfig) -> Result<(), CliError> {
    let c = &loaded.config;
    let mut paths: Vec<(String, &Path)> = vec![("/corpus/input".into(), c.corpus.input.as_path())];
    for (i, d) in c.eval.datasets.iter().enumerate() {
        paths.push((format!("/eval/datasets/{i}/path"), d.path.as_path()));
    }
    for (i, v) in c.tokaudit.vocabs.iter().enumerate() {
        paths.push((format!("/tokaudit/vocabs/{i}/path"), v.path.as_path()));
    }
    if let Some(p) = &c.report.external_scores {
        paths.push(("/report/external_scores".into(), p.as_path()));
    }
    for (pointer, path) in paths {
        let resolved = loaded.resolve(path);
        if !resolved.is_file() {
            return Err(CliError::config(pointer, format!("no such file: {}", resolved.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(r#"{"corpus": {"input": "corpus.jsonl"}}"#).unwrap();
        assert_eq!(c.train_config().tau, 0.05);
        assert_eq!(c.mining_config().neg_threshold, 8.0);
        assert_eq!(c.mining_config().pos_threshold, 9.0);
        assert_eq!(c.filter_config().min_tokens, 128);
        assert_eq!(c.mining.client, ClientSection::Mock {});
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_name_the_key_and_path() {
        let e = parse_config_str(r#"{"corpus": {"input": "c"}, "trainer": {"epoochs": 2}}"#).unwrap_err();
        assert_eq!(e.pointer.as_deref(), Some("/trainer/epoochs"));
        assert!(e.message.contains("epoochs"), "{}", e.message);
        let e = parse_config_str(r#"{"corpus": {"input": "c"}, "eval": {"datasets": [{"suite": "a", "path": "p", "x": 1}]}}"#)
            .unwrap_err();
        assert_eq!(e.pointer.as_deref(), Some("/eval/datasets/0/x"));
    }

    #[test]
    fn negative_tau_is_rejected() {
        let e = parse_config_str(r#"{"corpus": {"input": "c"}, "trainer": {"tau": -1}}"#).unwrap_err();
        assert_eq!(e.pointer.as_deref(), Some("/trainer/tau"));
        assert_eq!(e.kind.exit_code(), 2);
    }

    #[test]
    fn type_errors_carry_pointers() {
        let e = parse_config_str(r#"{"corpus": {"input": "c", "filter": {"min_tokens": "many"}}}"#).unwrap_err();
        assert_eq!(e.pointer.as_deref(), Some("/corpus/filter/min_tokens"));
        let e = parse_config_str(r#"{"seed": 1}"#).unwrap_err();
        assert!(e.message.contains("corpus"));
    }

    #[test]
    fn section_seeds_fall_back_to_global() {
        let c = parse_config_str(r#"{"seed": 9, "corpus": {"input": "c"}, "trainer": {"seed": 4}}"#).unwrap();
        assert_eq!(c.train_config().seed, 4);
        assert_eq!(c.mining_config().seed, 9);
        assert_eq!(c.encoder_seed(), 9);
    }

    #[test]
    fn http_client_section() {
        let c = parse_config_str(
            r#"{"corpus": {"input": "c"}, "mining": {"client": {"kind": "http", "base_url": "http://127.0.0.1:9", "auth_token_env": "TOKEN"}}}"#,
        )
        .unwrap();
        assert!(matches!(c.mining.client, ClientSection::Http { timeout_ms: 30_000, .. }));
        let e = parse_config_str(r#"{"corpus": {"input": "c"}, "mining": {"client": {"kind": "http", "base_url": "ftp://x"}}}"#)
            .unwrap_err();
        assert_eq!(e.pointer.as_deref(), Some("/mining/client/base_url"));
        let e = parse_config_str(r#"{"corpus": {"input": "c"}, "mining": {"client": {"kind": "mock", "extra": 1}}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn duplicate_suites_are_rejected() {
        let e = parse_config_str(
            r#"{"corpus": {"input": "c"}, "eval": {"datasets": [{"suite": "A", "path": "x"}, {"suite": "A", "path": "y"}]}}"#,
        )
        .unwrap_err();
        assert_eq!(e.pointer.as_deref(), Some("/eval/datasets/1/suite"));
    }

    /// Walks the serialized defaults alongside the schema: the same keys on
    /// both sides, and every schema default equal to the library default.
    fn check_against_schema(value: &serde_json::Value, schema: &serde_json::Value, at: &str) {
        use serde_json::Value;
        let Some(props) = schema.get("properties").and_then(Value::as_object) else { return };
        let obj = value.as_object().unwrap_or_else(|| panic!("{at}: expected an object"));
        let keys: BTreeSet<&String> = obj.keys().collect();
        let documented: BTreeSet<&String> = props.keys().collect();
        assert_eq!(keys, documented, "{at}: schema and config keys differ");
        for (key, sub) in props {
            let v = &obj[key];
            let path = format!("{at}/{key}");
            if let Some(d) = sub.get("default") {
                match (d.as_f64(), v.as_f64()) {
                    (Some(a), Some(b)) => assert_eq!(a, b, "{path}"),
                    _ => assert_eq!(d, v, "{path}"),
                }
            }
            check_against_schema(v, sub, &path);
        }
    }

    #[test]
    fn schema_matches_config_defaults() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let config = parse_config_str(r#"{"corpus": {"input": "c"}}"#).unwrap();
        let value = serde_json::to_value(&config).unwrap();
        check_against_schema(&value, &schema, "");
    }
}
