//! Corpus ingestion, quality filtering and class balancing.
//!
//! Records arrive as JSONL or TSV with the fields `id`, `lang`,
//! `source_domain`, `text` and (optionally) `token_count`. Filtering applies
//! three rules in a fixed order (length, HTML markup, character noise) and
//! reports the first one that fails, so drop counts are disjoint.
//!
//! The character-noise rule is a stand-in for a "typo entropy" measure: it
//! is the share of characters outside letters, digits, whitespace and
//! common punctuation. It is closed-form and order-independent, but it is
//! not an entropy estimate.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{split_lines, whitespace_token_count};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record} (line {line}): invalid UTF-8")]
    Utf8 { record: usize, line: usize },
    #[error("record {record} (line {line}): malformed record: {message}")]
    Malformed {
        record: usize,
        line: usize,
        message: String,
    },
    #[error("record {record} (line {line}): missing field `{field}`")]
    MissingField {
        record: usize,
        line: usize,
        field: &'static str,
    },
    #[error("record {record} (line {line}): invalid `{field}`: {message}")]
    InvalidField {
        record: usize,
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("cannot balance an empty corpus")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    Ko,
    En,
}

impl Lang {
    pub const ALL: [Lang; 2] = [Lang::Ko, Lang::En];

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Ko => "ko",
            Lang::En => "en",
        }
    }

    /// The other language of the Korean/English pair.
    pub fn flipped(self) -> Lang {
        match self {
            Lang::Ko => Lang::En,
            Lang::En => Lang::Ko,
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ko" => Ok(Lang::Ko),
            "en" => Ok(Lang::En),
            other => Err(format!("unknown language `{other}` (expected ko or en)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDomain {
    News,
    Disclosure,
    ResearchReport,
    Legal,
}

impl SourceDomain {
    pub const ALL: [SourceDomain; 4] = [
        SourceDomain::News,
        SourceDomain::Disclosure,
        SourceDomain::ResearchReport,
        SourceDomain::Legal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceDomain::News => "news",
            SourceDomain::Disclosure => "disclosure",
            SourceDomain::ResearchReport => "research_report",
            SourceDomain::Legal => "legal",
        }
    }
}

impl fmt::Display for SourceDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceDomain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceDomain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown source domain `{s}` (expected news, disclosure, research_report or legal)"
                )
            })
    }
}

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub lang: Lang,
    pub source_domain: SourceDomain,
    pub text: String,
    pub token_count: u64,
}

impl Document {
    /// Builds a document, counting whitespace tokens when no count is given.
    pub fn new(
        id: impl Into<String>,
        lang: Lang,
        source_domain: SourceDomain,
        text: impl Into<String>,
        token_count: Option<u64>,
    ) -> Self {
        let text = text.into();
        let token_count = token_count.unwrap_or(whitespace_token_count(&text) as u64);
        Document {
            id: id.into(),
            lang,
            source_domain,
            text,
            token_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    Tsv,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(InputFormat::Jsonl),
            "tsv" => Ok(InputFormat::Tsv),
            other => Err(format!("unknown corpus format `{other}` (expected jsonl or tsv)")),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawRecord {
    id: Option<serde_json::Value>,
    lang: Option<String>,
    source_domain: Option<String>,
    text: Option<String>,
    token_count: Option<u64>,
}

impl RawRecord {
    fn into_document(self, record: usize, line: usize) -> Result<Document, CorpusError> {
        let missing = |field| CorpusError::MissingField {
            record,
            line,
            field,
        };
        let invalid = |field, message: String| CorpusError::InvalidField {
            record,
            line,
            field,
            message,
        };
        let id = match self.id.ok_or_else(|| missing("id"))? {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(invalid("id", format!("expected string, got {other}"))),
        };
        let lang: Lang = self
            .lang
            .ok_or_else(|| missing("lang"))?
            .parse()
            .map_err(|m| invalid("lang", m))?;
        let source_domain: SourceDomain = self
            .source_domain
            .ok_or_else(|| missing("source_domain"))?
            .parse()
            .map_err(|m| invalid("source_domain", m))?;
        let text = self.text.ok_or_else(|| missing("text"))?;
        if text.trim().is_empty() {
            return Err(invalid("text", "empty after trimming".into()));
        }
        let doc = Document::new(id, lang, source_domain, text, self.token_count);
        if doc.token_count == 0 {
            return Err(invalid("token_count", "must be at least 1".into()));
        }
        Ok(doc)
    }
}

/// Reads a corpus file. Records come back in file order; the first bad
/// record aborts the load with its 1-based record index.
pub fn load_documents(path: &Path, format: InputFormat) -> Result<Vec<Document>, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_documents(&bytes, format)
}

pub fn parse_documents(bytes: &[u8], format: InputFormat) -> Result<Vec<Document>, CorpusError> {
    match format {
        InputFormat::Jsonl => parse_jsonl(bytes),
        InputFormat::Tsv => parse_tsv(bytes),
    }
}

fn parse_jsonl(bytes: &[u8]) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (line, raw) in split_lines(bytes) {
        let record = line;
        let text = std::str::from_utf8(raw).map_err(|_| CorpusError::Utf8 { record, line })?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: RawRecord =
            serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
                record,
                line,
                message: e.to_string(),
            })?;
        docs.push(rec.into_document(record, line)?);
    }
    Ok(docs)
}

fn parse_tsv(bytes: &[u8]) -> Result<Vec<Document>, CorpusError> {
    let lines = split_lines(bytes);
    let Some(((header_line, header_raw), rows)) = lines.split_first() else {
        return Ok(Vec::new());
    };
    let header = std::str::from_utf8(header_raw).map_err(|_| CorpusError::Utf8 {
        record: 0,
        line: *header_line,
    })?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut docs = Vec::new();
    for (record, (line, raw)) in rows.iter().enumerate() {
        let (record, line) = (record + 1, *line);
        let text = std::str::from_utf8(raw).map_err(|_| CorpusError::Utf8 { record, line })?;
        if text.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = text.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(CorpusError::Malformed {
                record,
                line,
                message: format!("expected {} columns, found {}", columns.len(), cells.len()),
            });
        }
        let mut rec = RawRecord::default();
        for (col, cell) in columns.iter().zip(cells) {
            if cell.is_empty() {
                continue;
            }
            match *col {
                "id" => rec.id = Some(serde_json::Value::String(cell.to_string())),
                "lang" => rec.lang = Some(cell.to_string()),
                "source_domain" => rec.source_domain = Some(cell.to_string()),
                "text" => rec.text = Some(cell.to_string()),
                "token_count" => {
                    rec.token_count = Some(cell.trim().parse().map_err(|_| {
                        CorpusError::InvalidField {
                            record,
                            line,
                            field: "token_count",
                            message: format!("`{cell}` is not a non-negative integer"),
                        }
                    })?)
                }
                _ => {}
            }
        }
        docs.push(rec.into_document(record, line)?);
    }
    Ok(docs)
}

/// Writes documents as JSONL, one object per line.
pub fn write_documents<W: Write>(mut out: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_tokens: u64,
    pub max_tokens: u64,
    pub max_html_marker_ratio: f64,
    /// Upper bound on [`noise_char_ratio`].
    pub max_typo_entropy: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_tokens: 128,
            max_tokens: 4096,
            max_html_marker_ratio: 0.02,
            max_typo_entropy: 0.05,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(CorpusError::Config(format!(
                "need 0 < min_tokens <= max_tokens, got {} and {}",
                self.min_tokens, self.max_tokens
            )));
        }
        if !(0.0..=1.0).contains(&self.max_html_marker_ratio) {
            return Err(CorpusError::Config(format!(
                "max_html_marker_ratio must lie in [0, 1], got {}",
                self.max_html_marker_ratio
            )));
        }
        if !(self.max_typo_entropy >= 0.0) || !self.max_typo_entropy.is_finite() {
            return Err(CorpusError::Config(format!(
                "max_typo_entropy must be a non-negative number, got {}",
                self.max_typo_entropy
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Length,
    Html,
    Typo,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Length => "length",
            DropReason::Html => "html",
            DropReason::Typo => "typo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^<>]*>").expect("static regex"))
}

fn entity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"&#?[A-Za-z0-9]{1,10};").expect("static regex"))
}

/// Share of characters that belong to `<...>` tag spans or `&...;` entities.
pub fn html_marker_ratio(text: &str) -> f64 {
    let total = text.chars().count();
    if total == 0 {
        return 0.0;
    }
    let tags: usize = tag_regex()
        .find_iter(text)
        .map(|m| m.as_str().chars().count())
        .sum();
    let entities: usize = entity_regex()
        .find_iter(text)
        .map(|m| m.as_str().chars().count())
        .sum();
    (tags + entities) as f64 / total as f64
}

fn is_common_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || "·…‘’“”「」『』【】《》〈〉–—%₩€¥£°±×÷".contains(c)
}

/// Share of characters outside letters (any script, including Hangul
/// syllables), digits, whitespace and common punctuation.
pub fn noise_char_ratio(text: &str) -> f64 {
    let mut total = 0usize;
    let mut noisy = 0usize;
    for c in text.chars() {
        total += 1;
        let ok = c.is_alphabetic()
            || c.is_numeric()
            || c.is_whitespace()
            || is_common_punctuation(c);
        if !ok {
            noisy += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        noisy as f64 / total as f64
    }
}

pub fn filter_document(doc: &Document, config: &FilterConfig) -> Verdict {
    if doc.token_count < config.min_tokens || doc.token_count > config.max_tokens {
        return Verdict::Drop(DropReason::Length);
    }
    if html_marker_ratio(&doc.text) > config.max_html_marker_ratio {
        return Verdict::Drop(DropReason::Html);
    }
    if noise_char_ratio(&doc.text) > config.max_typo_entropy {
        return Verdict::Drop(DropReason::Typo);
    }
    Verdict::Keep
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub per_class: BTreeMap<SourceDomain, usize>,
    pub per_lang: BTreeMap<Lang, usize>,
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
}

impl CorpusStats {
    /// Writes `metric,key,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "metric,key,value")?;
        writeln!(out, "total,,{}", self.total)?;
        for (class, n) in &self.per_class {
            writeln!(out, "per_class,{class},{n}")?;
        }
        for (lang, n) in &self.per_lang {
            writeln!(out, "per_lang,{lang},{n}")?;
        }
        for (reason, n) in &self.dropped_by_reason {
            writeln!(out, "dropped,{},{n}", reason.as_str())?;
        }
        Ok(())
    }
}

pub fn corpus_stats(docs: &[Document]) -> CorpusStats {
    let mut stats = CorpusStats {
        total: docs.len(),
        ..CorpusStats::default()
    };
    for doc in docs {
        *stats.per_class.entry(doc.source_domain).or_default() += 1;
        *stats.per_lang.entry(doc.lang).or_default() += 1;
    }
    stats
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<Document>,
    /// Stats of the kept documents plus drop counts by first failing rule.
    pub stats: CorpusStats,
}

/// Filters a corpus in parallel; output keeps input order.
pub fn filter_corpus(docs: Vec<Document>, config: &FilterConfig) -> Result<FilterOutcome, CorpusError> {
    config.validate()?;
    let verdicts: Vec<Verdict> = docs.par_iter().map(|d| filter_document(d, config)).collect();
    let mut dropped: BTreeMap<DropReason, usize> = BTreeMap::new();
    let mut kept = Vec::with_capacity(docs.len());
    for (doc, verdict) in docs.into_iter().zip(verdicts) {
        match verdict {
            Verdict::Keep => kept.push(doc),
            Verdict::Drop(reason) => *dropped.entry(reason).or_default() += 1,
        }
    }
    let mut stats = corpus_stats(&kept);
    stats.dropped_by_reason = dropped;
    Ok(FilterOutcome { kept, stats })
}

/// Down-samples every present source domain to the size of the smallest
/// one. Selection is uniform without replacement under a ChaCha8 stream
/// seeded with `seed`; survivors keep their input order.
pub fn balance_by_class(docs: &[Document], seed: u64) -> Result<Vec<Document>, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut by_class: BTreeMap<SourceDomain, Vec<usize>> = BTreeMap::new();
    for (i, doc) in docs.iter().enumerate() {
        by_class.entry(doc.source_domain).or_default().push(i);
    }
    let target = by_class.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; docs.len()];
    for indices in by_class.values() {
        for pick in rand::seq::index::sample(&mut rng, indices.len(), target) {
            keep[indices[pick]] = true;
        }
    }
    Ok(docs
        .iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then(|| d.clone()))
        .collect())
}
