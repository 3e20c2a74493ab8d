//! STS evaluation: rank correlation, benchmark statistics and before/after
//! delta reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceDomain;
use crate::encoder::{cosine, encode, EncoderError, EncoderParams};
use crate::text::{split_lines, whitespace_token_count};

pub const FIN_STS: &str = "FinSTS";
pub const KOR_FIN_STS: &str = "KorFinSTS";
pub const STS: &str = "STS";
pub const KOR_STS: &str = "KorSTS";
/// Report column order.
pub const SUITES: [&str; 4] = [FIN_STS, KOR_FIN_STS, STS, KOR_STS];

pub const GOLD_MIN: f64 = 0.0;
pub const GOLD_MAX: f64 = 5.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooFew(usize),
    #[error("{0} input is constant; rank correlation is undefined")]
    Constant(&'static str),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("pair {index}: {source}")]
    Encode {
        index: usize,
        #[source]
        source: EncoderError,
    },
    #[error("model `{model}` is missing suite `{suite}` in the {side} scores")]
    MissingSuite {
        model: String,
        suite: &'static str,
        side: &'static str,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record} (line {line}): {message}")]
    Malformed { record: usize, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub sentence1: String,
    pub sentence2: String,
    pub gold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdomain: Option<SourceDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count1: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count2: Option<u64>,
}

impl StsPair {
    pub fn new(sentence1: impl Into<String>, sentence2: impl Into<String>, gold: f64) -> Self {
        StsPair {
            sentence1: sentence1.into(),
            sentence2: sentence2.into(),
            gold,
            subdomain: None,
            token_count1: None,
            token_count2: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(GOLD_MIN..=GOLD_MAX).contains(&self.gold) {
            return Err(format!("score {} outside [{GOLD_MIN}, {GOLD_MAX}]", self.gold));
        }
        if self.sentence1.trim().is_empty() || self.sentence2.trim().is_empty() {
            return Err("empty sentence".into());
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    sentence1: String,
    sentence2: String,
    score: f64,
    #[serde(default)]
    subdomain: Option<String>,
    #[serde(default)]
    token_count1: Option<u64>,
    #[serde(default)]
    token_count2: Option<u64>,
}

fn build_pair(raw: RawPair, record: usize, line: usize) -> Result<StsPair, EvalError> {
    let bad = |message: String| EvalError::Malformed { record, line, message };
    let subdomain = match raw.subdomain.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(s.parse::<SourceDomain>().map_err(bad)?),
    };
    let pair = StsPair {
        sentence1: raw.sentence1,
        sentence2: raw.sentence2,
        gold: raw.score,
        subdomain,
        token_count1: raw.token_count1,
        token_count2: raw.token_count2,
    };
    pair.validate().map_err(bad)?;
    Ok(pair)
}

/// STS pairs from TSV (header `sentence1, sentence2, score[, subdomain]`)
/// or JSONL with the same field names.
pub fn parse_sts(bytes: &[u8], jsonl: bool) -> Result<Vec<StsPair>, EvalError> {
    let lines = split_lines(bytes);
    let utf8 = |record, line, raw: &[u8]| {
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| EvalError::Malformed { record, line, message: "invalid UTF-8".into() })
    };
    let mut pairs = Vec::new();
    if jsonl {
        for (line, raw) in lines {
            let text = utf8(line, line, raw)?;
            if text.trim().is_empty() {
                continue;
            }
            let rec: RawPair = serde_json::from_str(&text).map_err(|e| EvalError::Malformed {
                record: line,
                line,
                message: e.to_string(),
            })?;
            pairs.push(build_pair(rec, line, line)?);
        }
        return Ok(pairs);
    }
    let Some(((header_line, header_raw), rows)) = lines.split_first() else {
        return Ok(pairs);
    };
    let header = utf8(0, *header_line, header_raw)?;
    let columns: Vec<String> = header.split('\t').map(|c| c.trim().to_string()).collect();
    for required in ["sentence1", "sentence2", "score"] {
        if !columns.iter().any(|c| c == required) {
            return Err(EvalError::Malformed {
                record: 0,
                line: *header_line,
                message: format!("header lacks `{required}`"),
            });
        }
    }
    for (i, (line, raw)) in rows.iter().enumerate() {
        let (record, line) = (i + 1, *line);
        let text = utf8(record, line, raw)?;
        if text.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = text.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(EvalError::Malformed {
                record,
                line,
                message: format!("expected {} columns, found {}", columns.len(), cells.len()),
            });
        }
        let mut rec = RawPair {
            sentence1: String::new(),
            sentence2: String::new(),
            score: f64::NAN,
            subdomain: None,
            token_count1: None,
            token_count2: None,
        };
        for (col, cell) in columns.iter().zip(cells) {
            let int = |cell: &str| {
                cell.trim().parse::<u64>().map_err(|_| EvalError::Malformed {
                    record,
                    line,
                    message: format!("`{col}` is not a non-negative integer"),
                })
            };
            match col.as_str() {
                "sentence1" => rec.sentence1 = cell.to_string(),
                "sentence2" => rec.sentence2 = cell.to_string(),
                "score" => {
                    rec.score = cell.trim().parse().map_err(|_| EvalError::Malformed {
                        record,
                        line,
                        message: format!("score `{cell}` is not a number"),
                    })?
                }
                "subdomain" => rec.subdomain = Some(cell.to_string()),
                "token_count1" if !cell.trim().is_empty() => rec.token_count1 = Some(int(cell)?),
                "token_count2" if !cell.trim().is_empty() => rec.token_count2 = Some(int(cell)?),
                _ => {}
            }
        }
        pairs.push(build_pair(rec, record, line)?);
    }
    Ok(pairs)
}

/// Loads a dataset, picking JSONL for `.jsonl`/`.json` extensions and TSV otherwise.
pub fn load_sts(path: &Path) -> Result<Vec<StsPair>, EvalError> {
    let bytes = std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    parse_sts(&bytes, jsonl)
}

pub fn write_sts_tsv<W: Write>(mut out: W, pairs: &[StsPair]) -> std::io::Result<()> {
    writeln!(out, "sentence1\tsentence2\tscore\tsubdomain")?;
    for p in pairs {
        let sub = p.subdomain.map(|s| s.as_str()).unwrap_or("");
        writeln!(out, "{}\t{}\t{}\t{}", p.sentence1, p.sentence2, p.gold, sub)?;
    }
    Ok(())
}

/// Fractional ranks, 1-based; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFew(xs.len()));
    }
    if let Some(i) = xs.iter().chain(ys).position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(i % xs.len()));
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(EvalError::Constant("first"));
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(EvalError::Constant("second"));
    }
    Ok(())
}

fn pearson_unchecked(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_inputs(xs, ys)?;
    Ok(pearson_unchecked(xs, ys))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_inputs(xs, ys)?;
    Ok(pearson_unchecked(&average_ranks(xs), &average_ranks(ys)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub suite: String,
    pub spearman: f64,
    pub pearson: f64,
    pub n_pairs: usize,
}

/// Cosine similarity per pair, in input order.
pub fn predict(pairs: &[StsPair], params: &EncoderParams) -> Result<Vec<f64>, EvalError> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let enc = |s: &str| encode(s, params).map_err(|source| EvalError::Encode { index, source });
            let (a, b) = (enc(&p.sentence1)?, enc(&p.sentence2)?);
            cosine(&a, &b).map_err(|source| EvalError::Encode { index, source })
        })
        .collect()
}

pub fn evaluate_sts(suite: &str, pairs: &[StsPair], params: &EncoderParams) -> Result<EvalResult, EvalError> {
    if pairs.len() < 2 {
        return Err(EvalError::TooFew(pairs.len()));
    }
    let predictions = predict(pairs, params)?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    Ok(EvalResult {
        suite: suite.to_string(),
        spearman: spearman_rho(&predictions, &gold)?,
        pearson: pearson(&predictions, &gold)?,
        n_pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchmarkStats {
    pub empty: bool,
    pub total: usize,
    pub per_subdomain: BTreeMap<SourceDomain, usize>,
    pub unlabeled: usize,
    pub avg_tokens_sentence1: f64,
    pub avg_tokens_sentence2: f64,
    pub vocab_size: usize,
    pub gold_mean: f64,
    /// Population standard deviation.
    pub gold_std: f64,
}

pub fn benchmark_stats(pairs: &[StsPair]) -> BenchmarkStats {
    if pairs.is_empty() {
        return BenchmarkStats {
            empty: true,
            ..BenchmarkStats::default()
        };
    }
    let n = pairs.len() as f64;
    let mut stats = BenchmarkStats {
        total: pairs.len(),
        ..BenchmarkStats::default()
    };
    let mut vocab = BTreeSet::new();
    let (mut t1, mut t2) = (0u64, 0u64);
    for p in pairs {
        match p.subdomain {
            Some(d) => *stats.per_subdomain.entry(d).or_insert(0) += 1,
            None => stats.unlabeled += 1,
        }
        t1 += p.token_count1.unwrap_or_else(|| whitespace_token_count(&p.sentence1) as u64);
        t2 += p.token_count2.unwrap_or_else(|| whitespace_token_count(&p.sentence2) as u64);
        vocab.extend(p.sentence1.split_whitespace());
        vocab.extend(p.sentence2.split_whitespace());
    }
    stats.avg_tokens_sentence1 = t1 as f64 / n;
    stats.avg_tokens_sentence2 = t2 as f64 / n;
    stats.vocab_size = vocab.len();
    stats.gold_mean = pairs.iter().map(|p| p.gold).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.gold - stats.gold_mean).powi(2)).sum::<f64>() / n;
    stats.gold_std = var.sqrt();
    stats
}

/// Suite name to ρ.
pub type SuiteScores = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub model: String,
    pub before: SuiteScores,
    pub after: SuiteScores,
    /// `after − before` for every suite present on both sides.
    pub deltas: SuiteScores,
    pub delta_fin: f64,
    pub delta_kor_fin: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeltaReport {
    pub rows: Vec<DeltaRow>,
}

/// Deltas for one model. Both maps must contain the two financial suites;
/// other suites are carried along when present.
pub fn delta_row(model: &str, before: &SuiteScores, after: &SuiteScores) -> Result<DeltaRow, EvalError> {
    for suite in [FIN_STS, KOR_FIN_STS] {
        for (side, map) in [("before", before), ("after", after)] {
            if !map.contains_key(suite) {
                return Err(EvalError::MissingSuite {
                    model: model.to_string(),
                    suite,
                    side,
                });
            }
        }
    }
    let deltas: SuiteScores = before
        .iter()
        .filter_map(|(k, b)| after.get(k).map(|a| (k.clone(), a - b)))
        .collect();
    let delta_fin = deltas[FIN_STS];
    let delta_kor_fin = deltas[KOR_FIN_STS];
    Ok(DeltaRow {
        model: model.to_string(),
        before: before.clone(),
        after: after.clone(),
        deltas,
        delta_fin,
        delta_kor_fin,
        mean_delta: (delta_fin + delta_kor_fin) / 2.0,
    })
}

/// One row per `(model, before, after)` entry, in input order.
pub fn delta_report<'a, I>(entries: I) -> Result<DeltaReport, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a SuiteScores, &'a SuiteScores)>,
{
    let rows = entries
        .into_iter()
        .map(|(m, b, a)| delta_row(m, b, a))
        .collect::<Result<_, _>>()?;
    Ok(DeltaReport { rows })
}

/// Signed, four decimals: `+0.1609`, `-0.0175`.
pub fn fmt_delta(x: f64) -> String {
    format!("{x:+.4}")
}

impl DeltaReport {
    /// `model,delta_FinSTS,delta_KorFinSTS,mean_delta[,korean_token_pct]`.
    /// The coverage column is written when `coverage` is given; models
    /// without an audit get an empty cell.
    pub fn write_csv<W: Write>(&self, mut out: W, coverage: Option<&BTreeMap<String, f64>>) -> std::io::Result<()> {
        write!(out, "model,delta_{FIN_STS},delta_{KOR_FIN_STS},mean_delta")?;
        if coverage.is_some() {
            write!(out, ",korean_token_pct")?;
        }
        writeln!(out)?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{}",
                r.model,
                fmt_delta(r.delta_fin),
                fmt_delta(r.delta_kor_fin),
                fmt_delta(r.mean_delta)
            )?;
            if let Some(cov) = coverage {
                match cov.get(&r.model) {
                    Some(p) => write!(out, ",{p:.2}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Before/after grid: one row per model, `<suite>_before`, `<suite>_after`
/// and `<suite>_after_is_higher` per suite. Absent values are empty cells.
pub fn write_before_after_csv<W: Write>(
    mut out: W,
    rows: &[(String, SuiteScores, SuiteScores)],
    suites: &[&str],
) -> std::io::Result<()> {
    write!(out, "model")?;
    for s in suites {
        write!(out, ",{s}_before,{s}_after,{s}_after_is_higher")?;
    }
    writeln!(out)?;
    let cell = |v: Option<&f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for (model, before, after) in rows {
        write!(out, "{model}")?;
        for &s in suites {
            let (b, a) = (before.get(s), after.get(s));
            let higher = match (b, a) {
                (Some(b), Some(a)) => (a > b).to_string(),
                _ => String::new(),
            };
            write!(out, ",{},{},{higher}", cell(b), cell(a))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
