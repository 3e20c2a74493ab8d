//! Full-Korean-token coverage of tokenizer vocabularies.
//!
//! A token counts as full Korean when, after stripping any configured
//! prefix, it is non-empty and every character is a composed Hangul
//! syllable (U+AC00..=U+D7A3). Jamo are excluded unless `include_jamo`
//! widens the rule.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON vocabulary at byte {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("vocabulary is empty")]
    Empty,
    #[error("unknown vocabulary format `{0}` (expected lines or json_map)")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabFormat {
    Lines,
    JsonMap,
}

impl FromStr for VocabFormat {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lines" => Ok(VocabFormat::Lines),
            "json_map" => Ok(VocabFormat::JsonMap),
            other => Err(AuditError::Format(other.to_string())),
        }
    }
}

/// Tokens as raw bytes; entries that are not valid UTF-8 are kept and
/// counted separately by the audit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub tokens: Vec<Vec<u8>>,
}

impl Vocab {
    pub fn from_strs<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Vocab {
            tokens: tokens.into_iter().map(|t| t.as_ref().as_bytes().to_vec()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }
}

/// Byte offset of a 1-based (line, column) position as reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_vocab(bytes: &[u8], format: VocabFormat) -> Result<Vocab, AuditError> {
    match format {
        VocabFormat::Lines => {
            let mut tokens: Vec<Vec<u8>> = bytes.split(|&b| b == b'\n').map(|l| l.strip_suffix(b"\r").unwrap_or(l).to_vec()).collect();
            if tokens.last().is_some_and(|t| t.is_empty()) {
                tokens.pop();
            }
            Ok(Vocab { tokens })
        }
        VocabFormat::JsonMap => {
            let text = String::from_utf8_lossy(bytes);
            let map: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| AuditError::Json {
                    offset: byte_offset(&text, e.line(), e.column()),
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                })?;
            Ok(Vocab {
                tokens: map.into_iter().map(|(k, _)| k.into_bytes()).collect(),
            })
        }
    }
}

pub fn load_vocab(path: &Path, format: VocabFormat) -> Result<Vocab, AuditError> {
    let bytes = std::fs::read(path).map_err(|source| AuditError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_vocab(&bytes, format)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Prefixes removed (first match only) before classification, e.g. `##` or `▁`.
    pub strip_prefixes: Vec<String>,
    /// Also accept Hangul Jamo (U+1100..=U+11FF) and compatibility jamo (U+3130..=U+318F).
    pub include_jamo: bool,
}

fn is_syllable(c: char) -> bool {
    ('\u{AC00}'..='\u{D7A3}').contains(&c)
}

fn is_jamo(c: char) -> bool {
    ('\u{1100}'..='\u{11FF}').contains(&c) || ('\u{3130}'..='\u{318F}').contains(&c)
}

/// Classification under the default (strict) rule with no prefix stripping.
pub fn is_full_korean_token(token: &str) -> bool {
    classify(token, &AuditConfig::default())
}

pub fn classify(token: &str, config: &AuditConfig) -> bool {
    let body = config
        .strip_prefixes
        .iter()
        .find_map(|p| token.strip_prefix(p.as_str()))
        .unwrap_or(token);
    !body.is_empty() && body.chars().all(|c| is_syllable(c) || (config.include_jamo && is_jamo(c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub vocab_size: usize,
    pub korean_token_count: usize,
    pub undecodable_count: usize,
    /// `100 · count / size`, unrounded.
    pub korean_token_pct: f64,
}

impl CoverageReport {
    pub fn pct_display(&self) -> String {
        format!("{:.2}", self.korean_token_pct)
    }
}

pub fn coverage_report(vocab: &Vocab, config: &AuditConfig) -> Result<CoverageReport, AuditError> {
    if vocab.tokens.is_empty() {
        return Err(AuditError::Empty);
    }
    let (korean, undecodable) = vocab
        .tokens
        .par_iter()
        .map(|t| match std::str::from_utf8(t) {
            Ok(s) => (usize::from(classify(s, config)), 0),
            Err(_) => (0, 1),
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(CoverageReport {
        vocab_size: vocab.size(),
        korean_token_count: korean,
        undecodable_count: undecodable,
        korean_token_pct: 100.0 * korean as f64 / vocab.size() as f64,
    })
}

/// `model,vocab_size,korean_token_count,korean_token_pct`.
pub fn write_coverage_csv<W: Write>(mut out: W, rows: &[(String, CoverageReport)]) -> std::io::Result<()> {
    writeln!(out, "model,vocab_size,korean_token_count,korean_token_pct")?;
    for (model, r) in rows {
        writeln!(out, "{model},{},{},{}", r.vocab_size, r.korean_token_count, r.pct_display())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classification_examples() {
        assert!(is_full_korean_token("금융"));
        assert!(!is_full_korean_token("bank"));
        assert!(!is_full_korean_token("금융A"));
        assert!(!is_full_korean_token("ㄱ"));
        assert!(!is_full_korean_token(""));
        assert!(is_full_korean_token("가") && is_full_korean_token("힣"));
        let wide = AuditConfig { include_jamo: true, ..AuditConfig::default() };
        assert!(classify("ㄱ", &wide) && classify("금ᄀ", &wide));
        let strip = AuditConfig { strip_prefixes: vec!["##".into(), "▁".into()], ..AuditConfig::default() };
        assert!(classify("##금융", &strip) && classify("▁은행", &strip));
        assert!(!classify("##", &strip));
        assert!(!is_full_korean_token("▁은행"));
    }

    #[test]
    fn load_formats() {
        assert_eq!(parse_vocab(b"a\nb\n\xea\xb8\x88\n", VocabFormat::Lines).unwrap().size(), 3);
        assert_eq!(parse_vocab(b"a\r\nb", VocabFormat::Lines).unwrap().tokens, [b"a".to_vec(), b"b".to_vec()]);
        let json = br#"{"a":0,"b":1,"c":2,"d":3,"e":4}"#;
        assert_eq!(parse_vocab(json, VocabFormat::JsonMap).unwrap().size(), 5);
        let broken = b"{\"a\": 0,\n \"b\" 1}";
        match parse_vocab(broken, VocabFormat::JsonMap) {
            Err(AuditError::Json { offset, line, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(offset, 14);
                assert_eq!(broken[offset], b'1');
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!("csv".parse::<VocabFormat>(), Err(AuditError::Format(_))));
    }

    #[test]
    fn undecodable_tokens_are_counted_apart() {
        let vocab = Vocab { tokens: vec![vec![0xea, 0xb8], "금".as_bytes().to_vec()] };
        let r = coverage_report(&vocab, &AuditConfig::default()).unwrap();
        assert_eq!((r.korean_token_count, r.undecodable_count), (1, 1));
        assert!(matches!(coverage_report(&Vocab::default(), &AuditConfig::default()), Err(AuditError::Empty)));
    }

    #[test]
    fn csv_row() {
        let vocab = Vocab::from_strs(["금융", "a", "b", "c"]);
        let r = coverage_report(&vocab, &AuditConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_coverage_csv(&mut buf, &[("toy".into(), r)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "model,vocab_size,korean_token_count,korean_token_pct\ntoy,4,1,25.00\n"
        );
    }

    proptest! {
        #[test]
        fn monotone_and_order_free(ko in 0usize..20, other in 1usize..20, rot in 0usize..40) {
            let mut tokens: Vec<String> = (0..ko).map(|i| char::from_u32(0xAC00 + i as u32).unwrap().to_string()).collect();
            tokens.extend((0..other).map(|i| format!("t{i}")));
            let cfg = AuditConfig::default();
            let base = coverage_report(&Vocab::from_strs(&tokens), &cfg).unwrap();
            prop_assert!(base.korean_token_count <= base.vocab_size);
            prop_assert!((0.0..=100.0).contains(&base.korean_token_pct));

            let mut rotated = tokens.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            prop_assert_eq!(coverage_report(&Vocab::from_strs(&rotated), &cfg).unwrap(), base);

            let mut more = tokens.clone();
            more.push("latin".into());
            let lower = coverage_report(&Vocab::from_strs(&more), &cfg).unwrap();
            if ko > 0 { prop_assert!(lower.korean_token_pct < base.korean_token_pct); }
            let mut plus = tokens;
            plus.push("은행".into());
            prop_assert!(coverage_report(&Vocab::from_strs(&plus), &cfg).unwrap().korean_token_pct > base.korean_token_pct);
        }
    }
}
