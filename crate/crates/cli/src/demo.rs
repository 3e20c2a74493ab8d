//! Writes a self-contained demo workspace: corpus, STS suites, tokenizer
//! vocabularies and a config that runs the whole pipeline on them.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use xling_core::corpus::write_documents;
use xling_core::evalsts::{write_sts_tsv, FIN_STS, KOR_FIN_STS, KOR_STS, STS};
use xling_core::fixtures::{corpus_with_noise, sts_fixture, vocab_fixture};
use xling_core::Lang;

use crate::error::CliError;

pub const DEMO_DOCS: usize = 600;
pub const DEMO_PAIRS: usize = 200;
/// Synthetic sentences are short, so the demo narrows the length window.
pub const DEMO_MIN_TOKENS: u64 = 5;
pub const DEMO_MAX_TOKENS: u64 = 512;

/// `(model, vocab size, full-Hangul tokens)` for the demo vocabularies.
pub const DEMO_VOCABS: [(&str, usize, usize); 4] = [
    ("bge-en-icl", 32_003, 346),
    ("gte-Qwen2-1.5B", 151_646, 0),
    ("e5-mistral-7b", 32_000, 346),
    ("bge-m3", 250_002, 5_413),
];

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes the demo files under `dir` and returns the config path.
pub fn write_demo(dir: &Path, seed: u64) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    let docs = corpus_with_noise(DEMO_DOCS, seed, DEMO_MIN_TOKENS as usize, DEMO_MAX_TOKENS as usize);
    write_documents(&mut buf, &docs).expect("in-memory write");
    write(&dir.join("corpus.jsonl"), &buf)?;

    let suites = [
        (FIN_STS, None, 1),
        (KOR_FIN_STS, Some(Lang::Ko), 2),
        (STS, Some(Lang::En), 3),
        (KOR_STS, Some(Lang::Ko), 4),
    ];
    let mut datasets = Vec::new();
    for (suite, lang, offset) in suites {
        let pairs = sts_fixture(DEMO_PAIRS, seed.wrapping_add(offset), lang);
        let mut buf = Vec::new();
        write_sts_tsv(&mut buf, &pairs).expect("in-memory write");
        let rel = format!("sts/{suite}.tsv");
        write(&dir.join(&rel), &buf)?;
        datasets.push(json!({"suite": suite, "path": rel}));
    }

    let mut vocabs = Vec::new();
    for (i, (model, size, korean)) in DEMO_VOCABS.iter().enumerate() {
        let vocab = vocab_fixture(*size, *korean, seed.wrapping_add(10 + i as u64));
        let mut buf = Vec::new();
        for t in &vocab.tokens {
            buf.extend_from_slice(t);
            buf.push(b'\n');
        }
        let rel = format!("vocabs/{model}.txt");
        write(&dir.join(&rel), &buf)?;
        vocabs.push(json!({"model": model, "path": rel}));
    }

    let config = json!({
        "seed": seed,
        "output_dir": "out",
        "corpus": {
            "input": "corpus.jsonl",
            "filter": {"min_tokens": DEMO_MIN_TOKENS, "max_tokens": DEMO_MAX_TOKENS},
        },
        "mining": {"backoff_base_ms": 0, "client": {"kind": "mock"}},
        "eval": {"model": "reference-encoder", "datasets": datasets},
        "tokaudit": {"vocabs": vocabs},
    });
    let path = dir.join("config.json");
    let mut text = serde_json::to_vec_pretty(&config).expect("config serializes");
    text.push(b'\n');
    write(&path, &text)?;
    Ok(path)
}
