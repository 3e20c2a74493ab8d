//! Triplet mining over pluggable generation and judge clients.
//!
//! For every filtered document the pipeline
//!
//! 1. asks the generator which shift patterns the text can express and
//!    keeps only catalog patterns of the document's own domain,
//! 2. asks for one hard negative per pattern (refusals and echoes are
//!    skipped),
//! 3. keeps negatives the judge scores at or above `neg_threshold`,
//! 4. produces one positive for the document (a same-language paraphrase or
//!    a Korean/English translation) and keeps it if the judge scores it at
//!    or above `pos_threshold`.
//!
//! One triplet is emitted per accepted `(document, pattern)` negative.
//! Client calls run on up to `max_inflight` worker threads; results are
//! re-assembled in input order and every random draw is keyed by the
//! document's position, so output does not depend on scheduling.

pub mod mock;

use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Lang};
use crate::text::fnv1a64;
use crate::typology::{patterns_for_source, validate_axis_tags, ShiftPattern};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    /// Worth retrying (timeouts, rate limits, 5xx).
    #[error("transient client failure: {0}")]
    Transient(String),
    #[error("terminal client failure: {0}")]
    Terminal(String),
}

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("document `{doc_id}`: {stage} failed after {attempts} attempt(s): {source}")]
    Client {
        doc_id: String,
        stage: Stage,
        attempts: u32,
        #[source]
        source: ClientError,
    },
    #[error("document `{doc_id}`: judge returned out-of-range {kind} score {score} for pair ({source_text:?}, {candidate:?})")]
    JudgeOutOfRange {
        doc_id: String,
        kind: PairKind,
        score: f64,
        source_text: String,
        candidate: String,
    },
    #[error("invalid mining config: {0}")]
    Config(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Negative,
    Positive,
}

impl std::fmt::Display for PairKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PairKind::Negative => "negative",
            PairKind::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveMode {
    Paraphrase,
    Translation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NegativeOutcome {
    Variant(String),
    /// The generator could not craft a variant for this pattern.
    Refusal,
}

pub trait GenerationClient: Send + Sync {
    /// Pattern ids the text can express; may include ids outside `candidates`.
    fn tag_axes(&self, text: &str, candidates: &[&ShiftPattern]) -> Result<Vec<String>, ClientError>;

    fn make_negative(&self, text: &str, pattern: &ShiftPattern) -> Result<NegativeOutcome, ClientError>;

    fn make_positive(&self, text: &str, lang: Lang, mode: PositiveMode) -> Result<String, ClientError>;
}

pub trait JudgeClient: Send + Sync {
    /// Score in `[0, 10]`.
    fn score(&self, kind: PairKind, source: &str, candidate: &str) -> Result<f64, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub source: String,
    pub positive: String,
    pub negative: String,
    pub pattern_id: String,
    pub positive_mode: PositiveMode,
    pub neg_score: f64,
    pub pos_score: f64,
    pub lang_source: Lang,
    pub lang_positive: Lang,
}

impl Triplet {
    /// Checks the structural invariants against the given thresholds.
    pub fn check(&self, neg_threshold: f64, pos_threshold: f64) -> Result<(), String> {
        if self.neg_score < neg_threshold {
            return Err(format!("neg_score {} below {neg_threshold}", self.neg_score));
        }
        if self.pos_score < pos_threshold {
            return Err(format!("pos_score {} below {pos_threshold}", self.pos_score));
        }
        if (self.positive_mode == PositiveMode::Translation) == (self.lang_positive == self.lang_source) {
            return Err("positive language does not match positive mode".into());
        }
        let texts = [&self.source, &self.positive, &self.negative];
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err("empty text".into());
        }
        if self.source == self.positive || self.source == self.negative || self.positive == self.negative {
            return Err("texts are not pairwise distinct".into());
        }
        Ok(())
    }
}

pub fn write_triplets<W: Write>(mut out: W, triplets: &[Triplet]) -> std::io::Result<()> {
    for t in triplets {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses triplet JSONL; errors carry the 1-based line number.
pub fn parse_triplets(text: &str) -> Result<Vec<Triplet>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub neg_threshold: f64,
    pub pos_threshold: f64,
    /// Fraction of positives produced by translation rather than paraphrase.
    pub positive_mode_ratio: f64,
    pub max_inflight: usize,
    pub retry_limit: u32,
    /// Base delay of the exponential backoff; zero disables sleeping.
    pub backoff_base_ms: u64,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            neg_threshold: 8.0,
            pos_threshold: 9.0,
            positive_mode_ratio: 0.5,
            max_inflight: 4,
            retry_limit: 3,
            backoff_base_ms: 50,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MiningError> {
        for (name, v) in [("neg_threshold", self.neg_threshold), ("pos_threshold", self.pos_threshold)] {
            if !(0.0..=10.0).contains(&v) {
                return Err(MiningError::Config(format!("{name} must lie in [0, 10], got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.positive_mode_ratio) {
            return Err(MiningError::Config(format!(
                "positive_mode_ratio must lie in [0, 1], got {}",
                self.positive_mode_ratio
            )));
        }
        if self.max_inflight == 0 {
            return Err(MiningError::Config("max_inflight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AxisIdentification,
    NegativeGeneration,
    NegativeValidation,
    PositiveGeneration,
    PositiveValidation,
    Assembly,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::AxisIdentification,
        Stage::NegativeGeneration,
        Stage::NegativeValidation,
        Stage::PositiveGeneration,
        Stage::PositiveValidation,
        Stage::Assembly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::AxisIdentification => "axis_identification",
            Stage::NegativeGeneration => "negative_generation",
            Stage::NegativeValidation => "negative_validation",
            Stage::PositiveGeneration => "positive_generation",
            Stage::PositiveValidation => "positive_validation",
            Stage::Assembly => "assembly",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `candidates == accepted + rejected + skipped` holds for every stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
}

impl StageCounts {
    fn accept(&mut self) {
        self.candidates += 1;
        self.accepted += 1;
    }
    fn reject(&mut self) {
        self.candidates += 1;
        self.rejected += 1;
    }
    fn skip(&mut self) {
        self.candidates += 1;
        self.skipped += 1;
    }
    fn add(&mut self, other: &StageCounts) {
        self.candidates += other.candidates;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.skipped += other.skipped;
    }
    pub fn is_conserved(&self) -> bool {
        self.candidates == self.accepted + self.rejected + self.skipped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MiningStats {
    pub stages: [StageCounts; 6],
    /// Tags returned by the generator that were unknown or off-domain.
    pub invalid_tags: usize,
    pub translation_positives: usize,
    pub paraphrase_positives: usize,
}

impl MiningStats {
    pub fn stage(&self, stage: Stage) -> &StageCounts {
        &self.stages[stage as usize]
    }

    fn stage_mut(&mut self, stage: Stage) -> &mut StageCounts {
        &mut self.stages[stage as usize]
    }

    pub fn merge(&mut self, other: &MiningStats) {
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.add(b);
        }
        self.invalid_tags += other.invalid_tags;
        self.translation_positives += other.translation_positives;
        self.paraphrase_positives += other.paraphrase_positives;
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "stage,candidates,accepted,rejected,skipped")?;
        for stage in Stage::ALL {
            let c = self.stage(stage);
            writeln!(out, "{stage},{},{},{},{}", c.candidates, c.accepted, c.rejected, c.skipped)?;
        }
        writeln!(out, "invalid_tags,{},,,", self.invalid_tags)?;
        writeln!(out, "translation_positives,{},,,", self.translation_positives)?;
        writeln!(out, "paraphrase_positives,{},,,", self.paraphrase_positives)?;
        Ok(())
    }
}

fn mix_seed(parts: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(parts.len() * 8);
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fnv1a64(&bytes)
}

/// Runs `call`, retrying transient failures up to `config.retry_limit`
/// times with jittered exponential backoff. Jitter is drawn from a stream
/// keyed by `(seed, doc_id, stage)`.
fn with_retry<T>(
    config: &MiningConfig,
    doc_id: &str,
    stage: Stage,
    mut call: impl FnMut() -> Result<T, ClientError>,
) -> Result<T, MiningError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        config.seed,
        fnv1a64(doc_id.as_bytes()),
        stage as u64,
    ]));
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match call() {
            Ok(v) => return Ok(v),
            Err(ClientError::Transient(_)) if attempt <= config.retry_limit => {
                if config.backoff_base_ms > 0 {
                    let factor = 2f64.powi(attempt as i32 - 1) * rng.gen_range(0.5..1.5);
                    let ms = (config.backoff_base_ms as f64 * factor).min(30_000.0);
                    std::thread::sleep(Duration::from_micros((ms * 1000.0) as u64));
                }
            }
            Err(source) => {
                return Err(MiningError::Client {
                    doc_id: doc_id.to_string(),
                    stage,
                    attempts: attempt,
                    source,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisTags {
    pub patterns: Vec<&'static ShiftPattern>,
    pub invalid_tags: usize,
}

/// Step 1: tag the document with expressible patterns of its own domain.
pub fn identify_axes(
    doc: &Document,
    gen: &dyn GenerationClient,
    config: &MiningConfig,
) -> Result<AxisTags, MiningError> {
    let candidates = patterns_for_source(doc.source_domain);
    let tags = with_retry(config, &doc.id, Stage::AxisIdentification, || {
        gen.tag_axes(&doc.text, &candidates)
    })?;
    let validated = validate_axis_tags(&tags, doc.source_domain);
    let patterns = validated
        .kept
        .iter()
        .map(|id| *candidates.iter().find(|p| p.id == *id).expect("validated against domain"))
        .collect();
    Ok(AxisTags {
        patterns,
        invalid_tags: validated.rejected.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    Refusal,
    /// Empty, or identical to the text it was derived from.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Candidate {
    Text(String),
    Skip(SkipReason),
}

fn is_degenerate(source: &str, candidate: &str) -> bool {
    let c = candidate.trim();
    c.is_empty() || c == source.trim()
}

/// Step 2: one hard-negative candidate for `(source, pattern)`.
pub fn generate_negative(
    doc_id: &str,
    source: &str,
    pattern: &ShiftPattern,
    gen: &dyn GenerationClient,
    config: &MiningConfig,
) -> Result<Candidate, MiningError> {
    let outcome = with_retry(config, doc_id, Stage::NegativeGeneration, || {
        gen.make_negative(source, pattern)
    })?;
    Ok(match outcome {
        NegativeOutcome::Refusal => Candidate::Skip(SkipReason::Refusal),
        NegativeOutcome::Variant(v) if is_degenerate(source, &v) => Candidate::Skip(SkipReason::Degenerate),
        NegativeOutcome::Variant(v) => Candidate::Text(v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JudgeVerdict {
    pub accepted: bool,
    pub score: f64,
}

/// Gates a judge score: accepted iff `score >= threshold`.
pub fn gate_score(
    doc_id: &str,
    kind: PairKind,
    source: &str,
    candidate: &str,
    score: f64,
    threshold: f64,
) -> Result<JudgeVerdict, MiningError> {
    if !(0.0..=10.0).contains(&score) {
        return Err(MiningError::JudgeOutOfRange {
            doc_id: doc_id.to_string(),
            kind,
            score,
            source_text: source.to_string(),
            candidate: candidate.to_string(),
        });
    }
    Ok(JudgeVerdict {
        accepted: score >= threshold,
        score,
    })
}

/// Steps 3 and 4 (validation): score a pair and apply the threshold.
pub fn judge_pair(
    doc_id: &str,
    kind: PairKind,
    source: &str,
    candidate: &str,
    judge: &dyn JudgeClient,
    threshold: f64,
    config: &MiningConfig,
) -> Result<JudgeVerdict, MiningError> {
    let stage = match kind {
        PairKind::Negative => Stage::NegativeValidation,
        PairKind::Positive => Stage::PositiveValidation,
    };
    let score = with_retry(config, doc_id, stage, || judge.score(kind, source, candidate))?;
    gate_score(doc_id, kind, source, candidate, score, threshold)
}

/// Draws translation with probability `ratio`, paraphrase otherwise.
pub fn choose_positive_mode<R: Rng>(rng: &mut R, ratio: f64) -> PositiveMode {
    if rng.gen::<f64>() < ratio {
        PositiveMode::Translation
    } else {
        PositiveMode::Paraphrase
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveCandidate {
    pub text: String,
    pub lang: Lang,
}

/// Step 4 (generation). Translations carry the flipped language code.
pub fn generate_positive(
    doc_id: &str,
    source: &str,
    lang: Lang,
    mode: PositiveMode,
    gen: &dyn GenerationClient,
    config: &MiningConfig,
) -> Result<Option<PositiveCandidate>, MiningError> {
    let text = with_retry(config, doc_id, Stage::PositiveGeneration, || {
        gen.make_positive(source, lang, mode)
    })?;
    if is_degenerate(source, &text) {
        return Ok(None);
    }
    let lang = match mode {
        PositiveMode::Paraphrase => lang,
        PositiveMode::Translation => lang.flipped(),
    };
    Ok(Some(PositiveCandidate { text, lang }))
}

#[derive(Debug, Clone, Default)]
pub struct MiningOutput {
    pub triplets: Vec<Triplet>,
    pub stats: MiningStats,
}

fn mine_document(
    index: usize,
    doc: &Document,
    gen: &dyn GenerationClient,
    judge: &dyn JudgeClient,
    config: &MiningConfig,
) -> Result<MiningOutput, MiningError> {
    let mut stats = MiningStats::default();
    let axes = identify_axes(doc, gen, config)?;
    stats.invalid_tags = axes.invalid_tags;
    if axes.patterns.is_empty() {
        stats.stage_mut(Stage::AxisIdentification).skip();
        return Ok(MiningOutput { triplets: Vec::new(), stats });
    }
    stats.stage_mut(Stage::AxisIdentification).accept();

    let mut negatives = Vec::new();
    for pattern in &axes.patterns {
        match generate_negative(&doc.id, &doc.text, pattern, gen, config)? {
            Candidate::Skip(_) => stats.stage_mut(Stage::NegativeGeneration).skip(),
            Candidate::Text(neg) => {
                stats.stage_mut(Stage::NegativeGeneration).accept();
                let verdict = judge_pair(
                    &doc.id,
                    PairKind::Negative,
                    &doc.text,
                    &neg,
                    judge,
                    config.neg_threshold,
                    config,
                )?;
                if verdict.accepted {
                    stats.stage_mut(Stage::NegativeValidation).accept();
                    negatives.push((pattern.id, neg, verdict.score));
                } else {
                    stats.stage_mut(Stage::NegativeValidation).reject();
                }
            }
        }
    }
    if negatives.is_empty() {
        return Ok(MiningOutput { triplets: Vec::new(), stats });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, index as u64, 0x706f_73]));
    let mode = choose_positive_mode(&mut rng, config.positive_mode_ratio);
    let Some(positive) = generate_positive(&doc.id, &doc.text, doc.lang, mode, gen, config)? else {
        stats.stage_mut(Stage::PositiveGeneration).skip();
        return Ok(MiningOutput { triplets: Vec::new(), stats });
    };
    stats.stage_mut(Stage::PositiveGeneration).accept();
    let verdict = judge_pair(
        &doc.id,
        PairKind::Positive,
        &doc.text,
        &positive.text,
        judge,
        config.pos_threshold,
        config,
    )?;
    if !verdict.accepted {
        stats.stage_mut(Stage::PositiveValidation).reject();
        return Ok(MiningOutput { triplets: Vec::new(), stats });
    }
    stats.stage_mut(Stage::PositiveValidation).accept();
    match mode {
        PositiveMode::Translation => stats.translation_positives += 1,
        PositiveMode::Paraphrase => stats.paraphrase_positives += 1,
    }

    let mut triplets = Vec::new();
    for (pattern_id, negative, neg_score) in negatives {
        if negative.trim() == positive.text.trim() {
            stats.stage_mut(Stage::Assembly).skip();
            continue;
        }
        stats.stage_mut(Stage::Assembly).accept();
        triplets.push(Triplet {
            source: doc.text.clone(),
            positive: positive.text.clone(),
            negative,
            pattern_id: pattern_id.to_string(),
            positive_mode: mode,
            neg_score,
            pos_score: verdict.score,
            lang_source: doc.lang,
            lang_positive: positive.lang,
        });
    }
    Ok(MiningOutput { triplets, stats })
}

/// Runs the full pipeline. The first failing document, in input order,
/// determines the returned error.
pub fn mine_triplets(
    docs: &[Document],
    gen: &dyn GenerationClient,
    judge: &dyn JudgeClient,
    config: &MiningConfig,
) -> Result<MiningOutput, MiningError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_inflight)
        .build()
        .map_err(|e| MiningError::Pool(e.to_string()))?;
    let per_doc: Vec<Result<MiningOutput, MiningError>> = pool.install(|| {
        docs.par_iter()
            .enumerate()
            .map(|(i, doc)| mine_document(i, doc, gen, judge, config))
            .collect()
    });
    let mut out = MiningOutput::default();
    for result in per_doc {
        let doc_out = result?;
        out.triplets.extend(doc_out.triplets);
        out.stats.merge(&doc_out.stats);
    }
    Ok(out)
}
