//! Reference sentence encoder.
//!
//! A text is split into overlapping character n-grams (default 3), each
//! n-gram is hashed with 64-bit FNV-1a into one of `num_buckets` rows of a
//! trainable table, the selected rows are averaged (one contribution per
//! occurrence) and the mean is L2-normalised. Working on characters keeps
//! Hangul and Latin on the same footing.
//!
//! The backward pass is exact: with pooled vector `u`, output `e = u/‖u‖`
//! and upstream gradient `g`, the pooled gradient is `(g − e(e·g))/‖u‖`,
//! and each bucket row receives it scaled by its occurrence share.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_ngrams, fnv1a64};

pub const INIT_RANGE: f64 = 0.05;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"XLEN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("text {0:?} is shorter than one n-gram")]
    TooShort(String),
    #[error("pooled vector for {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("cosine of a zero-norm vector is undefined")]
    ZeroVector,
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub dim: usize,
    pub num_buckets: usize,
    pub ngram: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            num_buckets: 65_536,
            ngram: 3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dim < 2 {
            return Err(EncoderError::Config(format!("dim must be >= 2, got {}", self.dim)));
        }
        if self.num_buckets == 0 {
            return Err(EncoderError::Config("num_buckets must be >= 1".into()));
        }
        if self.ngram == 0 {
            return Err(EncoderError::Config("ngram must be >= 1".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.dim * self.num_buckets
    }
}

/// Trainable table, `num_buckets × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub seed: u64,
    pub table: Vec<f64>,
}

/// Unit-norm sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Draws every entry from `uniform(-0.05, 0.05)` (open interval) with a
/// ChaCha8 stream seeded by `seed`.
pub fn init_encoder(config: EncoderConfig, seed: u64) -> Result<EncoderParams, EncoderError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(-INIT_RANGE, INIT_RANGE);
    let table = (0..config.num_params())
        .map(|_| loop {
            let v = dist.sample(&mut rng);
            if v > -INIT_RANGE {
                break v;
            }
        })
        .collect();
    Ok(EncoderParams { config, seed, table })
}

impl EncoderParams {
    pub fn row(&self, bucket: usize) -> &[f64] {
        let d = self.config.dim;
        &self.table[bucket * d..(bucket + 1) * d]
    }

    pub fn row_mut(&mut self, bucket: usize) -> &mut [f64] {
        let d = self.config.dim;
        &mut self.table[bucket * d..(bucket + 1) * d]
    }

    pub fn bucket_of(&self, ngram: &str) -> usize {
        (fnv1a64(ngram.as_bytes()) % self.config.num_buckets as u64) as usize
    }

    /// Occurrence count of each bucket touched by `text`, plus the total
    /// number of n-grams.
    pub fn bucket_counts(&self, text: &str) -> Result<(BTreeMap<usize, usize>, usize), EncoderError> {
        let grams = char_ngrams(text, self.config.ngram);
        if grams.is_empty() {
            return Err(EncoderError::TooShort(text.to_string()));
        }
        let mut counts = BTreeMap::new();
        for g in &grams {
            *counts.entry(self.bucket_of(g)).or_insert(0) += 1;
        }
        Ok((counts, grams.len()))
    }

    pub fn check_shape(&self) -> Result<(), EncoderError> {
        let expected = self.config.num_params();
        if self.table.len() != expected {
            return Err(EncoderError::Shape {
                expected,
                actual: self.table.len(),
            });
        }
        Ok(())
    }
}

/// Forward pass with the intermediates the backward pass needs.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub embedding: Embedding,
    pub pooled_norm: f64,
    pub counts: BTreeMap<usize, usize>,
    pub total: usize,
}

pub fn encode_traced(text: &str, params: &EncoderParams) -> Result<EncodeTrace, EncoderError> {
    let (counts, total) = params.bucket_counts(text)?;
    let d = params.config.dim;
    let mut pooled = vec![0.0; d];
    for (&bucket, &count) in &counts {
        let w = count as f64;
        for (p, r) in pooled.iter_mut().zip(params.row(bucket)) {
            *p += w * r;
        }
    }
    let inv_total = 1.0 / total as f64;
    pooled.iter_mut().for_each(|p| *p *= inv_total);
    let n = norm(&pooled);
    if !(n > 0.0) || !n.is_finite() {
        return Err(EncoderError::ZeroNorm(text.to_string()));
    }
    pooled.iter_mut().for_each(|p| *p /= n);
    Ok(EncodeTrace {
        embedding: Embedding(pooled),
        pooled_norm: n,
        counts,
        total,
    })
}

pub fn encode(text: &str, params: &EncoderParams) -> Result<Embedding, EncoderError> {
    encode_traced(text, params).map(|t| t.embedding)
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EncoderError> {
    cosine_slices(&a.0, &b.0)
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EncoderError> {
    if a.len() != b.len() {
        return Err(EncoderError::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EncoderError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Sparse gradient over the table: only touched rows are stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowGrads {
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl RowGrads {
    pub fn to_dense(&self, config: &EncoderConfig) -> Vec<f64> {
        let mut dense = vec![0.0; config.num_params()];
        self.add_into(&mut dense, config.dim, 1.0);
        dense
    }

    /// `dense += scale · self`, rows in ascending bucket order.
    pub fn add_into(&self, dense: &mut [f64], dim: usize, scale: f64) {
        for (&bucket, row) in &self.rows {
            for (dst, g) in dense[bucket * dim..(bucket + 1) * dim].iter_mut().zip(row) {
                *dst += scale * g;
            }
        }
    }
}

/// Gradient of `grad_out · encode(text)` with respect to the table, given
/// the forward trace.
pub fn backward_from_trace(trace: &EncodeTrace, grad_out: &[f64]) -> Result<RowGrads, EncoderError> {
    let e = trace.embedding.as_slice();
    if grad_out.len() != e.len() {
        return Err(EncoderError::Shape {
            expected: e.len(),
            actual: grad_out.len(),
        });
    }
    let eg = dot(e, grad_out);
    let pooled_grad: Vec<f64> = grad_out
        .iter()
        .zip(e)
        .map(|(g, ei)| (g - ei * eg) / trace.pooled_norm)
        .collect();
    let inv_total = 1.0 / trace.total as f64;
    let rows = trace
        .counts
        .iter()
        .map(|(&bucket, &count)| {
            let w = count as f64 * inv_total;
            (bucket, pooled_grad.iter().map(|g| w * g).collect())
        })
        .collect();
    Ok(RowGrads { rows })
}

pub fn encode_backward(text: &str, params: &EncoderParams, grad_out: &[f64]) -> Result<RowGrads, EncoderError> {
    params.check_shape()?;
    let trace = encode_traced(text, params)?;
    backward_from_trace(&trace, grad_out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSidecar {
    pub format: String,
    pub version: u32,
    pub config: EncoderConfig,
    pub seed: u64,
}

const HEADER_LEN: usize = 4 + 4 + 8 * 4;

/// Binary layout: magic `XLEN`, u32 version, then u64 dim, num_buckets,
/// ngram and seed, then the table as row-major f64; all little-endian.
pub fn write_checkpoint<W: Write>(mut out: W, params: &EncoderParams) -> Result<(), EncoderError> {
    params.check_shape()?;
    let c = &params.config;
    let mut buf = Vec::with_capacity(HEADER_LEN + params.table.len() * 8);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [c.dim as u64, c.num_buckets as u64, c.ngram as u64, params.seed] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &params.table {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<EncoderParams, EncoderError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(EncoderError::Checkpoint("file shorter than header".into()));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(EncoderError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(EncoderError::Checkpoint(format!("unsupported version {version}")));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes"));
    let config = EncoderConfig {
        dim: word(0) as usize,
        num_buckets: word(1) as usize,
        ngram: word(2) as usize,
    };
    config.validate()?;
    let seed = word(3);
    let body = &bytes[HEADER_LEN..];
    let expected = config
        .dim
        .checked_mul(config.num_buckets)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| EncoderError::Checkpoint("table size overflows".into()))?;
    if body.len() != expected {
        return Err(EncoderError::Checkpoint(format!(
            "expected {expected} table bytes, found {}",
            body.len()
        )));
    }
    let table: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(i) = table.iter().position(|v| !v.is_finite()) {
        return Err(EncoderError::Checkpoint(format!("non-finite entry at index {i}")));
    }
    Ok(EncoderParams { config, seed, table })
}

pub fn sidecar(params: &EncoderParams) -> CheckpointSidecar {
    CheckpointSidecar {
        format: "xling-encoder".into(),
        version: CHECKPOINT_VERSION,
        config: params.config,
        seed: params.seed,
    }
}
