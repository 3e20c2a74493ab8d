//! Domain adaptation toolkit for cross-lingual (Korean/English) financial
//! sentence embeddings.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`corpus`]: load raw records, drop low-quality ones, balance classes.
//! - [`typology`] and [`mining`]: tag semantic-shift patterns and mine
//!   `(source, positive, hard negative)` triplets through pluggable
//!   generation and judge clients.
//! - [`encoder`] and [`trainer`]: a hashed character n-gram encoder trained
//!   with a temperature-scaled triplet loss under AdamW.
//! - [`evalsts`]: Spearman evaluation on STS suites and before/after deltas.
//! - [`tokaudit`]: full-Hangul-syllable coverage of tokenizer vocabularies.
//!
//! [`fixtures`] generates the deterministic synthetic data used by tests and
//! the CLI demo pipeline.

pub mod corpus;
pub mod encoder;
pub mod evalsts;
pub mod fixtures;
pub mod lexicon;
pub mod mining;
pub mod tokaudit;
pub mod trainer;
pub mod typology;

mod text;

pub use corpus::{Document, Lang, SourceDomain};
pub use encoder::{Embedding, EncoderConfig, EncoderParams};
pub use mining::Triplet;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
