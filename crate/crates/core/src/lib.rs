//! Retrieval with sparse, randomly-projected dense, multi-vector and hybrid
//! scoring, plus a Monte-Carlo "fidelity lab" that measures how faithfully
//! seeded random projections preserve the rankings of the sparse scorers.
//!
//! The library is organized around one geometric quantity, the normalized
//! margin of a (query, winner, loser) triple,
//!
//! ```text
//! mu(q, d1, d2) = <q, d1 - d2> / (||q|| * ||d1 - d2||)
//! ```
//!
//! which controls how many random-projection dimensions are needed before a
//! compressed dual-encoder reproduces the sparse ranking. The modules:
//!
//! - [`corpus`] — tokenization, vocabularies, bag-of-words vectors, JSONL
//!   ingestion, and seeded synthetic passage/query generation (contiguous
//!   sub-sequence queries with near-duplicate distractors).
//! - [`sparse`] — boolean / tf-idf / BM25 scoring as explicit inner products
//!   and via an inverted index, exact sparse top-k, and binary persistence.
//! - [`projection`] — counter-based Rademacher and Gaussian random
//!   projections `f(x) = Ax` that never materialize the matrix.
//! - [`bounds`] — normalized margins and the closed-form error bounds /
//!   sufficient-dimension calculators the lab verifies.
//! - [`multivec`] — vocabulary-partition document segmentation, max-scored
//!   multi-vector documents, and the expanded-index equivalence.
//! - [`attention`] — normalized hard attention over token indicator
//!   embeddings, an exact rank-preservation oracle.
//! - [`engine`] — exact brute-force MIPS over dense/multi-vector indexes,
//!   hybrid sparse+dense reranking, and IR metrics.
//! - [`lab`] — the Monte-Carlo experiment runners and their CSV reports.
//!
//! Everything downstream of a seed is deterministic: re-running any
//! experiment with the same configuration produces byte-identical artifacts
//! regardless of thread count.

pub mod attention;
pub mod bounds;
pub mod corpus;
pub mod engine;
pub mod lab;
pub mod multivec;
pub mod projection;
pub mod sparse;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Term id not present in the vocabulary.
    #[error("unknown term id {0}")]
    UnknownTerm(u32),
    /// A parameter violated its documented range or precondition.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// Normalized margin is undefined for the given inputs.
    #[error("undefined margin: {0}")]
    UndefinedMargin(&'static str),
    /// Vector dimensions disagree.
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    /// Row/column/doc index outside the valid range.
    #[error("index out of range: {0}")]
    OutOfRange(String),
    /// An input that must be nonempty was empty.
    #[error("empty input: {0}")]
    Empty(&'static str),
    /// A persisted artifact failed structural validation.
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
