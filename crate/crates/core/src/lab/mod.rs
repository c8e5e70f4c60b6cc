//! Monte-Carlo experiment runners for the projection guarantees.
//!
//! The lab answers empirical questions about random projections of scored
//! sparse vectors: how often does a projection swap a ranked pair
//! ([`estimate_pairwise_error`]), how many dimensions does a margin bin need
//! before pairwise accuracy reaches a target ([`min_k_per_bin`]), how do
//! margins shrink as documents grow ([`margin_quantiles_by_length`]), and how
//! many dimensions does recall@r need per length bin ([`min_k_for_recall`]).
//!
//! Everything is deterministic by construction: corpora are synthesized from
//! seeded generators, Monte-Carlo trials use counter-derived seeds, and all
//! aggregation is integer counting, so results are independent of thread
//! count and iteration order. Reports serialize to CSV with fixed headers
//! plus a JSON metadata sidecar, written atomically and named by a hash of
//! the generating configuration (see [`report`]).

mod margins;
mod pairwise;
mod recall;
pub mod report;
pub mod verify;

pub use margins::{margin_quantiles_by_length, MarginRow, DEFAULT_RANKS};
pub use pairwise::{
    estimate_pairwise_error, estimate_pairwise_error_grid, min_k_per_bin, ErrorEstimate,
    MinKConfig, MinKRow,
};
pub use recall::{min_k_for_recall, RecallMinKConfig, RecallRow, DEFAULT_RECALL_TARGETS};

use crate::bounds::normalized_margin;
use crate::corpus::{
    random_documents, synthesize_ict, Document, IctSpec, SparseVector, TokenMode, Vocabulary,
};
use crate::sparse::{doc_vector, query_vector, Bm25Params, InvertedIndex, Scheme};
use crate::{Error, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Document lengths (tokens) used by the length-binned experiments.
pub const DEFAULT_LENGTH_BINS: [u32; 4] = [50, 100, 200, 400];

// ---------------------------------------------------------------------------
// Output-dimension grid
// ---------------------------------------------------------------------------

/// Strictly increasing grid of candidate output dimensions `k`.
///
/// Sweeps evaluate every grid value in ascending order; the default grid is
/// geometric with 40 values spanning 32..=9472, which keeps relative spacing
/// near-constant (~16% steps) so min-k estimates have uniform relative
/// resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KGrid {
    ks: Vec<u32>,
    id: String,
}

impl KGrid {
    /// Geometrically spaced grid of `n` distinct integers from `lo` to `hi`
    /// inclusive. Fails if rounding collapses neighbours (grid too dense for
    /// the range) or if the endpoints are degenerate.
    pub fn geometric(lo: u32, hi: u32, n: u32) -> Result<Self> {
        if lo < 1 || hi <= lo {
            return Err(Error::InvalidParam(format!(
                "geometric grid needs 1 <= lo < hi, got {lo}..{hi}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParam("a grid needs at least two values".into()));
        }
        let (llo, lhi) = ((lo as f64).ln(), (hi as f64).ln());
        let mut ks = Vec::with_capacity(n as usize);
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            ks.push((llo + t * (lhi - llo)).exp().round() as u32);
        }
        ks[0] = lo;
        *ks.last_mut().expect("n >= 2") = hi;
        for w in ks.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParam(format!(
                    "geometric grid {lo}..{hi} with {n} points collapses at {}; use fewer points",
                    w[0]
                )));
            }
        }
        Ok(KGrid { ks, id: format!("geo{lo}-{hi}-{n}") })
    }

    /// The default sweep grid: 40 geometric values in 32..=9472.
    pub fn default_sweep() -> Self {
        KGrid::geometric(32, 9472, 40).expect("default grid is valid")
    }

    /// Grid from an explicit list (must be strictly increasing, length >= 2).
    pub fn from_list(ks: Vec<u32>) -> Result<Self> {
        if ks.len() < 2 {
            return Err(Error::InvalidParam("a grid needs at least two values".into()));
        }
        if ks[0] < 1 {
            return Err(Error::InvalidParam("grid dimensions must be >= 1".into()));
        }
        for w in ks.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParam(format!(
                    "grid values must be strictly increasing ({} !< {})",
                    w[0], w[1]
                )));
            }
        }
        let mut h = Sha256::new();
        for k in &ks {
            h.update(k.to_le_bytes());
        }
        let id =
            format!("custom-{:08x}", u32::from_le_bytes(h.finalize()[..4].try_into().unwrap()));
        Ok(KGrid { ks, id })
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn k_max(&self) -> u32 {
        *self.ks.last().expect("grids are non-empty")
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Stable identifier recorded in every CSV row produced under this grid.
    pub fn id(&self) -> &str {
        &self.id
    }
}

// ---------------------------------------------------------------------------
// Margin triples
// ---------------------------------------------------------------------------

/// A ranked pair under one query: `d1` outscores `d2` with positive
/// normalized margin. Indices point into the caller's query/document slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginTriple {
    pub query: u32,
    pub d1: u32,
    pub d2: u32,
    pub margin: f64,
}

/// Result of [`harvest_triples`].
#[derive(Debug, Clone)]
pub struct Harvest {
    /// One triple per (query, runner-up document) with positive margin,
    /// ordered by query then by `d2` ordinal.
    pub triples: Vec<MarginTriple>,
    /// Top-scoring document per query (`None` when the query scored zero
    /// everywhere and was skipped).
    pub best: Vec<Option<u32>>,
    /// Queries skipped because no document scored above zero.
    pub skipped_queries: u32,
}

/// Index of the highest-scoring document for `q` (ties broken by the lowest
/// ordinal), plus the score. `None` only for an empty collection.
pub fn sparse_argmax(q: &SparseVector, docs: &[SparseVector]) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (i, d) in docs.iter().enumerate() {
        let s = q.dot(d);
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((i as u32, s)),
        }
    }
    best
}

/// Normalized margins of `docs[d1]` over every other document under `q`,
/// ascending. Pairs whose margin is undefined (duplicate document content or
/// an all-zero query) are omitted.
pub fn sorted_margins(q: &SparseVector, d1: u32, docs: &[SparseVector]) -> Vec<f64> {
    let d1v = &docs[d1 as usize];
    let mut out = Vec::with_capacity(docs.len().saturating_sub(1));
    for (i, d2) in docs.iter().enumerate() {
        if i as u32 == d1 {
            continue;
        }
        if let Ok(m) = normalized_margin(q, d1v, d2) {
            out.push(m);
        }
    }
    out.sort_unstable_by(f64::total_cmp);
    out
}

/// Enumerate margin triples for a scored corpus: for each query take the
/// sparse argmax as `d1`, then emit one triple per other document with
/// strictly positive normalized margin. Queries that score zero against
/// every document are skipped and counted; zero-margin (tied) and undefined
/// pairs are dropped.
pub fn harvest_triples(queries: &[SparseVector], docs: &[SparseVector]) -> Result<Harvest> {
    if docs.is_empty() {
        return Err(Error::Empty("document collection"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("query collection"));
    }
    let per_query: Vec<(Vec<MarginTriple>, Option<u32>)> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let (d1, score) = sparse_argmax(q, docs).expect("non-empty collection");
            if score <= 0.0 {
                return (Vec::new(), None);
            }
            let d1v = &docs[d1 as usize];
            let mut triples = Vec::new();
            for (i, d2) in docs.iter().enumerate() {
                if i as u32 == d1 {
                    continue;
                }
                if let Ok(m) = normalized_margin(q, d1v, d2) {
                    if m > 0.0 {
                        triples.push(MarginTriple {
                            query: qi as u32,
                            d1,
                            d2: i as u32,
                            margin: m,
                        });
                    }
                }
            }
            (triples, Some(d1))
        })
        .collect();

    let mut harvest = Harvest {
        triples: Vec::new(),
        best: Vec::with_capacity(queries.len()),
        skipped_queries: 0,
    };
    for (triples, best) in per_query {
        if best.is_none() {
            harvest.skipped_queries += 1;
        }
        harvest.best.push(best);
        harvest.triples.extend(triples);
    }
    Ok(harvest)
}

/// Construct a `(q, d1, d2)` triple in a `v`-dimensional space whose
/// normalized margin equals `margin` up to float rounding. The pair
/// difference lives in the plane spanned by two random coordinates (one
/// aligned with the query, one orthogonal), plus a shared component on a
/// third coordinate so both documents are nonzero and partially cancel.
///
/// Used by bound-verification sweeps that need margins on a designed grid
/// rather than whatever a corpus happens to produce.
pub fn planar_triple(
    v: u32,
    margin: f64,
    seed: u64,
) -> Result<(SparseVector, SparseVector, SparseVector)> {
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(Error::OutOfRange(format!("designed margin must be in (0, 1], got {margin}")));
    }
    if v < 3 {
        return Err(Error::InvalidParam("planar triples need at least 3 dimensions".into()));
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut coords = [0u32; 3];
    let mut picked = 0;
    while picked < 3 {
        let c = rng.gen_range(0..v);
        if !coords[..picked].contains(&c) {
            coords[picked] = c;
            picked += 1;
        }
    }
    let [a, b, c] = coords;
    let ortho = (1.0 - margin * margin).max(0.0).sqrt();
    let q = SparseVector::from_pairs([(a, 1.0)]);
    let d1 = SparseVector::from_pairs([(a, margin / 2.0), (b, ortho / 2.0), (c, 1.0)]);
    let d2 = SparseVector::from_pairs([(a, -margin / 2.0), (b, -ortho / 2.0), (c, 1.0)]);
    Ok((q, d1, d2))
}

// ---------------------------------------------------------------------------
// Synthetic lab corpora
// ---------------------------------------------------------------------------

/// Recipe for a scored synthetic retrieval corpus (inverse cloze task over
/// Zipf-distributed token streams).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabCorpusConfig {
    /// Total passages, near-duplicate distractors included.
    pub n_docs: u32,
    pub n_queries: u32,
    /// Passage length in tokens (every passage has exactly this length).
    pub doc_len: u32,
    pub vocab_size: u32,
    /// Zipf exponent for token draws; `0` means uniform.
    pub zipf_exponent: f64,
    pub scheme: Scheme,
    pub params: Bm25Params,
    /// Inclusive query length range in tokens.
    pub query_len: (u32, u32),
    /// Near-duplicate distractors emitted per gold passage.
    pub distractors_per_gold: u32,
    /// Token positions edited in each distractor (1 or 2).
    pub edit_count: u32,
    pub seed: u64,
}

impl Default for LabCorpusConfig {
    fn default() -> Self {
        LabCorpusConfig {
            n_docs: 5000,
            n_queries: 500,
            doc_len: 50,
            vocab_size: 30_000,
            zipf_exponent: 1.0,
            scheme: Scheme::Bm25,
            params: Bm25Params::default(),
            query_len: (5, 25),
            distractors_per_gold: 2,
            edit_count: 2,
            seed: 0,
        }
    }
}

/// A synthesized corpus with scheme-weighted vectors ready for margin
/// harvesting and projection experiments.
#[derive(Debug, Clone)]
pub struct LabCorpus {
    pub doc_ids: Vec<String>,
    pub query_ids: Vec<String>,
    /// Document-side vectors under the configured scheme.
    pub docs: Vec<SparseVector>,
    /// Query-side vectors under the configured scheme.
    pub queries: Vec<SparseVector>,
    /// Gold passage ordinal per query (the passage the query was cut from).
    pub gold: Vec<u32>,
    /// Token count per document.
    pub doc_tokens: Vec<u32>,
    pub v: u32,
    pub scheme: Scheme,
    pub params: Bm25Params,
    /// Content digest over ids, token streams, and gold labels.
    pub corpus_hash: String,
}

/// Synthesize a scored corpus per `cfg`: Zipf token sources are cut into
/// fixed-length passages, each of the first `n_queries` passages donates a
/// contiguous sub-sequence query and gains `distractors_per_gold`
/// near-duplicates, and all passages are indexed under the scheme to produce
/// the weighted vectors. Total passages come out to exactly `cfg.n_docs`.
pub fn synthesize_lab_corpus(cfg: &LabCorpusConfig) -> Result<LabCorpus> {
    let planted = cfg
        .n_queries
        .checked_mul(cfg.distractors_per_gold)
        .ok_or_else(|| Error::InvalidParam("distractor count overflows".into()))?;
    let base = cfg.n_docs.checked_sub(planted).ok_or_else(|| {
        Error::InvalidParam(format!(
            "n_docs={} cannot host {} queries x {} distractors",
            cfg.n_docs, cfg.n_queries, cfg.distractors_per_gold
        ))
    })?;
    if base < cfg.n_queries {
        return Err(Error::InvalidParam(format!(
            "only {base} base passages for {} queries",
            cfg.n_queries
        )));
    }
    if cfg.query_len.1 > cfg.doc_len {
        return Err(Error::InvalidParam(format!(
            "query length {} exceeds passage length {}",
            cfg.query_len.1, cfg.doc_len
        )));
    }

    let sources = random_documents(base, cfg.doc_len, cfg.vocab_size, cfg.seed, cfg.zipf_exponent);
    let ict = synthesize_ict(
        &sources,
        cfg.vocab_size,
        &IctSpec {
            query_len: cfg.query_len,
            distractors_per_gold: cfg.distractors_per_gold,
            edit_count: cfg.edit_count,
            max_passage_len: cfg.doc_len,
            seed: cfg.seed.wrapping_add(0x1c7),
        },
        Some(cfg.n_queries as usize),
    )?;
    if ict.queries.len() != cfg.n_queries as usize || ict.passages.len() != cfg.n_docs as usize {
        return Err(Error::InvalidParam(format!(
            "synthesis yielded {} passages / {} queries, wanted {} / {}",
            ict.passages.len(),
            ict.queries.len(),
            cfg.n_docs,
            cfg.n_queries
        )));
    }

    let index = InvertedIndex::build(
        &ict.passages,
        Vocabulary::synthetic(cfg.vocab_size),
        cfg.scheme,
        cfg.params,
        TokenMode::Unigram,
    )?;
    let docs: Vec<SparseVector> = ict
        .passages
        .par_iter()
        .map(|d| doc_vector(index.vocab(), d, cfg.scheme, &cfg.params))
        .collect::<Result<_>>()?;
    let queries: Vec<SparseVector> = ict
        .queries
        .par_iter()
        .map(|q| query_vector(index.vocab(), q, cfg.scheme))
        .collect::<Result<_>>()?;

    let mut h = Sha256::new();
    h.update(cfg.vocab_size.to_le_bytes());
    h.update([cfg.scheme as u8]);
    h.update(cfg.params.k1.to_le_bytes());
    h.update(cfg.params.b.to_le_bytes());
    let mut digest_doc = |d: &Document| {
        h.update((d.id.len() as u32).to_le_bytes());
        h.update(d.id.as_bytes());
        h.update((d.tokens.len() as u32).to_le_bytes());
        for &t in &d.tokens {
            h.update(t.to_le_bytes());
        }
    };
    for d in &ict.passages {
        digest_doc(d);
    }
    for q in &ict.queries {
        digest_doc(q);
    }
    for &g in &ict.gold {
        h.update(g.to_le_bytes());
    }
    let corpus_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>();

    Ok(LabCorpus {
        doc_ids: ict.passages.iter().map(|d| d.id.clone()).collect(),
        query_ids: ict.queries.iter().map(|q| q.id.clone()).collect(),
        docs,
        queries,
        gold: ict.gold,
        doc_tokens: ict.passages.iter().map(|d| d.len() as u32).collect(),
        v: cfg.vocab_size,
        scheme: cfg.scheme,
        params: cfg.params,
        corpus_hash,
    })
}
