//! Tokenization, vocabulary construction, bag-of-words vectors, JSONL
//! ingestion, and seeded synthetic corpus generation.
//!
//! The synthetic generator produces an "inverse cloze" style retrieval task:
//! source documents are split into non-overlapping passages of at most `l`
//! tokens, each gold passage yields one query that is a contiguous
//! sub-sequence of it (the query tokens are *not* removed from the passage),
//! and each gold passage additionally yields near-duplicate distractor
//! passages that differ from it in exactly `edit_count` token positions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

/// Token emission mode: unigrams only, or unigrams followed by the ids of
/// each adjacent word pair joined as `"w1_w2"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenMode {
    Unigram,
    UnigramBigram,
}

impl fmt::Display for TokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenMode::Unigram => write!(f, "unigram"),
            TokenMode::UnigramBigram => write!(f, "unigram+bigram"),
        }
    }
}

impl FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unigram" => Ok(TokenMode::Unigram),
            "unigram+bigram" | "bigram" => Ok(TokenMode::UnigramBigram),
            other => Err(Error::InvalidParam(format!("unknown token mode `{other}`"))),
        }
    }
}

/// Lowercased alphanumeric word splitting: every maximal run of ASCII
/// alphanumerics (plus non-ASCII letters, lowercased) is one word.
fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cur.push(lc);
            }
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Surface terms for a text under a mode: words first, then (in bigram mode)
/// each adjacent pair joined with `_`.
fn surface_terms(text: &str, mode: TokenMode) -> Vec<String> {
    let ws = words(text);
    let mut terms = ws.clone();
    if mode == TokenMode::UnigramBigram {
        for pair in ws.windows(2) {
            terms.push(format!("{}_{}", pair[0], pair[1]));
        }
    }
    terms
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Term to dense-id map plus the collection statistics (document frequency,
/// document count, average document length) that idf-style weighting needs.
///
/// Ids are assigned contiguously in first-seen order and are stable once the
/// vocabulary is frozen; freezing stops term admission but statistics may
/// still be (re)observed over a document collection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    ids: HashMap<String, u32>,
    df: Vec<u32>,
    n_docs: u32,
    total_tokens: u64,
    frozen: bool,
}

/// Serialized form (the id map is rebuilt from `terms`).
#[derive(Clone, Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: u32,
    total_tokens: u64,
    frozen: bool,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let ids = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary {
            terms: r.terms,
            ids,
            df: r.df,
            n_docs: r.n_docs,
            total_tokens: r.total_tokens,
            frozen: r.frozen,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
            total_tokens: v.total_tokens,
            frozen: v.frozen,
        }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// Empty, open vocabulary.
    pub fn new() -> Self {
        Vocabulary {
            terms: Vec::new(),
            ids: HashMap::new(),
            df: Vec::new(),
            n_docs: 0,
            total_tokens: 0,
            frozen: false,
        }
    }

    /// Frozen vocabulary of `v` synthetic terms `t0..t{v-1}` with empty
    /// statistics; observe a collection to fill df/N/avgdl.
    pub fn synthetic(v: u32) -> Self {
        let terms: Vec<String> = (0..v).map(|i| format!("t{i}")).collect();
        let ids = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { terms, ids, df: vec![0; v as usize], n_docs: 0, total_tokens: 0, frozen: true }
    }

    /// Reassemble a frozen vocabulary from persisted fields. `df` must be
    /// parallel to `terms`.
    pub fn from_parts(
        terms: Vec<String>,
        df: Vec<u32>,
        n_docs: u32,
        total_tokens: u64,
    ) -> Result<Self> {
        if df.len() != terms.len() {
            return Err(Error::Format("df table size != term count".into()));
        }
        let ids = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let v = Vocabulary { terms, ids, df, n_docs, total_tokens, frozen: true };
        v.validate()?;
        Ok(v)
    }

    /// Number of terms (the sparse dimensionality `v`).
    pub fn len(&self) -> u32 {
        self.terms.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Stop admitting new terms; ids are final afterwards.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    /// Document frequency of a term id.
    pub fn df(&self, id: u32) -> Result<u32> {
        self.df.get(id as usize).copied().ok_or(Error::UnknownTerm(id))
    }

    /// Number of observed documents.
    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    /// Average observed document length in tokens; 0.0 before any document.
    pub fn avgdl(&self) -> f64 {
        if self.n_docs == 0 {
            0.0
        } else {
            self.total_tokens as f64 / self.n_docs as f64
        }
    }

    /// Discard collection statistics (df/N/avgdl), keeping the term table.
    pub fn clear_stats(&mut self) {
        self.df.iter_mut().for_each(|d| *d = 0);
        self.n_docs = 0;
        self.total_tokens = 0;
    }

    /// Fold one document's tokens into df/N/avgdl.
    pub fn observe(&mut self, tokens: &[u32]) {
        let unique: HashSet<u32> = tokens.iter().copied().collect();
        for id in unique {
            if let Some(slot) = self.df.get_mut(id as usize) {
                *slot += 1;
            }
        }
        self.n_docs += 1;
        self.total_tokens += tokens.len() as u64;
    }

    fn intern(&mut self, term: &str) -> u32 {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.terms.push(term.to_string());
        self.ids.insert(term.to_string(), id);
        self.df.push(0);
        id
    }

    /// Tokenize against a frozen (or simply read-only) vocabulary: unknown
    /// terms are dropped. Empty text yields an empty sequence.
    pub fn tokenize(&self, text: &str, mode: TokenMode) -> Vec<u32> {
        surface_terms(text, mode).iter().filter_map(|t| self.id(t)).collect()
    }

    /// Tokenize while building: unknown terms are admitted (unless the
    /// vocabulary is frozen, in which case they are dropped as in
    /// [`Vocabulary::tokenize`]).
    pub fn tokenize_build(&mut self, text: &str, mode: TokenMode) -> Vec<u32> {
        if self.frozen {
            return self.tokenize(text, mode);
        }
        surface_terms(text, mode).iter().map(|t| self.intern(t)).collect()
    }

    /// Internal consistency check: df never exceeds N, ids are dense.
    pub fn validate(&self) -> Result<()> {
        if self.df.len() != self.terms.len() {
            return Err(Error::Format("df table size != term count".into()));
        }
        if let Some(id) = self.df.iter().position(|&d| d > self.n_docs) {
            return Err(Error::Format(format!("df[{id}] exceeds document count")));
        }
        if self.n_docs > 0 && self.avgdl() <= 0.0 {
            return Err(Error::Format("avgdl must be positive once documents exist".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Documents and sparse vectors
// ---------------------------------------------------------------------------

/// A tokenized document: stable string id plus its ordered token-id sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<u32>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<u32>) -> Self {
        Document { id: id.into(), tokens }
    }

    /// Document length T in tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sparse vector over a vocabulary: strictly increasing (term-id, weight)
/// pairs with no stored zeros and a cached squared norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
    norm_sq: f64,
}

impl SparseVector {
    /// Empty vector.
    pub fn zero() -> Self {
        SparseVector { entries: Vec::new(), norm_sq: 0.0 }
    }

    /// Standard basis vector `e_term`.
    pub fn unit(term: u32) -> Self {
        SparseVector { entries: vec![(term, 1.0)], norm_sq: 1.0 }
    }

    /// Build from arbitrary pairs: sorts by id, sums duplicates, drops exact
    /// zeros, caches the squared norm.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (id, w) in pairs {
            *acc.entry(id).or_insert(0.0) += w;
        }
        let entries: Vec<(u32, f64)> = acc.into_iter().filter(|&(_, w)| w != 0.0).collect();
        let norm_sq = entries.iter().map(|&(_, w)| w * w).sum();
        SparseVector { entries, norm_sq }
    }

    /// Build from entries already sorted strictly by id (validated).
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::InvalidParam("entries not strictly increasing by id".into()));
            }
        }
        if entries.iter().any(|&(_, w)| w == 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParam("zero or non-finite weight".into()));
        }
        let norm_sq = entries.iter().map(|&(_, w)| w * w).sum();
        Ok(SparseVector { entries, norm_sq })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest term id present, if any.
    pub fn max_id(&self) -> Option<u32> {
        self.entries.last().map(|&(id, _)| id)
    }

    /// Cached squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    /// Merge-join inner product; exact over the shared support.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0usize, 0usize, 0.0f64);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// `self - other`; entries whose weights cancel exactly are dropped, so
    /// identical shared terms never leave residue.
    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        SparseVector::scaled_sum(1.0, self, -1.0, other)
    }

    /// `a*x + b*y` as a fresh vector.
    pub fn scaled_sum(a: f64, x: &SparseVector, b: f64, y: &SparseVector) -> SparseVector {
        let (mut i, mut j) = (0usize, 0usize);
        let mut entries = Vec::with_capacity(x.entries.len() + y.entries.len());
        while i < x.entries.len() || j < y.entries.len() {
            let w;
            let id;
            if j >= y.entries.len() || (i < x.entries.len() && x.entries[i].0 < y.entries[j].0) {
                id = x.entries[i].0;
                w = a * x.entries[i].1;
                i += 1;
            } else if i >= x.entries.len() || y.entries[j].0 < x.entries[i].0 {
                id = y.entries[j].0;
                w = b * y.entries[j].1;
                j += 1;
            } else {
                id = x.entries[i].0;
                w = a * x.entries[i].1 + b * y.entries[j].1;
                i += 1;
                j += 1;
            }
            if w != 0.0 {
                entries.push((id, w));
            }
        }
        let norm_sq = entries.iter().map(|&(_, w)| w * w).sum();
        SparseVector { entries, norm_sq }
    }

    /// Invariant check: strict id order, no zeros, cached norm within 1e-12
    /// relative of a recomputation.
    pub fn validate(&self) -> Result<()> {
        for pair in self.entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::InvalidParam("entries not strictly increasing by id".into()));
            }
        }
        if self.entries.iter().any(|&(_, w)| w == 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParam("zero or non-finite weight".into()));
        }
        let recomputed: f64 = self.entries.iter().map(|&(_, w)| w * w).sum();
        let scale = recomputed.abs().max(self.norm_sq.abs()).max(f64::MIN_POSITIVE);
        if ((recomputed - self.norm_sq) / scale).abs() > 1e-12 {
            return Err(Error::InvalidParam("cached norm drifted from entries".into()));
        }
        Ok(())
    }
}

/// 0/1 bag-of-words vector: weight 1 for each distinct term id.
pub fn vectorize_boolean(doc: &Document) -> SparseVector {
    let unique: HashSet<u32> = doc.tokens.iter().copied().collect();
    let mut ids: Vec<u32> = unique.into_iter().collect();
    ids.sort_unstable();
    let entries: Vec<(u32, f64)> = ids.into_iter().map(|id| (id, 1.0)).collect();
    let norm_sq = entries.len() as f64;
    SparseVector { entries, norm_sq }
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

/// Parameters for synthetic passage/query generation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IctSpec {
    /// Inclusive query-length range in tokens.
    pub query_len: (u32, u32),
    /// Near-duplicate distractor passages emitted per gold passage.
    pub distractors_per_gold: u32,
    /// Token positions replaced in each distractor; must be 1 or 2.
    pub edit_count: u32,
    /// Maximum passage length `l` in tokens.
    pub max_passage_len: u32,
    pub seed: u64,
}

impl Default for IctSpec {
    fn default() -> Self {
        IctSpec {
            query_len: (5, 25),
            distractors_per_gold: 2,
            edit_count: 2,
            max_passage_len: 50,
            seed: 0,
        }
    }
}

impl IctSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.query_len;
        if lo < 1 || lo > hi {
            return Err(Error::InvalidParam(format!("bad query length range [{lo},{hi}]")));
        }
        if !(1..=2).contains(&self.edit_count) {
            return Err(Error::InvalidParam(format!(
                "edit_count must be 1 or 2, got {}",
                self.edit_count
            )));
        }
        if self.max_passage_len == 0 {
            return Err(Error::InvalidParam("max_passage_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Output of [`synthesize_ict`]: passages (gold passages first, in source
/// order, then all distractors), one query per gold passage, and the gold
/// passage index for each query.
#[derive(Clone, Debug)]
pub struct IctCorpus {
    pub passages: Vec<Document>,
    pub queries: Vec<Document>,
    /// Index into `passages` of each query's gold passage.
    pub gold: Vec<u32>,
    /// Source documents skipped because they were shorter than the minimum
    /// query length.
    pub skipped_sources: u32,
    /// Passages too short to host a query (kept in the corpus, queryless).
    pub unqueried_passages: u32,
}

impl IctCorpus {
    pub fn gold_id(&self, query_idx: usize) -> &str {
        &self.passages[self.gold[query_idx] as usize].id
    }
}

/// Split sources into passages of at most `l` tokens, emit one contiguous
/// sub-sequence query per gold passage (up to `max_queries`), and append
/// `distractors_per_gold` near-duplicates per gold passage, each differing in
/// exactly `edit_count` uniformly chosen positions (replacement tokens drawn
/// uniformly from the vocabulary, excluding the original token so the edit
/// count is exact). Deterministic: one ChaCha8 stream seeded from
/// `spec.seed`, consumed in corpus order.
pub fn synthesize_ict(
    sources: &[Document],
    vocab_size: u32,
    spec: &IctSpec,
    max_queries: Option<usize>,
) -> Result<IctCorpus> {
    spec.validate()?;
    if vocab_size < 2 {
        return Err(Error::InvalidParam(
            "need a vocabulary of at least 2 tokens for distractor edits".into(),
        ));
    }
    let (qmin, qmax) = spec.query_len;
    let l = spec.max_passage_len as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut passages = Vec::new();
    let mut skipped_sources = 0u32;
    for src in sources {
        if (src.len() as u32) < qmin {
            skipped_sources += 1;
            continue;
        }
        for (chunk_no, chunk) in src.tokens.chunks(l).enumerate() {
            passages.push(Document::new(format!("{}-p{:03}", src.id, chunk_no), chunk.to_vec()));
        }
    }

    let cap = max_queries.unwrap_or(usize::MAX);
    let mut queries = Vec::new();
    let mut gold = Vec::new();
    let mut distractors = Vec::new();
    let mut unqueried = 0u32;
    for (p_idx, passage) in passages.iter().enumerate() {
        let plen = passage.len() as u32;
        if plen < qmin {
            unqueried += 1;
            continue;
        }
        if queries.len() >= cap {
            unqueried += 1;
            continue;
        }
        let qlen = rng.gen_range(qmin..=qmax.min(plen));
        let start = rng.gen_range(0..=(plen - qlen)) as usize;
        queries.push(Document::new(
            format!("q-{:05}", queries.len()),
            passage.tokens[start..start + qlen as usize].to_vec(),
        ));
        gold.push(p_idx as u32);

        for x in 0..spec.distractors_per_gold {
            let mut tokens = passage.tokens.clone();
            let mut positions = [0usize; 2];
            positions[0] = rng.gen_range(0..tokens.len());
            if spec.edit_count == 2 {
                loop {
                    positions[1] = rng.gen_range(0..tokens.len());
                    if positions[1] != positions[0] {
                        break;
                    }
                }
            }
            for &pos in positions.iter().take(spec.edit_count as usize) {
                let original = tokens[pos];
                loop {
                    let t = rng.gen_range(0..vocab_size);
                    if t != original {
                        tokens[pos] = t;
                        break;
                    }
                }
            }
            distractors.push(Document::new(format!("{}-x{:02}", passage.id, x), tokens));
        }
    }
    passages.extend(distractors);

    Ok(IctCorpus { passages, queries, gold, skipped_sources, unqueried_passages: unqueried })
}

/// Seeded synthetic source documents: `n` documents of exactly `len` tokens
/// drawn from `v` synthetic terms. Tokens follow a Zipf distribution with
/// exponent `zipf_s` (rank 1 most frequent) so document frequencies have a
/// realistic spread; `zipf_s <= 0` selects the uniform distribution.
pub fn random_documents(n: u32, len: u32, v: u32, seed: u64, zipf_s: f64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = if zipf_s > 0.0 {
        Some(rand_distr::Zipf::new(v as u64, zipf_s).expect("valid Zipf parameters"))
    } else {
        None
    };
    (0..n)
        .map(|i| {
            let tokens: Vec<u32> = (0..len)
                .map(|_| match &zipf {
                    Some(z) => (rng.sample(z) as u64 - 1) as u32,
                    None => rng.gen_range(0..v),
                })
                .collect();
            Document::new(format!("d{i:05}"), tokens)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------

/// One corpus or query record: `{"id", "text"}`, queries add `"gold_id"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JsonlRecord {
    pub id: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_id: Option<String>,
}

/// Read a UTF-8 JSONL file, one record per non-empty line.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<JsonlRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.as_ref().display(), lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Render records as JSONL bytes (one compact JSON object per line).
pub fn render_jsonl(records: &[JsonlRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("serializable record"));
        out.push('\n');
    }
    out
}

/// Space-joined surface form of a token sequence (inverse of unigram
/// tokenization for synthetic vocabularies; bigram terms contain `_` and do
/// not round-trip).
pub fn doc_to_text(vocab: &Vocabulary, doc: &Document) -> String {
    doc.tokens.iter().map(|&t| vocab.term(t).unwrap_or("?")).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
