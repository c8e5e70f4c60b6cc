//! Boolean, TF-IDF, and BM25 scoring, each expressed both as an inner
//! product of explicit sparse vectors and via an inverted index, plus exact
//! sparse top-k retrieval and binary index persistence.
//!
//! All three schemes are written as `score(q, d) = <q~, d~>`:
//!
//! - boolean: `q~_i = d~_i = 1` for present terms;
//! - tfidf:   `q~_i = idf_i` (presence-based), `d~_i = tf_i`;
//! - bm25:    `q~_i = idf_i`, `d~_i = tf_i (k1+1) / (tf_i + k1 (1 - b + b |d|/avgdl))`.
//!
//! The idf is the non-negative variant `ln(1 + (N - df + 0.5)/(df + 0.5))`,
//! so every score is non-negative. Query term frequency is deliberately
//! ignored (presence times idf).

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SparseVector, TokenMode, Vocabulary};
use crate::{Error, Result};

/// Scoring scheme shared by query and document weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Boolean,
    TfIdf,
    Bm25,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Boolean => write!(f, "boolean"),
            Scheme::TfIdf => write!(f, "tfidf"),
            Scheme::Bm25 => write!(f, "bm25"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boolean" | "bool" => Ok(Scheme::Boolean),
            "tfidf" => Ok(Scheme::TfIdf),
            "bm25" => Ok(Scheme::Bm25),
            other => Err(Error::InvalidParam(format!("unknown scheme `{other}`"))),
        }
    }
}

/// BM25 hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1.is_nan() || self.k1 < 0.0 {
            return Err(Error::InvalidParam(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParam(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Non-negative inverse document frequency:
/// `ln(1 + (N - df + 0.5) / (df + 0.5))`; strictly positive for df <= N.
pub fn idf(vocab: &Vocabulary, term: u32) -> Result<f64> {
    let n = vocab.n_docs();
    if n == 0 {
        return Err(Error::InvalidParam("idf needs at least one observed document".into()));
    }
    let df = vocab.df(term)? as f64;
    Ok((1.0 + (n as f64 - df + 0.5) / (df + 0.5)).ln())
}

/// Saturating document term weight
/// `tf (k1+1) / (tf + k1 (1 - b + b doclen/avgdl))`; monotone increasing in
/// tf and bounded above by `k1 + 1`.
pub fn bm25_doc_weight(tf: u32, doc_len: u32, avgdl: f64, params: &Bm25Params) -> Result<f64> {
    if tf == 0 {
        return Err(Error::InvalidParam("bm25 weight needs tf >= 1".into()));
    }
    if avgdl <= 0.0 {
        return Err(Error::InvalidParam("average document length is zero".into()));
    }
    let tf = tf as f64;
    let norm = 1.0 - params.b + params.b * doc_len as f64 / avgdl;
    Ok(tf * (params.k1 + 1.0) / (tf + params.k1 * norm))
}

/// Document-side vector `d~` under a scheme (see module docs for weights).
pub fn doc_vector(
    vocab: &Vocabulary,
    doc: &Document,
    scheme: Scheme,
    params: &Bm25Params,
) -> Result<SparseVector> {
    let mut counts: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
    for &t in &doc.tokens {
        if t >= vocab.len() {
            return Err(Error::UnknownTerm(t));
        }
        *counts.entry(t).or_insert(0) += 1;
    }
    let doc_len = doc.len() as u32;
    let mut entries = Vec::with_capacity(counts.len());
    for (t, tf) in counts {
        let w = match scheme {
            Scheme::Boolean => 1.0,
            Scheme::TfIdf => tf as f64,
            Scheme::Bm25 => bm25_doc_weight(tf, doc_len, vocab.avgdl(), params)?,
        };
        entries.push((t, w));
    }
    SparseVector::from_sorted(entries)
}

/// Query-side vector `q~`: presence-based — a repeated query term counts
/// once. Boolean weights are 1; tfidf/bm25 weights are the term idf.
pub fn query_vector(vocab: &Vocabulary, query: &Document, scheme: Scheme) -> Result<SparseVector> {
    let mut unique: Vec<u32> = query.tokens.clone();
    unique.sort_unstable();
    unique.dedup();
    let mut entries = Vec::with_capacity(unique.len());
    for t in unique {
        if t >= vocab.len() {
            return Err(Error::UnknownTerm(t));
        }
        let w = match scheme {
            Scheme::Boolean => 1.0,
            Scheme::TfIdf | Scheme::Bm25 => idf(vocab, t)?,
        };
        entries.push((t, w));
    }
    SparseVector::from_sorted(entries)
}

// ---------------------------------------------------------------------------
// Inverted index
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 5] = b"MLAB1";
const VERSION: u32 = 1;

/// Term-at-a-time inverted index: per term id, a postings list of
/// (doc ordinal, document weight) sorted by doc ordinal. Document ordinals
/// are corpus positions; all tie-breaking is by ascending ordinal.
#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    vocab: Vocabulary,
    scheme: Scheme,
    params: Bm25Params,
    mode: TokenMode,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    postings: Vec<Vec<(u32, f64)>>,
}

impl InvertedIndex {
    /// Build over a document collection. Collection statistics (df, N,
    /// avgdl) are re-derived from exactly these documents so stored weights
    /// always agree with [`doc_vector`] recomputation.
    pub fn build(
        docs: &[Document],
        mut vocab: Vocabulary,
        scheme: Scheme,
        params: Bm25Params,
        mode: TokenMode,
    ) -> Result<Self> {
        params.validate()?;
        if docs.is_empty() {
            return Err(Error::Empty("document collection"));
        }
        vocab.freeze();
        vocab.clear_stats();
        for doc in docs {
            if doc.is_empty() {
                return Err(Error::InvalidParam(format!("document `{}` has no tokens", doc.id)));
            }
            vocab.observe(&doc.tokens);
        }
        let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); vocab.len() as usize];
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        for (ordinal, doc) in docs.iter().enumerate() {
            let vec = doc_vector(&vocab, doc, scheme, &params)?;
            for &(t, w) in vec.entries() {
                postings[t as usize].push((ordinal as u32, w));
            }
            doc_ids.push(doc.id.clone());
            doc_lens.push(doc.len() as u32);
        }
        Ok(InvertedIndex { vocab, scheme, params, mode, doc_ids, doc_lens, postings })
    }

    pub fn n_docs(&self) -> u32 {
        self.doc_ids.len() as u32
    }

    pub fn v(&self) -> u32 {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_len(&self, ordinal: u32) -> u32 {
        self.doc_lens[ordinal as usize]
    }

    pub fn avgdl(&self) -> f64 {
        self.vocab.avgdl()
    }

    pub fn postings(&self, term: u32) -> &[(u32, f64)] {
        &self.postings[term as usize]
    }

    /// Vectorize raw query text with this index's mode and scheme.
    pub fn query_from_text(&self, text: &str) -> Result<SparseVector> {
        let tokens = self.vocab.tokenize(text, self.mode);
        query_vector(&self.vocab, &Document::new("q", tokens), self.scheme)
    }

    /// Exact score of one document by postings lookup; equals the
    /// merge-join dot product with that document's `d~` vector.
    pub fn score_doc(&self, q: &SparseVector, ordinal: u32) -> f64 {
        let mut acc = 0.0;
        for &(t, qw) in q.entries() {
            if let Some(plist) = self.postings.get(t as usize) {
                if let Ok(pos) = plist.binary_search_by_key(&ordinal, |&(d, _)| d) {
                    acc += qw * plist[pos].1;
                }
            }
        }
        acc
    }

    /// Scores for every document (documents without any query term score 0).
    pub fn score_all(&self, q: &SparseVector) -> Vec<f64> {
        let mut scores = vec![0.0f64; self.doc_ids.len()];
        for &(t, qw) in q.entries() {
            if let Some(plist) = self.postings.get(t as usize) {
                for &(d, w) in plist {
                    scores[d as usize] += qw * w;
                }
            }
        }
        scores
    }

    /// Exact top-k over the whole collection (zero scores included), ordered
    /// by descending score with ties broken by ascending doc ordinal.
    pub fn topk(&self, q: &SparseVector, k: usize) -> Vec<(u32, f64)> {
        let scores = self.score_all(q);
        rank_scores(&scores, k)
    }

    // -- persistence ------------------------------------------------------

    /// Serialize to the binary index format (little-endian throughout):
    /// magic `MLAB1`, version u32, scheme u8, token-mode u8, v u32, N u32,
    /// k1 f64, b f64, then the term table, the document table (id, length),
    /// and per-term postings. Round-trips bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.scheme {
            Scheme::Boolean => 0,
            Scheme::TfIdf => 1,
            Scheme::Bm25 => 2,
        });
        out.push(match self.mode {
            TokenMode::Unigram => 0,
            TokenMode::UnigramBigram => 1,
        });
        out.extend_from_slice(&self.v().to_le_bytes());
        out.extend_from_slice(&self.n_docs().to_le_bytes());
        out.extend_from_slice(&self.params.k1.to_le_bytes());
        out.extend_from_slice(&self.params.b.to_le_bytes());
        for t in 0..self.v() {
            let term = self.vocab.term(t).expect("dense ids").as_bytes();
            out.extend_from_slice(&(term.len() as u16).to_le_bytes());
            out.extend_from_slice(term);
        }
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lens) {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&len.to_le_bytes());
        }
        for plist in &self.postings {
            out.extend_from_slice(&(plist.len() as u32).to_le_bytes());
            for &(d, w) in plist {
                out.extend_from_slice(&d.to_le_bytes());
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(5)?;
        if magic != MAGIC {
            return Err(Error::Format("bad magic (expected MLAB1)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let scheme = match r.u8()? {
            0 => Scheme::Boolean,
            1 => Scheme::TfIdf,
            2 => Scheme::Bm25,
            x => return Err(Error::Format(format!("unknown scheme tag {x}"))),
        };
        let mode = match r.u8()? {
            0 => TokenMode::Unigram,
            1 => TokenMode::UnigramBigram,
            x => return Err(Error::Format(format!("unknown token-mode tag {x}"))),
        };
        let v = r.u32()?;
        let n = r.u32()?;
        let params = Bm25Params { k1: r.f64()?, b: r.f64()? };
        params.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut terms = Vec::with_capacity(v as usize);
        for _ in 0..v {
            let len = r.u16()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Format(format!("term table: {e}")))?;
            terms.push(s.to_string());
        }
        let mut doc_ids = Vec::with_capacity(n as usize);
        let mut doc_lens = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let len = r.u16()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Format(format!("doc table: {e}")))?;
            doc_ids.push(s.to_string());
            doc_lens.push(r.u32()?);
        }
        let mut postings = Vec::with_capacity(v as usize);
        let mut df = Vec::with_capacity(v as usize);
        for _ in 0..v {
            let len = r.u32()? as usize;
            let mut plist = Vec::with_capacity(len);
            let mut prev: Option<u32> = None;
            for _ in 0..len {
                let d = r.u32()?;
                let w = r.f64()?;
                if d >= n || prev.is_some_and(|p| p >= d) {
                    return Err(Error::Format("postings not strictly increasing by doc".into()));
                }
                prev = Some(d);
                plist.push((d, w));
            }
            df.push(plist.len() as u32);
            postings.push(plist);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after postings".into()));
        }
        let total_tokens: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let vocab = Vocabulary::from_parts(terms, df, n, total_tokens)?;
        Ok(InvertedIndex { vocab, scheme, params, mode, doc_ids, doc_lens, postings })
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Check stored weights against a fresh [`doc_vector`] computation.
    pub fn validate_against(&self, docs: &[Document]) -> Result<()> {
        for (ordinal, doc) in docs.iter().enumerate() {
            let vec = doc_vector(&self.vocab, doc, self.scheme, &self.params)?;
            for &(t, w) in vec.entries() {
                let stored = self
                    .postings
                    .get(t as usize)
                    .and_then(|p| {
                        p.binary_search_by_key(&(ordinal as u32), |&(d, _)| d).ok().map(|i| p[i].1)
                    })
                    .ok_or_else(|| Error::Format(format!("missing posting t={t} d={ordinal}")))?;
                let scale = w.abs().max(stored.abs()).max(f64::MIN_POSITIVE);
                if ((w - stored) / scale).abs() > 1e-12 {
                    return Err(Error::Format(format!("posting weight drift t={t} d={ordinal}")));
                }
            }
        }
        Ok(())
    }
}

/// Rank a dense score array: descending score, ties by ascending ordinal,
/// truncated to `k`.
pub fn rank_scores(scores: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b))
    });
    order.into_iter().take(k).map(|d| (d, scores[d as usize])).collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
