//! Exact brute-force maximum-inner-product retrieval over dense (single- or
//! multi-vector) indexes, sparse–dense hybrid scoring via n-best union
//! reranking with a single interpolation weight, and ranking metrics.
//!
//! Everything here is exact and deterministic: scores are full-precision
//! inner products, rankings break ties by ascending document ordinal, and
//! outputs are byte-identical across runs and thread counts.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::SparseVector;
use crate::multivec::Segmentation;
use crate::projection::{DenseVector, ProjectionKind, ProjectionSpec};
use crate::sparse::{rank_scores, InvertedIndex};
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"MLABD";
const VERSION: u32 = 1;

/// Flat dense index: `m` projected segment vectors per document (m = 1 for
/// plain single-vector retrieval), all of one dimension `k`, stored
/// row-major as `entry(doc, seg) = vecs[(doc*m + seg)*k ..][..k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseIndex {
    spec: ProjectionSpec,
    seg: Option<Segmentation>,
    doc_ids: Vec<String>,
    vecs: Vec<f64>,
}

impl DenseIndex {
    /// Project a sparse corpus, splitting each document along `seg` when
    /// given (multi-vector mode) or projecting it whole (m = 1).
    pub fn build(
        docs: &[(String, SparseVector)],
        seg: Option<Segmentation>,
        spec: ProjectionSpec,
    ) -> Result<Self> {
        spec.validate()?;
        if docs.is_empty() {
            return Err(Error::Empty("document collection"));
        }
        if let Some(s) = &seg {
            if s.v != spec.v {
                return Err(Error::DimMismatch(s.v as usize, spec.v as usize));
            }
        }
        let m = seg.map_or(1, |s| s.m) as usize;
        let k = spec.k as usize;
        let mut vecs = vec![0.0f64; docs.len() * m * k];
        let mut doc_ids = Vec::with_capacity(docs.len());
        for (ordinal, (id, d)) in docs.iter().enumerate() {
            if let Some(max) = d.max_id() {
                if max >= spec.v {
                    return Err(Error::DimMismatch(max as usize + 1, spec.v as usize));
                }
            }
            let parts: Vec<DenseVector> = match &seg {
                Some(s) => crate::multivec::segment(d, s).iter().map(|p| spec.project(p)).collect(),
                None => vec![spec.project(d)],
            };
            for (j, part) in parts.iter().enumerate() {
                let at = (ordinal * m + j) * k;
                vecs[at..at + k].copy_from_slice(part.components());
            }
            doc_ids.push(id.clone());
        }
        Ok(DenseIndex { spec, seg, doc_ids, vecs })
    }

    pub fn spec(&self) -> ProjectionSpec {
        self.spec
    }

    pub fn segmentation(&self) -> Option<Segmentation> {
        self.seg
    }

    pub fn k(&self) -> u32 {
        self.spec.k
    }

    pub fn m(&self) -> u32 {
        self.seg.map_or(1, |s| s.m)
    }

    pub fn n_docs(&self) -> u32 {
        self.doc_ids.len() as u32
    }

    /// Total (doc, segment) entries: `m · |corpus|`.
    pub fn entry_count(&self) -> u64 {
        self.doc_ids.len() as u64 * self.m() as u64
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    fn entry(&self, ordinal: u32, seg: u32) -> &[f64] {
        let k = self.spec.k as usize;
        let at = (ordinal as usize * self.m() as usize + seg as usize) * k;
        &self.vecs[at..at + k]
    }

    /// Score of one document: max inner product over its segment entries.
    pub fn score_doc(&self, qvec: &DenseVector, ordinal: u32) -> Result<f64> {
        if qvec.k() != self.spec.k {
            return Err(Error::DimMismatch(qvec.k() as usize, self.spec.k as usize));
        }
        let q = qvec.components();
        let mut best = f64::NEG_INFINITY;
        for seg in 0..self.m() {
            let s: f64 = self.entry(ordinal, seg).iter().zip(q).map(|(a, b)| a * b).sum();
            if s > best {
                best = s;
            }
        }
        Ok(best)
    }

    /// Scores for every document.
    pub fn score_all(&self, qvec: &DenseVector) -> Result<Vec<f64>> {
        (0..self.n_docs()).map(|d| self.score_doc(qvec, d)).collect()
    }

    /// Project raw query text's sparse vector with this index's projection.
    pub fn embed_query(&self, q: &SparseVector) -> Result<DenseVector> {
        if let Some(max) = q.max_id() {
            if max >= self.spec.v {
                return Err(Error::DimMismatch(max as usize + 1, self.spec.v as usize));
            }
        }
        Ok(self.spec.project(q))
    }

    // -- persistence ------------------------------------------------------

    /// Binary layout (little-endian): magic `MLABD`, version u32, kind u8,
    /// k u32, v u32, seed u64, segmentation (present u8 [+ m u32, scheme u8,
    /// seg-seed u64]), N u32, document id table, then `N·m·k` f64 entries.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.vecs.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.spec.kind {
            ProjectionKind::Rademacher => 0,
            ProjectionKind::Gaussian => 1,
        });
        out.extend_from_slice(&self.spec.k.to_le_bytes());
        out.extend_from_slice(&self.spec.v.to_le_bytes());
        out.extend_from_slice(&self.spec.seed.to_le_bytes());
        match &self.seg {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.m.to_le_bytes());
                out.push(match s.scheme {
                    crate::multivec::SegScheme::Contiguous => 0,
                    crate::multivec::SegScheme::Hashed => 1,
                });
                out.extend_from_slice(&s.seed.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.n_docs().to_le_bytes());
        for id in &self.doc_ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for &x in &self.vecs {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Format(m.into());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(Error::Format("unexpected end of file".into()));
            }
            pos += n;
            Ok(&bytes[pos - n..pos])
        };
        if take(5)? != MAGIC {
            return Err(err("bad magic (expected MLABD)"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dense index version {version}")));
        }
        let kind = match take(1)?[0] {
            0 => ProjectionKind::Rademacher,
            1 => ProjectionKind::Gaussian,
            x => return Err(Error::Format(format!("unknown projection tag {x}"))),
        };
        let k = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let v = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let spec = ProjectionSpec::new(kind, k, v, seed)?;
        let seg = match take(1)?[0] {
            0 => None,
            1 => {
                let m = u32::from_le_bytes(take(4)?.try_into().unwrap());
                let scheme = match take(1)?[0] {
                    0 => crate::multivec::SegScheme::Contiguous,
                    1 => crate::multivec::SegScheme::Hashed,
                    x => return Err(Error::Format(format!("unknown segmentation tag {x}"))),
                };
                let sseed = u64::from_le_bytes(take(8)?.try_into().unwrap());
                Some(Segmentation::new(m, scheme, v, sseed)?)
            }
            x => return Err(Error::Format(format!("bad segmentation flag {x}"))),
        };
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let mut doc_ids = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let s = std::str::from_utf8(take(len)?)
                .map_err(|e| Error::Format(format!("doc table: {e}")))?;
            doc_ids.push(s.to_string());
        }
        let m = seg.map_or(1, |s| s.m) as usize;
        let want = n as usize * m * k as usize;
        let mut vecs = Vec::with_capacity(want);
        for _ in 0..want {
            vecs.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        if pos != bytes.len() {
            return Err(err("trailing bytes after vector data"));
        }
        Ok(DenseIndex { spec, seg, doc_ids, vecs })
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Exact dense top-k: per-document max over segment entries, descending
/// score, ties by ascending ordinal, zero/negative scores included.
pub fn dense_topk(qvec: &DenseVector, index: &DenseIndex, k: usize) -> Result<Vec<(u32, f64)>> {
    Ok(rank_scores(&index.score_all(qvec)?, k))
}

/// Hybrid interpolation config: final score `lambda·dense + sparse` over
/// the union of each system's `n_best` candidates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HybridConfig {
    pub lambda: f64,
    pub n_best: usize,
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidParam(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.n_best < 1 {
            return Err(Error::InvalidParam("n_best must be >= 1".into()));
        }
        Ok(())
    }
}

/// Union-rerank hybrid retrieval: take each system's `n_best`, rescore the
/// union with `lambda·dense + sparse`, return the top `k`. Exact whenever
/// `n_best` covers the corpus. Requires `n_best >= k` and both indexes over
/// the same corpus (same ordinals).
pub fn hybrid_topk(
    q_sparse: &SparseVector,
    qvec: &DenseVector,
    sparse: &InvertedIndex,
    dense: &DenseIndex,
    cfg: &HybridConfig,
    k: usize,
) -> Result<Vec<(u32, f64)>> {
    cfg.validate()?;
    if cfg.n_best < k {
        return Err(Error::InvalidParam(format!("n_best={} must be >= k={k}", cfg.n_best)));
    }
    if sparse.n_docs() != dense.n_docs() {
        return Err(Error::DimMismatch(sparse.n_docs() as usize, dense.n_docs() as usize));
    }
    let mut candidates: Vec<u32> = sparse
        .topk(q_sparse, cfg.n_best)
        .into_iter()
        .chain(dense_topk(qvec, dense, cfg.n_best)?)
        .map(|(d, _)| d)
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let mut rescored: Vec<(u32, f64)> = candidates
        .into_iter()
        .map(|d| {
            let s = sparse.score_doc(q_sparse, d);
            let dn = dense.score_doc(qvec, d)?;
            Ok((d, cfg.lambda * dn + s))
        })
        .collect::<Result<_>>()?;
    rescored.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    rescored.truncate(k);
    Ok(rescored)
}

/// Mean reciprocal rank at a cutoff: `mean_q 1/rank(gold_q)` counting only
/// ranks within the cutoff. `rankings[q]` holds doc ordinals best-first;
/// `gold[q]` is the gold ordinal.
pub fn mrr_at(rankings: &[Vec<u32>], gold: &[u32], cutoff: usize) -> Result<f64> {
    if cutoff < 1 {
        return Err(Error::InvalidParam("cutoff must be >= 1".into()));
    }
    if rankings.len() != gold.len() {
        return Err(Error::InvalidParam(format!(
            "{} rankings but {} gold labels",
            rankings.len(),
            gold.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::Empty("rankings"));
    }
    let mut sum = 0.0;
    for (ranked, &g) in rankings.iter().zip(gold) {
        if let Some(at) = ranked.iter().take(cutoff).position(|&d| d == g) {
            sum += 1.0 / (at + 1) as f64;
        }
    }
    Ok(sum / rankings.len() as f64)
}

/// Fraction of queries whose gold ordinal appears in the top `cutoff`.
pub fn recall_at(rankings: &[Vec<u32>], gold: &[u32], cutoff: usize) -> Result<f64> {
    if cutoff < 1 {
        return Err(Error::InvalidParam("cutoff must be >= 1".into()));
    }
    if rankings.len() != gold.len() || rankings.is_empty() {
        return Err(Error::InvalidParam("rankings/gold shape mismatch or empty".into()));
    }
    let hits = rankings
        .iter()
        .zip(gold)
        .filter(|(ranked, &g)| ranked.iter().take(cutoff).any(|&d| d == g))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Token-budgeted recall for one query: walk the ranking best-first, keep
/// passages while the cumulative token length stays within `budget` (always
/// keeping at least the top passage), and report 1.0 if any kept passage
/// satisfies the answer predicate.
pub fn recall_at_tokens(
    ranked_with_lens: &[(u32, u32)],
    is_answer: impl Fn(u32) -> bool,
    budget: u32,
) -> f64 {
    let mut used = 0u64;
    for (pos, &(doc, len)) in ranked_with_lens.iter().enumerate() {
        used += len as u64;
        if pos > 0 && used > budget as u64 {
            break;
        }
        if is_answer(doc) {
            return 1.0;
        }
    }
    0.0
}

/// Number of passages [`recall_at_tokens`] would keep for a ranking with
/// these lengths (exposed for reporting).
pub fn passages_within_budget(lens: &[u32], budget: u32) -> usize {
    let mut used = 0u64;
    let mut kept = 0usize;
    for (pos, &len) in lens.iter().enumerate() {
        used += len as u64;
        if pos > 0 && used > budget as u64 {
            break;
        }
        kept += 1;
    }
    kept
}

/// Tune the hybrid interpolation weight on a development set: evaluate
/// MRR at `cutoff` for every lambda on the grid `0.00, 0.05, ..., 5.00` and
/// return `(lambda*, mrr*)`, preferring the smallest lambda on ties.
///
/// Candidate unions and both per-system scores are computed once per query;
/// the grid sweep then only re-ranks.
pub fn tune_lambda(
    queries: &[(SparseVector, DenseVector)],
    gold: &[u32],
    sparse: &InvertedIndex,
    dense: &DenseIndex,
    n_best: usize,
    cutoff: usize,
) -> Result<(f64, f64)> {
    if queries.is_empty() {
        return Err(Error::Empty("development queries"));
    }
    if queries.len() != gold.len() {
        return Err(Error::InvalidParam("queries/gold length mismatch".into()));
    }
    // (candidate ordinal, sparse score, dense score) per query.
    let mut cands: Vec<Vec<(u32, f64, f64)>> = Vec::with_capacity(queries.len());
    for (qs, qv) in queries {
        let mut ids: Vec<u32> = sparse
            .topk(qs, n_best)
            .into_iter()
            .chain(dense_topk(qv, dense, n_best)?)
            .map(|(d, _)| d)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let per: Vec<(u32, f64, f64)> = ids
            .into_iter()
            .map(|d| Ok((d, sparse.score_doc(qs, d), dense.score_doc(qv, d)?)))
            .collect::<Result<_>>()?;
        cands.push(per);
    }
    let mut best = (0.0f64, f64::NEG_INFINITY);
    for step in 0..=100u32 {
        let lambda = step as f64 * 0.05;
        let mut sum = 0.0;
        for (per, &g) in cands.iter().zip(gold) {
            let gold_score =
                per.iter().find(|&&(d, _, _)| d == g).map(|&(_, s, dn)| lambda * dn + s);
            let Some(gs) = gold_score else { continue };
            let ahead = per
                .iter()
                .filter(|&&(d, s, dn)| {
                    let sc = lambda * dn + s;
                    sc > gs || (sc == gs && d < g)
                })
                .count();
            if ahead < cutoff {
                sum += 1.0 / (ahead + 1) as f64;
            }
        }
        let mrr = sum / cands.len() as f64;
        if mrr > best.1 {
            best = (lambda, mrr);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, TokenMode, Vocabulary};
    use crate::multivec::{multivec_score, MultiVecDoc};
    use crate::sparse::{doc_vector, query_vector, Bm25Params, Scheme};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, v: u32, density: f64) -> SparseVector {
        let mut pairs = Vec::new();
        for id in 0..v {
            if rng.gen_bool(density) {
                pairs.push((id, rng.gen_range(0.1..2.0)));
            }
        }
        SparseVector::from_pairs(pairs)
    }

    fn toy_dense(
        n: usize,
        seed: u64,
        seg: Option<Segmentation>,
    ) -> (Vec<SparseVector>, DenseIndex) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = 30u32;
        let docs: Vec<(String, SparseVector)> =
            (0..n).map(|i| (format!("d{i:04}"), random_sparse(&mut rng, v, 0.3))).collect();
        let spec = ProjectionSpec::new(ProjectionKind::Rademacher, 16, v, seed).unwrap();
        let idx = DenseIndex::build(&docs, seg, spec).unwrap();
        (docs.into_iter().map(|(_, d)| d).collect(), idx)
    }

    #[test]
    fn dense_topk_single_doc() {
        let (_, idx) = toy_dense(1, 3, None);
        let q = DenseVector(vec![0.5; 16]);
        let top = dense_topk(&q, &idx, 5).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, 0);
    }

    #[test]
    fn dense_topk_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for trial in 0..20 {
            let (docs, idx) = toy_dense(rng.gen_range(2..200), trial, None);
            let q = idx.embed_query(&random_sparse(&mut rng, 30, 0.4)).unwrap();
            let got = dense_topk(&q, &idx, 10).unwrap();
            let scores: Vec<f64> = docs.iter().map(|d| q.dot(&idx.spec().project(d))).collect();
            let want = rank_scores(&scores, 10);
            assert_eq!(got.len(), want.len());
            for ((gd, gs), (wd, ws)) in got.iter().zip(&want) {
                assert_eq!(gd, wd);
                assert!((gs - ws).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_topk_multivector_matches_multivec_score() {
        let seg = Segmentation::contiguous(4, 30).unwrap();
        let (docs, idx) = toy_dense(60, 9, Some(seg));
        assert_eq!(idx.entry_count(), 240);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = idx.embed_query(&random_sparse(&mut rng, 30, 0.4)).unwrap();
        let got = dense_topk(&q, &idx, 7).unwrap();
        let oracle: Vec<f64> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mv = MultiVecDoc::from_sparse(format!("d{i:04}"), d, &seg, &idx.spec());
                multivec_score(&q, &mv)
            })
            .collect();
        let want = rank_scores(&oracle, 7);
        for ((gd, gs), (wd, ws)) in got.iter().zip(&want) {
            assert_eq!(gd, wd);
            assert!((gs - ws).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_dim_mismatch_errors() {
        let (_, idx) = toy_dense(3, 2, None);
        let q = DenseVector(vec![1.0; 8]);
        assert!(matches!(dense_topk(&q, &idx, 2), Err(Error::DimMismatch(8, 16))));
    }

    #[test]
    fn dense_roundtrip_is_bit_exact() {
        for seg in [None, Some(Segmentation::hashed(3, 30, 5).unwrap())] {
            let (_, idx) = toy_dense(12, 8, seg);
            let bytes = idx.to_bytes();
            let back = DenseIndex::from_bytes(&bytes).unwrap();
            assert_eq!(back, idx);
            assert_eq!(back.to_bytes(), bytes);
        }
        assert!(DenseIndex::from_bytes(b"MLABX").is_err());
    }

    /// Sparse + dense toy corpus over the same documents.
    fn hybrid_fixture() -> (Vec<Document>, InvertedIndex, DenseIndex) {
        let docs = vec![
            Document::new("d000", vec![0, 1, 2]),
            Document::new("d001", vec![2, 3]),
            Document::new("d002", vec![0, 0, 4]),
            Document::new("d003", vec![5, 6, 0]),
            Document::new("d004", vec![1, 5]),
        ];
        let sparse = InvertedIndex::build(
            &docs,
            Vocabulary::synthetic(8),
            Scheme::Bm25,
            Bm25Params::default(),
            TokenMode::Unigram,
        )
        .unwrap();
        let pairs: Vec<(String, SparseVector)> = docs
            .iter()
            .map(|d| {
                (
                    d.id.clone(),
                    doc_vector(sparse.vocab(), d, Scheme::Bm25, &Bm25Params::default()).unwrap(),
                )
            })
            .collect();
        let spec = ProjectionSpec::new(ProjectionKind::Gaussian, 12, 8, 77).unwrap();
        let dense = DenseIndex::build(&pairs, None, spec).unwrap();
        (docs, sparse, dense)
    }

    #[test]
    fn hybrid_lambda_zero_is_sparse_on_union() {
        let (_, sparse, dense) = hybrid_fixture();
        let q =
            query_vector(sparse.vocab(), &Document::new("q", vec![0, 2]), Scheme::Bm25).unwrap();
        let qv = dense.embed_query(&q).unwrap();
        let cfg = HybridConfig { lambda: 0.0, n_best: 5 };
        let hybrid = hybrid_topk(&q, &qv, &sparse, &dense, &cfg, 5).unwrap();
        let want = sparse.topk(&q, 5);
        assert_eq!(
            hybrid.iter().map(|&(d, _)| d).collect::<Vec<_>>(),
            want.iter().map(|&(d, _)| d).collect::<Vec<_>>()
        );
    }

    #[test]
    fn hybrid_huge_lambda_is_dense_ordering() {
        let (_, sparse, dense) = hybrid_fixture();
        let q =
            query_vector(sparse.vocab(), &Document::new("q", vec![0, 2]), Scheme::Bm25).unwrap();
        let qv = dense.embed_query(&q).unwrap();
        let cfg = HybridConfig { lambda: 1e9, n_best: 5 };
        let hybrid = hybrid_topk(&q, &qv, &sparse, &dense, &cfg, 5).unwrap();
        let want = dense_topk(&qv, &dense, 5).unwrap();
        assert_eq!(
            hybrid.iter().map(|&(d, _)| d).collect::<Vec<_>>(),
            want.iter().map(|&(d, _)| d).collect::<Vec<_>>()
        );
    }

    #[test]
    fn hybrid_full_depth_equals_exhaustive() {
        let (docs, sparse, dense) = hybrid_fixture();
        let q =
            query_vector(sparse.vocab(), &Document::new("q", vec![0, 5]), Scheme::Bm25).unwrap();
        let qv = dense.embed_query(&q).unwrap();
        let lambda = 0.7;
        let cfg = HybridConfig { lambda, n_best: docs.len() };
        let hybrid = hybrid_topk(&q, &qv, &sparse, &dense, &cfg, docs.len()).unwrap();
        let exhaustive: Vec<f64> = (0..docs.len() as u32)
            .map(|d| lambda * dense.score_doc(&qv, d).unwrap() + sparse.score_doc(&q, d))
            .collect();
        let want = rank_scores(&exhaustive, docs.len());
        for ((gd, gs), (wd, ws)) in hybrid.iter().zip(&want) {
            assert_eq!(gd, wd);
            assert!((gs - ws).abs() < 1e-12);
        }
    }

    #[test]
    fn hybrid_depth_must_cover_k() {
        let (_, sparse, dense) = hybrid_fixture();
        let q = query_vector(sparse.vocab(), &Document::new("q", vec![0]), Scheme::Bm25).unwrap();
        let qv = dense.embed_query(&q).unwrap();
        let cfg = HybridConfig { lambda: 1.0, n_best: 2 };
        assert!(hybrid_topk(&q, &qv, &sparse, &dense, &cfg, 3).is_err());
    }

    #[test]
    fn mrr_examples() {
        let always_first = vec![vec![7, 1], vec![7, 2]];
        assert_eq!(mrr_at(&always_first, &[7, 7], 10).unwrap(), 1.0);
        let always_second = vec![vec![1, 7], vec![2, 7]];
        assert_eq!(mrr_at(&always_second, &[7, 7], 10).unwrap(), 0.5);
        // Ranks {1, 3, absent} -> (1 + 1/3 + 0)/3.
        let mixed = vec![vec![5, 1, 2], vec![1, 2, 5], vec![1, 2, 3]];
        let got = mrr_at(&mixed, &[5, 5, 9], 10).unwrap();
        assert!((got - 0.444_444_444_444_444_4).abs() < 1e-15);
        // Cutoff excludes deep ranks.
        assert_eq!(mrr_at(&mixed, &[5, 5, 9], 2).unwrap(), 1.0 / 3.0);
        assert!(mrr_at(&mixed, &[5, 5], 10).is_err());
    }

    #[test]
    fn recall_examples() {
        let rankings = vec![vec![1, 2, 3], vec![4, 5, 6]];
        assert_eq!(recall_at(&rankings, &[2, 9], 3).unwrap(), 0.5);
        assert_eq!(recall_at(&rankings, &[3, 6], 2).unwrap(), 0.0);
    }

    #[test]
    fn token_budget_selects_expected_counts() {
        // 400-token budget: eight 50-token passages, four 100-token ones.
        assert_eq!(passages_within_budget(&[50; 20], 400), 8);
        assert_eq!(passages_within_budget(&[100; 20], 400), 4);
        // At least one passage even when over budget.
        assert_eq!(passages_within_budget(&[900], 400), 1);

        let ranked: Vec<(u32, u32)> = (0..20).map(|d| (d, 50)).collect();
        assert_eq!(recall_at_tokens(&ranked, |d| d == 7, 400), 1.0);
        assert_eq!(recall_at_tokens(&ranked, |d| d == 8, 400), 0.0);
        // Budget covering everything reduces to recall@all.
        assert_eq!(recall_at_tokens(&ranked, |d| d == 19, 10_000), 1.0);
    }

    #[test]
    fn tune_lambda_behaves_at_extremes() {
        let (docs, sparse, dense) = hybrid_fixture();
        let queries: Vec<(SparseVector, DenseVector)> = docs
            .iter()
            .map(|d| {
                let qs = query_vector(sparse.vocab(), d, Scheme::Bm25).unwrap();
                let qv = dense.embed_query(&qs).unwrap();
                (qs, qv)
            })
            .collect();
        let gold: Vec<u32> = (0..docs.len() as u32).collect();
        let (lambda, mrr) = tune_lambda(&queries, &gold, &sparse, &dense, docs.len(), 10).unwrap();
        // The grid contains 0 and large values, so the tuned score can be no
        // worse than either single system.
        let sparse_only = {
            let rankings: Vec<Vec<u32>> = queries
                .iter()
                .map(|(qs, _)| sparse.topk(qs, 10).into_iter().map(|(d, _)| d).collect())
                .collect();
            mrr_at(&rankings, &gold, 10).unwrap()
        };
        let dense_only = {
            let rankings: Vec<Vec<u32>> = queries
                .iter()
                .map(|(_, qv)| {
                    dense_topk(qv, &dense, 10).unwrap().into_iter().map(|(d, _)| d).collect()
                })
                .collect();
            mrr_at(&rankings, &gold, 10).unwrap()
        };
        assert!(mrr >= sparse_only - 1e-12, "{mrr} vs sparse {sparse_only}");
        let _ = dense_only;
        // Determinism.
        let again = tune_lambda(&queries, &gold, &sparse, &dense, docs.len(), 10).unwrap();
        assert_eq!(again, (lambda, mrr));
    }

    #[test]
    fn tune_lambda_escapes_a_degenerate_sparse_system() {
        // Every document scores identically under the sparse system (same
        // length, term 0 once each), so only the dense scores are
        // informative and tuning must reach the dense-only MRR.
        let docs: Vec<Document> =
            (0..6u32).map(|i| Document::new(format!("d{i:03}"), vec![0, i + 1])).collect();
        let sparse = InvertedIndex::build(
            &docs,
            Vocabulary::synthetic(8),
            Scheme::Bm25,
            Bm25Params::default(),
            TokenMode::Unigram,
        )
        .unwrap();
        let pairs: Vec<(String, SparseVector)> = docs
            .iter()
            .map(|d| {
                (
                    d.id.clone(),
                    doc_vector(sparse.vocab(), d, Scheme::Bm25, &Bm25Params::default()).unwrap(),
                )
            })
            .collect();
        let spec = ProjectionSpec::new(ProjectionKind::Gaussian, 10, 8, 3).unwrap();
        let dense = DenseIndex::build(&pairs, None, spec).unwrap();

        let qs = query_vector(sparse.vocab(), &Document::new("q", vec![0]), Scheme::Bm25).unwrap();
        let qv = dense.embed_query(&qs).unwrap();
        let scores = dense.score_all(&qv).unwrap();
        let gold = vec![rank_scores(&scores, 1)[0].0];
        let queries = vec![(qs, qv)];
        let (lambda, mrr) = tune_lambda(&queries, &gold, &sparse, &dense, docs.len(), 10).unwrap();
        assert!(lambda > 0.0);
        assert_eq!(mrr, 1.0);
    }
}
