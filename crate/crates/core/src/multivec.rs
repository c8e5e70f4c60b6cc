//! Multi-vector document encodings: a document's sparse vector is split
//! along a vocabulary partition into `m` orthogonal segment vectors, each
//! projected separately; the relevance score is the max over segments of the
//! query-segment inner product.
//!
//! Because the segments partition the support, `d = Σ_i d^(i)` exactly and
//! `<d^(i), d^(j)> = 0` for `i ≠ j`. Retrieval over multi-vector documents
//! is expressible as single-vector retrieval over an expanded index with one
//! entry per (document, segment), deduplicated per document by max.

use serde::{Deserialize, Serialize};

use crate::bounds::normalized_margin;
use crate::corpus::SparseVector;
use crate::projection::{DenseVector, ProjectionSpec};
use crate::sparse::rank_scores;
use crate::{Error, Result};

/// How term ids are assigned to segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegScheme {
    /// `m` contiguous equal ranges of term ids (the last range absorbs any
    /// remainder).
    Contiguous,
    /// Seeded hash of the term id modulo `m`.
    Hashed,
}

/// Total map from term ids to one of `m` segments over a vocabulary of `v`
/// terms. Serialized as flat JSON `{m, scheme, v, seed}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub m: u32,
    pub scheme: SegScheme,
    pub v: u32,
    pub seed: u64,
}

impl Segmentation {
    pub fn contiguous(m: u32, v: u32) -> Result<Self> {
        Self::new(m, SegScheme::Contiguous, v, 0)
    }

    pub fn hashed(m: u32, v: u32, seed: u64) -> Result<Self> {
        Self::new(m, SegScheme::Hashed, v, seed)
    }

    pub fn new(m: u32, scheme: SegScheme, v: u32, seed: u64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidParam("segment count m must be >= 1".into()));
        }
        if v < 1 {
            return Err(Error::InvalidParam("vocabulary size v must be >= 1".into()));
        }
        Ok(Segmentation { m, scheme, v, seed })
    }

    /// Segment of a term id; total over `0..v`.
    pub fn segment_of(&self, term: u32) -> u32 {
        debug_assert!(term < self.v, "term {term} out of vocabulary (v={})", self.v);
        match self.scheme {
            SegScheme::Contiguous => {
                let width = self.v.div_ceil(self.m);
                (term / width).min(self.m - 1)
            }
            SegScheme::Hashed => {
                (crate::projection::segment_hash(self.seed, term as u64) % self.m as u64) as u32
            }
        }
    }
}

/// Split `d` into `m` segment vectors with disjoint supports summing back to
/// `d` exactly (weights are moved, never recomputed).
pub fn segment(d: &SparseVector, seg: &Segmentation) -> Vec<SparseVector> {
    let mut parts: Vec<Vec<(u32, f64)>> = vec![Vec::new(); seg.m as usize];
    for &(id, w) in d.entries() {
        parts[seg.segment_of(id) as usize].push((id, w));
    }
    parts
        .into_iter()
        .map(|entries| SparseVector::from_sorted(entries).expect("segments preserve order"))
        .collect()
}

/// A document as `m` projected segment vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiVecDoc {
    pub id: String,
    pub vecs: Vec<DenseVector>,
}

impl MultiVecDoc {
    /// Project each sparse segment of `d` with the same projection.
    pub fn from_sparse(
        id: impl Into<String>,
        d: &SparseVector,
        seg: &Segmentation,
        spec: &ProjectionSpec,
    ) -> Self {
        let vecs = segment(d, seg).iter().map(|part| spec.project(part)).collect();
        MultiVecDoc { id: id.into(), vecs }
    }

    pub fn m(&self) -> u32 {
        self.vecs.len() as u32
    }
}

/// `max_j <qvec, doc_j>` over the document's segment vectors.
pub fn multivec_score(qvec: &DenseVector, doc: &MultiVecDoc) -> f64 {
    doc.vecs.iter().map(|v| qvec.dot(v)).fold(f64::NEG_INFINITY, f64::max)
}

/// Top-k documents through the expanded index: one entry per
/// (document, segment) scored by plain inner product, deduplicated per
/// document keeping its best entry. Equals ranking the documents directly
/// by [`multivec_score`] (descending score, ties by ascending doc ordinal).
pub fn expanded_index_topk(qvec: &DenseVector, docs: &[MultiVecDoc], k: usize) -> Vec<(u32, f64)> {
    // The expanded entry list: (doc ordinal, segment) pairs, m per document.
    let mut best = vec![f64::NEG_INFINITY; docs.len()];
    for (ordinal, doc) in docs.iter().enumerate() {
        for vec in &doc.vecs {
            let score = qvec.dot(vec);
            if score > best[ordinal] {
                best[ordinal] = score;
            }
        }
    }
    rank_scores(&best, k)
}

/// Outcome of the single-witness margin comparison between a full document
/// pair and one segment pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WitnessCheck {
    /// Some segment carries all of `<q, d1>` while not increasing
    /// `<q, d2>`.
    pub holds: bool,
    /// The first such segment index.
    pub witness: Option<u32>,
    pub margin_full: f64,
    /// Margin restricted to the witness segment pair (NaN when no witness).
    pub margin_witness: f64,
    /// `margin_witness >= margin_full - 1e-9` (false when no witness).
    pub dominates: bool,
}

/// Look for a segment `i` with `<q, d1^(i)> = <q, d1>` (within 1e-9) and
/// `<q, d2^(i)> <= <q, d2>`; when found, the normalized margin restricted to
/// segment `i` should dominate the full margin. Requires the pair to be
/// correctly ordered (`<q, d1> > <q, d2>`).
pub fn witness_margin_check(
    q: &SparseVector,
    d1: &SparseVector,
    d2: &SparseVector,
    seg: &Segmentation,
) -> Result<WitnessCheck> {
    let s1 = q.dot(d1);
    let s2 = q.dot(d2);
    if s1.is_nan() || s2.is_nan() || s1 <= s2 {
        return Err(Error::InvalidParam(format!(
            "pair must be ordered: <q,d1>={s1} must exceed <q,d2>={s2}"
        )));
    }
    let margin_full = normalized_margin(q, d1, d2)?;
    let parts1 = segment(d1, seg);
    let parts2 = segment(d2, seg);
    for i in 0..seg.m as usize {
        let w1 = q.dot(&parts1[i]);
        let w2 = q.dot(&parts2[i]);
        if (w1 - s1).abs() <= 1e-9 && w2 <= s2 + 1e-12 {
            if let Ok(margin_witness) = normalized_margin(q, &parts1[i], &parts2[i]) {
                return Ok(WitnessCheck {
                    holds: true,
                    witness: Some(i as u32),
                    margin_full,
                    margin_witness,
                    dominates: margin_witness >= margin_full - 1e-9,
                });
            }
        }
    }
    Ok(WitnessCheck {
        holds: false,
        witness: None,
        margin_full,
        margin_witness: f64::NAN,
        dominates: false,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, v: u32, density: f64, lo: f64, hi: f64) -> SparseVector {
        let mut pairs = Vec::new();
        for id in 0..v {
            if rng.gen_bool(density) {
                pairs.push((id, rng.gen_range(lo..hi)));
            }
        }
        SparseVector::from_pairs(pairs)
    }

    fn halves() -> Segmentation {
        Segmentation::contiguous(2, 6).unwrap()
    }

    #[test]
    fn single_segment_is_identity() {
        let d = SparseVector::from_pairs([(0, 2.0), (4, -1.0)]);
        let seg = Segmentation::contiguous(1, 6).unwrap();
        let parts = segment(&d, &seg);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], d);
    }

    #[test]
    fn contiguous_partition_splits_by_range() {
        let d = SparseVector::from_pairs([(0, 1.0), (3, 1.0)]);
        let parts = segment(&d, &halves());
        assert_eq!(parts[0].entries(), &[(0, 1.0)]);
        assert_eq!(parts[1].entries(), &[(3, 1.0)]);
    }

    #[test]
    fn segments_are_orthogonal_and_sum_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let v = rng.gen_range(4..60u32);
            let m = rng.gen_range(1..=8u32);
            let scheme = if rng.gen_bool(0.5) {
                Segmentation::contiguous(m, v).unwrap()
            } else {
                Segmentation::hashed(m, v, rng.gen()).unwrap()
            };
            let d = random_sparse(&mut rng, v, 0.4, -2.0, 2.0);
            let parts = segment(&d, &scheme);
            assert_eq!(parts.len(), m as usize);
            let mut sum = SparseVector::zero();
            for (i, p) in parts.iter().enumerate() {
                sum = SparseVector::scaled_sum(1.0, &sum, 1.0, p);
                for p2 in parts.iter().skip(i + 1) {
                    assert_eq!(p.dot(p2), 0.0);
                }
            }
            assert_eq!(sum, d);
        }
    }

    #[test]
    fn score_is_max_over_segments() {
        let q = DenseVector(vec![1.0, 0.0]);
        let doc = MultiVecDoc {
            id: "d".into(),
            vecs: vec![DenseVector(vec![0.5, 9.0]), DenseVector(vec![2.0, -1.0])],
        };
        assert_eq!(multivec_score(&q, &doc), 2.0);
        // Single segment: plain inner product.
        let single = MultiVecDoc { id: "s".into(), vecs: vec![DenseVector(vec![0.5, 9.0])] };
        assert_eq!(multivec_score(&q, &single), 0.5);
        // A segment equal to the query scores its squared norm.
        let mirror =
            MultiVecDoc { id: "m".into(), vecs: vec![DenseVector(vec![0.0, 0.0]), q.clone()] };
        assert_eq!(multivec_score(&q, &mirror), q.norm_sq());
    }

    #[test]
    fn expanded_index_matches_direct_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let v = 40u32;
            let m = rng.gen_range(1..=8u32);
            let n_docs = rng.gen_range(2..=60usize);
            let seg = Segmentation::hashed(m, v, rng.gen()).unwrap();
            let spec = ProjectionSpec::new(ProjectionKind::Rademacher, 24, v, rng.gen()).unwrap();
            let docs: Vec<MultiVecDoc> = (0..n_docs)
                .map(|i| {
                    let d = random_sparse(&mut rng, v, 0.3, 0.1, 3.0);
                    MultiVecDoc::from_sparse(format!("d{i:03}"), &d, &seg, &spec)
                })
                .collect();
            let q = spec.project(&SparseVector::from_pairs(
                (0..v).filter_map(|id| rng.gen_bool(0.2).then_some((id, 1.0))),
            ));
            let got = expanded_index_topk(&q, &docs, 10);
            // Oracle: rank every document by its direct multi-vector score.
            let oracle: Vec<f64> = docs.iter().map(|d| multivec_score(&q, d)).collect();
            let want = rank_scores(&oracle, 10);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn witness_margin_example() {
        let q = SparseVector::unit(0);
        let d1 = SparseVector::from_pairs([(0, 1.0), (3, 1.0)]);
        let d2 = SparseVector::from_pairs([(1, 1.0), (4, 1.0)]);
        let check = witness_margin_check(&q, &d1, &d2, &halves()).unwrap();
        assert!(check.holds);
        assert_eq!(check.witness, Some(0));
        assert!((check.margin_full - 0.5).abs() < 1e-12);
        assert!((check.margin_witness - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!(check.dominates);
    }

    #[test]
    fn witness_margin_single_segment_is_equality() {
        let q = SparseVector::from_pairs([(0, 1.0), (2, 0.5)]);
        let d1 = SparseVector::from_pairs([(0, 3.0)]);
        let d2 = SparseVector::from_pairs([(2, 1.0)]);
        let seg = Segmentation::contiguous(1, 6).unwrap();
        let check = witness_margin_check(&q, &d1, &d2, &seg).unwrap();
        assert!(check.holds);
        assert!((check.margin_witness - check.margin_full).abs() < 1e-12);
    }

    #[test]
    fn witness_margin_rejects_misordered_pair() {
        let q = SparseVector::unit(0);
        let d1 = SparseVector::unit(1);
        let d2 = SparseVector::unit(0);
        assert!(witness_margin_check(&q, &d1, &d2, &halves()).is_err());
    }

    #[test]
    fn nonnegative_vectors_never_inflate_a_segment_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let v = 30u32;
            let m = rng.gen_range(1..=6u32);
            let seg = Segmentation::contiguous(m, v).unwrap();
            let draw = |rng: &mut ChaCha8Rng| random_sparse(rng, v, 0.4, 0.0, 2.0);
            let d2 = draw(&mut rng);
            let q = draw(&mut rng);
            let full = q.dot(&d2);
            for part in segment(&d2, &seg) {
                assert!(q.dot(&part) <= full + 1e-12);
            }
        }
    }

    #[test]
    fn difference_norm_decomposes_over_segments() {
        // |d1 - d2|^2 = sum_i |d1^(i) - d2^(i)|^2 for partitions.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let v = 50u32;
            let m = rng.gen_range(1..=8u32);
            let seg = Segmentation::hashed(m, v, rng.gen()).unwrap();
            let mk = |rng: &mut ChaCha8Rng| random_sparse(rng, v, 0.5, -3.0, 3.0);
            let d1 = mk(&mut rng);
            let d2 = mk(&mut rng);
            let full = d1.sub(&d2).norm_sq();
            let parts1 = segment(&d1, &seg);
            let parts2 = segment(&d2, &seg);
            let split: f64 = parts1.iter().zip(&parts2).map(|(a, b)| a.sub(b).norm_sq()).sum();
            let scale = full.abs().max(split.abs()).max(1e-300);
            assert!(((full - split) / scale).abs() < 1e-9);
        }
    }

    #[test]
    fn segmentation_serializes_flat() {
        let seg = Segmentation::hashed(4, 100, 9).unwrap();
        let json = serde_json::to_string(&seg).unwrap();
        assert_eq!(json, r#"{"m":4,"scheme":"hashed","v":100,"seed":9}"#);
    }
}
