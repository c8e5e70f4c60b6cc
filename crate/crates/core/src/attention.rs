//! Normalized hard attention over token indicator embeddings: an exact
//! rank-preservation oracle for token-sequence scoring, plus the sufficient
//! projection dimension for reproducing its rankings after random
//! projection.
//!
//! Tokens are embedded as vocabulary indicator vectors (or their random
//! projections). Attention from query position `t` to document position
//! `t'` activates when the embedding inner product exceeds 1/2; the
//! activations of each query position are normalized to sum to one (query
//! positions with no activation contribute zero), and the score is
//!
//! ```text
//! psi(x, y) = sum_t <e(x_t), sum_t' a_{t,t'} e(y_t')>,  a = activation / row sum.
//! ```
//!
//! With exact indicator embeddings this collapses to counting query
//! positions that have at least one exact token match — the boolean
//! bag-of-words inner product whenever the query has no repeated tokens.

use std::collections::HashMap;

use crate::corpus::SparseVector;
use crate::projection::{DenseVector, ProjectionSpec};
use crate::{Error, Result};

/// Hard attention score with exact indicator embeddings: the number of
/// query positions whose token occurs anywhere in `y`. Equals the boolean
/// inner product when `x` has no repeated tokens.
pub fn indicator_score(x: &[u32], y: &[u32]) -> f64 {
    let present: std::collections::HashSet<u32> = y.iter().copied().collect();
    x.iter().filter(|t| present.contains(t)).count() as f64
}

/// Hard attention score with projected indicator embeddings: activations
/// use the strict threshold `<A e_{x_t}, A e_{y_t'}> > 1/2`, each active row
/// is normalized, and the score sums the attended inner products. Converges
/// to [`indicator_score`] as `k` grows.
pub fn projected_score(x: &[u32], y: &[u32], spec: &ProjectionSpec) -> f64 {
    let mut cache: HashMap<u32, DenseVector> = HashMap::new();
    for &t in x.iter().chain(y) {
        cache.entry(t).or_insert_with(|| spec.project(&SparseVector::unit(t)));
    }
    let xe: Vec<&DenseVector> = x.iter().map(|t| &cache[t]).collect();
    let ye: Vec<&DenseVector> = y.iter().map(|t| &cache[t]).collect();
    let mut score = 0.0;
    for q in &xe {
        let dots: Vec<f64> = ye.iter().map(|d| q.dot(d)).collect();
        let active: Vec<f64> = dots.iter().copied().filter(|&s| s > 0.5).collect();
        if active.is_empty() {
            continue;
        }
        let z = active.len() as f64;
        score += active.iter().sum::<f64>() / z;
    }
    score
}

/// Count of token pairs `(x_i, y_j)` whose activation decision under the
/// projected embeddings disagrees with the exact indicator embeddings:
/// identical tokens must stay above the 1/2 threshold and distinct tokens
/// must stay below it. Zero flips means [`projected_score`] equals
/// [`indicator_score`] exactly on this pair of sequences.
pub fn projected_flips(x: &[u32], y: &[u32], spec: &ProjectionSpec) -> u64 {
    let mut cache: HashMap<u32, DenseVector> = HashMap::new();
    for &t in x.iter().chain(y) {
        cache.entry(t).or_insert_with(|| spec.project(&SparseVector::unit(t)));
    }
    let mut flips = 0;
    for &tx in x {
        let qx = &cache[&tx];
        for &ty in y {
            let active = qx.dot(&cache[&ty]) > 0.5;
            if active != (tx == ty) {
                flips += 1;
            }
        }
    }
    flips
}

/// Sufficient projection dimension `ceil(24 (2 + beta) T_x^2 ln v)` for the
/// projected score to reproduce indicator-score rankings with failure
/// probability on the order of `v^(-beta)`.
pub fn attention_sufficient_k(t_x: u32, v: u32, beta: f64) -> Result<u32> {
    if t_x < 1 {
        return Err(Error::OutOfRange("T_x must be >= 1".into()));
    }
    if v < 2 {
        return Err(Error::OutOfRange("v must be >= 2".into()));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::OutOfRange(format!("beta must be > 0, got {beta}")));
    }
    let k0 = 24.0 * (2.0 + beta) * (t_x as f64).powi(2) * (v as f64).ln();
    Ok((k0.ceil() as u32).max(1))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vectorize_boolean;
    use crate::corpus::Document;
    use crate::projection::ProjectionKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn indicator_score_examples() {
        // [a,b] vs [a,a,c]: a attends twice (normalized to 1), b to nothing.
        assert_eq!(indicator_score(&[0, 1], &[0, 0, 2]), 1.0);
        assert_eq!(indicator_score(&[0], &[0]), 1.0);
        assert_eq!(indicator_score(&[0, 1], &[2, 3]), 0.0);
    }

    #[test]
    fn indicator_score_equals_boolean_dot_without_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let v = 40u32;
            // Distinct query tokens.
            let mut x: Vec<u32> = (0..v).filter(|_| rng.gen_bool(0.2)).collect();
            if x.is_empty() {
                x.push(rng.gen_range(0..v));
            }
            let y: Vec<u32> = (0..rng.gen_range(1..30)).map(|_| rng.gen_range(0..v)).collect();
            let dot = vectorize_boolean(&Document::new("x", x.clone()))
                .dot(&vectorize_boolean(&Document::new("y", y.clone())));
            assert_eq!(indicator_score(&x, &y), dot);
        }
    }

    #[test]
    fn repeated_query_tokens_count_per_position() {
        // Documented divergence from the boolean dot: score = number of
        // matched query positions, repeats included.
        assert_eq!(indicator_score(&[0, 0, 1], &[0, 5]), 2.0);
    }

    #[test]
    fn flips_vanish_at_large_k_and_appear_at_k_one() {
        let x = vec![3u32, 9, 17];
        let y = vec![3u32, 4, 9, 21, 30];
        // Sign entries are +-1/sqrt(k): at k = 1 every cross-token dot is
        // +-1, so roughly half the distinct pairs land above the threshold.
        let tiny = ProjectionSpec::new(ProjectionKind::Rademacher, 1, 64, 5).unwrap();
        assert!(projected_flips(&x, &y, &tiny) > 0);
        // Identical tokens never flip under sign projections (self dot is
        // exactly 1), and k = 4096 leaves cross dots far below 1/2.
        let big = ProjectionSpec::new(ProjectionKind::Rademacher, 4096, 64, 5).unwrap();
        assert_eq!(projected_flips(&x, &y, &big), 0);
    }

    #[test]
    fn sufficient_k_formula() {
        assert_eq!(attention_sufficient_k(4, 10_000, 1.0).unwrap(), 10_611);
        // Doubling T_x quadruples the requirement (up to ceil rounding).
        let k1 = attention_sufficient_k(2, 1000, 1.0).unwrap() as f64;
        let k2 = attention_sufficient_k(4, 1000, 1.0).unwrap() as f64;
        assert!((k2 / k1 - 4.0).abs() < 0.01);
        assert!(attention_sufficient_k(0, 10, 1.0).is_err());
        assert!(attention_sufficient_k(1, 1, 1.0).is_err());
        assert!(attention_sufficient_k(1, 10, 0.0).is_err());
    }

    #[test]
    fn projected_score_tracks_indicator_score_at_sufficient_k() {
        // At k >= k0 the projected ranking of two documents should disagree
        // with the indicator ranking at a rate on the order of v^(-beta).
        let (v, t_x, beta) = (50u32, 2u32, 1.0f64);
        let k0 = attention_sufficient_k(t_x, v, beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 300;
        let mut comparisons = 0u32;
        let mut failures = 0u32;
        for trial in 0..trials {
            let x: Vec<u32> = {
                let mut set: Vec<u32> = (0..v).collect();
                // Two distinct query tokens.
                let i = rng.gen_range(0..set.len());
                let a = set.swap_remove(i);
                let b = set.swap_remove(rng.gen_range(0..set.len()));
                vec![a, b]
            };
            let y1: Vec<u32> = (0..8).map(|_| rng.gen_range(0..v)).collect();
            let y2: Vec<u32> = (0..8).map(|_| rng.gen_range(0..v)).collect();
            let exact1 = indicator_score(&x, &y1);
            let exact2 = indicator_score(&x, &y2);
            if exact1 == exact2 {
                continue;
            }
            comparisons += 1;
            let spec = ProjectionSpec::new(ProjectionKind::Rademacher, k0, v, trial).unwrap();
            let p1 = projected_score(&x, &y1, &spec);
            let p2 = projected_score(&x, &y2, &spec);
            if (exact1 > exact2) != (p1 > p2) {
                failures += 1;
            }
        }
        assert!(comparisons > 100, "degenerate fuzz: {comparisons} comparisons");
        let rate = failures as f64 / comparisons as f64;
        let bound = (v as f64).powf(-beta);
        let se = (bound.max(1.0 / comparisons as f64) / comparisons as f64).sqrt();
        assert!(rate <= bound + 3.0 * se, "failure rate {rate} vs bound {bound}");
    }
}
