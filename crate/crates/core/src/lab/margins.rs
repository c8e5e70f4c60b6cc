//! Margin distributions by document length: for each query, how small is the
//! normalized margin of the top document over its rank-r competitor?

use super::{sorted_margins, sparse_argmax};
use crate::corpus::SparseVector;
use crate::{Error, Result};
use rayon::prelude::*;

/// Competitor ranks profiled by default: the 10th, 100th, and 1000th
/// smallest margin under each query.
pub const DEFAULT_RANKS: [u32; 3] = [10, 100, 1000];

/// Quantiles of the rank-r smallest margin across queries, for one length
/// bin.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginRow {
    /// Length-bin label (document length in tokens).
    pub length: u32,
    /// Competitor rank r: the r'th smallest margin per query.
    pub rank: u32,
    /// Queries contributing a rank-r margin.
    pub n_queries: u32,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Nearest-rank quantile of an ascending slice: the smallest element with at
/// least a `p` fraction of the data at or below it.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Per-rank margin quantiles across queries for one length bin.
///
/// Each query contributes its rank-r smallest normalized margin over the
/// sparse argmax document; queries that score zero everywhere are skipped,
/// and a rank with no contributing queries (collection smaller than the
/// rank) is omitted rather than padded.
pub fn margin_quantiles_by_length(
    length: u32,
    queries: &[SparseVector],
    docs: &[SparseVector],
    ranks: &[u32],
) -> Result<Vec<MarginRow>> {
    if docs.is_empty() {
        return Err(Error::Empty("document collection"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("query collection"));
    }
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(Error::InvalidParam("ranks must be positive and non-empty".into()));
    }

    let per_query: Vec<Option<Vec<Option<f64>>>> = queries
        .par_iter()
        .map(|q| {
            let (d1, score) = sparse_argmax(q, docs).expect("non-empty collection");
            if score <= 0.0 {
                return None;
            }
            let margins = sorted_margins(q, d1, docs);
            Some(ranks.iter().map(|&r| margins.get(r as usize - 1).copied()).collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(ranks.len());
    for (ri, &rank) in ranks.iter().enumerate() {
        let mut values: Vec<f64> = per_query.iter().flatten().filter_map(|vals| vals[ri]).collect();
        if values.is_empty() {
            continue;
        }
        values.sort_unstable_by(f64::total_cmp);
        rows.push(MarginRow {
            length,
            rank,
            n_queries: values.len() as u32,
            q25: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q75: quantile(&values, 0.75),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(weight: f64) -> SparseVector {
        SparseVector::from_pairs([(0, weight)])
    }

    #[test]
    fn quantiles_use_the_nearest_rank_convention() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&sorted, 0.25), 1.0);
        assert_eq!(quantile(&sorted, 0.5), 2.0);
        assert_eq!(quantile(&sorted, 0.75), 3.0);
        assert_eq!(quantile(&sorted, 1.0), 4.0);
        assert_eq!(quantile(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn rank_r_margins_come_from_the_sorted_margin_list() {
        // one query, four docs: argmax is doc 0; each competitor carries
        // off-axis mass so the three defined margins are distinct
        let docs = vec![
            doc(3.0),
            SparseVector::from_pairs([(0, 2.9), (1, 1.0)]),
            SparseVector::from_pairs([(0, 2.0), (2, 1.0)]),
            SparseVector::from_pairs([(0, 0.5), (3, 1.0)]),
        ];
        let q = SparseVector::from_pairs([(0, 1.0)]);
        let rows =
            margin_quantiles_by_length(50, std::slice::from_ref(&q), &docs, &[1, 2, 3]).unwrap();
        assert_eq!(rows.len(), 3);
        let expected = sorted_margins(&q, 0, &docs);
        for (row, want) in rows.iter().zip(&expected) {
            assert_eq!(row.n_queries, 1);
            assert_eq!(row.median, *want);
            assert_eq!(row.q25, *want);
            assert_eq!(row.q75, *want);
            assert_eq!(row.length, 50);
        }
        assert!(rows[0].median < rows[1].median && rows[1].median < rows[2].median);
    }

    #[test]
    fn oversized_ranks_are_omitted_and_zero_queries_skipped() {
        let docs = vec![doc(3.0), doc(1.0)];
        let queries = vec![
            SparseVector::from_pairs([(0, 1.0)]),
            SparseVector::from_pairs([(7, 1.0)]), // matches nothing
        ];
        let rows = margin_quantiles_by_length(100, &queries, &docs, &[1, 10]).unwrap();
        assert_eq!(rows.len(), 1, "rank 10 exceeds the collection and is dropped");
        assert_eq!(rows[0].rank, 1);
        assert_eq!(rows[0].n_queries, 1);
    }

    #[test]
    fn margin_inputs_are_validated() {
        let docs = vec![doc(1.0)];
        let q = vec![SparseVector::from_pairs([(0, 1.0)])];
        assert!(margin_quantiles_by_length(50, &q, &[], &[1]).is_err());
        assert!(margin_quantiles_by_length(50, &[], &docs, &[1]).is_err());
        assert!(margin_quantiles_by_length(50, &q, &docs, &[]).is_err());
        assert!(margin_quantiles_by_length(50, &q, &docs, &[0]).is_err());
    }
}
