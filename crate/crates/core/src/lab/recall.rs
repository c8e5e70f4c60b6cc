//! Recall-at-r under projection: the smallest output dimension at which the
//! sparse argmax survives in the projected top r, per recall target.

use super::{sorted_margins, sparse_argmax, KGrid};
use crate::bounds::sufficient_k_recall;
use crate::corpus::SparseVector;
use crate::projection::{ProjectionKind, ProjectionSpec};
use crate::{Error, Result};
use rayon::prelude::*;

/// Recall targets profiled by default.
pub const DEFAULT_RECALL_TARGETS: [f64; 4] = [0.7, 0.8, 0.9, 0.95];

/// Configuration for [`min_k_for_recall`].
#[derive(Debug, Clone)]
pub struct RecallMinKConfig {
    pub kind: ProjectionKind,
    pub grid: KGrid,
    /// Retention depth: the event of interest is the argmax surviving in the
    /// projected top `r0`.
    pub r0: u32,
    pub targets: Vec<f64>,
    /// Monte-Carlo trials per query (seeds `base_seed + t`).
    pub trials: u32,
    /// Cap on eligible queries used for the Monte-Carlo (the first
    /// `max_queries` in corpus order).
    pub max_queries: u32,
    pub base_seed: u64,
}

impl Default for RecallMinKConfig {
    fn default() -> Self {
        RecallMinKConfig {
            kind: ProjectionKind::Rademacher,
            grid: KGrid::default_sweep(),
            r0: 10,
            targets: DEFAULT_RECALL_TARGETS.to_vec(),
            trials: 10,
            max_queries: 100,
            base_seed: 0,
        }
    }
}

/// One (length bin, recall target) row of a [`min_k_for_recall`] sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallRow {
    /// Length-bin label (document length in tokens).
    pub length: u32,
    pub target: f64,
    /// Queries Monte-Carloed.
    pub n_queries: u32,
    /// Pooled Bernoulli count behind each per-k recall estimate.
    pub trials: u64,
    /// Lower median across queries of the r0'th smallest margin.
    pub eps_r0: f64,
    /// Smallest grid dimension whose pooled recall reaches the target;
    /// `None` when the grid was exhausted first.
    pub min_k: Option<u32>,
    pub recall_at_min_k: Option<f64>,
    /// Dimension the concentration analysis deems sufficient at `eps_r0` for
    /// failure probability `1 - target` (`None` when out of its domain).
    pub k_bound: Option<u32>,
}

/// For each recall target, find the smallest grid dimension at which the
/// sparse argmax stays in the projected top `r0`, pooled over queries and
/// trials.
///
/// A query fails a trial when at least `r0` other documents beat the argmax
/// in the projected scores (strictly, or tied with a lower ordinal — the
/// ranking tie rule used everywhere else). Queries that score zero against
/// every document, or that have fewer than `r0` defined margins, are
/// ineligible. Row order follows `cfg.targets`.
pub fn min_k_for_recall(
    length: u32,
    queries: &[SparseVector],
    docs: &[SparseVector],
    v: u32,
    cfg: &RecallMinKConfig,
) -> Result<Vec<RecallRow>> {
    if docs.is_empty() {
        return Err(Error::Empty("document collection"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("query collection"));
    }
    if cfg.r0 == 0 || cfg.r0 as usize >= docs.len() {
        return Err(Error::OutOfRange(format!(
            "retention depth r0={} must be in 1..{} (the collection size)",
            cfg.r0,
            docs.len()
        )));
    }
    if cfg.targets.is_empty() || cfg.targets.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::OutOfRange("recall targets must lie in (0, 1]".into()));
    }
    if cfg.trials == 0 || cfg.max_queries == 0 {
        return Err(Error::InvalidParam("trials and max_queries must be positive".into()));
    }
    ProjectionSpec::new(cfg.kind, cfg.grid.k_max(), v, cfg.base_seed)?;

    // Eligible queries in corpus order: argmax, r0'th margin.
    let mut used: Vec<(u32, u32, f64)> = Vec::new(); // (query, gold, eps_r0)
    for (qi, q) in queries.iter().enumerate() {
        if used.len() == cfg.max_queries as usize {
            break;
        }
        let (gold, score) = sparse_argmax(q, docs).expect("non-empty collection");
        if score <= 0.0 {
            continue;
        }
        let margins = sorted_margins(q, gold, docs);
        if let Some(&eps) = margins.get(cfg.r0 as usize - 1) {
            used.push((qi as u32, gold, eps));
        }
    }
    if used.is_empty() {
        return Err(Error::Empty("eligible queries (all scored zero or lacked margins)"));
    }
    let eps_r0 = {
        let mut eps: Vec<f64> = used.iter().map(|&(_, _, e)| e).collect();
        eps.sort_unstable_by(f64::total_cmp);
        eps[(eps.len() - 1) / 2]
    };

    let n_q = used.len();
    let n_d = docs.len();
    let trials = cfg.trials as usize;
    let pooled = (n_q * trials) as u64;
    // Prefix inner products per (trial, query, doc), extended grid step by
    // grid step; the shared positive 1/k factor is dropped as in the
    // pairwise sweeps.
    let mut sums = vec![0.0f64; trials * n_q * n_d];
    let mut resolved: Vec<Option<(u32, f64)>> = vec![None; cfg.targets.len()];
    let mut prev = 0u32;
    for &k in cfg.grid.ks() {
        sums.par_chunks_mut(n_q * n_d).enumerate().for_each(|(t, chunk)| {
            let spec = ProjectionSpec::new(cfg.kind, k, v, cfg.base_seed.wrapping_add(t as u64))
                .expect("validated");
            let qrows: Vec<Vec<f64>> = used
                .iter()
                .map(|&(qi, _, _)| spec.row_products_range(&queries[qi as usize], prev..k))
                .collect();
            for (d, dv) in docs.iter().enumerate() {
                let drow = spec.row_products_range(dv, prev..k);
                for (qslot, qrow) in qrows.iter().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..drow.len() {
                        acc += qrow[i] * drow[i];
                    }
                    chunk[qslot * n_d + d] += acc;
                }
            }
        });
        prev = k;

        let failures: u64 = sums
            .par_chunks(n_q * n_d)
            .map(|chunk| {
                let mut fails = 0u64;
                for (qslot, &(_, gold, _)) in used.iter().enumerate() {
                    let row = &chunk[qslot * n_d..(qslot + 1) * n_d];
                    let sg = row[gold as usize];
                    let mut beat = 0u32;
                    for (d, &s) in row.iter().enumerate() {
                        if d as u32 != gold && (s > sg || (s == sg && (d as u32) < gold)) {
                            beat += 1;
                        }
                    }
                    fails += (beat >= cfg.r0) as u64;
                }
                fails
            })
            .sum();
        let recall = 1.0 - failures as f64 / pooled as f64;
        for (ti, slot) in resolved.iter_mut().enumerate() {
            if slot.is_none() && recall + 1e-9 >= cfg.targets[ti] {
                *slot = Some((k, recall));
            }
        }
        if resolved.iter().all(Option::is_some) {
            break;
        }
    }

    Ok(cfg
        .targets
        .iter()
        .zip(resolved)
        .map(|(&target, got)| RecallRow {
            length,
            target,
            n_queries: n_q as u32,
            trials: pooled,
            eps_r0,
            min_k: got.map(|(k, _)| k),
            recall_at_min_k: got.map(|(_, r)| r),
            k_bound: sufficient_k_recall(eps_r0, 1.0 - target, n_d as u32, cfg.r0).ok(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::planar_triple;

    const V: u32 = 4096;

    /// One query strongly aligned with its gold doc, `n` weak competitors on
    /// disjoint coordinates.
    fn easy_corpus(n: usize) -> (Vec<SparseVector>, Vec<SparseVector>) {
        let q = SparseVector::from_pairs([(0, 1.0)]);
        let mut docs = vec![SparseVector::from_pairs([(0, 4.0)])];
        for i in 0..n {
            docs.push(SparseVector::from_pairs([(0, 0.2), (i as u32 + 1, 1.0)]));
        }
        (vec![q], docs)
    }

    #[test]
    fn an_easy_corpus_resolves_every_target_at_the_grid_floor() {
        let (queries, docs) = easy_corpus(14);
        let cfg = RecallMinKConfig {
            grid: KGrid::from_list(vec![64, 256]).unwrap(),
            r0: 10,
            trials: 20,
            base_seed: 5,
            ..RecallMinKConfig::default()
        };
        let rows = min_k_for_recall(50, &queries, &docs, V, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.min_k, Some(64), "target {}", row.target);
            assert_eq!(row.n_queries, 1);
            assert_eq!(row.trials, 20);
            assert!(row.recall_at_min_k.unwrap() >= row.target);
            assert!(row.eps_r0 > 0.0);
        }
    }

    #[test]
    fn hopeless_margins_exhaust_the_grid_and_are_reported_not_dropped() {
        // ten competitors nearly tied with the gold doc: recall@1 at 0.95
        // needs far more dimensions than the toy grid offers
        let (q, d1, d2) = planar_triple(V, 0.02, 3).unwrap();
        let mut docs = vec![d1];
        for i in 0..10 {
            let mut shifted: Vec<(u32, f64)> = d2.entries().to_vec();
            shifted.push((1000 + i, 1e-6));
            docs.push(SparseVector::from_pairs(shifted));
        }
        let cfg = RecallMinKConfig {
            grid: KGrid::from_list(vec![8, 16]).unwrap(),
            r0: 1,
            targets: vec![0.999],
            trials: 40,
            base_seed: 9,
            ..RecallMinKConfig::default()
        };
        let rows = min_k_for_recall(50, std::slice::from_ref(&q), &docs, V, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].min_k, None);
        assert_eq!(rows[0].recall_at_min_k, None);
        assert_eq!(rows[0].trials, 40);
    }

    #[test]
    fn eps_is_the_median_rank_r0_margin_and_the_bound_column_matches() {
        let (queries, docs) = easy_corpus(14);
        let cfg = RecallMinKConfig {
            grid: KGrid::from_list(vec![32, 64]).unwrap(),
            r0: 3,
            targets: vec![0.9],
            trials: 5,
            base_seed: 1,
            ..RecallMinKConfig::default()
        };
        let rows = min_k_for_recall(50, &queries, &docs, V, &cfg).unwrap();
        let margins = sorted_margins(&queries[0], 0, &docs);
        assert_eq!(rows[0].eps_r0, margins[2]);
        assert_eq!(
            rows[0].k_bound,
            sufficient_k_recall(rows[0].eps_r0, 0.1, docs.len() as u32, 3).ok()
        );
    }

    #[test]
    fn recall_sweeps_are_reproducible() {
        let (queries, docs) = easy_corpus(14);
        let cfg = RecallMinKConfig {
            grid: KGrid::from_list(vec![16, 48, 96]).unwrap(),
            r0: 5,
            trials: 12,
            base_seed: 77,
            ..RecallMinKConfig::default()
        };
        let a = min_k_for_recall(100, &queries, &docs, V, &cfg).unwrap();
        let b = min_k_for_recall(100, &queries, &docs, V, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recall_inputs_are_validated() {
        let (queries, docs) = easy_corpus(14);
        let base = RecallMinKConfig {
            grid: KGrid::from_list(vec![16, 32]).unwrap(),
            ..RecallMinKConfig::default()
        };
        let bad_r0 = RecallMinKConfig { r0: docs.len() as u32, ..base.clone() };
        assert!(min_k_for_recall(50, &queries, &docs, V, &bad_r0).is_err());
        let bad_target = RecallMinKConfig { targets: vec![1.5], ..base.clone() };
        assert!(min_k_for_recall(50, &queries, &docs, V, &bad_target).is_err());
        let no_trials = RecallMinKConfig { trials: 0, ..base.clone() };
        assert!(min_k_for_recall(50, &queries, &docs, V, &no_trials).is_err());
        assert!(min_k_for_recall(50, &[], &docs, V, &base).is_err());
        // no eligible queries: everything scores zero
        let blank = vec![SparseVector::from_pairs([(2000, 1.0)])];
        assert!(min_k_for_recall(50, &blank, &docs, V, &base).is_err());
    }
}
