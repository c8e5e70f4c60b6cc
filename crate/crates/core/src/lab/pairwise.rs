//! Pairwise ranking-error Monte-Carlo: how often does a seeded random
//! projection swap a ranked pair, and how many output dimensions does each
//! margin bin need before pooled accuracy reaches a target.
//!
//! All comparisons are made on unscaled row sums `Σ_i (Aq)_i'(Ad)_i'` where
//! the common positive `1/k` factor is dropped: the swap event is invariant
//! under shared positive scaling, and integer-exact sums (boolean corpora
//! under sign projections) then compare without rounding. Sweeps walk the
//! dimension grid in ascending order and extend per-trial prefix sums
//! incrementally, so a bin that resolves at a small `k` never pays for the
//! tail of the grid.

use super::{KGrid, MarginTriple};
use crate::bounds::{concentration_rate, normalized_margin};
use crate::corpus::SparseVector;
use crate::projection::{ProjectionKind, ProjectionSpec};
use crate::{Error, Result};
use rayon::prelude::*;

/// Monte-Carlo error tally for one (triple, k) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorEstimate {
    pub errors: u32,
    pub trials: u32,
}

impl ErrorEstimate {
    /// Fraction of trials in which the projection ranked `d2` at or above
    /// `d1`.
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.rate()
    }

    /// Binomial standard error of [`ErrorEstimate::rate`].
    pub fn stderr(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

fn check_mc_inputs(
    q: &SparseVector,
    d1: &SparseVector,
    d2: &SparseVector,
    trials: u32,
) -> Result<()> {
    let margin = normalized_margin(q, d1, d2)?;
    if margin <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "pairwise error is defined for positively ranked pairs; margin = {margin}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParam("at least one trial is required".into()));
    }
    Ok(())
}

/// One trial of the swap event at a single `k`: true when the projection
/// scores `d2` at or above `d1`.
fn trial_swaps(
    kind: ProjectionKind,
    v: u32,
    k: u32,
    seed: u64,
    q: &SparseVector,
    d1: &SparseVector,
    d2: &SparseVector,
) -> bool {
    let spec = ProjectionSpec::new(kind, k, v, seed).expect("validated by caller");
    let qr = spec.row_products(q, k);
    let ar = spec.row_products(d1, k);
    let br = spec.row_products(d2, k);
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for i in 0..qr.len() {
        s1 += qr[i] * ar[i];
        s2 += qr[i] * br[i];
    }
    s2 >= s1
}

/// Estimate the probability that a `k`-dimensional projection ranks `d2` at
/// or above `d1` for query `q`, over `trials` independent seeds
/// `base_seed + t`. The triple must have a strictly positive normalized
/// margin.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pairwise_error(
    q: &SparseVector,
    d1: &SparseVector,
    d2: &SparseVector,
    kind: ProjectionKind,
    v: u32,
    k: u32,
    trials: u32,
    base_seed: u64,
) -> Result<ErrorEstimate> {
    check_mc_inputs(q, d1, d2, trials)?;
    ProjectionSpec::new(kind, k, v, base_seed)?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| trial_swaps(kind, v, k, base_seed.wrapping_add(t as u64), q, d1, d2) as u32)
        .sum();
    Ok(ErrorEstimate { errors, trials })
}

/// [`estimate_pairwise_error`] for every grid dimension at once: each trial
/// projects to `grid.k_max()` and reads the swap event off prefix sums at
/// every grid value, so per-k tallies agree exactly with single-k runs under
/// the same seeds.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pairwise_error_grid(
    q: &SparseVector,
    d1: &SparseVector,
    d2: &SparseVector,
    kind: ProjectionKind,
    v: u32,
    grid: &KGrid,
    trials: u32,
    base_seed: u64,
) -> Result<Vec<ErrorEstimate>> {
    check_mc_inputs(q, d1, d2, trials)?;
    ProjectionSpec::new(kind, grid.k_max(), v, base_seed)?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let spec = ProjectionSpec::new(kind, grid.k_max(), v, base_seed.wrapping_add(t as u64))
                .expect("validated above");
            let qr = spec.row_products(q, grid.k_max());
            let ar = spec.row_products(d1, grid.k_max());
            let br = spec.row_products(d2, grid.k_max());
            let mut flags = vec![0u32; grid.len()];
            let (mut s1, mut s2) = (0.0, 0.0);
            let mut row = 0usize;
            for (gi, &k) in grid.ks().iter().enumerate() {
                while row < k as usize {
                    s1 += qr[row] * ar[row];
                    s2 += qr[row] * br[row];
                    row += 1;
                }
                flags[gi] = (s2 >= s1) as u32;
            }
            flags
        })
        .reduce(
            || vec![0u32; grid.len()],
            |mut acc, flags| {
                for (a, f) in acc.iter_mut().zip(flags) {
                    *a += f;
                }
                acc
            },
        );
    Ok(errors.into_iter().map(|e| ErrorEstimate { errors: e, trials }).collect())
}

// ---------------------------------------------------------------------------
// Min-k per margin bin
// ---------------------------------------------------------------------------

/// Configuration for [`min_k_per_bin`].
#[derive(Debug, Clone)]
pub struct MinKConfig {
    pub kind: ProjectionKind,
    pub grid: KGrid,
    /// Equal-count bins over the concentration-rate inverse of the margin.
    pub bins: u32,
    /// Triples Monte-Carloed per bin (evenly spaced through the sorted bin;
    /// bins smaller than this use every triple).
    pub sample_per_bin: u32,
    pub trials_per_triple: u32,
    /// Pooled accuracy a bin must reach (within 1e-9) to resolve.
    pub target_accuracy: f64,
    pub base_seed: u64,
}

impl Default for MinKConfig {
    fn default() -> Self {
        MinKConfig {
            kind: ProjectionKind::Rademacher,
            grid: KGrid::default_sweep(),
            bins: 10,
            sample_per_bin: 32,
            trials_per_triple: 100,
            target_accuracy: 0.95,
            base_seed: 0,
        }
    }
}

/// One bin of a [`min_k_per_bin`] sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MinKRow {
    /// Smallest rate-inverse statistic in the bin.
    pub bin_lo: f64,
    /// Largest rate-inverse statistic in the bin.
    pub bin_hi: f64,
    /// Bin population (before sampling).
    pub n_triples: u64,
    /// Mean rate-inverse over the Monte-Carloed sample.
    pub stat: f64,
    /// Smallest grid dimension reaching the target accuracy; `None` when the
    /// grid was exhausted first (the bin is reported, not dropped).
    pub min_k: Option<u32>,
    /// Pooled Bernoulli count behind each (bin, k) accuracy estimate.
    pub trials: u64,
    /// Triples actually Monte-Carloed.
    pub sampled: u32,
    pub accuracy_at_min_k: Option<f64>,
}

struct PairState {
    q: u32,
    d1: u32,
    d2: u32,
    seed: u64,
    s1: f64,
    s2: f64,
}

/// For each equal-count margin bin, find the smallest grid dimension whose
/// pooled Monte-Carlo pairwise accuracy reaches the target.
///
/// Triples are binned by the inverse concentration rate of their margin (the
/// quantity the sufficient-dimension formulas scale with), each bin samples
/// `sample_per_bin` triples evenly through its sorted range, and every
/// (triple, trial) pair extends its own seeded prefix as the grid ascends.
/// Rows come back in ascending bin order.
pub fn min_k_per_bin(
    triples: &[MarginTriple],
    queries: &[SparseVector],
    docs: &[SparseVector],
    v: u32,
    cfg: &MinKConfig,
) -> Result<Vec<MinKRow>> {
    if triples.is_empty() {
        return Err(Error::Empty("margin triples"));
    }
    if cfg.bins == 0 || cfg.sample_per_bin == 0 || cfg.trials_per_triple == 0 {
        return Err(Error::InvalidParam("bins, sample size, and trials must be positive".into()));
    }
    if (triples.len() as u64) < cfg.bins as u64 {
        return Err(Error::InvalidParam(format!(
            "{} triples cannot fill {} bins",
            triples.len(),
            cfg.bins
        )));
    }
    if !(cfg.target_accuracy > 0.0 && cfg.target_accuracy <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "target accuracy must be in (0, 1], got {}",
            cfg.target_accuracy
        )));
    }
    ProjectionSpec::new(cfg.kind, cfg.grid.k_max(), v, cfg.base_seed)?;

    let mut stats = Vec::with_capacity(triples.len());
    for (i, t) in triples.iter().enumerate() {
        if !(t.margin > 0.0 && t.margin <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "triple {i} has margin {} outside (0, 1]",
                t.margin
            )));
        }
        let stat = 1.0 / concentration_rate(t.margin)?;
        if !stat.is_finite() {
            return Err(Error::OutOfRange(format!(
                "triple {i} margin {} is too small to bin",
                t.margin
            )));
        }
        stats.push(stat);
    }
    let mut order: Vec<u32> = (0..triples.len() as u32).collect();
    order
        .sort_unstable_by(|&a, &b| stats[a as usize].total_cmp(&stats[b as usize]).then(a.cmp(&b)));

    let n = order.len();
    let bins = cfg.bins as usize;
    let mut rows = Vec::with_capacity(bins);
    for b in 0..bins {
        let slice = &order[b * n / bins..(b + 1) * n / bins];
        let take = (cfg.sample_per_bin as usize).min(slice.len());
        let sampled: Vec<u32> = (0..take)
            .map(|j| slice[((j as f64 + 0.5) * slice.len() as f64 / take as f64) as usize])
            .collect();
        let mut states: Vec<PairState> = Vec::with_capacity(take * cfg.trials_per_triple as usize);
        for (j, &ti) in sampled.iter().enumerate() {
            let t = &triples[ti as usize];
            for trial in 0..cfg.trials_per_triple {
                let tag = ((b as u64) << 44) | ((j as u64) << 22) | trial as u64;
                states.push(PairState {
                    q: t.query,
                    d1: t.d1,
                    d2: t.d2,
                    seed: cfg.base_seed.wrapping_add(tag),
                    s1: 0.0,
                    s2: 0.0,
                });
            }
        }

        let mut min_k = None;
        let mut accuracy_at_min_k = None;
        let mut prev = 0u32;
        for &k in cfg.grid.ks() {
            states.par_iter_mut().for_each(|st| {
                let spec = ProjectionSpec::new(cfg.kind, k, v, st.seed).expect("validated");
                let qr = spec.row_products_range(&queries[st.q as usize], prev..k);
                let ar = spec.row_products_range(&docs[st.d1 as usize], prev..k);
                let br = spec.row_products_range(&docs[st.d2 as usize], prev..k);
                for i in 0..qr.len() {
                    st.s1 += qr[i] * ar[i];
                    st.s2 += qr[i] * br[i];
                }
            });
            prev = k;
            let errors: u64 = states.iter().map(|st| (st.s2 >= st.s1) as u64).sum();
            let accuracy = 1.0 - errors as f64 / states.len() as f64;
            if accuracy + 1e-9 >= cfg.target_accuracy {
                min_k = Some(k);
                accuracy_at_min_k = Some(accuracy);
                break;
            }
        }

        rows.push(MinKRow {
            bin_lo: stats[slice[0] as usize],
            bin_hi: stats[*slice.last().expect("bins are non-empty") as usize],
            n_triples: slice.len() as u64,
            stat: sampled.iter().map(|&ti| stats[ti as usize]).sum::<f64>() / take as f64,
            min_k,
            trials: states.len() as u64,
            sampled: take as u32,
            accuracy_at_min_k,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::pairwise_error_bound;
    use crate::lab::planar_triple;

    const V: u32 = 10_000;

    #[test]
    fn swap_rate_decreases_with_k_and_respects_the_bound() {
        let (q, d1, d2) = planar_triple(V, 0.45, 3).unwrap();
        let mut last = f64::INFINITY;
        for k in [16u32, 64, 256] {
            let est =
                estimate_pairwise_error(&q, &d1, &d2, ProjectionKind::Rademacher, V, k, 400, 11)
                    .unwrap();
            let bound = pairwise_error_bound(0.45, k).unwrap();
            assert!(
                est.rate() <= bound.min(1.0) + 3.0 * (bound.min(1.0) / 400.0).sqrt() + 1e-12,
                "k={k}: rate {} vs bound {bound}",
                est.rate()
            );
            assert!(est.rate() <= last + 0.05, "k={k} not roughly decreasing");
            last = est.rate();
        }
    }

    #[test]
    fn a_perfectly_aligned_pair_never_swaps() {
        let (q, d1, d2) = planar_triple(V, 1.0, 5).unwrap();
        for kind in [ProjectionKind::Rademacher, ProjectionKind::Gaussian] {
            let est = estimate_pairwise_error(&q, &d1, &d2, kind, V, 8, 300, 2).unwrap();
            assert_eq!(est.errors, 0, "{kind}");
        }
    }

    #[test]
    fn non_positive_margins_are_rejected() {
        let (q, d1, d2) = planar_triple(V, 0.5, 9).unwrap();
        // swapped roles: margin is negative
        let err = estimate_pairwise_error(&q, &d2, &d1, ProjectionKind::Rademacher, V, 64, 10, 0);
        assert!(err.is_err());
        let zero_trials =
            estimate_pairwise_error(&q, &d1, &d2, ProjectionKind::Rademacher, V, 64, 0, 0);
        assert!(zero_trials.is_err());
    }

    #[test]
    fn grid_sweep_matches_single_k_runs_exactly() {
        let (q, d1, d2) = planar_triple(V, 0.3, 17).unwrap();
        let grid = KGrid::from_list(vec![8, 32, 128, 500]).unwrap();
        for kind in [ProjectionKind::Rademacher, ProjectionKind::Gaussian] {
            let swept =
                estimate_pairwise_error_grid(&q, &d1, &d2, kind, V, &grid, 150, 23).unwrap();
            for (gi, &k) in grid.ks().iter().enumerate() {
                let single = estimate_pairwise_error(&q, &d1, &d2, kind, V, k, 150, 23).unwrap();
                assert_eq!(swept[gi], single, "{kind} k={k}");
            }
        }
    }

    #[test]
    fn a_singleton_full_margin_bin_resolves_at_the_grid_floor() {
        let (q, d1, d2) = planar_triple(V, 1.0, 41).unwrap();
        let triples = [MarginTriple { query: 0, d1: 0, d2: 1, margin: 1.0 }];
        let cfg = MinKConfig {
            grid: KGrid::from_list(vec![32, 64, 128]).unwrap(),
            bins: 1,
            trials_per_triple: 50,
            ..MinKConfig::default()
        };
        let rows = min_k_per_bin(&triples, &[q], &[d1, d2], V, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].min_k, Some(32));
        assert_eq!(rows[0].sampled, 1);
        assert_eq!(rows[0].trials, 50);
        assert_eq!(rows[0].accuracy_at_min_k, Some(1.0));
        // rate(1) = 1/2 - 1/3 = 1/6
        assert_eq!(rows[0].stat, 1.0 / concentration_rate(1.0).unwrap());
    }

    #[test]
    fn harder_margins_need_more_dimensions_and_may_exhaust_the_grid() {
        let (qa, a1, a2) = planar_triple(V, 0.8, 51).unwrap();
        let (qb, b1, b2) = planar_triple(V, 0.12, 52).unwrap();
        let (qc, c1, c2) = planar_triple(V, 0.015, 53).unwrap();
        let queries = [qa, qb, qc];
        let docs = [a1, a2, b1, b2, c1, c2];
        let triples = [
            MarginTriple { query: 0, d1: 0, d2: 1, margin: 0.8 },
            MarginTriple { query: 1, d1: 2, d2: 3, margin: 0.12 },
            MarginTriple { query: 2, d1: 4, d2: 5, margin: 0.015 },
        ];
        let cfg = MinKConfig {
            grid: KGrid::from_list(vec![16, 48, 144, 432, 1296]).unwrap(),
            bins: 3,
            trials_per_triple: 200,
            base_seed: 7,
            ..MinKConfig::default()
        };
        let rows = min_k_per_bin(&triples, &queries, &docs, V, &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        // bins come back ordered by the rate-inverse statistic: easy -> hard
        assert!(rows[0].stat < rows[1].stat && rows[1].stat < rows[2].stat);
        let easy = rows[0].min_k.expect("margin 0.8 resolves");
        let mid = rows[1].min_k.expect("margin 0.12 resolves");
        assert!(easy < mid, "easy bin {easy} should resolve below {mid}");
        // margin 0.015 needs k ~ 2.7/eps^2 ~ 12000 > 1296: grid exhausted
        assert_eq!(rows[2].min_k, None);
        assert_eq!(rows[2].accuracy_at_min_k, None);
        for r in &rows {
            assert_eq!(r.n_triples, 1);
            assert!(r.bin_lo <= r.stat && r.stat <= r.bin_hi);
        }
    }

    #[test]
    fn min_k_rows_are_reproducible() {
        let (q, d1, d2) = planar_triple(V, 0.4, 61).unwrap();
        let triples: Vec<MarginTriple> =
            (0..8).map(|_| MarginTriple { query: 0, d1: 0, d2: 1, margin: 0.4 }).collect();
        let cfg = MinKConfig {
            grid: KGrid::from_list(vec![8, 24, 72, 216]).unwrap(),
            bins: 2,
            sample_per_bin: 3,
            trials_per_triple: 40,
            base_seed: 99,
            ..MinKConfig::default()
        };
        let docs = [d1, d2];
        let a = min_k_per_bin(&triples, std::slice::from_ref(&q), &docs, V, &cfg).unwrap();
        let b = min_k_per_bin(&triples, std::slice::from_ref(&q), &docs, V, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn min_k_validates_its_inputs() {
        let (q, d1, d2) = planar_triple(V, 0.4, 71).unwrap();
        let docs = [d1, d2];
        let good = MarginTriple { query: 0, d1: 0, d2: 1, margin: 0.4 };
        let cfg = MinKConfig::default();
        assert!(min_k_per_bin(&[], std::slice::from_ref(&q), &docs, V, &cfg).is_err());
        // fewer triples than bins
        assert!(min_k_per_bin(&[good], std::slice::from_ref(&q), &docs, V, &cfg).is_err());
        let bad = MarginTriple { margin: 0.0, ..good };
        let one_bin = MinKConfig { bins: 1, ..MinKConfig::default() };
        assert!(min_k_per_bin(&[bad], std::slice::from_ref(&q), &docs, V, &one_bin).is_err());
        let bad_target = MinKConfig { bins: 1, target_accuracy: 0.0, ..MinKConfig::default() };
        assert!(min_k_per_bin(&[good], std::slice::from_ref(&q), &docs, V, &bad_target).is_err());
    }
}
