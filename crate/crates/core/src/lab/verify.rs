//! The verification suite: every concentration bound, calibration rule,
//! equivalence, and determinism claim the library makes, packaged as
//! seeded Monte-Carlo experiments with machine-checkable pass conditions.
//!
//! Each experiment is a plain function over explicit parameters so callers
//! can size it to taste; [`run_all`] bundles them all at a standard (or
//! `quick`) scale and returns one [`Check`] per claim. Observed Bernoulli
//! rates are compared against their predicted probabilities through a
//! three-standard-error [`envelope`], so a pass is stable for a fixed seed
//! and a failure signals a real violation rather than Monte-Carlo noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attention::{attention_sufficient_k, indicator_score, projected_flips};
use crate::bounds::{
    boolean_min_margin, normalized_margin, pairwise_error_bound, recall_error_bound,
    sufficient_k_boolean, sufficient_k_pairwise, sufficient_k_recall,
};
use crate::corpus::{vectorize_boolean, Document, SparseVector, TokenMode, Vocabulary};
use crate::multivec::{
    expanded_index_topk, multivec_score, segment, witness_margin_check, MultiVecDoc, SegScheme,
    Segmentation,
};
use crate::projection::{ProjectionKind, ProjectionSpec};
use crate::sparse::{doc_vector, query_vector, rank_scores, Bm25Params, InvertedIndex, Scheme};
use crate::{Error, Result};

use super::pairwise::{estimate_pairwise_error, estimate_pairwise_error_grid, min_k_per_bin};
use super::report::{margins_csv, min_k_csv, recall_csv};
use super::{
    harvest_triples, margin_quantiles_by_length, min_k_for_recall, planar_triple, sorted_margins,
    synthesize_lab_corpus, KGrid, LabCorpus, LabCorpusConfig, MarginRow, MinKConfig, MinKRow,
    RecallMinKConfig, RecallRow, DEFAULT_LENGTH_BINS,
};

/// One named verification claim with its outcome and a one-line summary of
/// the evidence.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Retention-depth scenarios (collection size, depth) exercised by default.
pub const DEFAULT_RECALL_COMBOS: [(u32, u32); 4] = [(100, 1), (100, 10), (1000, 1), (1000, 10)];

/// Analytic failure levels the retention experiment dials its dimensions to.
pub const DEFAULT_BOUND_TARGETS: [f64; 3] = [0.6, 0.3, 0.12];

// ---------------------------------------------------------------------------
// Statistical helpers
// ---------------------------------------------------------------------------

/// Upper acceptance envelope for an observed Bernoulli rate against a
/// predicted probability: `min(p, 1)` plus three binomial standard errors.
pub fn envelope(p: f64, trials: u64) -> f64 {
    let p = p.min(1.0);
    p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Coefficient of determination of the least-squares line through `points`.
/// Degenerate inputs: constant `y` fits perfectly (1.0); constant `x` with
/// varying `y` explains nothing (0.0).
pub fn linear_fit_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 1.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    (sxy * sxy) / (sxx * syy)
}

/// Asymptotic standard error of a sample median, with the density estimated
/// from the interquartile range by the normal-reference rule.
pub fn median_std_error(q25: f64, q75: f64, n: u64) -> f64 {
    let iqr = (q75 - q25).max(0.0);
    1.2533 * (iqr / 1.349) / (n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// 1. Pairwise swap rates across a (margin, dimension) grid
// ---------------------------------------------------------------------------

/// One (margin, dimension) cell of the pairwise sweep.
#[derive(Debug, Clone, Copy)]
pub struct PairwiseCell {
    /// Realized normalized margin of the constructed triple.
    pub margin: f64,
    pub k: u32,
    /// Analytic swap-probability bound at this cell.
    pub bound: f64,
    pub errors: u32,
    pub trials: u32,
}

/// Evenly spaced margins `1/n, 2/n, ..., 1`.
pub fn margin_ladder(n: u32) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// Monte-Carlo the swap rate on exact-margin planar triples at every
/// (margin, grid dimension) cell; bounds use each triple's realized margin.
pub fn pairwise_grid_cells(
    kind: ProjectionKind,
    v: u32,
    margins: &[f64],
    grid: &KGrid,
    trials: u32,
    seed: u64,
) -> Result<Vec<PairwiseCell>> {
    let mut cells = Vec::with_capacity(margins.len() * grid.len());
    for (mi, &margin) in margins.iter().enumerate() {
        let (q, d1, d2) = planar_triple(v, margin, seed ^ ((mi as u64 + 1) << 32))?;
        let realized = normalized_margin(&q, &d1, &d2)?;
        let base = seed.wrapping_add((mi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let estimates = estimate_pairwise_error_grid(&q, &d1, &d2, kind, v, grid, trials, base)?;
        for (gi, est) in estimates.iter().enumerate() {
            let k = grid.ks()[gi];
            cells.push(PairwiseCell {
                margin: realized,
                k,
                bound: pairwise_error_bound(realized, k)?,
                errors: est.errors,
                trials: est.trials,
            });
        }
    }
    Ok(cells)
}

/// Worst observed-rate excess over the bound envelope across cells;
/// non-positive means every cell sits inside its envelope.
pub fn pairwise_worst_excess(cells: &[PairwiseCell]) -> f64 {
    cells
        .iter()
        .map(|c| c.errors as f64 / c.trials as f64 - envelope(c.bound, c.trials as u64))
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// 2. Swap rates at the sufficient dimension
// ---------------------------------------------------------------------------

/// One random margin tested at its own sufficient dimension.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationPoint {
    pub margin: f64,
    /// The sufficient dimension for this margin at the target rate.
    pub k: u32,
    pub errors: u32,
    pub trials: u32,
}

/// Swap rates at the sufficient dimension `k(margin, beta)` for `n` random
/// margins in `[0.1, 0.98)`: every rate should land at or below `beta`
/// within Monte-Carlo noise.
pub fn calibration_points(
    kind: ProjectionKind,
    v: u32,
    n: u32,
    beta: f64,
    trials: u32,
    seed: u64,
) -> Result<Vec<CalibrationPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margins: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.98)).collect();
    margins
        .par_iter()
        .enumerate()
        .map(|(i, &margin)| {
            let (q, d1, d2) = planar_triple(v, margin, seed ^ ((i as u64 + 1) << 20))?;
            let realized = normalized_margin(&q, &d1, &d2)?;
            let k = sufficient_k_pairwise(realized, beta)?;
            let base = seed.wrapping_add(0xca11).wrapping_add((i as u64) << 24);
            let est = estimate_pairwise_error(&q, &d1, &d2, kind, v, k, trials, base)?;
            Ok(CalibrationPoint { margin: realized, k, errors: est.errors, trials: est.trials })
        })
        .collect()
}

/// Worst observed-rate excess over the `beta` envelope across points.
pub fn calibration_worst_excess(points: &[CalibrationPoint], beta: f64) -> f64 {
    points
        .iter()
        .map(|p| p.errors as f64 / p.trials as f64 - envelope(beta, p.trials as u64))
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// 3. Boolean corpora under length caps
// ---------------------------------------------------------------------------

/// Outcome of the boolean length-cap certificate experiment.
#[derive(Debug, Clone)]
pub struct BooleanCertificate {
    /// Margin floor implied by the length caps.
    pub eps: f64,
    /// Dimension tested: the boolean sufficient dimension for the caps.
    pub k: u32,
    /// Smallest harvested margin (the planted pairs sit exactly at the
    /// floor when the query cap is even).
    pub min_margin: f64,
    pub max_margin: f64,
    /// `(margin, errors)` per Monte-Carloed triple.
    pub cells: Vec<(f64, u32)>,
    pub trials: u32,
}

impl BooleanCertificate {
    /// Largest observed swap rate across the sampled triples.
    pub fn worst_rate(&self) -> f64 {
        self.cells.iter().map(|&(_, e)| e as f64 / self.trials as f64).fold(0.0, f64::max)
    }
}

/// Build a boolean corpus with planted extremal-margin pairs under hard
/// length caps (`l_q` distinct query terms, `l_d` distinct document terms),
/// harvest its triples, and Monte-Carlo sign-projection swap rates at the
/// boolean sufficient dimension on an even sample across the margin range.
///
/// Planted pairs are disjoint `l_d`-term documents whose query takes
/// `ceil(l_q/2)` terms from the winner, one fewer from the loser, and one
/// term hitting nothing, so their margin sits at the floor exactly (even
/// `l_q`) and the argmax is theirs by construction.
pub fn boolean_certificate(
    l_q: u32,
    l_d: u32,
    beta: f64,
    n_triples: u32,
    trials: u32,
    seed: u64,
) -> Result<BooleanCertificate> {
    if l_q < 3 || l_d < l_q {
        return Err(Error::InvalidParam(format!(
            "length caps need 3 <= l_q <= l_d, got ({l_q}, {l_d})"
        )));
    }
    if n_triples < 1 || trials < 1 {
        return Err(Error::InvalidParam("need at least one triple and one trial".into()));
    }
    let n_pairs = 6u32;
    // Term-id layout: planted pairs own [0, 2*l_d*n_pairs), then one
    // hit-nothing term per planted query, then the random-document range.
    let fresh0 = 2 * l_d * n_pairs;
    let rand0 = fresh0 + n_pairs;
    let v = rand0 + 16 * l_d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut docs: Vec<SparseVector> = Vec::new();
    let mut queries: Vec<SparseVector> = Vec::new();
    let boolean = |terms: &[u32]| SparseVector::from_pairs(terms.iter().map(|&t| (t, 1.0)));
    for p in 0..n_pairs {
        let base = p * 2 * l_d;
        let d1: Vec<u32> = (base..base + l_d).collect();
        let d2: Vec<u32> = (base + l_d..base + 2 * l_d).collect();
        let a = l_q.div_ceil(2) as usize;
        let b = (l_q as usize) - a - 1;
        let mut qt: Vec<u32> = Vec::with_capacity(l_q as usize);
        let mut pool1 = d1.clone();
        pool1.shuffle(&mut rng);
        qt.extend(&pool1[..a]);
        let mut pool2 = d2.clone();
        pool2.shuffle(&mut rng);
        qt.extend(&pool2[..b]);
        qt.push(fresh0 + p);
        docs.push(boolean(&d1));
        docs.push(boolean(&d2));
        queries.push(boolean(&qt));
    }
    let mut random_terms: Vec<Vec<u32>> = Vec::new();
    for _ in 0..6 * n_pairs {
        let mut terms: Vec<u32> = Vec::with_capacity(l_d as usize);
        while (terms.len() as u32) < l_d {
            let t = rng.gen_range(rand0..v);
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
        docs.push(boolean(&terms));
        random_terms.push(terms);
    }
    for _ in 0..3 * n_pairs {
        let src = random_terms.choose(&mut rng).expect("non-empty");
        let mut pool = src.clone();
        pool.shuffle(&mut rng);
        queries.push(boolean(&pool[..l_q as usize]));
    }

    let harvest = harvest_triples(&queries, &docs)?;
    if harvest.triples.is_empty() {
        return Err(Error::Empty("harvested triples"));
    }
    let eps = boolean_min_margin(l_q, l_d)?;
    let k = sufficient_k_boolean(l_q, l_d, beta)?;
    let mut order: Vec<usize> = (0..harvest.triples.len()).collect();
    order.sort_by(|&a, &b| {
        harvest.triples[a].margin.total_cmp(&harvest.triples[b].margin).then(a.cmp(&b))
    });
    let min_margin = harvest.triples[order[0]].margin;
    let max_margin = harvest.triples[*order.last().expect("non-empty")].margin;
    let take = (n_triples as usize).min(order.len());
    let picked: Vec<usize> = (0..take)
        .map(|j| order[if take == 1 { 0 } else { j * (order.len() - 1) / (take - 1) }])
        .collect();
    let mut cells = Vec::with_capacity(take);
    for &idx in &picked {
        let t = &harvest.triples[idx];
        let est = estimate_pairwise_error(
            &queries[t.query as usize],
            &docs[t.d1 as usize],
            &docs[t.d2 as usize],
            ProjectionKind::Rademacher,
            v,
            k,
            trials,
            seed ^ (idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        )?;
        cells.push((t.margin, est.errors));
    }
    Ok(BooleanCertificate { eps, k, min_margin, max_margin, cells, trials })
}

// ---------------------------------------------------------------------------
// 4. Argmax retention against the analytic bound
// ---------------------------------------------------------------------------

/// One (collection size, depth, dimension) retention cell.
#[derive(Debug, Clone, Copy)]
pub struct RecallCell {
    pub d_size: u32,
    pub r0: u32,
    pub k: u32,
    /// Depth-`r0` margin of the star corpus.
    pub eps_r0: f64,
    /// Analytic probability bound for the argmax leaving the top `r0`.
    pub bound: f64,
    pub failures: u32,
    pub trials: u32,
}

/// Monte-Carlo the probability that the argmax drops out of the projected
/// top `r0` on star corpora whose competitor margins are exactly controlled
/// (spaced over `[0.2, 0.9]`), at dimensions dialing the analytic bound to
/// each of `bound_targets`.
pub fn recall_bound_cells(
    kind: ProjectionKind,
    combos: &[(u32, u32)],
    bound_targets: &[f64],
    trials: u32,
    seed: u64,
) -> Result<Vec<RecallCell>> {
    if trials < 1 {
        return Err(Error::InvalidParam("need at least one trial".into()));
    }
    let mut out = Vec::new();
    for (ci, &(d_size, r0)) in combos.iter().enumerate() {
        if d_size < 3 || r0 < 1 || r0 >= d_size {
            return Err(Error::InvalidParam(format!(
                "need d_size >= 3 and 1 <= r0 < d_size, got ({d_size}, {r0})"
            )));
        }
        // Star corpus: the argmax is e0; competitor i sits at unit distance
        // from it with normalized margin exactly t_i.
        let v = d_size;
        let mut docs = Vec::with_capacity(d_size as usize);
        docs.push(SparseVector::unit(0));
        for i in 1..d_size {
            let t = 0.2 + 0.7 * (i - 1) as f64 / (d_size - 2) as f64;
            let s = (1.0 - t * t).sqrt();
            docs.push(SparseVector::from_pairs([(0, 1.0 - t), (i, -s)]));
        }
        let q = SparseVector::unit(0);
        let margins = sorted_margins(&q, 0, &docs);
        let eps_r0 = margins[(r0 - 1) as usize];
        let mut cks: Vec<(u32, f64)> = Vec::with_capacity(bound_targets.len());
        for &target in bound_targets {
            let k = sufficient_k_recall(eps_r0, target, d_size, r0)?;
            cks.push((k, recall_error_bound(eps_r0, k, d_size, r0)?));
        }
        cks.sort_by_key(|c| c.0);
        let k_max = cks.last().expect("non-empty targets").0;
        let base = seed.wrapping_add((ci as u64 + 1) << 40);
        let fails: Vec<u32> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let spec = ProjectionSpec::new(kind, k_max, v, base.wrapping_add(t as u64))
                    .expect("dimensions validated");
                let qr = spec.row_products(&q, k_max);
                let n = d_size as usize;
                let mut scores = vec![0.0f64; cks.len() * n];
                for (d, doc) in docs.iter().enumerate() {
                    let dr = spec.row_products(doc, k_max);
                    let mut acc = 0.0;
                    let mut row = 0usize;
                    for (i, &(k, _)) in cks.iter().enumerate() {
                        while row < k as usize {
                            acc += qr[row] * dr[row];
                            row += 1;
                        }
                        scores[i * n + d] = acc;
                    }
                }
                let mut flags = vec![0u32; cks.len()];
                for (i, flag) in flags.iter_mut().enumerate() {
                    let row = &scores[i * n..(i + 1) * n];
                    // The argmax has ordinal 0, so tied competitors rank
                    // behind it and only strict wins count.
                    let beaten = row[1..].iter().filter(|&&s| s > row[0]).count() as u32;
                    *flag = (beaten >= r0) as u32;
                }
                flags
            })
            .reduce(
                || vec![0u32; cks.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        for (i, &(k, bound)) in cks.iter().enumerate() {
            out.push(RecallCell { d_size, r0, k, eps_r0, bound, failures: fails[i], trials });
        }
    }
    Ok(out)
}

/// Worst observed failure-rate excess over the bound envelope across cells.
pub fn recall_worst_excess(cells: &[RecallCell]) -> f64 {
    cells
        .iter()
        .map(|c| c.failures as f64 / c.trials as f64 - envelope(c.bound, c.trials as u64))
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// 5. Shape of the empirical min-k curve
// ---------------------------------------------------------------------------

/// Summary of an empirical min-k sweep against the sufficient-dimension line.
#[derive(Debug, Clone)]
pub struct MinKShape {
    pub rows: Vec<MinKRow>,
    /// Bins whose min-k resolved within the grid.
    pub reached: u32,
    /// Worst resolved `min_k / (coeff * stat)` ratio: at or below 1 means
    /// the analytic line is never undercut by reality.
    pub max_ratio: f64,
    /// Fit of resolved (rate-inverse, min-k) points to a line.
    pub r2: f64,
    /// Slope coefficient of the analytic line `coeff / g(margin)` implied
    /// by the configured target accuracy.
    pub coeff: f64,
}

/// Harvest triples from a scored corpus, locate the per-bin minimum
/// sufficient dimension empirically, and summarize how the curve sits
/// against the analytic `2 ln(4/beta) / g(margin)` line.
pub fn min_k_shape(corpus: &LabCorpus, cfg: &MinKConfig) -> Result<MinKShape> {
    let harvest = harvest_triples(&corpus.queries, &corpus.docs)?;
    let rows = min_k_per_bin(&harvest.triples, &corpus.queries, &corpus.docs, corpus.v, cfg)?;
    let coeff = 2.0 * (4.0 / (1.0 - cfg.target_accuracy)).ln();
    let mut reached = 0u32;
    let mut max_ratio = 0.0f64;
    let mut pts = Vec::new();
    for row in &rows {
        if let Some(k) = row.min_k {
            reached += 1;
            max_ratio = max_ratio.max(k as f64 / (coeff * row.stat));
            pts.push((row.stat, k as f64));
        }
    }
    Ok(MinKShape { rows, reached, max_ratio, r2: linear_fit_r2(&pts), coeff })
}

/// True when the shape never undercuts the analytic line: resolved bins sit
/// at or below it, and unresolved bins only occur where the line itself
/// exceeds the grid ceiling.
pub fn min_k_shape_sound(shape: &MinKShape, grid: &KGrid) -> bool {
    shape.max_ratio <= 1.0 + 1e-9
        && shape
            .rows
            .iter()
            .all(|r| r.min_k.is_some() || shape.coeff * r.stat >= grid.k_max() as f64)
}

// ---------------------------------------------------------------------------
// 6. Margin and min-k trends across document length
// ---------------------------------------------------------------------------

/// Margin quantiles and retention min-k across document-length bins.
#[derive(Debug, Clone)]
pub struct LengthTrends {
    pub margins: Vec<MarginRow>,
    pub recalls: Vec<RecallRow>,
}

/// Synthesize one corpus per length (seeded from the base seed plus the
/// length) and concatenate margin-quantile and retention-min-k rows in the
/// caller's length order.
pub fn length_trends(
    base: &LabCorpusConfig,
    lengths: &[u32],
    ranks: &[u32],
    rcfg: &RecallMinKConfig,
) -> Result<LengthTrends> {
    if lengths.is_empty() {
        return Err(Error::Empty("length bins"));
    }
    let mut margins = Vec::new();
    let mut recalls = Vec::new();
    for &len in lengths {
        let mut cfg = base.clone();
        cfg.doc_len = len;
        cfg.seed = base.seed.wrapping_add(len as u64);
        let corpus = synthesize_lab_corpus(&cfg)?;
        margins.extend(margin_quantiles_by_length(len, &corpus.queries, &corpus.docs, ranks)?);
        recalls.extend(min_k_for_recall(len, &corpus.queries, &corpus.docs, corpus.v, rcfg)?);
    }
    Ok(LengthTrends { margins, recalls })
}

/// Count adjacent median-margin increases beyond one combined standard
/// error, scanning rows of `rank` in their stored (length) order. Medians
/// are expected to fall as documents lengthen.
pub fn margin_inversions(rows: &[MarginRow], rank: u32) -> u32 {
    let series: Vec<&MarginRow> = rows.iter().filter(|r| r.rank == rank).collect();
    let mut inversions = 0;
    for w in series.windows(2) {
        let (a, b) = (w[0], w[1]);
        let sa = median_std_error(a.q25, a.q75, a.n_queries as u64);
        let sb = median_std_error(b.q25, b.q75, b.n_queries as u64);
        if b.median > a.median + (sa * sa + sb * sb).sqrt() {
            inversions += 1;
        }
    }
    inversions
}

/// Count adjacent retention min-k decreases beyond one grid step, scanning
/// rows of `target` in their stored (length) order. Min-k is expected to
/// rise as documents lengthen; one grid step of slack absorbs resolution
/// noise.
pub fn recall_min_k_inversions(rows: &[RecallRow], target: f64, grid: &KGrid) -> u32 {
    let series: Vec<&RecallRow> = rows.iter().filter(|r| r.target == target).collect();
    let mut inversions = 0;
    for w in series.windows(2) {
        inversions += match (w[0].min_k, w[1].min_k) {
            (Some(ka), Some(kb)) => {
                let idx = grid.ks().iter().position(|&k| k == ka).unwrap_or(0);
                (idx > 0 && kb < grid.ks()[idx - 1]) as u32
            }
            (None, Some(kb)) => (kb < grid.k_max()) as u32,
            _ => 0,
        };
    }
    inversions
}

// ---------------------------------------------------------------------------
// 7. Single-witness margin domination
// ---------------------------------------------------------------------------

/// Tally of the witness-margin fuzz.
#[derive(Debug, Clone, Copy)]
pub struct WitnessFuzz {
    pub instances: u64,
    /// Instances where the witness was missing or its margin failed to
    /// dominate the full margin.
    pub violations: u64,
    /// Worst relative error of the segment decomposition identities
    /// (inner-product and squared-norm additivity) on the same draws.
    pub decomp_max_rel: f64,
}

/// Fuzz the single-witness margin guarantee on non-negative instances built
/// to contain a witness (the winning document's support lives inside one
/// segment), and exercise the segment decomposition identities alongside.
pub fn witness_fuzz(instances: u64, seed: u64) -> WitnessFuzz {
    let (violations, decomp_max_rel) = (0..instances)
        .into_par_iter()
        .map(|i| witness_instance(seed.wrapping_add(i)))
        .reduce(|| (0u64, 0.0f64), |a, b| (a.0 + b.0, a.1.max(b.1)));
    WitnessFuzz { instances, violations, decomp_max_rel }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn witness_instance(seed: u64) -> (u64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.gen_range(40..200u32);
    let m = rng.gen_range(1..=8u32);
    let scheme = if rng.gen_bool(0.5) { SegScheme::Contiguous } else { SegScheme::Hashed };
    let seg = Segmentation::new(m, scheme, v, rng.gen()).expect("valid dims");
    // A segment with at least one term (fall back to a term's own segment
    // in case a hashed segment is empty).
    let mut s = rng.gen_range(0..m);
    let mut ids: Vec<u32> = (0..v).filter(|&t| seg.segment_of(t) == s).collect();
    if ids.is_empty() {
        s = seg.segment_of(rng.gen_range(0..v));
        ids = (0..v).filter(|&t| seg.segment_of(t) == s).collect();
    }
    ids.shuffle(&mut rng);
    // Winner with support inside segment `s`; query sharing its first term.
    let take = rng.gen_range(1..=ids.len().min(4));
    let d1 = SparseVector::from_pairs(ids[..take].iter().map(|&t| (t, rng.gen_range(0.1..2.0))));
    let mut qp: Vec<(u32, f64)> = vec![(ids[0], rng.gen_range(0.1..2.0))];
    for _ in 0..rng.gen_range(0..6) {
        qp.push((rng.gen_range(0..v), rng.gen_range(0.1..2.0)));
    }
    let q = SparseVector::from_pairs(qp);
    let d2p: Vec<(u32, f64)> =
        (0..rng.gen_range(1..7)).map(|_| (rng.gen_range(0..v), rng.gen_range(0.1..2.0))).collect();
    let mut d2 = SparseVector::from_pairs(d2p);
    let (s1, s2) = (q.dot(&d1), q.dot(&d2));
    if s2 >= s1 {
        let scale = 0.9 * s1 / s2;
        d2 = SparseVector::from_pairs(d2.entries().iter().map(|&(t, w)| (t, w * scale)));
    }
    let violation = match witness_margin_check(&q, &d1, &d2, &seg) {
        Ok(chk) => !(chk.holds && chk.dominates) as u64,
        Err(_) => 1,
    };
    // Decomposition identities on an unrelated non-negative vector.
    let dp: Vec<(u32, f64)> =
        (0..rng.gen_range(1..10)).map(|_| (rng.gen_range(0..v), rng.gen_range(0.1..2.0))).collect();
    let d = SparseVector::from_pairs(dp);
    let parts = segment(&d, &seg);
    let dot_rel = rel_err(parts.iter().map(|p| q.dot(p)).sum::<f64>(), q.dot(&d));
    let norm_rel = rel_err(parts.iter().map(|p| p.norm_sq()).sum::<f64>(), d.norm_sq());
    (violation, dot_rel.max(norm_rel))
}

// ---------------------------------------------------------------------------
// 8. Expanded index vs direct max-of-segments
// ---------------------------------------------------------------------------

/// Compare the expanded-index route against ranking by the direct
/// max-of-segments score on random corpora with a planted duplicate
/// document; agreement must be exact (ordinals and scores, ties included).
/// Returns the number of mismatching rankings.
pub fn expanded_equivalence_fuzz(n_corpora: u32, queries_per: u32, seed: u64) -> u64 {
    (0..n_corpora)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
            let v = rng.gen_range(32..128u32);
            let n = rng.gen_range(3..30usize);
            let kind = if rng.gen_bool(0.5) {
                ProjectionKind::Rademacher
            } else {
                ProjectionKind::Gaussian
            };
            let k = rng.gen_range(8..64u32);
            let spec = ProjectionSpec::new(kind, k, v, rng.gen()).expect("valid dims");
            let scheme = if rng.gen_bool(0.5) { SegScheme::Contiguous } else { SegScheme::Hashed };
            let m = rng.gen_range(1..=5u32);
            let seg = Segmentation::new(m, scheme, v, rng.gen()).expect("valid dims");
            let rand_vec = |rng: &mut ChaCha8Rng, max_nnz: u32| {
                SparseVector::from_pairs(
                    (0..rng.gen_range(1..=max_nnz))
                        .map(|_| (rng.gen_range(0..v), rng.gen_range(0.5..2.0)))
                        .collect::<Vec<_>>(),
                )
            };
            let mut svecs: Vec<SparseVector> = (0..n).map(|_| rand_vec(&mut rng, 8)).collect();
            let dup = rng.gen_range(0..svecs.len());
            svecs.push(svecs[dup].clone());
            let docs: Vec<MultiVecDoc> = svecs
                .iter()
                .enumerate()
                .map(|(i, d)| MultiVecDoc::from_sparse(format!("d{i}"), d, &seg, &spec))
                .collect();
            let mut mismatches = 0u64;
            for _ in 0..queries_per {
                let qvec = spec.project(&rand_vec(&mut rng, 6));
                let k_top = rng.gen_range(1..=docs.len());
                let routed = expanded_index_topk(&qvec, &docs, k_top);
                let scores: Vec<f64> = docs.iter().map(|d| multivec_score(&qvec, d)).collect();
                if routed != rank_scores(&scores, k_top) {
                    mismatches += 1;
                }
            }
            mismatches
        })
        .sum()
}

// ---------------------------------------------------------------------------
// 9. Attention patterns: exact equality and projected flips
// ---------------------------------------------------------------------------

/// Tally of the exact-attention fuzz.
#[derive(Debug, Clone, Copy)]
pub struct AttentionFuzz {
    pub comparisons: u64,
    pub mismatches: u64,
}

/// Exact-embedding attention vs the boolean presence dot on repeat-free
/// queries: the two must agree as integers on every random pair.
pub fn attention_exact_fuzz(n: u32, seed: u64) -> AttentionFuzz {
    let mismatches = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let v = rng.gen_range(16..=64u32);
            let mut pool: Vec<u32> = (0..v).collect();
            pool.shuffle(&mut rng);
            let x: Vec<u32> = pool[..rng.gen_range(1..=8)].to_vec();
            let y: Vec<u32> = (0..rng.gen_range(1..=20)).map(|_| rng.gen_range(0..v)).collect();
            let expected = vectorize_boolean(&Document::new("x", x.clone()))
                .dot(&vectorize_boolean(&Document::new("y", y.clone())));
            (indicator_score(&x, &y) != expected) as u64
        })
        .sum();
    AttentionFuzz { comparisons: n as u64, mismatches }
}

/// Tally of activation flips at the attention sufficient dimension.
#[derive(Debug, Clone, Copy)]
pub struct FlipTrials {
    pub k: u32,
    pub trials: u32,
    pub flips: u64,
}

/// Count activation flips of sign-projected indicator embeddings at the
/// attention sufficient dimension, over random query/document token pairs
/// with planted matches.
pub fn attention_flip_trials(
    t_x: u32,
    v: u32,
    beta: f64,
    trials: u32,
    seed: u64,
) -> Result<FlipTrials> {
    let k = attention_sufficient_k(t_x, v, beta)?;
    let flips = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut x: Vec<u32> = Vec::with_capacity(t_x as usize);
            while (x.len() as u32) < t_x {
                let c = rng.gen_range(0..v);
                if !x.contains(&c) {
                    x.push(c);
                }
            }
            let y: Vec<u32> = (0..16)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        x[rng.gen_range(0..x.len())]
                    } else {
                        rng.gen_range(0..v)
                    }
                })
                .collect();
            let spec =
                ProjectionSpec::new(ProjectionKind::Rademacher, k, v, rng.gen()).expect("valid");
            projected_flips(&x, &y, &spec)
        })
        .sum();
    Ok(FlipTrials { k, trials, flips })
}

// ---------------------------------------------------------------------------
// 10. Postings route vs weighted-vector dot products
// ---------------------------------------------------------------------------

/// Tally of the dual-route scoring fuzz.
#[derive(Debug, Clone, Copy)]
pub struct DualRoute {
    pub pairs: u64,
    pub max_abs_diff: f64,
    pub topk_mismatches: u64,
}

/// Postings-route scores vs explicit weighted-vector dot products, and
/// index top-k vs a from-scratch full-sort oracle, over random corpora.
pub fn dual_route_fuzz(n_corpora: u32, scheme: Scheme, seed: u64) -> Result<DualRoute> {
    let per: Vec<(u64, f64, u64)> = (0..n_corpora)
        .into_par_iter()
        .map(|c| -> Result<(u64, f64, u64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
            let v = rng.gen_range(50..200u32);
            let n = rng.gen_range(12..=24u32);
            let docs: Vec<Document> = (0..n)
                .map(|i| {
                    let tokens: Vec<u32> =
                        (0..rng.gen_range(6..40)).map(|_| rng.gen_range(0..v)).collect();
                    Document::new(format!("d{i}"), tokens)
                })
                .collect();
            let index = InvertedIndex::build(
                &docs,
                Vocabulary::synthetic(v),
                scheme,
                Bm25Params::default(),
                TokenMode::Unigram,
            )?;
            let params = index.params();
            let dvecs: Vec<SparseVector> = docs
                .iter()
                .map(|d| doc_vector(index.vocab(), d, scheme, &params))
                .collect::<Result<_>>()?;
            let (mut pairs, mut max_diff, mut mismatches) = (0u64, 0.0f64, 0u64);
            for _ in 0..16 {
                let tokens: Vec<u32> =
                    (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..v)).collect();
                let q = query_vector(index.vocab(), &Document::new("q", tokens), scheme)?;
                for (i, dv) in dvecs.iter().enumerate() {
                    max_diff = max_diff.max((index.score_doc(&q, i as u32) - q.dot(dv)).abs());
                    pairs += 1;
                }
                let k_top = rng.gen_range(1..=docs.len());
                // From-scratch oracle: explicit dots, full sort by
                // descending score with ordinal tie-break, truncate.
                let mut all: Vec<(u32, f64)> =
                    dvecs.iter().enumerate().map(|(i, dv)| (i as u32, q.dot(dv))).collect();
                all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                all.truncate(k_top);
                if index.topk(&q, k_top) != all {
                    mismatches += 1;
                }
            }
            Ok((pairs, max_diff, mismatches))
        })
        .collect::<Result<_>>()?;
    let mut out = DualRoute { pairs: 0, max_abs_diff: 0.0, topk_mismatches: 0 };
    for (p, d, m) in per {
        out.pairs += p;
        out.max_abs_diff = out.max_abs_diff.max(d);
        out.topk_mismatches += m;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// 11. Thread-count invariance of rendered artifacts
// ---------------------------------------------------------------------------

/// The three lab CSV artifacts from a small end-to-end pipeline (harvest,
/// min-k sweep, margin quantiles, retention min-k), rendered inside an
/// isolated thread pool of the given size.
pub fn pipeline_csvs_with_threads(threads: usize, seed: u64) -> Result<[String; 3]> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    pool.install(|| pipeline_csvs(seed))
}

fn pipeline_csvs(seed: u64) -> Result<[String; 3]> {
    let cfg = LabCorpusConfig {
        n_docs: 600,
        n_queries: 60,
        vocab_size: 8_000,
        seed,
        ..LabCorpusConfig::default()
    };
    let corpus = synthesize_lab_corpus(&cfg)?;
    let harvest = harvest_triples(&corpus.queries, &corpus.docs)?;
    let grid = KGrid::geometric(32, 512, 8)?;
    let mcfg = MinKConfig {
        grid: grid.clone(),
        bins: 4,
        sample_per_bin: 6,
        trials_per_triple: 20,
        base_seed: seed,
        ..MinKConfig::default()
    };
    let rows = min_k_per_bin(&harvest.triples, &corpus.queries, &corpus.docs, corpus.v, &mcfg)?;
    let mrows =
        margin_quantiles_by_length(cfg.doc_len, &corpus.queries, &corpus.docs, &[1, 10, 100])?;
    let rcfg = RecallMinKConfig {
        grid: grid.clone(),
        r0: 5,
        trials: 4,
        max_queries: 20,
        base_seed: seed,
        ..RecallMinKConfig::default()
    };
    let rrows = min_k_for_recall(cfg.doc_len, &corpus.queries, &corpus.docs, corpus.v, &rcfg)?;
    Ok([min_k_csv(&rows, &grid), margins_csv(&mrows), recall_csv(&rrows, &grid)])
}

// ---------------------------------------------------------------------------
// The bundled suite
// ---------------------------------------------------------------------------

/// Run every verification experiment at a bundled scale: `trials` sets the
/// Monte-Carlo effort of the concentration checks and `quick` shrinks the
/// corpus-driven experiments to smoke-test size. Returns one [`Check`] per
/// claim, in a stable order.
pub fn run_all(seed: u64, trials: u32, quick: bool) -> Result<Vec<Check>> {
    let trials = trials.max(1);
    let mut checks = Vec::with_capacity(11);

    {
        let margins = margin_ladder(if quick { 8 } else { 20 });
        let grid = KGrid::geometric(8, 2048, if quick { 10 } else { 20 })?;
        let cells =
            pairwise_grid_cells(ProjectionKind::Rademacher, 10_000, &margins, &grid, trials, seed)?;
        let worst = pairwise_worst_excess(&cells);
        checks.push(Check {
            name: "pairwise-grid",
            pass: worst <= 1e-12,
            detail: format!("{} cells, worst rate-envelope excess {worst:.3e}", cells.len()),
        });
    }

    {
        let beta = 0.05;
        let n = if quick { 12 } else { 50 };
        let points = calibration_points(ProjectionKind::Rademacher, 10_000, n, beta, trials, seed)?;
        let worst = calibration_worst_excess(&points, beta);
        let coeff = 2.0 * (4.0f64 / beta).ln();
        let coeff_ok = (coeff - 8.7641).abs() <= 1e-3;
        checks.push(Check {
            name: "sufficient-k-calibration",
            pass: worst <= 1e-12 && coeff_ok,
            detail: format!(
                "{} margins at their sufficient k, worst rate-envelope excess {worst:.3e}, \
                 dimension coefficient {coeff:.4}",
                points.len()
            ),
        });
    }

    {
        let (l_q, l_d, beta) = (8, 32, 0.05);
        let n_triples = if quick { 8 } else { 16 };
        let t = if quick { trials.min(200) } else { trials };
        let cert = boolean_certificate(l_q, l_d, beta, n_triples, t, seed)?;
        let floor_ok = cert.min_margin >= cert.eps - 1e-12 && cert.min_margin <= 2.0 * cert.eps;
        let rate_ok = cert.worst_rate() <= envelope(beta, t as u64) + 1e-12;
        checks.push(Check {
            name: "boolean-certificate",
            pass: floor_ok && rate_ok,
            detail: format!(
                "margin floor {:.6} reached (min {:.6}) at k={}, worst swap rate {:.4}",
                cert.eps,
                cert.min_margin,
                cert.k,
                cert.worst_rate()
            ),
        });
    }

    {
        let combos: &[(u32, u32)] =
            if quick { &[(100, 1), (100, 10)] } else { &DEFAULT_RECALL_COMBOS };
        let cells = recall_bound_cells(
            ProjectionKind::Rademacher,
            combos,
            &DEFAULT_BOUND_TARGETS,
            trials,
            seed,
        )?;
        let worst = recall_worst_excess(&cells);
        checks.push(Check {
            name: "recall-bound",
            pass: worst <= 1e-12,
            detail: format!("{} cells, worst failure-envelope excess {worst:.3e}", cells.len()),
        });
    }

    {
        let cfg = if quick {
            LabCorpusConfig {
                n_docs: 1200,
                n_queries: 120,
                vocab_size: 12_000,
                seed,
                ..LabCorpusConfig::default()
            }
        } else {
            LabCorpusConfig { seed, ..LabCorpusConfig::default() }
        };
        let corpus = synthesize_lab_corpus(&cfg)?;
        let mcfg = if quick {
            MinKConfig {
                bins: 6,
                sample_per_bin: 16,
                trials_per_triple: 60,
                base_seed: seed,
                ..MinKConfig::default()
            }
        } else {
            MinKConfig { base_seed: seed, ..MinKConfig::default() }
        };
        let shape = min_k_shape(&corpus, &mcfg)?;
        let sound = min_k_shape_sound(&shape, &mcfg.grid);
        checks.push(Check {
            name: "min-k-shape",
            pass: sound && shape.r2 >= 0.8 && shape.reached >= 2,
            detail: format!(
                "{}/{} bins resolved, worst min-k at {:.2} of the analytic line, linear fit \
                 R^2 {:.3}",
                shape.reached,
                shape.rows.len(),
                shape.max_ratio,
                shape.r2
            ),
        });
    }

    {
        let (base, lengths, ranks, rcfg) = if quick {
            (
                LabCorpusConfig {
                    n_docs: 800,
                    n_queries: 100,
                    vocab_size: 12_000,
                    seed,
                    ..LabCorpusConfig::default()
                },
                vec![50u32, 100, 200],
                vec![10u32, 50],
                RecallMinKConfig {
                    targets: vec![0.8, 0.9],
                    trials: 5,
                    max_queries: 25,
                    base_seed: seed,
                    ..RecallMinKConfig::default()
                },
            )
        } else {
            (
                LabCorpusConfig {
                    n_docs: 2000,
                    n_queries: 300,
                    vocab_size: 30_000,
                    seed,
                    ..LabCorpusConfig::default()
                },
                DEFAULT_LENGTH_BINS.to_vec(),
                vec![10u32, 100, 1000],
                RecallMinKConfig {
                    trials: 10,
                    max_queries: 60,
                    base_seed: seed,
                    ..RecallMinKConfig::default()
                },
            )
        };
        let trends = length_trends(&base, &lengths, &ranks, &rcfg)?;
        let margin_inv = ranks.iter().map(|&r| margin_inversions(&trends.margins, r)).max();
        let recall_inv = rcfg
            .targets
            .iter()
            .map(|&t| recall_min_k_inversions(&trends.recalls, t, &rcfg.grid))
            .max();
        let (mi, ri) = (margin_inv.unwrap_or(0), recall_inv.unwrap_or(0));
        checks.push(Check {
            name: "length-trends",
            pass: mi <= 1 && ri <= 1,
            detail: format!(
                "{} lengths: worst margin inversions {mi}, worst min-k inversions {ri}",
                lengths.len()
            ),
        });
    }

    {
        let n = if quick { 20_000 } else { 100_000 };
        let fuzz = witness_fuzz(n, seed);
        checks.push(Check {
            name: "witness-margin",
            pass: fuzz.violations == 0 && fuzz.decomp_max_rel <= 1e-9,
            detail: format!(
                "{} instances, {} violations, decomposition max rel err {:.2e}",
                fuzz.instances, fuzz.violations, fuzz.decomp_max_rel
            ),
        });
    }

    {
        let mismatches = expanded_equivalence_fuzz(200, 3, seed);
        checks.push(Check {
            name: "expanded-index",
            pass: mismatches == 0,
            detail: format!("200 corpora x 3 queries, {mismatches} ranking mismatches"),
        });
    }

    {
        let exact = attention_exact_fuzz(10_000, seed);
        let flips = attention_flip_trials(
            4,
            10_000,
            1.0,
            if quick { trials.min(200) } else { trials },
            seed,
        )?;
        checks.push(Check {
            name: "attention-patterns",
            pass: exact.mismatches == 0 && flips.flips == 0,
            detail: format!(
                "{} exact comparisons ({} mismatches), {} flips at k={} over {} trials",
                exact.comparisons, exact.mismatches, flips.flips, flips.k, flips.trials
            ),
        });
    }

    {
        let route = dual_route_fuzz(40, Scheme::Bm25, seed)?;
        checks.push(Check {
            name: "dual-route-scoring",
            pass: route.max_abs_diff <= 1e-9 && route.topk_mismatches == 0,
            detail: format!(
                "{} scored pairs, max |postings - dot| {:.2e}, {} top-k mismatches",
                route.pairs, route.max_abs_diff, route.topk_mismatches
            ),
        });
    }

    {
        let one = pipeline_csvs_with_threads(1, seed)?;
        let many = pipeline_csvs_with_threads(8, seed)?;
        let equal = one == many;
        checks.push(Check {
            name: "thread-determinism",
            pass: equal,
            detail: if equal {
                "pipeline artifacts byte-identical across 1 and 8 threads".into()
            } else {
                "pipeline artifacts differ between 1 and 8 threads".into()
            },
        });
    }

    Ok(checks)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
