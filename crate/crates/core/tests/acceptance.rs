//! Acceptance suite: one test per release criterion, each printing a
//! single `ACCEPTANCE NN <name>: PASS/FAIL` line (visible with
//! `--nocapture`, or automatically on failure) before asserting.
//!
//! Every experiment is seeded, so outcomes are reproducible bit-for-bit;
//! tolerances are pinned constants, not knobs.

use std::time::Instant;

use rayon::prelude::*;

use marginlab::attention::attention_sufficient_k;
use marginlab::bounds::{boolean_min_margin, concentration_rate, sufficient_k_pairwise};
use marginlab::engine::{dense_topk, DenseIndex};
use marginlab::lab::report::rankings_tsv;
use marginlab::lab::verify::{
    attention_exact_fuzz, attention_flip_trials, boolean_certificate, calibration_points,
    calibration_worst_excess, dual_route_fuzz, envelope, expanded_equivalence_fuzz, length_trends,
    margin_inversions, margin_ladder, min_k_shape, min_k_shape_sound, pairwise_grid_cells,
    pairwise_worst_excess, pipeline_csvs_with_threads, recall_bound_cells, recall_min_k_inversions,
    recall_worst_excess, witness_fuzz, DEFAULT_BOUND_TARGETS, DEFAULT_RECALL_COMBOS,
};
use marginlab::lab::{
    synthesize_lab_corpus, KGrid, LabCorpusConfig, MinKConfig, RecallMinKConfig,
    DEFAULT_LENGTH_BINS,
};
use marginlab::projection::{ProjectionKind, ProjectionSpec};
use marginlab::sparse::Scheme;

fn report(num: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("ACCEPTANCE {num:02} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Pairwise swap rates on a 20x20 (margin, dimension) grid with 1000
/// trials per cell stay under the analytic envelope, in under five minutes
/// on a single thread.
#[test]
fn criterion_01_pairwise_error_grid() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let cells = pool
        .install(|| {
            let margins = margin_ladder(20);
            let grid = KGrid::geometric(8, 2048, 20)?;
            pairwise_grid_cells(ProjectionKind::Rademacher, 10_000, &margins, &grid, 1000, 101)
        })
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = pairwise_worst_excess(&cells);
    let pass = cells.len() == 400 && worst <= 1e-12 && elapsed < 300.0;
    let detail = format!(
        "{} cells, worst rate-envelope excess {worst:.3e}, {elapsed:.1}s single-threaded",
        cells.len()
    );
    assert!(report(1, "pairwise-error-grid", pass, &detail));
}

/// Fifty random margins run at their own sufficient dimension keep the
/// swap rate at or below the 0.05 target, and the dimension formula's
/// coefficient is 2 ln 80 = 8.7641 within 1e-3.
#[test]
fn criterion_02_sufficient_dimension_calibration() {
    let beta = 0.05;
    let trials = 1000;
    let points =
        calibration_points(ProjectionKind::Rademacher, 10_000, 50, beta, trials, 202).unwrap();
    let worst = calibration_worst_excess(&points, beta);
    let coeff = 2.0 * (80.0f64).ln();
    let coeff_err = (coeff - 8.7641).abs();
    // The formula must actually use that coefficient: k = ceil(coeff / g).
    let formula_ok = points.iter().all(|p| {
        let g = concentration_rate(p.margin).unwrap();
        p.k == (coeff / g).ceil() as u32 && p.k == sufficient_k_pairwise(p.margin, beta).unwrap()
    });
    let pass = points.len() == 50 && worst <= 1e-12 && coeff_err <= 1e-3 && formula_ok;
    let detail = format!(
        "50 margins, worst rate-envelope excess {worst:.3e}, coefficient {coeff:.4} \
         (err {coeff_err:.1e})"
    );
    assert!(report(2, "sufficient-dimension-calibration", pass, &detail));
}

/// On a boolean corpus capped at 8 query / 32 document terms, the margin
/// floor (2*8*32)^(-1/2) = 0.0441942 is reached exactly, and at the boolean
/// sufficient dimension no sampled triple's swap rate over 1000 trials
/// exceeds 0.05 plus Monte-Carlo noise.
#[test]
fn criterion_03_boolean_corpus_certificate() {
    let (beta, trials) = (0.05, 1000);
    let cert = boolean_certificate(8, 32, beta, 16, trials, 303).unwrap();
    let eps_err = (cert.eps - 0.044_194_2).abs();
    let floor_ok = cert.min_margin >= cert.eps - 1e-12 && cert.min_margin <= cert.eps + 1e-12;
    let worst = cert.worst_rate();
    let pass = eps_err <= 1e-6
        && cert.eps == boolean_min_margin(8, 32).unwrap()
        && floor_ok
        && cert.cells.len() == 16
        && worst <= envelope(beta, trials as u64) + 1e-12;
    let detail = format!(
        "floor {:.7} (err {eps_err:.1e}) reached at min margin {:.7}, k={}, worst swap rate \
         {worst:.4} over {trials} trials",
        cert.eps, cert.min_margin, cert.k
    );
    assert!(report(3, "boolean-corpus-certificate", pass, &detail));
}

/// The argmax drops out of the projected top r0 no more often than the
/// analytic retention bound allows, across collection sizes {100, 1000} and
/// depths {1, 10} with 1000 trials per dimension.
#[test]
fn criterion_04_recall_retention_bound() {
    let cells = recall_bound_cells(
        ProjectionKind::Rademacher,
        &DEFAULT_RECALL_COMBOS,
        &DEFAULT_BOUND_TARGETS,
        1000,
        404,
    )
    .unwrap();
    let worst = recall_worst_excess(&cells);
    let pass = cells.len() == 12 && worst <= 1e-12;
    let detail = format!("{} cells, worst failure-envelope excess {worst:.3e}", cells.len());
    assert!(report(4, "recall-retention-bound", pass, &detail));
}

/// On the 5000-document / 500-query synthetic corpus, per-bin empirical
/// min-k never exceeds the analytic 8.7641/g(margin) line and fits a line
/// against the bin statistic with R^2 >= 0.8.
#[test]
fn criterion_05_min_k_curve_shape() {
    let corpus =
        synthesize_lab_corpus(&LabCorpusConfig { seed: 505, ..LabCorpusConfig::default() })
            .unwrap();
    let cfg = MinKConfig { base_seed: 505, ..MinKConfig::default() };
    let shape = min_k_shape(&corpus, &cfg).unwrap();
    let sound = min_k_shape_sound(&shape, &cfg.grid);
    let pass = sound && shape.r2 >= 0.8 && shape.reached >= 2;
    let detail = format!(
        "{}/{} bins resolved, worst min-k at {:.2} of the 8.7641/g line, R^2 {:.3}",
        shape.reached,
        shape.rows.len(),
        shape.max_ratio,
        shape.r2
    );
    assert!(report(5, "min-k-curve-shape", pass, &detail));
}

/// Across document-length bins {50, 100, 200, 400}: median margins
/// non-increasing and retention min-k non-decreasing, with at most one
/// inversion tolerated at one standard error (margins) or one grid step
/// (min-k) per series.
#[test]
fn criterion_06_length_trends() {
    let base = LabCorpusConfig {
        n_docs: 2000,
        n_queries: 300,
        vocab_size: 30_000,
        seed: 606,
        ..LabCorpusConfig::default()
    };
    let ranks = [10u32, 100, 1000];
    let rcfg = RecallMinKConfig {
        trials: 10,
        max_queries: 60,
        base_seed: 606,
        ..RecallMinKConfig::default()
    };
    let trends = length_trends(&base, &DEFAULT_LENGTH_BINS, &ranks, &rcfg).unwrap();
    let worst_margin = ranks.iter().map(|&r| margin_inversions(&trends.margins, r)).max().unwrap();
    let worst_recall = rcfg
        .targets
        .iter()
        .map(|&t| recall_min_k_inversions(&trends.recalls, t, &rcfg.grid))
        .max()
        .unwrap();
    let pass = worst_margin <= 1 && worst_recall <= 1;
    let detail = format!(
        "4 lengths: margin inversions <= {worst_margin} per rank, min-k inversions <= \
         {worst_recall} per target"
    );
    assert!(report(6, "length-trends", pass, &detail));
}

/// Over 100000 random non-negative instances with partition segmentation,
/// the witness segment's margin always dominates the full margin within
/// 1e-9, and the segment decomposition identities hold to 1e-9 relative.
#[test]
fn criterion_07_witness_margin_domination() {
    let fuzz = witness_fuzz(100_000, 707);
    let pass = fuzz.instances == 100_000 && fuzz.violations == 0 && fuzz.decomp_max_rel <= 1e-9;
    let detail = format!(
        "{} instances, {} violations, decomposition max rel err {:.2e}",
        fuzz.instances, fuzz.violations, fuzz.decomp_max_rel
    );
    assert!(report(7, "witness-margin-domination", pass, &detail));
}

/// The expanded (document, segment) index returns exactly the same ranking
/// as direct max-of-segments scoring on 200 fuzz corpora, ties included.
#[test]
fn criterion_08_expanded_index_equivalence() {
    let mismatches = expanded_equivalence_fuzz(200, 3, 808);
    let pass = mismatches == 0;
    let detail = format!("200 corpora x 3 queries, {mismatches} ranking mismatches");
    assert!(report(8, "expanded-index-equivalence", pass, &detail));
}

/// Exact hard attention equals the boolean inner product as integers on
/// 10000 repeat-free fuzz pairs, and at the sufficient dimension k=10611
/// (four query tokens, vocabulary 10000) projected activations flip zero
/// token-match decisions over 1000 trials.
#[test]
fn criterion_09_attention_pattern_fidelity() {
    let exact = attention_exact_fuzz(10_000, 909);
    let k0 = attention_sufficient_k(4, 10_000, 1.0).unwrap();
    let flips = attention_flip_trials(4, 10_000, 1.0, 1000, 909).unwrap();
    let pass = exact.mismatches == 0 && k0 == 10_611 && flips.k == k0 && flips.flips == 0;
    let detail = format!(
        "{} exact comparisons ({} mismatches), {} flips at k={} over {} trials",
        exact.comparisons, exact.mismatches, flips.flips, flips.k, flips.trials
    );
    assert!(report(9, "attention-pattern-fidelity", pass, &detail));
}

/// Postings-route scores agree with the explicit weighted-vector inner
/// product within 1e-9 on over 10000 fuzz pairs, and index top-k equals a
/// from-scratch sort-everything oracle.
#[test]
fn criterion_10_scoring_route_equivalence() {
    let route = dual_route_fuzz(40, Scheme::Bm25, 1010).unwrap();
    let pass = route.pairs >= 10_000 && route.max_abs_diff <= 1e-9 && route.topk_mismatches == 0;
    let detail = format!(
        "{} scored pairs, max |postings - dot| {:.2e}, {} top-k mismatches",
        route.pairs, route.max_abs_diff, route.topk_mismatches
    );
    assert!(report(10, "scoring-route-equivalence", pass, &detail));
}

/// Identical seeds and configs produce byte-identical CSV and TSV artifacts
/// under thread pools of 1 and 8 workers.
#[test]
fn criterion_11_thread_count_determinism() {
    let csv_one = pipeline_csvs_with_threads(1, 1111).unwrap();
    let csv_eight = pipeline_csvs_with_threads(8, 1111).unwrap();

    // Rendered rankings from a parallel dense-retrieval pass, same recipe.
    let tsv_for = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let cfg = LabCorpusConfig {
                n_docs: 400,
                n_queries: 40,
                vocab_size: 6_000,
                seed: 1111,
                ..LabCorpusConfig::default()
            };
            let corpus = synthesize_lab_corpus(&cfg).unwrap();
            let spec =
                ProjectionSpec::new(ProjectionKind::Rademacher, 256, corpus.v, 1111).unwrap();
            let pairs: Vec<(String, marginlab::corpus::SparseVector)> =
                corpus.doc_ids.iter().cloned().zip(corpus.docs.iter().cloned()).collect();
            let index = DenseIndex::build(&pairs, None, spec).unwrap();
            let rankings: Vec<(String, Vec<(String, f64)>)> = corpus
                .queries
                .par_iter()
                .zip(&corpus.query_ids)
                .map(|(q, qid)| {
                    let hits = dense_topk(&spec.project(q), &index, 10)
                        .unwrap()
                        .into_iter()
                        .map(|(d, s)| (corpus.doc_ids[d as usize].clone(), s))
                        .collect();
                    (qid.clone(), hits)
                })
                .collect();
            rankings_tsv(&rankings)
        })
    };
    let tsv_one = tsv_for(1);
    let tsv_eight = tsv_for(8);

    let pass = csv_one == csv_eight && tsv_one == tsv_eight;
    let detail = format!(
        "3 CSV artifacts ({} bytes) and 1 TSV artifact ({} bytes) byte-identical across 1 and \
         8 threads: {pass}",
        csv_one.iter().map(String::len).sum::<usize>(),
        tsv_one.len()
    );
    assert!(report(11, "thread-count-determinism", pass, &detail));
}
