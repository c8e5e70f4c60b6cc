//! Experiment subcommands: triple harvesting and the dimension/margin
//! sweeps over synthesized corpora.

use std::path::{Path, PathBuf};

use anyhow::bail;
use clap::Args;
use serde::Serialize;
use serde_json::json;

use marginlab::lab::report::{margins_csv, min_k_csv, recall_csv, triples_csv, RunMeta};
use marginlab::lab::{
    harvest_triples, margin_quantiles_by_length, min_k_for_recall, min_k_per_bin,
    synthesize_lab_corpus, LabCorpusConfig, MinKConfig, RecallMinKConfig, DEFAULT_LENGTH_BINS,
    DEFAULT_RANKS, DEFAULT_RECALL_TARGETS,
};
use marginlab::sparse::Bm25Params;

use crate::artifacts::{emit, file_digest, Collection};
use crate::resolve::{resolve_grid, usage, FileCfg, KindArg, SchemeArg};

#[derive(Args)]
pub struct TriplesArgs {
    /// Collection artifact from `ingest` (must contain queries).
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Weighting scheme queries and documents are scored under.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// BM25 term-frequency saturation.
    #[arg(long)]
    k1: Option<f64>,
    /// BM25 length normalization.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Serialize)]
struct TriplesCfg {
    collection: PathBuf,
    scheme: SchemeArg,
    k1: f64,
    b: f64,
}

pub fn triples(a: TriplesArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let defaults = Bm25Params::default();
    let cfg = TriplesCfg {
        collection: file.required(a.collection, "collection")?,
        scheme: file.field(a.scheme, "scheme", SchemeArg::Bm25)?,
        k1: file.field(a.k1, "k1", defaults.k1)?,
        b: file.field(a.b, "b", defaults.b)?,
    };
    let col = Collection::load(&cfg.collection)?;
    if col.queries.is_empty() {
        bail!("{}: collection has no queries to harvest from", cfg.collection.display());
    }
    let params = Bm25Params { k1: cfg.k1, b: cfg.b };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let qvecs = col.query_vectors(cfg.scheme.into())?;
    let dvecs = col.doc_vectors(cfg.scheme.into(), &params)?;
    let harvest = harvest_triples(&qvecs, &dvecs)?;
    let csv = triples_csv(&harvest.triples, &col.query_ids(), &col.doc_ids());

    let meta = RunMeta::new("triples", serde_json::to_value(&cfg)?)
        .with_corpus_hash(&file_digest(&cfg.collection)?)
        .with_extra("n_triples", json!(harvest.triples.len()))
        .with_extra("skipped_queries", json!(harvest.skipped_queries));
    emit(out, "triples", "csv", csv.as_bytes(), &meta)?;
    Ok(())
}

/// Synthetic-corpus knobs shared by the sweep subcommands; defaults follow
/// the standard lab corpus (5000 documents, 500 queries, vocabulary 30000).
#[derive(Args)]
pub struct CorpusArgs {
    /// Documents in each synthesized corpus (distractors included).
    #[arg(long)]
    docs_n: Option<u32>,
    /// Queries sampled from gold passages.
    #[arg(long)]
    queries_n: Option<u32>,
    /// Synthetic vocabulary size.
    #[arg(long)]
    vocab_size: Option<u32>,
    /// Zipf exponent of the token distribution (0 = uniform).
    #[arg(long)]
    zipf: Option<f64>,
    /// Weighting scheme queries and documents are scored under.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// BM25 term-frequency saturation.
    #[arg(long)]
    k1: Option<f64>,
    /// BM25 length normalization.
    #[arg(long)]
    b: Option<f64>,
    /// Minimum query length in tokens.
    #[arg(long)]
    query_min: Option<u32>,
    /// Maximum query length in tokens.
    #[arg(long)]
    query_max: Option<u32>,
    /// Near-duplicate distractors per gold passage.
    #[arg(long)]
    distractors: Option<u32>,
    /// Token edits per distractor (1 or 2).
    #[arg(long)]
    edit_count: Option<u32>,
}

#[derive(Serialize, Clone)]
struct CorpusCfg {
    docs_n: u32,
    queries_n: u32,
    vocab_size: u32,
    zipf: f64,
    scheme: SchemeArg,
    k1: f64,
    b: f64,
    query_min: u32,
    query_max: u32,
    distractors: u32,
    edit_count: u32,
}

fn corpus_cfg(a: CorpusArgs, file: &FileCfg) -> anyhow::Result<CorpusCfg> {
    let d = LabCorpusConfig::default();
    Ok(CorpusCfg {
        docs_n: file.field(a.docs_n, "docs_n", d.n_docs)?,
        queries_n: file.field(a.queries_n, "queries_n", d.n_queries)?,
        vocab_size: file.field(a.vocab_size, "vocab_size", d.vocab_size)?,
        zipf: file.field(a.zipf, "zipf", d.zipf_exponent)?,
        scheme: file.field(a.scheme, "scheme", SchemeArg::Bm25)?,
        k1: file.field(a.k1, "k1", d.params.k1)?,
        b: file.field(a.b, "b", d.params.b)?,
        query_min: file.field(a.query_min, "query_min", d.query_len.0)?,
        query_max: file.field(a.query_max, "query_max", d.query_len.1)?,
        distractors: file.field(a.distractors, "distractors", d.distractors_per_gold)?,
        edit_count: file.field(a.edit_count, "edit_count", d.edit_count)?,
    })
}

fn lab_config(c: &CorpusCfg, doc_len: u32, seed: u64) -> LabCorpusConfig {
    LabCorpusConfig {
        n_docs: c.docs_n,
        n_queries: c.queries_n,
        doc_len,
        vocab_size: c.vocab_size,
        zipf_exponent: c.zipf,
        scheme: c.scheme.into(),
        params: Bm25Params { k1: c.k1, b: c.b },
        query_len: (c.query_min, c.query_max),
        distractors_per_gold: c.distractors,
        edit_count: c.edit_count,
        seed,
    }
}

#[derive(Args)]
pub struct MinKArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Document length in tokens.
    #[arg(long)]
    doc_len: Option<u32>,
    /// Projection family swept.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Geometric dimension grid LO,HI,POINTS.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid_default")]
    grid: Option<Vec<u32>>,
    /// Use the built-in 40-point sweep (32..9472); this is also the default.
    #[arg(long)]
    grid_default: bool,
    /// Equal-count margin bins.
    #[arg(long)]
    bins: Option<u32>,
    /// Triples Monte-Carloed per bin.
    #[arg(long)]
    sample_per_bin: Option<u32>,
    /// Trials per sampled triple at each grid dimension.
    #[arg(long)]
    trials: Option<u32>,
    /// Pooled accuracy a bin must reach to resolve.
    #[arg(long)]
    accuracy: Option<f64>,
    /// Root seed for corpus synthesis and the Monte-Carlo.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct MinKCfg {
    #[serde(flatten)]
    corpus: CorpusCfg,
    doc_len: u32,
    kind: KindArg,
    grid: Vec<u32>,
    bins: u32,
    sample_per_bin: u32,
    trials: u32,
    accuracy: f64,
    seed: u64,
}

pub fn min_k(a: MinKArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let d = MinKConfig::default();
    let grid = resolve_grid(a.grid, a.grid_default, file)?;
    let cfg = MinKCfg {
        corpus: corpus_cfg(a.corpus, file)?,
        doc_len: file.field(a.doc_len, "doc_len", LabCorpusConfig::default().doc_len)?,
        kind: file.field(a.kind, "kind", KindArg::Rademacher)?,
        grid: grid.ks().to_vec(),
        bins: file.field(a.bins, "bins", d.bins)?,
        sample_per_bin: file.field(a.sample_per_bin, "sample_per_bin", d.sample_per_bin)?,
        trials: file.field(a.trials, "trials", d.trials_per_triple)?,
        accuracy: file.field(a.accuracy, "accuracy", d.target_accuracy)?,
        seed: file.required(a.seed, "seed")?,
    };
    let corpus = synthesize_lab_corpus(&lab_config(&cfg.corpus, cfg.doc_len, cfg.seed))?;
    let harvest = harvest_triples(&corpus.queries, &corpus.docs)?;
    let mcfg = MinKConfig {
        kind: cfg.kind.into(),
        grid: grid.clone(),
        bins: cfg.bins,
        sample_per_bin: cfg.sample_per_bin,
        trials_per_triple: cfg.trials,
        target_accuracy: cfg.accuracy,
        base_seed: cfg.seed,
    };
    let rows = min_k_per_bin(&harvest.triples, &corpus.queries, &corpus.docs, corpus.v, &mcfg)?;
    let resolved = rows.iter().filter(|r| r.min_k.is_some()).count();

    let meta = RunMeta::new("min-k", serde_json::to_value(&cfg)?)
        .with_grid(&grid)
        .with_corpus_hash(&corpus.corpus_hash)
        .with_extra("n_triples", json!(harvest.triples.len()))
        .with_extra("resolved_bins", json!(resolved));
    emit(out, "min_k", "csv", min_k_csv(&rows, &grid).as_bytes(), &meta)?;
    Ok(())
}

#[derive(Args)]
pub struct MarginsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Document-length bins, one corpus synthesized per value.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<u32>>,
    /// Ranks whose smallest margins are summarized.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<u32>>,
    /// Root seed; each length derives its corpus seed from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct MarginsCfg {
    #[serde(flatten)]
    corpus: CorpusCfg,
    lengths: Vec<u32>,
    ranks: Vec<u32>,
    seed: u64,
}

pub fn margins_by_length(a: MarginsArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let cfg = MarginsCfg {
        corpus: corpus_cfg(a.corpus, file)?,
        lengths: file.field(a.lengths, "lengths", DEFAULT_LENGTH_BINS.to_vec())?,
        ranks: file.field(a.ranks, "ranks", DEFAULT_RANKS.to_vec())?,
        seed: file.required(a.seed, "seed")?,
    };
    if cfg.lengths.is_empty() {
        return Err(usage("--lengths needs at least one value"));
    }
    let mut rows = Vec::new();
    for &len in &cfg.lengths {
        let corpus = synthesize_lab_corpus(&lab_config(
            &cfg.corpus,
            len,
            cfg.seed.wrapping_add(len as u64),
        ))?;
        rows.extend(margin_quantiles_by_length(len, &corpus.queries, &corpus.docs, &cfg.ranks)?);
    }

    let meta = RunMeta::new("margins-by-length", serde_json::to_value(&cfg)?)
        .with_extra("rows", json!(rows.len()));
    emit(out, "margins", "csv", margins_csv(&rows).as_bytes(), &meta)?;
    Ok(())
}

#[derive(Args)]
pub struct RecallArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Document-length bins, one corpus synthesized per value.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<u32>>,
    /// Retention depth: the argmax must survive in the projected top r0.
    #[arg(long)]
    r0: Option<u32>,
    /// Retention-rate targets.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    /// Projection family swept.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Geometric dimension grid LO,HI,POINTS.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid_default")]
    grid: Option<Vec<u32>>,
    /// Use the built-in 40-point sweep (32..9472); this is also the default.
    #[arg(long)]
    grid_default: bool,
    /// Monte-Carlo trials per query.
    #[arg(long)]
    trials: Option<u32>,
    /// Cap on the queries Monte-Carloed per length.
    #[arg(long)]
    max_queries: Option<u32>,
    /// Root seed; each length derives its corpus seed from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct RecallCfg {
    #[serde(flatten)]
    corpus: CorpusCfg,
    lengths: Vec<u32>,
    r0: u32,
    targets: Vec<f64>,
    kind: KindArg,
    grid: Vec<u32>,
    trials: u32,
    max_queries: u32,
    seed: u64,
}

pub fn recall_min_k(a: RecallArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let d = RecallMinKConfig::default();
    let grid = resolve_grid(a.grid, a.grid_default, file)?;
    let cfg = RecallCfg {
        corpus: corpus_cfg(a.corpus, file)?,
        lengths: file.field(a.lengths, "lengths", DEFAULT_LENGTH_BINS.to_vec())?,
        r0: file.field(a.r0, "r0", d.r0)?,
        targets: file.field(a.targets, "targets", DEFAULT_RECALL_TARGETS.to_vec())?,
        kind: file.field(a.kind, "kind", KindArg::Rademacher)?,
        grid: grid.ks().to_vec(),
        trials: file.field(a.trials, "trials", d.trials)?,
        max_queries: file.field(a.max_queries, "max_queries", d.max_queries)?,
        seed: file.required(a.seed, "seed")?,
    };
    if cfg.lengths.is_empty() {
        return Err(usage("--lengths needs at least one value"));
    }
    let rcfg = RecallMinKConfig {
        kind: cfg.kind.into(),
        grid: grid.clone(),
        r0: cfg.r0,
        targets: cfg.targets.clone(),
        trials: cfg.trials,
        max_queries: cfg.max_queries,
        base_seed: cfg.seed,
    };
    let mut rows = Vec::new();
    for &len in &cfg.lengths {
        let corpus = synthesize_lab_corpus(&lab_config(
            &cfg.corpus,
            len,
            cfg.seed.wrapping_add(len as u64),
        ))?;
        rows.extend(min_k_for_recall(len, &corpus.queries, &corpus.docs, corpus.v, &rcfg)?);
    }

    let meta = RunMeta::new("recall-min-k", serde_json::to_value(&cfg)?)
        .with_grid(&grid)
        .with_extra("rows", json!(rows.len()));
    emit(out, "recall", "csv", recall_csv(&rows, &grid).as_bytes(), &meta)?;
    Ok(())
}
