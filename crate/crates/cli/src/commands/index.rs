//! Index construction over a collection artifact.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::json;

use marginlab::engine::DenseIndex;
use marginlab::lab::report::RunMeta;
use marginlab::multivec::Segmentation;
use marginlab::projection::ProjectionSpec;
use marginlab::sparse::{Bm25Params, InvertedIndex};

use crate::artifacts::{emit, file_digest, Collection};
use crate::resolve::{usage, FileCfg, KindArg, SchemeArg, SegArg};

#[derive(Args)]
pub struct IndexSparseArgs {
    /// Collection artifact from `ingest`.
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Weighting scheme stored in the postings.
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
struct IndexSparseCfg {
    collection: PathBuf,
    scheme: SchemeArg,
    k1: f64,
    b: f64,
}

pub fn index_sparse(a: IndexSparseArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let defaults = Bm25Params::default();
    let cfg = IndexSparseCfg {
        collection: file.required(a.collection, "collection")?,
        scheme: file.field(a.scheme, "scheme", SchemeArg::Bm25)?,
        k1: file.field(a.k1, "k1", defaults.k1)?,
        b: file.field(a.b, "b", defaults.b)?,
    };
    let col = Collection::load(&cfg.collection)?;
    let params = Bm25Params { k1: cfg.k1, b: cfg.b };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let index = InvertedIndex::build(
        &col.docs,
        col.vocab.clone(),
        cfg.scheme.into(),
        params,
        col.token_mode,
    )?;

    let meta = RunMeta::new("index-sparse", serde_json::to_value(&cfg)?)
        .with_corpus_hash(&file_digest(&cfg.collection)?)
        .with_extra("n_docs", json!(index.n_docs()))
        .with_extra("vocab_size", json!(index.v()))
        .with_extra("avgdl", json!(index.avgdl()));
    emit(out, "sparse", "idx", &index.to_bytes(), &meta)?;
    Ok(())
}

#[derive(Args)]
pub struct IndexDenseArgs {
    /// Collection artifact from `ingest`.
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Weighting scheme of the document vectors fed to the projection.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// BM25 term-frequency saturation.
    #[arg(long)]
    k1: Option<f64>,
    /// BM25 length normalization.
    #[arg(long)]
    b: Option<f64>,
    /// Projection family.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Projected dimension.
    #[arg(long)]
    k: Option<u32>,
    /// Segments per document (> 1 stores one entry per segment).
    #[arg(long)]
    segments: Option<u32>,
    /// Term-to-segment assignment when --segments > 1.
    #[arg(long, value_enum)]
    seg_scheme: Option<SegArg>,
    /// Seed of the projection matrix (and the hashed segmenter).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct IndexDenseCfg {
    collection: PathBuf,
    scheme: SchemeArg,
    k1: f64,
    b: f64,
    kind: KindArg,
    k: u32,
    segments: u32,
    seg_scheme: SegArg,
    seed: u64,
}

pub fn index_dense(a: IndexDenseArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let defaults = Bm25Params::default();
    let cfg = IndexDenseCfg {
        collection: file.required(a.collection, "collection")?,
        scheme: file.field(a.scheme, "scheme", SchemeArg::Bm25)?,
        k1: file.field(a.k1, "k1", defaults.k1)?,
        b: file.field(a.b, "b", defaults.b)?,
        kind: file.field(a.kind, "kind", KindArg::Rademacher)?,
        k: file.field(a.k, "k", 256)?,
        segments: file.field(a.segments, "segments", 1)?,
        seg_scheme: file.field(a.seg_scheme, "seg_scheme", SegArg::Contiguous)?,
        seed: file.required(a.seed, "seed")?,
    };
    let col = Collection::load(&cfg.collection)?;
    let params = Bm25Params { k1: cfg.k1, b: cfg.b };
    params.validate().map_err(|e| usage(e.to_string()))?;

    let pairs: Vec<(String, _)> =
        col.doc_ids().into_iter().zip(col.doc_vectors(cfg.scheme.into(), &params)?).collect();
    let seg = match cfg.segments {
        0 | 1 => None,
        m => Some(
            Segmentation::new(m, cfg.seg_scheme.into(), col.vocab.len(), cfg.seed)
                .map_err(|e| usage(e.to_string()))?,
        ),
    };
    let spec = ProjectionSpec::new(cfg.kind.into(), cfg.k, col.vocab.len(), cfg.seed)
        .map_err(|e| usage(e.to_string()))?;
    let index = DenseIndex::build(&pairs, seg, spec)?;

    let meta = RunMeta::new("index-dense", serde_json::to_value(&cfg)?)
        .with_corpus_hash(&file_digest(&cfg.collection)?)
        .with_extra("n_docs", json!(index.n_docs()))
        .with_extra("entries", json!(index.entry_count()))
        .with_extra("m", json!(index.m()));
    emit(out, "dense", "didx", &index.to_bytes(), &meta)?;
    Ok(())
}
