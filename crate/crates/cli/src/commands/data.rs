//! Corpus acquisition: JSONL ingestion and synthetic corpus generation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::bail;
use clap::Args;
use serde::Serialize;
use serde_json::json;

use marginlab::corpus::{
    doc_to_text, random_documents, read_jsonl, render_jsonl, synthesize_ict, Document, IctSpec,
    JsonlRecord, Vocabulary,
};
use marginlab::lab::report::RunMeta;

use crate::artifacts::{emit, file_digest, Collection};
use crate::resolve::{usage, FileCfg, ModeArg};

#[derive(Args)]
pub struct IngestArgs {
    /// Corpus JSONL: one {"id", "text"} object per line.
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Query JSONL: {"id", "text"} plus optional "gold_id".
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Tokenization applied to every text field.
    #[arg(long, value_enum)]
    token_mode: Option<ModeArg>,
}

#[derive(Serialize)]
struct IngestCfg {
    docs: PathBuf,
    queries: Option<PathBuf>,
    token_mode: ModeArg,
}

pub fn ingest(a: IngestArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let cfg = IngestCfg {
        docs: file.required(a.docs, "docs")?,
        queries: file.field(a.queries.map(Some), "queries", None)?,
        token_mode: file.field(a.token_mode, "token_mode", ModeArg::Unigram)?,
    };
    let mode = cfg.token_mode.into();

    let recs = read_jsonl(&cfg.docs)?;
    if recs.is_empty() {
        bail!("{}: no documents", cfg.docs.display());
    }
    let mut vocab = Vocabulary::new();
    let mut docs = Vec::with_capacity(recs.len());
    let mut seen: HashSet<&str> = HashSet::with_capacity(recs.len());
    for r in &recs {
        if !seen.insert(r.id.as_str()) {
            bail!("duplicate document id `{}`", r.id);
        }
        let tokens = vocab.tokenize_build(&r.text, mode);
        if tokens.is_empty() {
            bail!("document `{}` tokenized to nothing", r.id);
        }
        docs.push(Document::new(r.id.clone(), tokens));
    }
    vocab.freeze();
    for d in &docs {
        vocab.observe(&d.tokens);
    }

    let mut queries = Vec::new();
    let mut gold = Vec::new();
    let mut empty_queries = 0u32;
    if let Some(qpath) = &cfg.queries {
        for r in read_jsonl(qpath)? {
            let tokens = vocab.tokenize(&r.text, mode);
            if tokens.is_empty() {
                empty_queries += 1;
            }
            queries.push(Document::new(r.id, tokens));
            gold.push(r.gold_id);
        }
    }

    let col = Collection { token_mode: mode, vocab, docs, queries, gold };
    let meta = RunMeta::new("ingest", serde_json::to_value(&cfg)?)
        .with_corpus_hash(&file_digest(&cfg.docs)?)
        .with_extra("n_docs", json!(col.docs.len()))
        .with_extra("n_queries", json!(col.queries.len()))
        .with_extra("vocab_size", json!(col.vocab.len()))
        .with_extra("empty_queries", json!(empty_queries));
    emit(out, "collection", "json", &col.to_bytes(), &meta)?;
    Ok(())
}

#[derive(Args)]
pub struct SynthIctArgs {
    /// Root seed for source synthesis and passage/query sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic source documents to generate.
    #[arg(long)]
    sources: Option<u32>,
    /// Tokens per source document.
    #[arg(long)]
    source_len: Option<u32>,
    /// Synthetic vocabulary size.
    #[arg(long)]
    vocab_size: Option<u32>,
    /// Zipf exponent of the token distribution (0 = uniform).
    #[arg(long)]
    zipf: Option<f64>,
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
    /// Maximum passage length in tokens.
    #[arg(long)]
    passage_len: Option<u32>,
    /// Cap on emitted queries.
    #[arg(long)]
    max_queries: Option<u32>,
}

#[derive(Serialize)]
struct SynthIctCfg {
    seed: u64,
    sources: u32,
    source_len: u32,
    vocab_size: u32,
    zipf: f64,
    query_min: u32,
    query_max: u32,
    distractors: u32,
    edit_count: u32,
    passage_len: u32,
    max_queries: Option<u32>,
}

pub fn synth_ict(a: SynthIctArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let cfg = SynthIctCfg {
        seed: file.required(a.seed, "seed")?,
        sources: file.field(a.sources, "sources", 200)?,
        source_len: file.field(a.source_len, "source_len", 200)?,
        vocab_size: file.field(a.vocab_size, "vocab_size", 30_000)?,
        zipf: file.field(a.zipf, "zipf", 1.0)?,
        query_min: file.field(a.query_min, "query_min", 5)?,
        query_max: file.field(a.query_max, "query_max", 25)?,
        distractors: file.field(a.distractors, "distractors", 2)?,
        edit_count: file.field(a.edit_count, "edit_count", 2)?,
        passage_len: file.field(a.passage_len, "passage_len", 50)?,
        max_queries: file.field(a.max_queries.map(Some), "max_queries", None)?,
    };
    let spec = IctSpec {
        query_len: (cfg.query_min, cfg.query_max),
        distractors_per_gold: cfg.distractors,
        edit_count: cfg.edit_count,
        max_passage_len: cfg.passage_len,
        // Decorrelated from the source-synthesis stream over the same seed.
        seed: cfg.seed.wrapping_add(0x1c7),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let sources = random_documents(cfg.sources, cfg.source_len, cfg.vocab_size, cfg.seed, cfg.zipf);
    let corpus =
        synthesize_ict(&sources, cfg.vocab_size, &spec, cfg.max_queries.map(|n| n as usize))?;
    let vocab = Vocabulary::synthetic(cfg.vocab_size);
    let passages: Vec<JsonlRecord> = corpus
        .passages
        .iter()
        .map(|p| JsonlRecord { id: p.id.clone(), text: doc_to_text(&vocab, p), gold_id: None })
        .collect();
    let queries: Vec<JsonlRecord> = corpus
        .queries
        .iter()
        .enumerate()
        .map(|(i, q)| JsonlRecord {
            id: q.id.clone(),
            text: doc_to_text(&vocab, q),
            gold_id: Some(corpus.gold_id(i).to_string()),
        })
        .collect();

    let meta = RunMeta::new("synth-ict", serde_json::to_value(&cfg)?)
        .with_extra("n_passages", json!(passages.len()))
        .with_extra("n_queries", json!(queries.len()))
        .with_extra("skipped_sources", json!(corpus.skipped_sources))
        .with_extra("unqueried_passages", json!(corpus.unqueried_passages));
    emit(out, "passages", "jsonl", render_jsonl(&passages).as_bytes(), &meta)?;
    emit(out, "queries", "jsonl", render_jsonl(&queries).as_bytes(), &meta)?;
    Ok(())
}
