//! Retrieval, evaluation, hybrid tuning, and the verification suite.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use marginlab::corpus::{read_jsonl, Document, JsonlRecord};
use marginlab::engine::{
    dense_topk, hybrid_topk, mrr_at, recall_at, tune_lambda, DenseIndex, HybridConfig,
};
use marginlab::lab::report::{rankings_tsv, RunMeta, RANKINGS_HEADER};
use marginlab::lab::verify::run_all;
use marginlab::sparse::{query_vector, InvertedIndex, Scheme};

use crate::artifacts::{emit, file_digest, Collection};
use crate::resolve::{usage, FileCfg, SchemeArg};

type Rankings = Vec<(String, Vec<(String, f64)>)>;

#[derive(Args)]
pub struct RetrieveArgs {
    /// Query JSONL: one {"id", "text"} object per line.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Postings index from `index-sparse`.
    #[arg(long)]
    sparse_index: Option<PathBuf>,
    /// Projected index from `index-dense`.
    #[arg(long)]
    dense_index: Option<PathBuf>,
    /// Collection artifact supplying the vocabulary for dense-only retrieval.
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Query weighting for the dense route.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Results per query.
    #[arg(long)]
    k: Option<usize>,
    /// Interpolation weight on the dense score (hybrid retrieval).
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-system candidate depth for hybrid retrieval.
    #[arg(long)]
    n_best: Option<usize>,
}

#[derive(Serialize)]
struct RetrieveCfg {
    queries: PathBuf,
    sparse_index: Option<PathBuf>,
    dense_index: Option<PathBuf>,
    collection: Option<PathBuf>,
    scheme: SchemeArg,
    k: usize,
    lambda: Option<f64>,
    n_best: usize,
}

pub fn retrieve(a: RetrieveArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let cfg = RetrieveCfg {
        queries: file.required(a.queries, "queries")?,
        sparse_index: file.field(a.sparse_index.map(Some), "sparse_index", None)?,
        dense_index: file.field(a.dense_index.map(Some), "dense_index", None)?,
        collection: file.field(a.collection.map(Some), "collection", None)?,
        scheme: file.field(a.scheme, "scheme", SchemeArg::Bm25)?,
        k: file.field(a.k, "k", 10)?,
        lambda: file.field(a.lambda.map(Some), "lambda", None)?,
        n_best: file.field(a.n_best, "n_best", 100)?,
    };
    let recs = read_jsonl(&cfg.queries)?;
    if recs.is_empty() {
        bail!("{}: no queries", cfg.queries.display());
    }

    let (rankings, mode): (Rankings, &str) = match (&cfg.sparse_index, &cfg.dense_index) {
        (Some(sp), None) => (sparse_rankings(sp, &recs, cfg.k)?, "sparse"),
        (None, Some(dp)) => {
            let col_path = cfg.collection.as_ref().ok_or_else(|| {
                usage("dense-only retrieval needs --collection for the vocabulary")
            })?;
            (dense_rankings(dp, col_path, &recs, cfg.scheme.into(), cfg.k)?, "dense")
        }
        (Some(sp), Some(dp)) => {
            let lambda = cfg.lambda.ok_or_else(|| usage("hybrid retrieval needs --lambda"))?;
            let hcfg = HybridConfig { lambda, n_best: cfg.n_best };
            hcfg.validate().map_err(|e| usage(e.to_string()))?;
            (hybrid_rankings(sp, dp, &recs, cfg.scheme.into(), &hcfg, cfg.k)?, "hybrid")
        }
        (None, None) => return Err(usage("need --sparse-index and/or --dense-index")),
    };

    let meta = RunMeta::new("retrieve", serde_json::to_value(&cfg)?)
        .with_corpus_hash(&file_digest(&cfg.queries)?)
        .with_extra("mode", json!(mode))
        .with_extra("n_queries", json!(rankings.len()));
    emit(out, "rankings", "tsv", rankings_tsv(&rankings).as_bytes(), &meta)?;
    Ok(())
}

fn sparse_rankings(path: &Path, recs: &[JsonlRecord], k: usize) -> anyhow::Result<Rankings> {
    let index = InvertedIndex::from_bytes(
        &std::fs::read(path).with_context(|| format!("reading {}", path.display()))?,
    )?;
    recs.par_iter()
        .map(|r| {
            let q = index.query_from_text(&r.text)?;
            let hits = index
                .topk(&q, k)
                .into_iter()
                .map(|(d, s)| (index.doc_id(d).to_string(), s))
                .collect();
            Ok((r.id.clone(), hits))
        })
        .collect()
}

fn dense_rankings(
    path: &Path,
    col_path: &Path,
    recs: &[JsonlRecord],
    scheme: Scheme,
    k: usize,
) -> anyhow::Result<Rankings> {
    let index = DenseIndex::from_bytes(
        &std::fs::read(path).with_context(|| format!("reading {}", path.display()))?,
    )?;
    let col = Collection::load(col_path)?;
    recs.par_iter()
        .map(|r| {
            let tokens = col.vocab.tokenize(&r.text, col.token_mode);
            let q = query_vector(&col.vocab, &Document::new(r.id.clone(), tokens), scheme)?;
            let hits = dense_topk(&index.embed_query(&q)?, &index, k)?
                .into_iter()
                .map(|(d, s)| (index.doc_id(d).to_string(), s))
                .collect();
            Ok((r.id.clone(), hits))
        })
        .collect()
}

fn hybrid_rankings(
    sparse_path: &Path,
    dense_path: &Path,
    recs: &[JsonlRecord],
    scheme: Scheme,
    hcfg: &HybridConfig,
    k: usize,
) -> anyhow::Result<Rankings> {
    let sparse = InvertedIndex::from_bytes(
        &std::fs::read(sparse_path)
            .with_context(|| format!("reading {}", sparse_path.display()))?,
    )?;
    let dense = DenseIndex::from_bytes(
        &std::fs::read(dense_path).with_context(|| format!("reading {}", dense_path.display()))?,
    )?;
    check_same_corpus(&sparse, &dense)?;
    recs.par_iter()
        .map(|r| {
            let q_sparse = sparse.query_from_text(&r.text)?;
            let tokens = sparse.vocab().tokenize(&r.text, sparse.mode());
            let q_dense =
                query_vector(sparse.vocab(), &Document::new(r.id.clone(), tokens), scheme)?;
            let qvec = dense.embed_query(&q_dense)?;
            let hits = hybrid_topk(&q_sparse, &qvec, &sparse, &dense, hcfg, k)?
                .into_iter()
                .map(|(d, s)| (sparse.doc_id(d).to_string(), s))
                .collect();
            Ok((r.id.clone(), hits))
        })
        .collect()
}

fn check_same_corpus(sparse: &InvertedIndex, dense: &DenseIndex) -> anyhow::Result<()> {
    if sparse.n_docs() != dense.n_docs()
        || (0..sparse.n_docs()).any(|i| sparse.doc_id(i) != dense.doc_id(i))
    {
        bail!("sparse and dense indexes cover different corpora");
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Rankings TSV from `retrieve`.
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Query JSONL with gold_id labels.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Reciprocal-rank cutoff.
    #[arg(long)]
    cutoff: Option<usize>,
    /// Recall cutoffs.
    #[arg(long, value_delimiter = ',')]
    recall_cutoffs: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct EvalCfg {
    rankings: PathBuf,
    queries: PathBuf,
    cutoff: usize,
    recall_cutoffs: Vec<usize>,
}

pub fn eval(a: EvalArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let cfg = EvalCfg {
        rankings: file.required(a.rankings, "rankings")?,
        queries: file.required(a.queries, "queries")?,
        cutoff: file.field(a.cutoff, "cutoff", 10)?,
        recall_cutoffs: file.field(a.recall_cutoffs, "recall_cutoffs", vec![10, 100])?,
    };
    let ranked_ids = parse_rankings(&cfg.rankings)?;

    // Map document ids to dense ordinals as encountered; gold ids absent
    // from every ranking still get an ordinal so misses score zero.
    let mut ordinals: HashMap<String, u32> = HashMap::new();
    let ordinal = |id: &str, ords: &mut HashMap<String, u32>| -> u32 {
        let next = ords.len() as u32;
        *ords.entry(id.to_string()).or_insert(next)
    };
    let mut rankings: Vec<Vec<u32>> = Vec::new();
    let mut gold = Vec::new();
    let mut matched = 0usize;
    for r in read_jsonl(&cfg.queries)? {
        let gold_id = r
            .gold_id
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("query `{}` has no gold_id label", r.id))?;
        gold.push(ordinal(gold_id, &mut ordinals));
        let ranked = ranked_ids.get(&r.id).map(Vec::as_slice).unwrap_or(&[]);
        matched += usize::from(!ranked.is_empty());
        rankings.push(ranked.iter().map(|id| ordinal(id, &mut ordinals)).collect());
    }
    if rankings.is_empty() {
        bail!("{}: no labeled queries", cfg.queries.display());
    }

    let mrr = mrr_at(&rankings, &gold, cfg.cutoff)?;
    let mut csv = String::from("metric,cutoff,value\n");
    csv.push_str(&format!("mrr,{},{mrr}\n", cfg.cutoff));
    for &c in &cfg.recall_cutoffs {
        csv.push_str(&format!("recall,{c},{}\n", recall_at(&rankings, &gold, c)?));
    }

    let meta = RunMeta::new("eval", serde_json::to_value(&cfg)?)
        .with_corpus_hash(&file_digest(&cfg.rankings)?)
        .with_extra("n_queries", json!(rankings.len()))
        .with_extra("queries_with_rankings", json!(matched));
    emit(out, "metrics", "csv", csv.as_bytes(), &meta)?;
    Ok(())
}

/// Ranked document ids per query id, in file order (ranks are 1-based and
/// validated to be consecutive within each query).
fn parse_rankings(path: &Path) -> anyhow::Result<HashMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading rankings {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(RANKINGS_HEADER) {
        bail!("{}: missing rankings header", path.display());
    }
    let mut out: HashMap<String, Vec<String>> = HashMap::new();
    for (no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [qid, did, rank, score] = fields[..] else {
            bail!("{}:{}: expected 4 tab-separated fields", path.display(), no + 2);
        };
        let rank: usize =
            rank.parse().with_context(|| format!("{}:{}: bad rank", path.display(), no + 2))?;
        score
            .parse::<f64>()
            .with_context(|| format!("{}:{}: bad score", path.display(), no + 2))?;
        let entry = out.entry(qid.to_string()).or_default();
        if rank != entry.len() + 1 {
            bail!("{}:{}: rank {rank} out of order for query `{qid}`", path.display(), no + 2);
        }
        entry.push(did.to_string());
    }
    Ok(out)
}

#[derive(Args)]
pub struct TuneArgs {
    /// Postings index from `index-sparse`.
    #[arg(long)]
    sparse_index: Option<PathBuf>,
    /// Projected index from `index-dense`.
    #[arg(long)]
    dense_index: Option<PathBuf>,
    /// Development query JSONL with gold_id labels.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Query weighting for the dense route.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Per-system candidate depth.
    #[arg(long)]
    n_best: Option<usize>,
    /// Reciprocal-rank cutoff the weight is tuned against.
    #[arg(long)]
    cutoff: Option<usize>,
}

#[derive(Serialize)]
struct TuneCfg {
    sparse_index: PathBuf,
    dense_index: PathBuf,
    queries: PathBuf,
    scheme: SchemeArg,
    n_best: usize,
    cutoff: usize,
}

pub fn tune_hybrid(a: TuneArgs, file: &FileCfg, out: &Path) -> anyhow::Result<()> {
    let cfg = TuneCfg {
        sparse_index: file.required(a.sparse_index, "sparse_index")?,
        dense_index: file.required(a.dense_index, "dense_index")?,
        queries: file.required(a.queries, "queries")?,
        scheme: file.field(a.scheme, "scheme", SchemeArg::Bm25)?,
        n_best: file.field(a.n_best, "n_best", 100)?,
        cutoff: file.field(a.cutoff, "cutoff", 10)?,
    };
    let sparse = InvertedIndex::from_bytes(&std::fs::read(&cfg.sparse_index)?)?;
    let dense = DenseIndex::from_bytes(&std::fs::read(&cfg.dense_index)?)?;
    check_same_corpus(&sparse, &dense)?;
    let ord_of: HashMap<&str, u32> = (0..sparse.n_docs()).map(|i| (sparse.doc_id(i), i)).collect();

    let mut dev = Vec::new();
    let mut gold = Vec::new();
    for r in read_jsonl(&cfg.queries)? {
        let gold_id = r
            .gold_id
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("query `{}` has no gold_id label", r.id))?;
        let &g = ord_of
            .get(gold_id)
            .ok_or_else(|| anyhow::anyhow!("gold document `{gold_id}` is not in the index"))?;
        let q_sparse = sparse.query_from_text(&r.text)?;
        let tokens = sparse.vocab().tokenize(&r.text, sparse.mode());
        let q_dense =
            query_vector(sparse.vocab(), &Document::new(r.id, tokens), cfg.scheme.into())?;
        dev.push((q_sparse, dense.embed_query(&q_dense)?));
        gold.push(g);
    }
    let (lambda, mrr) = tune_lambda(&dev, &gold, &sparse, &dense, cfg.n_best, cfg.cutoff)?;

    let meta = RunMeta::new("tune-hybrid", serde_json::to_value(&cfg)?)
        .with_extra("lambda", json!(lambda))
        .with_extra("mrr", json!(mrr))
        .with_extra("n_queries", json!(gold.len()));
    emit(out, "hybrid", "csv", format!("lambda,mrr\n{lambda},{mrr}\n").as_bytes(), &meta)?;
    Ok(())
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Root seed for every Monte-Carlo in the suite.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials per cell.
    #[arg(long)]
    trials: Option<u32>,
    /// Reduced scales for smoke runs.
    #[arg(long)]
    quick: bool,
}

pub fn verify_bounds(a: VerifyArgs, file: &FileCfg) -> anyhow::Result<()> {
    let seed: u64 = file.required(a.seed, "seed")?;
    let trials: u32 = file.field(a.trials, "trials", 1000)?;
    let quick = a.quick || file.lookup("quick")?.unwrap_or(false);

    let checks = run_all(seed, trials, quick)?;
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!("{:width$}  {}  {}", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    println!("passed {passed}/{} checks", checks.len());
    if passed < checks.len() {
        bail!("{} of {} checks failed", checks.len() - passed, checks.len());
    }
    Ok(())
}
