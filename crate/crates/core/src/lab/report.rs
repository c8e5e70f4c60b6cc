//! Report serialization: fixed-header CSV/TSV artifacts, a JSON metadata
//! sidecar, and hash-addressed atomic writes.
//!
//! Numbers are rendered with Rust's shortest round-trip float formatting and
//! all sweep aggregation upstream is integer counting, so equal
//! configurations produce byte-identical artifacts regardless of thread
//! count. Files are written through a temporary file in the target directory
//! and atomically renamed, so readers never observe partial output.

use super::{KGrid, MarginRow, MarginTriple, MinKRow, RecallRow};
use crate::{Error, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MIN_K_HEADER: &str = "bin_lo,bin_hi,n_triples,stat,min_k,trials,grid_id";
pub const MARGINS_HEADER: &str = "length,rank,n_queries,q25,median,q75";
pub const RECALL_HEADER: &str = "length,target,n_queries,trials,eps_r0,min_k,k_bound,grid_id";
pub const TRIPLES_HEADER: &str = "query_id,d1_id,d2_id,margin";
pub const RANKINGS_HEADER: &str = "query_id\tdoc_id\trank\tscore";

/// Hex SHA-256 of the canonical JSON form of a configuration value (object
/// keys serialize sorted, so logically equal configs hash equally).
pub fn config_hash(config: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(config.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `dir/stem.<hash prefix>.ext` — artifact names carry the first 8 hex
/// digits of their config hash so differing configurations never collide.
pub fn artifact_path(dir: &Path, stem: &str, hash: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{}.{ext}", &hash[..8.min(hash.len())]))
}

/// Write-then-rename within the destination directory; the destination is
/// either untouched or complete, never partial.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn opt_u32(v: Option<u32>) -> String {
    v.map_or_else(|| "NA".to_string(), |k| k.to_string())
}

/// CSV for a [`min_k_per_bin`](super::min_k_per_bin) sweep. Unresolved bins
/// carry `NA` in the `min_k` column.
pub fn min_k_csv(rows: &[MinKRow], grid: &KGrid) -> String {
    let mut out = String::from(MIN_K_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.bin_lo,
            r.bin_hi,
            r.n_triples,
            r.stat,
            opt_u32(r.min_k),
            r.trials,
            grid.id()
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// CSV for [`margin_quantiles_by_length`](super::margin_quantiles_by_length)
/// rows (typically concatenated across length bins).
pub fn margins_csv(rows: &[MarginRow]) -> String {
    let mut out = String::from(MARGINS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.length, r.rank, r.n_queries, r.q25, r.median, r.q75)
            .expect("writing to String cannot fail");
    }
    out
}

/// CSV for [`min_k_for_recall`](super::min_k_for_recall) rows.
pub fn recall_csv(rows: &[RecallRow], grid: &KGrid) -> String {
    let mut out = String::from(RECALL_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.length,
            r.target,
            r.n_queries,
            r.trials,
            r.eps_r0,
            opt_u32(r.min_k),
            opt_u32(r.k_bound),
            grid.id()
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// CSV of harvested triples with corpus identifiers substituted for
/// ordinals.
pub fn triples_csv(triples: &[MarginTriple], query_ids: &[String], doc_ids: &[String]) -> String {
    let mut out = String::from(TRIPLES_HEADER);
    out.push('\n');
    for t in triples {
        writeln!(
            out,
            "{},{},{},{}",
            query_ids[t.query as usize], doc_ids[t.d1 as usize], doc_ids[t.d2 as usize], t.margin
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// TSV of per-query rankings: `query_id, doc_id, rank, score`, rank starting
/// at 1 in result order.
pub fn rankings_tsv(rankings: &[(String, Vec<(String, f64)>)]) -> String {
    let mut out = String::from(RANKINGS_HEADER);
    out.push('\n');
    for (qid, docs) in rankings {
        for (rank, (did, score)) in docs.iter().enumerate() {
            writeln!(out, "{qid}\t{did}\t{}\t{score}", rank + 1)
                .expect("writing to String cannot fail");
        }
    }
    out
}

/// JSON sidecar describing how an artifact was produced: the full
/// configuration and its hash, the dimension grid if one was swept, corpus
/// digest, and any op-specific counters. Deliberately carries no timestamps
/// or host details, so reruns produce byte-identical metadata.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunMeta {
    pub tool: String,
    pub op: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_hash: Option<String>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl RunMeta {
    pub fn new(op: &str, config: serde_json::Value) -> Self {
        let config_hash = config_hash(&config);
        RunMeta {
            tool: format!("marginlab {}", env!("CARGO_PKG_VERSION")),
            op: op.to_string(),
            config,
            config_hash,
            grid: None,
            grid_id: None,
            corpus_hash: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_grid(mut self, grid: &KGrid) -> Self {
        self.grid = Some(grid.ks().to_vec());
        self.grid_id = Some(grid.id().to_string());
        self
    }

    pub fn with_corpus_hash(mut self, hash: &str) -> Self {
        self.corpus_hash = Some(hash.to_string());
        self
    }

    pub fn with_extra(mut self, key: &str, value: serde_json::Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    /// First 8 hex digits of the config hash — the artifact name component.
    pub fn short_hash(&self) -> &str {
        &self.config_hash[..8]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("meta serializes");
        s.push('\n');
        s
    }
}
