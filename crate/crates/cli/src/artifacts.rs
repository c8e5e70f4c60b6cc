//! Artifact I/O shared by the subcommands: the tokenized-collection format,
//! hash-named emission with metadata sidecars, and input digests.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use marginlab::corpus::{Document, SparseVector, TokenMode, Vocabulary};
use marginlab::lab::report::{artifact_path, write_atomic, RunMeta};
use marginlab::sparse::{doc_vector, query_vector, Bm25Params, Scheme};

/// Tokenized corpus plus a frozen vocabulary carrying collection statistics
/// (df, document count, average length): what `ingest` writes and the
/// indexing/harvest subcommands read.
#[derive(Serialize, Deserialize)]
pub struct Collection {
    pub token_mode: TokenMode,
    pub vocab: Vocabulary,
    pub docs: Vec<Document>,
    pub queries: Vec<Document>,
    /// Gold document id per query (parallel to `queries`), when labeled.
    pub gold: Vec<Option<String>>,
}

impl Collection {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading collection {}", path.display()))?;
        serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing collection {}", path.display()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("collection serializes");
        out.push(b'\n');
        out
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.id.clone()).collect()
    }

    pub fn query_ids(&self) -> Vec<String> {
        self.queries.iter().map(|q| q.id.clone()).collect()
    }

    pub fn doc_vectors(
        &self,
        scheme: Scheme,
        params: &Bm25Params,
    ) -> anyhow::Result<Vec<SparseVector>> {
        self.docs.iter().map(|d| Ok(doc_vector(&self.vocab, d, scheme, params)?)).collect()
    }

    pub fn query_vectors(&self, scheme: Scheme) -> anyhow::Result<Vec<SparseVector>> {
        self.queries.iter().map(|q| Ok(query_vector(&self.vocab, q, scheme)?)).collect()
    }
}

/// SHA-256 hex digest of a file's bytes, recorded in metadata sidecars so a
/// rerun over changed inputs is visible even though the config hash matches.
pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Write `stem.<hash8>.<ext>` and its `stem.<hash8>.meta.json` sidecar
/// atomically, printing the artifact path on stdout.
pub fn emit(
    out_dir: &Path,
    stem: &str,
    ext: &str,
    bytes: &[u8],
    meta: &RunMeta,
) -> anyhow::Result<PathBuf> {
    let path = artifact_path(out_dir, stem, &meta.config_hash, ext);
    write_atomic(&path, bytes)?;
    let sidecar = artifact_path(out_dir, stem, &meta.config_hash, "meta.json");
    write_atomic(&sidecar, meta.to_json().as_bytes())?;
    println!("{}", path.display());
    Ok(path)
}
