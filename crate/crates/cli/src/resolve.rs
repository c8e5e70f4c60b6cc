//! Flag resolution: built-in defaults, overridden by an optional JSON config
//! file, overridden by explicit flags. Missing required values and malformed
//! configuration are usage errors (exit code 2).

use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use marginlab::corpus::TokenMode;
use marginlab::lab::KGrid;
use marginlab::multivec::SegScheme;
use marginlab::projection::ProjectionKind;
use marginlab::sparse::Scheme;

/// Invalid invocation or configuration, as opposed to a runtime failure.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Optional JSON object whose snake_case keys default this run's flags.
pub struct FileCfg(Option<serde_json::Map<String, serde_json::Value>>);

impl FileCfg {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileCfg(None));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(serde_json::Value::Object(map)) => Ok(FileCfg(Some(map))),
            Ok(_) => Err(usage(format!("--config {}: expected a JSON object", path.display()))),
            Err(e) => Err(usage(format!("--config {}: {e}", path.display()))),
        }
    }

    pub fn lookup<T: DeserializeOwned>(&self, key: &str) -> anyhow::Result<Option<T>> {
        match self.0.as_ref().and_then(|m| m.get(key)) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| usage(format!("config field `{key}`: {e}"))),
        }
    }

    /// Flag value, else config-file value, else the built-in default.
    pub fn field<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> anyhow::Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.lookup(key)?.unwrap_or(default)),
        }
    }

    /// Flag value, else config-file value, else a usage error.
    pub fn required<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> anyhow::Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => self.lookup(key)?.ok_or_else(|| {
                usage(format!(
                    "missing required --{} (or config field `{key}`)",
                    key.replace('_', "-")
                ))
            }),
        }
    }
}

/// Sparse weighting scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Boolean,
    Tfidf,
    Bm25,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Boolean => Scheme::Boolean,
            SchemeArg::Tfidf => Scheme::TfIdf,
            SchemeArg::Bm25 => Scheme::Bm25,
        }
    }
}

/// Random projection family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Rademacher,
    Gaussian,
}

impl From<KindArg> for ProjectionKind {
    fn from(k: KindArg) -> ProjectionKind {
        match k {
            KindArg::Rademacher => ProjectionKind::Rademacher,
            KindArg::Gaussian => ProjectionKind::Gaussian,
        }
    }
}

/// Tokenization mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Unigram,
    UnigramBigram,
}

impl From<ModeArg> for TokenMode {
    fn from(m: ModeArg) -> TokenMode {
        match m {
            ModeArg::Unigram => TokenMode::Unigram,
            ModeArg::UnigramBigram => TokenMode::UnigramBigram,
        }
    }
}

/// Term-to-segment assignment for multi-vector documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegArg {
    Contiguous,
    Hashed,
}

impl From<SegArg> for SegScheme {
    fn from(s: SegArg) -> SegScheme {
        match s {
            SegArg::Contiguous => SegScheme::Contiguous,
            SegArg::Hashed => SegScheme::Hashed,
        }
    }
}

/// `--grid LO,HI,POINTS` geometric sweep, the config `grid` field, or the
/// built-in 40-point sweep (which `--grid-default` also selects explicitly).
pub fn resolve_grid(
    flag: Option<Vec<u32>>,
    grid_default: bool,
    file: &FileCfg,
) -> anyhow::Result<KGrid> {
    let spec = match flag {
        Some(v) => Some(v),
        None if grid_default => None,
        None => file.lookup("grid")?,
    };
    match spec {
        None => Ok(KGrid::default_sweep()),
        Some(v) if v.len() == 3 => {
            KGrid::geometric(v[0], v[1], v[2]).map_err(|e| usage(e.to_string()))
        }
        Some(v) => Err(usage(format!("--grid wants LO,HI,POINTS (3 values, got {})", v.len()))),
    }
}
