//! JSONL artifacts passed between stages. The first line of every file is a
//! header object carrying `schema_version` and `artifact`; each further line
//! is one record.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::record::write_atomic;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header<M> {
    pub schema_version: u32,
    pub artifact: String,
    #[serde(flatten)]
    pub meta: M,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub fn render<M: Serialize, T: Serialize>(artifact: &str, meta: &M, records: &[T]) -> String {
    let header = Header { schema_version: SCHEMA_VERSION, artifact: artifact.to_string(), meta };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write<M: Serialize, T: Serialize>(path: &Path, artifact: &str, meta: &M, records: &[T]) -> Result<(), ArtifactError> {
    write_atomic(path, render(artifact, meta, records).as_bytes())
        .map_err(|source| ArtifactError::Io { path: path.to_path_buf(), source })
}

pub fn read<M: DeserializeOwned, T: DeserializeOwned>(path: &Path, artifact: &str) -> Result<(M, Vec<T>), ArtifactError> {
    let text = fs::read_to_string(path).map_err(|source| ArtifactError::Io { path: path.to_path_buf(), source })?;
    parse(path, &text, artifact)
}

pub fn parse<M: DeserializeOwned, T: DeserializeOwned>(
    path: &Path,
    text: &str,
    artifact: &str,
) -> Result<(M, Vec<T>), ArtifactError> {
    let err = |line: usize, message: String| ArtifactError::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| err(1, "empty artifact, header line missing".into()))?;
    let header: Header<M> = serde_json::from_str(first).map_err(|e| err(1, format!("bad header: {e}")))?;
    if header.artifact != artifact {
        return Err(err(1, format!("expected a `{artifact}` artifact, found `{}`", header.artifact)));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(err(1, format!("unsupported schema_version {}", header.schema_version)));
    }
    let mut records = Vec::new();
    for (i, l) in lines {
        records.push(serde_json::from_str(l).map_err(|e| err(i + 1, e.to_string()))?);
    }
    Ok((header.meta, records))
}

/// Header metadata for artifacts that carry none.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoMeta {}
