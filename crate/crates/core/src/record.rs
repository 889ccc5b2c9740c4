//! Record/replay store for network responses, plus the small HTTP layer the
//! live clients share.
//!
//! Every live response is written verbatim to `<dir>/<sha256(key)>.json`.
//! A later run with the same key reads the file and never touches the network.

use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("HTTP {status} from {url}")]
    Status { url: String, status: u16 },
    #[error("transport error for {url}: {message}")]
    Transport { url: String, message: String },
}

impl HttpError {
    /// Rate limits, server errors and transport failures are worth retrying;
    /// auth and not-found are not.
    pub fn is_retriable(&self) -> bool {
        match self {
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Transport { .. } => true,
        }
    }

    pub fn is_auth(&self) -> bool {
        matches!(self, HttpError::Status { status: 401 | 403, .. })
    }
}

fn transport(url: &str, e: ureq::Error) -> HttpError {
    match e {
        ureq::Error::StatusCode(status) => HttpError::Status { url: url.into(), status },
        other => HttpError::Transport { url: url.into(), message: other.to_string() },
    }
}

pub fn http_get(url: &str, headers: &[(&str, String)]) -> Result<String, HttpError> {
    let mut req = ureq::get(url);
    for (k, v) in headers {
        req = req.header(*k, v.as_str());
    }
    let mut resp = req.call().map_err(|e| transport(url, e))?;
    resp.body_mut().read_to_string().map_err(|e| transport(url, e))
}

pub fn http_post_json(url: &str, headers: &[(&str, String)], body: &serde_json::Value) -> Result<String, HttpError> {
    let mut req = ureq::post(url);
    for (k, v) in headers {
        req = req.header(*k, v.as_str());
    }
    let mut resp = req.send_json(body).map_err(|e| transport(url, e))?;
    resp.body_mut().read_to_string().map_err(|e| transport(url, e))
}

/// Directory of recorded responses keyed by request hash.
#[derive(Debug, Clone)]
pub struct Recorder {
    dir: PathBuf,
}

impl Recorder {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key_hash(key: &str) -> String {
        hex::encode(Sha256::digest(key.as_bytes()))
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key_hash(key)))
    }

    pub fn lookup(&self, key: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.path_for(key)) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn store(&self, key: &str, body: &str) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        write_atomic(&self.path_for(key), body.as_bytes())
    }
}

/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_then_lookup() {
        let d = tempfile::tempdir().unwrap();
        let r = Recorder::new(d.path().join("rec"));
        assert_eq!(r.lookup("GET /a").unwrap(), None);
        r.store("GET /a", "[1]").unwrap();
        assert_eq!(r.lookup("GET /a").unwrap().as_deref(), Some("[1]"));
        assert_eq!(r.lookup("GET /b").unwrap(), None);
    }

    #[test]
    fn retriable_classes() {
        let s = |status| HttpError::Status { url: "u".into(), status };
        assert!(s(503).is_retriable());
        assert!(s(429).is_retriable());
        assert!(!s(404).is_retriable());
        assert!(s(401).is_auth());
    }
}
