//! Review-comment ingestion: recorded fixtures or a GitHub-style API,
//! normalized and deduplicated into one corpus.
//!
//! Fixture directory layout: every `*.jsonl` file directly inside the
//! directory is read in file-name order; each line is one [`ReviewComment`]
//! with a raw (unnormalized) body. Blank lines are ignored.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::artifact::{self, ArtifactError};
use crate::record::{http_get, HttpError, Recorder};

pub const ARTIFACT: &str = "corpus";
pub const TOKEN_ENV: &str = "GITHUB_TOKEN";
const GITHUB_API: &str = "https://api.github.com";
const PER_PAGE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentKind {
    Inline,
    Discussion,
    ReviewSubmission,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub id: String,
    pub pr_id: String,
    pub kind: CommentKind,
    #[serde(default)]
    pub file_path: Option<String>,
    #[serde(default)]
    pub diff_hunk: Option<String>,
    pub body: String,
    pub author: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Live,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub source: Source,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewCorpus {
    pub comments: Vec<ReviewComment>,
    pub source: Source,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("network: {0}")]
    Network(#[from] HttpError),
    #[error("no API token: set {TOKEN_ENV} or record responses first")]
    MissingToken,
    #[error("bad PR range `{0}` (expected N or N-M)")]
    BadRange(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

impl CorpusError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, CorpusError::Network(e) if e.is_retriable())
    }
}

/// Collapses whitespace runs to one space, trims, and drops code-fence
/// markers (with their info string) while keeping fenced text.
pub fn normalize_body(raw: &str) -> String {
    let mut cur = strip_fences(raw);
    // Removing a marker can join backticks into a new one; iterate to a
    // fixed point so the function is idempotent.
    while cur.contains("```") {
        cur = cur.replace("```", " ");
    }
    cur.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_fences(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut in_fence = false;
    for line in raw.split('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("```") {
            if in_fence {
                out.push_str(rest);
            } else {
                // An opening fence's info string (`c`, `php`, ...) is not content.
                let info_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
                out.push_str(&rest[info_end..]);
            }
            in_fence = !in_fence;
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn dedup_key(c: &ReviewComment) -> (String, String, Option<String>) {
    (c.pr_id.clone(), c.body.clone(), c.file_path.clone())
}

/// Total order used for the corpus; the trailing fields only break ties so
/// the result does not depend on input order.
fn order_key(c: &ReviewComment) -> impl Ord + '_ {
    (&c.pr_id, c.created_at, &c.id, c.kind, &c.file_path, &c.body, &c.author, &c.diff_hunk)
}

/// Normalizes bodies, drops empty ones, sorts and removes duplicates by
/// `(pr_id, normalized body, file_path)` and by `(pr_id, id)`.
pub fn build_corpus(raw: Vec<ReviewComment>, source: Source, fetched_at: DateTime<Utc>) -> ReviewCorpus {
    let mut comments: Vec<ReviewComment> = raw
        .into_iter()
        .filter_map(|mut c| {
            c.body = normalize_body(&c.body);
            (!c.body.is_empty()).then_some(c)
        })
        .collect();
    comments.sort_by(|a, b| order_key(a).cmp(&order_key(b)));
    let mut seen_body = BTreeSet::new();
    let mut seen_id = BTreeSet::new();
    comments.retain(|c| {
        let fresh_id = seen_id.insert((c.pr_id.clone(), c.id.clone()));
        let fresh_body = seen_body.insert(dedup_key(c));
        fresh_id && fresh_body
    });
    ReviewCorpus { comments, source, fetched_at }
}

fn validate(c: &ReviewComment, path: &Path, line: usize) -> Result<(), CorpusError> {
    let bad = |message: String| CorpusError::Parse { path: path.to_path_buf(), line, message };
    if c.id.is_empty() || c.pr_id.is_empty() {
        return Err(bad("record has an empty id or pr_id".into()));
    }
    if c.kind == CommentKind::Inline && c.file_path.as_deref().is_none_or(str::is_empty) {
        return Err(bad(format!("inline comment {} has no file_path", c.id)));
    }
    Ok(())
}

/// Reads raw comments from every `*.jsonl` file in `dir`.
pub fn read_fixture_dir(dir: &Path) -> Result<Vec<ReviewComment>, CorpusError> {
    let io = |source| CorpusError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|source| CorpusError::Io { path: f.clone(), source })?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let c: ReviewComment = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                path: f.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            validate(&c, &f, i + 1)?;
            out.push(c);
        }
    }
    Ok(out)
}

/// Fixture ingestion. `fetched_at` is the newest comment timestamp (the Unix
/// epoch for an empty fixture) so repeated runs serialize identically.
pub fn ingest_fixture(dir: &Path) -> Result<ReviewCorpus, CorpusError> {
    let raw = read_fixture_dir(dir)?;
    let fetched_at = raw.iter().map(|c| c.created_at).max().unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    Ok(build_corpus(raw, Source::Fixture, fetched_at))
}

/// Parses `N` or `N-M` (inclusive).
pub fn parse_pr_range(s: &str) -> Result<Vec<u64>, CorpusError> {
    let bad = || CorpusError::BadRange(s.to_string());
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

/// GitHub-style REST client. Responses are looked up in the recorder first
/// and stored there after every live fetch.
pub struct GithubSource {
    pub repo: String,
    pub api_base: String,
    pub token: Option<String>,
    pub recorder: Recorder,
}

#[derive(Deserialize)]
struct ApiUser {
    login: String,
}

#[derive(Deserialize)]
struct ApiComment {
    id: u64,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    user: Option<ApiUser>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    submitted_at: Option<DateTime<Utc>>,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    diff_hunk: Option<String>,
}

impl GithubSource {
    pub fn new(repo: &str, recorder: Recorder) -> Self {
        Self {
            repo: repo.to_string(),
            api_base: GITHUB_API.to_string(),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            recorder,
        }
    }

    fn fetch(&self, url: &str) -> Result<String, CorpusError> {
        let key = format!("GET {url}");
        if let Some(body) = self.recorder.lookup(&key).map_err(|source| CorpusError::Io {
            path: self.recorder.path_for(&key),
            source,
        })? {
            return Ok(body);
        }
        let token = self.token.as_ref().ok_or(CorpusError::MissingToken)?;
        let headers = [
            ("Authorization", format!("Bearer {token}")),
            ("Accept", "application/vnd.github+json".to_string()),
            ("User-Agent", "eyeq".to_string()),
        ];
        log::info!("fetching {url}");
        let body = http_get(url, &headers)?;
        self.recorder
            .store(&key, &body)
            .map_err(|source| CorpusError::Io { path: self.recorder.path_for(&key), source })?;
        Ok(body)
    }

    fn fetch_all(&self, endpoint: &str) -> Result<Vec<ApiComment>, CorpusError> {
        let mut out = Vec::new();
        for page in 1.. {
            let url = format!("{}/repos/{}/{endpoint}?per_page={PER_PAGE}&page={page}", self.api_base, self.repo);
            let body = self.fetch(&url)?;
            let items: Vec<ApiComment> = serde_json::from_str(&body).map_err(|e| CorpusError::Parse {
                path: self.recorder.path_for(&format!("GET {url}")),
                line: 1,
                message: e.to_string(),
            })?;
            let n = items.len();
            out.extend(items);
            if n < PER_PAGE {
                break;
            }
        }
        Ok(out)
    }

    pub fn fetch_pr(&self, pr: u64) -> Result<Vec<ReviewComment>, CorpusError> {
        let endpoints = [
            (format!("pulls/{pr}/comments"), CommentKind::Inline),
            (format!("issues/{pr}/comments"), CommentKind::Discussion),
            (format!("pulls/{pr}/reviews"), CommentKind::ReviewSubmission),
        ];
        let mut out = Vec::new();
        for (endpoint, kind) in endpoints {
            for c in self.fetch_all(&endpoint)? {
                let Some(created_at) = c.created_at.or(c.submitted_at) else { continue };
                out.push(ReviewComment {
                    id: c.id.to_string(),
                    pr_id: pr.to_string(),
                    kind,
                    file_path: if kind == CommentKind::Inline { c.path } else { None },
                    diff_hunk: if kind == CommentKind::Inline { c.diff_hunk } else { None },
                    body: c.body.unwrap_or_default(),
                    author: c.user.map(|u| u.login).unwrap_or_default(),
                    created_at,
                });
            }
        }
        Ok(out)
    }

    /// Fetches all PRs concurrently. The corpus is identical whichever order
    /// the pages arrive in.
    pub fn ingest(&self, prs: &[u64]) -> Result<ReviewCorpus, CorpusError> {
        let per_pr: Vec<Result<Vec<ReviewComment>, CorpusError>> = prs.par_iter().map(|&pr| self.fetch_pr(pr)).collect();
        let mut raw = Vec::new();
        for r in per_pr {
            raw.extend(r?);
        }
        raw.retain(|c| !(c.kind == CommentKind::Inline && c.file_path.is_none()));
        Ok(build_corpus(raw, Source::Live, Utc::now()))
    }
}

impl ReviewCorpus {
    pub fn meta(&self) -> CorpusMeta {
        CorpusMeta { source: self.source, fetched_at: self.fetched_at }
    }

    pub fn render(&self) -> String {
        artifact::render(ARTIFACT, &self.meta(), &self.comments)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        Ok(artifact::write(path, ARTIFACT, &self.meta(), &self.comments)?)
    }

    pub fn load(path: &Path) -> Result<ReviewCorpus, CorpusError> {
        let (meta, comments): (CorpusMeta, Vec<ReviewComment>) = artifact::read(path, ARTIFACT)?;
        Ok(ReviewCorpus { comments, source: meta.source, fetched_at: meta.fetched_at })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_body("  a\n\nb  "), "a b");
        assert_eq!(normalize_body(""), "");
        assert_eq!(normalize_body("```c\nx=1;\n``` note"), "x=1; note");
    }

    #[test]
    fn fence_content_is_kept_verbatim_up_to_whitespace() {
        assert_eq!(normalize_body("see\n```php\nini_set(\"a\", \"-1\");\n```\n"), "see ini_set(\"a\", \"-1\");");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_pr_range("7").unwrap(), vec![7]);
        assert_eq!(parse_pr_range("3-5").unwrap(), vec![3, 4, 5]);
        assert!(parse_pr_range("5-3").is_err());
        assert!(parse_pr_range("x").is_err());
    }
}
