//! Unified diff parsing and application.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Add,
    Del,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Verbatim hunk text, `@@` header included.
    pub raw: String,
    pub lines: Vec<HunkLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePatch {
    /// `None` for `/dev/null`.
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FilePatch {
    pub fn path(&self) -> &str {
        self.new_path.as_deref().or(self.old_path.as_deref()).unwrap_or("")
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("diff line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: hunk at -{old_start} does not apply: {message}")]
    Apply { path: String, old_start: usize, message: String },
}

fn strip_prefix_path(p: &str) -> Option<String> {
    let p = p.split('\t').next().unwrap_or(p).trim();
    if p == "/dev/null" {
        return None;
    }
    Some(p.strip_prefix("a/").or_else(|| p.strip_prefix("b/")).unwrap_or(p).to_string())
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

/// Parses `git diff`-style text into per-file patches. Lines outside
/// file sections (commit headers, `diff --git`, `index`) are ignored.
pub fn parse(text: &str) -> Result<Vec<FilePatch>, DiffError> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out: Vec<FilePatch> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let l = lines[i].trim_end_matches(['\n', '\r']);
        if let Some(old) = l.strip_prefix("--- ") {
            let next = lines.get(i + 1).map(|s| s.trim_end_matches(['\n', '\r'])).unwrap_or("");
            let new = next.strip_prefix("+++ ").ok_or(DiffError::Parse {
                line: i + 2,
                message: "expected `+++` after `---`".into(),
            })?;
            out.push(FilePatch { old_path: strip_prefix_path(old), new_path: strip_prefix_path(new), hunks: Vec::new() });
            i += 2;
            continue;
        }
        if l.starts_with("@@") {
            let err = |message: &str| DiffError::Parse { line: i + 1, message: message.into() };
            let patch = out.last_mut().ok_or_else(|| err("hunk before any file header"))?;
            let inner = l.strip_prefix("@@ ").and_then(|r| r.split(" @@").next()).ok_or_else(|| err("bad hunk header"))?;
            let (o, n) = inner.split_once(' ').ok_or_else(|| err("bad hunk header"))?;
            let (old_start, old_len) = o.strip_prefix('-').and_then(parse_range).ok_or_else(|| err("bad old range"))?;
            let (new_start, new_len) = n.strip_prefix('+').and_then(parse_range).ok_or_else(|| err("bad new range"))?;
            let mut raw = lines[i].to_string();
            let mut body = Vec::new();
            let (mut seen_old, mut seen_new) = (0, 0);
            i += 1;
            while (seen_old < old_len || seen_new < new_len) && i < lines.len() {
                let full = lines[i];
                let t = full.trim_end_matches(['\n', '\r']);
                let (kind, rest) = match t.as_bytes().first() {
                    Some(b' ') => (LineKind::Context, &t[1..]),
                    Some(b'+') => (LineKind::Add, &t[1..]),
                    Some(b'-') => (LineKind::Del, &t[1..]),
                    // Some tools drop the space of empty context lines.
                    None => (LineKind::Context, ""),
                    Some(b'\\') => {
                        raw.push_str(full);
                        i += 1;
                        continue;
                    }
                    _ => return Err(DiffError::Parse { line: i + 1, message: "unexpected line inside hunk".into() }),
                };
                match kind {
                    LineKind::Context => {
                        seen_old += 1;
                        seen_new += 1;
                    }
                    LineKind::Add => seen_new += 1,
                    LineKind::Del => seen_old += 1,
                }
                raw.push_str(full);
                body.push(HunkLine { kind, text: rest.to_string() });
                i += 1;
            }
            if seen_old != old_len || seen_new != new_len {
                return Err(DiffError::Parse { line: i, message: "hunk shorter than its header says".into() });
            }
            if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                raw.push_str(lines[i]);
                i += 1;
            }
            patch.hunks.push(Hunk { old_start, old_len, new_start, new_len, raw, lines: body });
            continue;
        }
        i += 1;
    }
    Ok(out)
}

fn split_lines(s: &str) -> (Vec<&str>, bool) {
    let trailing = s.ends_with('\n');
    let mut v: Vec<&str> = s.split('\n').collect();
    if trailing {
        v.pop();
    }
    if s.is_empty() {
        v.clear();
    }
    (v, trailing)
}

fn apply_dir(src: &str, patch: &FilePatch, reverse: bool) -> Result<String, DiffError> {
    let (lines, trailing) = split_lines(src);
    let mut out: Vec<&str> = Vec::with_capacity(lines.len());
    let mut pos = 0; // next unread source line, 0-based
    for h in &patch.hunks {
        let (start, len) = if reverse { (h.new_start, h.new_len) } else { (h.old_start, h.old_len) };
        let err = |message: String| DiffError::Apply { path: patch.path().to_string(), old_start: h.old_start, message };
        // A zero-length range names the line *after which* the hunk goes.
        let at = if len == 0 { start } else { start.saturating_sub(1) };
        if at < pos || at > lines.len() {
            return Err(err(format!("hunk starts at line {} but {} lines were consumed", at + 1, pos)));
        }
        out.extend_from_slice(&lines[pos..at]);
        pos = at;
        for hl in &h.lines {
            let (keep, consume) = match (hl.kind, reverse) {
                (LineKind::Context, _) => (true, true),
                (LineKind::Add, false) | (LineKind::Del, true) => (true, false),
                (LineKind::Del, false) | (LineKind::Add, true) => (false, true),
            };
            if consume {
                match lines.get(pos) {
                    Some(&l) if l == hl.text => {}
                    Some(&l) => return Err(err(format!("line {} is `{l}`, hunk expects `{}`", pos + 1, hl.text))),
                    None => return Err(err("hunk runs past the end of the file".into())),
                }
                pos += 1;
            }
            if keep {
                out.push(&hl.text);
            }
        }
    }
    out.extend_from_slice(&lines[pos..]);
    let mut s = out.join("\n");
    if trailing || (src.is_empty() && !s.is_empty()) {
        s.push('\n');
    }
    Ok(s)
}

/// Pre-image to post-image.
pub fn apply(pre: &str, patch: &FilePatch) -> Result<String, DiffError> {
    apply_dir(pre, patch, false)
}

/// Post-image back to pre-image.
pub fn reverse_apply(post: &str, patch: &FilePatch) -> Result<String, DiffError> {
    apply_dir(post, patch, true)
}

/// New-side line numbers (1-based) touched by the hunk. A deletion counts
/// against the line that now sits where the deleted text was.
pub fn touched_new_lines(h: &Hunk) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = if h.new_len == 0 { h.new_start + 1 } else { h.new_start };
    for l in &h.lines {
        match l.kind {
            LineKind::Context => n += 1,
            LineKind::Add => {
                out.push(n);
                n += 1;
            }
            LineKind::Del => out.push(n),
        }
    }
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRE: &str = "a\nb\nc\nd\ne\n";
    const DIFF: &str = "diff --git a/f.c b/f.c\n--- a/f.c\n+++ b/f.c\n@@ -2,3 +2,3 @@\n b\n-c\n+C\n+C2\n d\n@@ -5 +5,0 @@\n-e\n";

    #[test]
    fn parses_headers() {
        let p = parse(DIFF).unwrap_err();
        // The first hunk's header claims 3 new lines but carries 4.
        assert!(matches!(p, DiffError::Parse { .. }));
        let fixed = DIFF.replace("+2,3 @@", "+2,4 @@");
        let p = parse(&fixed).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].path(), "f.c");
        assert_eq!(p[0].hunks.len(), 2);
        assert_eq!(p[0].hunks[0].lines.len(), 5);
    }

    #[test]
    fn apply_round_trip() {
        let fixed = DIFF.replace("+2,3 @@", "+2,4 @@");
        let p = &parse(&fixed).unwrap()[0];
        let post = apply(PRE, p).unwrap();
        assert_eq!(post, "a\nb\nC\nC2\nd\n");
        assert_eq!(reverse_apply(&post, p).unwrap(), PRE);
        assert!(apply("x\n", p).is_err());
    }

    #[test]
    fn touched_lines() {
        let fixed = DIFF.replace("+2,3 @@", "+2,4 @@");
        let p = &parse(&fixed).unwrap()[0];
        assert_eq!(touched_new_lines(&p.hunks[0]), vec![3, 4]);
    }

    #[test]
    fn new_file() {
        let d = "--- /dev/null\n+++ b/n.c\n@@ -0,0 +1,2 @@\n+x\n+y\n";
        let p = &parse(d).unwrap()[0];
        assert_eq!(p.old_path, None);
        assert_eq!(apply("", p).unwrap(), "x\ny\n");
    }
}
