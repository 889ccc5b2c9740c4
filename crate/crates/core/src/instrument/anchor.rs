//! Annotation plans and their resolution to byte positions.

use serde::{Deserialize, Serialize};

use crate::csrc;
use crate::localize::FunctionSpan;
use crate::runtime::{self, Macro};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPlan {
    #[serde(rename = "macro")]
    pub macro_kind: Macro,
    pub snippet: String,
    pub insertion_description: String,
    pub pre_anchor: String,
    pub post_anchor: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSite {
    pub file_path: String,
    pub function: String,
    /// End of the pre-anchor in the unannotated file.
    pub byte_offset: usize,
    pub plan: AnnotationPlan,
    /// Hex of `runtime::site_id(file_path, function, macro, snippet)`.
    pub site_id: String,
}

impl AnnotationSite {
    pub fn new(file_path: &str, function: &str, byte_offset: usize, plan: AnnotationPlan) -> Self {
        let id = runtime::site_id(file_path, function, plan.macro_kind, &plan.snippet);
        AnnotationSite {
            file_path: file_path.into(),
            function: function.into(),
            byte_offset,
            plan,
            site_id: format!("{id:016x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorError {
    #[error("anchor-missing")]
    AnchorMissing,
    #[error("anchor-ambiguous")]
    AnchorAmbiguous,
    /// Code follows the anchor on the same line, so the guard lines could
    /// not stand on their own lines there.
    #[error("anchor-mid-line")]
    AnchorMidLine,
}

/// Byte offsets in `hay` where `needle` ends, over all occurrences.
fn exact_ends(hay: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    hay.match_indices(needle).map(|(i, _)| i + needle.len()).collect()
}

/// Text with ASCII whitespace removed, plus each kept byte's original offset.
fn compact(s: &str) -> (String, Vec<usize>) {
    let mut out = String::with_capacity(s.len());
    let mut map = Vec::with_capacity(s.len());
    for (i, c) in s.char_indices() {
        if !c.is_ascii_whitespace() {
            out.push(c);
            map.extend((0..c.len_utf8()).map(|k| i + k));
        }
    }
    (out, map)
}

/// Consistent placements: pre-anchor ends followed somewhere by the post
/// anchor. The whitespace-insensitive pass runs only if the exact one
/// finds no placement at all.
fn placements(body: &str, pre: &str, post: &str) -> Vec<usize> {
    let exact: Vec<usize> = exact_ends(body, pre).into_iter().filter(|&e| body[e..].contains(post)).collect();
    if !exact.is_empty() {
        return exact;
    }
    let (cb, map) = compact(body);
    let (cpre, _) = compact(pre);
    let (cpost, _) = compact(post);
    if cpre.is_empty() || cpost.is_empty() {
        return Vec::new();
    }
    exact_ends(&cb, &cpre)
        .into_iter()
        .filter(|&e| cb[e..].contains(cpost.as_str()))
        .map(|e| map[e - 1] + 1)
        .collect()
}

/// Locates the plan inside `func` (a span of `source`). Never guesses: two
/// consistent placements are an error.
pub fn resolve_anchor(
    source: &str,
    file_path: &str,
    func: &FunctionSpan,
    plan: &AnnotationPlan,
) -> Result<AnnotationSite, AnchorError> {
    let body = &source[func.body_start..func.end];
    let found = placements(body, &plan.pre_anchor, &plan.post_anchor);
    let end = match found.as_slice() {
        [] => return Err(AnchorError::AnchorMissing),
        [e] => *e,
        _ => return Err(AnchorError::AnchorAmbiguous),
    };
    let offset = func.body_start + end;
    if !rest_of_line_is_blank(source, offset) {
        return Err(AnchorError::AnchorMidLine);
    }
    Ok(AnnotationSite::new(file_path, &func.name, offset, plan.clone()))
}

fn rest_of_line_is_blank(source: &str, offset: usize) -> bool {
    let eol = source[offset..].find('\n').map_or(source.len(), |p| offset + p);
    let m = csrc::mask(&source[offset..eol], false);
    // Comments mask to blanks, so a trailing comment is fine.
    m.iter().all(|c| c.is_ascii_whitespace())
}

/// Where the guard block goes for a site: the end of the anchor's line.
pub fn insertion_point(source: &str, byte_offset: usize) -> usize {
    source[byte_offset..].find('\n').map_or(source.len(), |p| byte_offset + p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localize::extract_functions;

    fn plan(pre: &str, post: &str) -> AnnotationPlan {
        AnnotationPlan {
            macro_kind: Macro::Set,
            snippet: "IJON_SET(x);".into(),
            insertion_description: String::new(),
            pre_anchor: pre.into(),
            post_anchor: post.into(),
            rationale: String::new(),
        }
    }

    const SRC: &str = "int f(int a)\n{\n    int x = a;\n    x = x + 1;\n    g(x);\n    x = x + 1;\n    return x;\n}\n";

    #[test]
    fn exact_and_ambiguous() {
        let f = &extract_functions(SRC).unwrap()[0];
        let s = resolve_anchor(SRC, "f.c", f, &plan("int x = a;", "g(x);")).unwrap();
        assert_eq!(&SRC[..s.byte_offset], "int f(int a)\n{\n    int x = a;");
        assert_eq!(resolve_anchor(SRC, "f.c", f, &plan("x = x + 1;", "return x;")), Err(AnchorError::AnchorAmbiguous));
        // The post anchor disambiguates.
        assert!(resolve_anchor(SRC, "f.c", f, &plan("x = x + 1;", "g(x);")).is_ok());
        assert_eq!(resolve_anchor(SRC, "f.c", f, &plan("y = 2;", "g(x);")), Err(AnchorError::AnchorMissing));
    }

    #[test]
    fn whitespace_fallback_and_mid_line() {
        let f = &extract_functions(SRC).unwrap()[0];
        let s = resolve_anchor(SRC, "f.c", f, &plan("int  x=a ;", "g(x);")).unwrap();
        assert_eq!(&SRC[..s.byte_offset], "int f(int a)\n{\n    int x = a;");
        assert_eq!(resolve_anchor(SRC, "f.c", f, &plan("int x", "g(x);")), Err(AnchorError::AnchorMidLine));
    }
}
