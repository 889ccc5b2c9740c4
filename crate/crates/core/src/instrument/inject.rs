//! Guarded insertion of annotation snippets and the checks run afterwards.
//!
//! A snippet goes at the end of its anchor's line as
//!
//! ```text
//! <anchor line>
//!
//! <indent>#ifdef _USE_IJON
//! <indent><snippet>
//! <indent>#endif
//! ```
//!
//! with the indent of the anchor line. Removing every such block gives back
//! the original bytes.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::anchor::{insertion_point, AnnotationSite};
use crate::csrc;
use crate::localize::{extract_functions, FunctionSpan};

pub const GUARD: &str = "_USE_IJON";

/// Global accessor macros a snippet may use without a local declaration.
pub const GLOBAL_ACCESSORS: &[&str] = &["EG", "CG", "PG", "SG", "BG"];

static BLOCK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\n\n([ \t]*)#ifdef _USE_IJON\n[ \t]*([^\n]*)\n[ \t]*#endif").expect("static regex")
});

/// A guard block found in a source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardBlock {
    pub start: usize,
    pub end: usize,
    pub snippet: String,
}

pub fn guard_block(indent: &str, snippet: &str) -> String {
    format!("\n\n{indent}#ifdef {GUARD}\n{indent}{snippet}\n{indent}#endif")
}

pub fn guard_blocks(source: &str) -> Vec<GuardBlock> {
    BLOCK
        .captures_iter(source)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            GuardBlock { start: m.start(), end: m.end(), snippet: c[2].to_string() }
        })
        .collect()
}

/// Removes every guard block.
pub fn strip_guards(source: &str) -> String {
    BLOCK.replace_all(source, "").into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("{function} already carries `{snippet}`")]
    Duplicate { function: String, snippet: String },
    #[error("site {0} given twice")]
    RepeatedSite(String),
    #[error("byte offset {0} is outside the file")]
    OutOfRange(usize),
}

fn functions_named<'a>(fns: &'a [FunctionSpan], name: &str) -> impl Iterator<Item = &'a FunctionSpan> + 'a {
    let name = name.to_string();
    fns.iter().filter(move |f| f.name == name)
}

/// Guard blocks carrying `snippet` inside functions called `function`.
fn copies_in_function(source: &str, function: &str, snippet: &str) -> usize {
    let fns = extract_functions(source).unwrap_or_default();
    let spans: Vec<(usize, usize)> = functions_named(&fns, function).map(|f| (f.body_start, f.end)).collect();
    guard_blocks(source)
        .iter()
        .filter(|b| b.snippet.trim_end() == snippet.trim_end() && spans.iter().any(|&(s, e)| s <= b.start && b.end <= e))
        .count()
}

/// Inserts one site. `site.byte_offset` must refer to `source`, or to a
/// text that differs from it only by guard blocks inserted after the offset.
pub fn inject(source: &str, site: &AnnotationSite) -> Result<String, InjectError> {
    if site.byte_offset > source.len() || !source.is_char_boundary(site.byte_offset) {
        return Err(InjectError::OutOfRange(site.byte_offset));
    }
    if copies_in_function(source, &site.function, &site.plan.snippet) > 0 {
        return Err(InjectError::Duplicate { function: site.function.clone(), snippet: site.plan.snippet.clone() });
    }
    let at = insertion_point(source, site.byte_offset);
    let block = guard_block(csrc::indent_at(source, site.byte_offset), &site.plan.snippet);
    let mut out = String::with_capacity(source.len() + block.len());
    out.push_str(&source[..at]);
    out.push_str(&block);
    out.push_str(&source[at..]);
    Ok(out)
}

/// Inserts several sites into one file. The result does not depend on the
/// order of `sites`.
pub fn inject_all(source: &str, sites: &[AnnotationSite]) -> Result<String, InjectError> {
    let mut order: Vec<(usize, &AnnotationSite)> = Vec::with_capacity(sites.len());
    for s in sites {
        if s.byte_offset > source.len() || !source.is_char_boundary(s.byte_offset) {
            return Err(InjectError::OutOfRange(s.byte_offset));
        }
        order.push((insertion_point(source, s.byte_offset), s));
    }
    order.sort_by(|a, b| (a.0, &a.1.site_id).cmp(&(b.0, &b.1.site_id)));
    for w in order.windows(2) {
        if w[0].1.site_id == w[1].1.site_id {
            return Err(InjectError::RepeatedSite(w[0].1.site_id.clone()));
        }
    }
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for (_, s) in &order {
        let key = (s.function.as_str(), s.plan.snippet.as_str());
        if seen.contains(&key) || copies_in_function(source, key.0, key.1) > 0 {
            return Err(InjectError::Duplicate { function: s.function.clone(), snippet: s.plan.snippet.clone() });
        }
        seen.push(key);
    }
    let mut out = String::with_capacity(source.len() + 64 * sites.len());
    let mut pos = 0;
    for (at, s) in &order {
        out.push_str(&source[pos..*at]);
        out.push_str(&guard_block(csrc::indent_at(source, s.byte_offset), &s.plan.snippet));
        pos = *at;
    }
    out.push_str(&source[pos..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum SafetyFailure {
    Syntax { detail: String },
    Scope { identifier: String },
    Duplicate { copies: usize },
    NotInjected,
    Compile { detail: String },
}

impl std::fmt::Display for SafetyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SafetyFailure::Syntax { detail } => write!(f, "syntax: {detail}"),
            SafetyFailure::Scope { identifier } => write!(f, "scope: `{identifier}` is not visible"),
            SafetyFailure::Duplicate { copies } => write!(f, "duplicate: {copies} copies in the function"),
            SafetyFailure::NotInjected => f.write_str("not-injected"),
            SafetyFailure::Compile { detail } => write!(f, "compile: {detail}"),
        }
    }
}

/// Snippet-level syntax: one balanced statement on one line.
pub fn check_snippet_syntax(snippet: &str) -> Result<(), SafetyFailure> {
    let fail = |d: &str| Err(SafetyFailure::Syntax { detail: d.into() });
    let s = snippet.trim();
    if s.is_empty() {
        return fail("empty snippet");
    }
    if s.contains('\n') {
        return fail("snippet spans several lines");
    }
    let m = csrc::mask(s, false);
    if csrc::check_balance(&m).is_err() || csrc::bracket_delta(&m) != (0, 0, 0) {
        return fail("unbalanced brackets in snippet");
    }
    if !s.ends_with(';') {
        return fail("snippet is not a terminated statement");
    }
    if s.trim_start().starts_with('#') {
        return fail("preprocessor lines are not allowed");
    }
    Ok(())
}

/// Identifiers the snippet uses that are not visible at the insertion
/// point. Visibility is lexical: the name occurs earlier in the function.
pub fn unseen_identifiers(function_prefix: &str, snippet: &str) -> Vec<String> {
    let known: Vec<&str> = csrc::identifiers(function_prefix).into_iter().map(|i| i.text).collect();
    let mut out = Vec::new();
    for id in csrc::identifiers(snippet) {
        let t = id.text;
        if id.member
            || accessor_field(snippet, id.offset)
            || csrc::KEYWORDS.contains(&t)
            || GLOBAL_ACCESSORS.contains(&t)
            || t.starts_with("IJON_")
            || known.contains(&t)
            || out.iter().any(|o| o == t)
        {
            continue;
        }
        out.push(t.to_string());
    }
    out
}

/// `EG(name)` and friends name a field of a globals struct, not a variable.
fn accessor_field(snippet: &str, offset: usize) -> bool {
    let Some(before) = snippet[..offset].trim_end().strip_suffix('(') else {
        return false;
    };
    GLOBAL_ACCESSORS.iter().any(|g| {
        before.trim_end().strip_suffix(g).is_some_and(|rest| !rest.ends_with(|c: char| c.is_ascii_alphanumeric() || c == '_'))
    })
}

/// Checks an injected file for one site. `new_source` is the annotated
/// file; the site's offset refers to the file with all guards removed.
pub fn safety_check(new_source: &str, site: &AnnotationSite) -> Result<(), SafetyFailure> {
    check_snippet_syntax(&site.plan.snippet)?;
    let after = extract_functions(new_source)
        .map_err(|u| SafetyFailure::Syntax { detail: format!("annotated file no longer parses: {u}") })?;
    if functions_named(&after, &site.function).next().is_none() {
        return Err(SafetyFailure::Syntax { detail: format!("function {} is gone", site.function) });
    }
    match copies_in_function(new_source, &site.function, &site.plan.snippet) {
        0 => return Err(SafetyFailure::NotInjected),
        1 => {}
        n => return Err(SafetyFailure::Duplicate { copies: n }),
    }
    let clean = strip_guards(new_source);
    let fns = extract_functions(&clean).unwrap_or_default();
    let Some(f) = functions_named(&fns, &site.function).find(|f| f.body_start <= site.byte_offset && site.byte_offset <= f.end)
    else {
        return Err(SafetyFailure::Syntax { detail: "site offset is outside its function".into() });
    };
    if let Some(identifier) = unseen_identifiers(&clean[f.start..site.byte_offset], &site.plan.snippet).into_iter().next() {
        return Err(SafetyFailure::Scope { identifier });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::anchor::{resolve_anchor, AnnotationPlan};
    use crate::runtime::Macro;

    const SRC: &str = "static int f(int a)\n{\n\tint x = a;\n\tif (x > 3) {\n\t\tx = g(x);\n\t}\n\treturn x;\n}\n";

    fn site(snippet: &str, pre: &str, post: &str) -> AnnotationSite {
        let plan = AnnotationPlan {
            macro_kind: Macro::Max,
            snippet: snippet.into(),
            insertion_description: String::new(),
            pre_anchor: pre.into(),
            post_anchor: post.into(),
            rationale: String::new(),
        };
        let f = &extract_functions(SRC).unwrap()[0];
        resolve_anchor(SRC, "f.c", f, &plan).unwrap()
    }

    #[test]
    fn inject_strip_and_check() {
        let s = site("IJON_MAX(x);", "x = g(x);", "}");
        let out = inject(SRC, &s).unwrap();
        assert!(out.contains("\t\tx = g(x);\n\n\t\t#ifdef _USE_IJON\n\t\tIJON_MAX(x);\n\t\t#endif\n\t}\n"));
        assert_eq!(strip_guards(&out), SRC);
        assert_eq!(safety_check(&out, &s), Ok(()));
        assert!(matches!(inject(&out, &s), Err(InjectError::Duplicate { .. })));
    }

    #[test]
    fn function_end_stays_balanced() {
        let s = site("IJON_MAX(a);", "return x;", "}");
        let out = inject(SRC, &s).unwrap();
        assert!(out.ends_with("\treturn x;\n\n\t#ifdef _USE_IJON\n\tIJON_MAX(a);\n\t#endif\n}\n"));
        assert_eq!(safety_check(&out, &s), Ok(()));
    }

    #[test]
    fn failures() {
        let s = site("IJON_MAX(tmp2);", "int x = a;", "if");
        let out = inject(SRC, &s).unwrap();
        assert_eq!(safety_check(&out, &s), Err(SafetyFailure::Scope { identifier: "tmp2".into() }));
        let s = site("IJON_MAX((x);", "int x = a;", "if");
        let out = inject(SRC, &s).unwrap();
        assert!(matches!(safety_check(&out, &s), Err(SafetyFailure::Syntax { .. })));
        let s = site("IJON_MAX(x);", "int x = a;", "if");
        assert_eq!(safety_check(SRC, &s), Err(SafetyFailure::NotInjected));
        // Members and global accessors need no declaration.
        assert!(unseen_identifiers("int f(void) {", "IJON_SET(EG(p)->len);").is_empty());
    }

    #[test]
    fn inject_all_is_order_independent() {
        let a = site("IJON_MAX(x);", "int x = a;", "if");
        let b = site("IJON_SET(a);", "int x = a;", "if");
        let c = site("IJON_MAX(x);", "x = g(x);", "}");
        // Same function, macro and snippet means the same site id.
        assert_eq!(a.site_id, c.site_id);
        assert!(matches!(inject_all(SRC, &[a.clone(), b.clone(), c]), Err(InjectError::RepeatedSite(_))));
        let one = inject_all(SRC, &[a.clone(), b.clone()]).unwrap();
        let two = inject_all(SRC, &[b.clone(), a.clone()]).unwrap();
        assert_eq!(one, two);
        assert_eq!(strip_guards(&one), SRC);
        assert_eq!(safety_check(&one, &a), Ok(()));
        assert_eq!(safety_check(&one, &b), Ok(()));
        assert!(matches!(inject_all(SRC, &[a.clone(), a]), Err(InjectError::RepeatedSite(_))));
    }
}
