//! Deterministic stand-in for the chat model.
//!
//! The mock reads the same prompts a live model would get. It finds the task
//! and the payload sections by their tags and answers from an ordered rule
//! table (`data/mock_rules.json`) where the first matching rule wins. Its
//! output is JSON in the same shape a live model is asked for, so every
//! parser and validator downstream runs on it unchanged.

use regex::Regex;
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::Path;

use super::client::{ClientError, ModelClient};
use crate::csrc;

pub const BUNDLED_RULES: &str = include_str!("../../data/mock_rules.json");

#[derive(Deserialize)]
struct RawRules {
    relevance: Vec<RawRelevance>,
    cwe: Vec<RawCwe>,
    localize: Vec<RawLocalize>,
    localize_hint: Vec<RawLocalizeHint>,
    annotate: Vec<RawAnnotate>,
    annotate_cwe: Vec<RawAnnotateCwe>,
}

#[derive(Deserialize)]
struct RawRelevance {
    pattern: String,
    security: String,
    categories: Vec<u32>,
}
#[derive(Deserialize)]
struct RawCwe {
    pattern: String,
    cwe: u32,
}
#[derive(Deserialize)]
struct RawLocalize {
    pattern: String,
    functions: String,
    evidence: Vec<String>,
    confidence: String,
}
#[derive(Deserialize)]
struct RawLocalizeHint {
    cwe: Vec<u32>,
    functions: String,
    confidence: String,
}
#[derive(Deserialize)]
struct RawAnnotate {
    pattern: String,
    macros: Vec<String>,
}
#[derive(Deserialize)]
struct RawAnnotateCwe {
    cwe: Vec<u32>,
    macros: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RelevanceRule {
    pub pattern: Regex,
    pub security: String,
    pub categories: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct CweRule {
    pub pattern: Regex,
    pub cwe: u32,
}

#[derive(Debug, Clone)]
pub struct LocalizeRule {
    pub pattern: Regex,
    pub functions: Regex,
    pub evidence: Vec<String>,
    pub confidence: String,
}

#[derive(Debug, Clone)]
pub struct LocalizeHintRule {
    pub cwe: Vec<u32>,
    pub functions: Regex,
    pub confidence: String,
}

#[derive(Debug, Clone)]
pub struct AnnotateRule {
    pub pattern: Regex,
    pub macros: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnnotateCweRule {
    pub cwe: Vec<u32>,
    pub macros: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MockRules {
    pub relevance: Vec<RelevanceRule>,
    pub cwe: Vec<CweRule>,
    pub localize: Vec<LocalizeRule>,
    pub localize_hint: Vec<LocalizeHintRule>,
    pub annotate: Vec<AnnotateRule>,
    pub annotate_cwe: Vec<AnnotateCweRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("mock rules: {0}")]
    Json(#[from] serde_json::Error),
    #[error("mock rules, {section}[{index}]: {message}")]
    Rule { section: &'static str, index: usize, message: String },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

const CONFIDENCES: [&str; 3] = ["HIGH", "MEDIUM", "LOW"];
const MACROS: [&str; 8] = ["SET", "MAX", "MIN", "INC", "DIST", "BITS", "STATE", "CTX"];

impl MockRules {
    pub fn bundled() -> MockRules {
        Self::parse(BUNDLED_RULES).expect("bundled mock rules are valid")
    }

    pub fn load(path: &Path) -> Result<MockRules, RulesError> {
        let text = std::fs::read_to_string(path).map_err(|e| RulesError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<MockRules, RulesError> {
        let raw: RawRules = serde_json::from_str(text)?;
        let re = |section: &'static str, index: usize, p: &str| {
            Regex::new(p).map_err(|e| RulesError::Rule { section, index, message: e.to_string() })
        };
        let bad = |section: &'static str, index: usize, message: String| RulesError::Rule { section, index, message };

        let mut relevance = Vec::new();
        for (i, r) in raw.relevance.into_iter().enumerate() {
            // A lexicon hit must never turn into "no": that is the recall bias.
            if r.security != "yes" && r.security != "uncertain" {
                return Err(bad("relevance", i, format!("verdict `{}` (only yes or uncertain)", r.security)));
            }
            if r.categories.is_empty() || r.categories.len() > 3 {
                return Err(bad("relevance", i, "one to three categories required".into()));
            }
            relevance.push(RelevanceRule { pattern: re("relevance", i, &r.pattern)?, security: r.security, categories: r.categories });
        }
        let cwe = raw
            .cwe
            .into_iter()
            .enumerate()
            .map(|(i, r)| Ok(CweRule { pattern: re("cwe", i, &r.pattern)?, cwe: r.cwe }))
            .collect::<Result<_, RulesError>>()?;
        let mut localize = Vec::new();
        for (i, r) in raw.localize.into_iter().enumerate() {
            if !CONFIDENCES.contains(&r.confidence.as_str()) {
                return Err(bad("localize", i, format!("confidence `{}`", r.confidence)));
            }
            localize.push(LocalizeRule {
                pattern: re("localize", i, &r.pattern)?,
                functions: re("localize", i, &r.functions)?,
                evidence: r.evidence,
                confidence: r.confidence,
            });
        }
        let mut localize_hint = Vec::new();
        for (i, r) in raw.localize_hint.into_iter().enumerate() {
            if !CONFIDENCES.contains(&r.confidence.as_str()) {
                return Err(bad("localize_hint", i, format!("confidence `{}`", r.confidence)));
            }
            localize_hint.push(LocalizeHintRule {
                cwe: r.cwe,
                functions: re("localize_hint", i, &r.functions)?,
                confidence: r.confidence,
            });
        }
        let check_macros = |section: &'static str, i: usize, ms: &[String]| {
            match ms.iter().find(|m| !MACROS.contains(&m.as_str())) {
                Some(m) => Err(bad(section, i, format!("unknown macro `{m}`"))),
                None => Ok(()),
            }
        };
        let mut annotate = Vec::new();
        for (i, r) in raw.annotate.into_iter().enumerate() {
            check_macros("annotate", i, &r.macros)?;
            annotate.push(AnnotateRule { pattern: re("annotate", i, &r.pattern)?, macros: r.macros });
        }
        let mut annotate_cwe = Vec::new();
        for (i, r) in raw.annotate_cwe.into_iter().enumerate() {
            check_macros("annotate_cwe", i, &r.macros)?;
            annotate_cwe.push(AnnotateCweRule { cwe: r.cwe, macros: r.macros });
        }
        Ok(MockRules { relevance, cwe, localize, localize_hint, annotate, annotate_cwe })
    }
}

/// Text between `<name>` and the last `</name>`, trimmed of the newline
/// padding the templates add.
pub fn tag<'a>(payload: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("<{name}>");
    let close = format!("</{name}>");
    let s = payload.find(&open)? + open.len();
    let e = payload[s..].rfind(&close)? + s;
    Some(payload[s..e].trim_matches('\n'))
}

pub struct MockClient {
    pub rules: MockRules,
}

impl MockClient {
    pub fn new(rules: MockRules) -> Self {
        MockClient { rules }
    }

    pub fn bundled() -> Self {
        Self::new(MockRules::bundled())
    }
}

impl Default for MockClient {
    fn default() -> Self {
        Self::bundled()
    }
}

impl ModelClient for MockClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, _system: &str, user: &str, _max_tokens: u32) -> Result<String, ClientError> {
        let task = tag(user, "task").unwrap_or("");
        let comment = tag(user, "comment").unwrap_or("");
        let v = match task {
            "relevance" => self.relevance(comment, tag(user, "categories").unwrap_or("")),
            "cwe" => self.cwe(comment, tag(user, "pack").unwrap_or("")),
            "localize_candidates" => {
                self.localize_candidates(comment, tag(user, "candidates").unwrap_or(""), tag(user, "cwe_hint"))
            }
            "localize_verify" => self.localize_verify(comment, tag(user, "diffs").unwrap_or("")),
            "annotate" => self.annotate(comment, tag(user, "cwe_hint"), user),
            other => json!({"error": format!("unsupported task `{other}`")}),
        };
        Ok(v.to_string())
    }
}

fn listed_ids(text: &str) -> Vec<u32> {
    let re = Regex::new(r"(?m)^CWE-(\d+)").expect("static regex");
    re.captures_iter(text).filter_map(|c| c[1].parse().ok()).collect()
}

/// Subcategory id named on the hint's `Subcategory:` line.
fn hint_cwe(hint: Option<&str>) -> Option<u32> {
    let re = Regex::new(r"(?m)^Subcategory:.*\(CWE-(\d+)\)").expect("static regex");
    re.captures(hint?)?[1].parse().ok()
}

impl MockClient {
    fn relevance(&self, comment: &str, categories: &str) -> Value {
        let offered = listed_ids(categories);
        for r in &self.rules.relevance {
            let Some(m) = r.pattern.find(comment) else { continue };
            let cats: Vec<u32> = r.categories.iter().copied().filter(|c| offered.contains(c)).collect();
            if cats.is_empty() {
                continue;
            }
            return json!({"security": r.security, "categories": cats, "signals": [m.as_str()]});
        }
        json!({"security": "no", "categories": [], "signals": []})
    }

    fn cwe(&self, comment: &str, pack: &str) -> Value {
        let re = Regex::new(r"(?m)^CWE-(\d+) \(subcategory\): (.*?) — ").expect("static regex");
        let subs: Vec<(u32, String)> = re
            .captures_iter(pack)
            .filter_map(|c| Some((c[1].parse().ok()?, c[2].to_string())))
            .collect();
        for r in &self.rules.cwe {
            let Some(m) = r.pattern.find(comment) else { continue };
            if let Some((id, title)) = subs.iter().find(|s| s.0 == r.cwe) {
                return json!({
                    "security": "yes",
                    "subcategory": {"id": id, "title": title},
                    "rationale": format!("The comment says \"{}\", which is a case of {title}.", m.as_str()),
                });
            }
        }
        json!({
            "security": "no",
            "subcategory": null,
            "rationale": "Nothing in the comment matches a weakness in the supplied pack.",
        })
    }

    fn localize_candidates(&self, comment: &str, candidates: &str, hint: Option<&str>) -> Value {
        let cands: Vec<(&str, &str)> = candidates
            .lines()
            .filter_map(|l| l.trim().strip_prefix("- ")?.split_once(": "))
            .collect();
        let pick = |functions: &Regex| -> Vec<(&str, &str)> {
            cands.iter().copied().filter(|(_, f)| functions.is_match(f)).collect()
        };
        let ranked = |hits: &[(&str, &str)], why: String| -> Vec<Value> {
            hits.iter()
                .map(|(file, f)| json!({"file_path": file, "function": f, "justification": why}))
                .collect()
        };
        // The comment decides first; the hint only breaks a tie of silence.
        for r in &self.rules.localize {
            let Some(m) = r.pattern.find(comment) else { continue };
            let hits = pick(&r.functions);
            if hits.is_empty() {
                continue;
            }
            let rejected: Vec<Value> = cands
                .iter()
                .filter(|c| !hits.contains(c))
                .map(|(file, f)| json!({"file_path": file, "function": f, "reason": "name unrelated to the concern"}))
                .collect();
            return json!({
                "concern": format!("review concern about \"{}\"", m.as_str()),
                "ranked": ranked(&hits, format!("name matches the \"{}\" concern", m.as_str())),
                "rejected": rejected,
                "confidence": r.confidence,
                "cwe_used": false,
            });
        }
        if let Some(cwe) = hint_cwe(hint) {
            for r in self.rules.localize_hint.iter().filter(|r| r.cwe.contains(&cwe)) {
                let hits = pick(&r.functions);
                if hits.is_empty() {
                    continue;
                }
                return json!({
                    "concern": format!("weakness of kind CWE-{cwe}"),
                    "ranked": ranked(&hits, format!("name fits CWE-{cwe}")),
                    "rejected": [],
                    "confidence": r.confidence,
                    "cwe_used": true,
                });
            }
        }
        json!({"concern": "no candidate relates to the comment", "ranked": [], "rejected": [], "confidence": null, "cwe_used": false})
    }

    fn localize_verify(&self, comment: &str, diffs: &str) -> Value {
        let (evidence, confidence): (Vec<String>, &str) = match self.rules.localize.iter().find(|r| r.pattern.is_match(comment)) {
            Some(r) => (r.evidence.clone(), r.confidence.as_str()),
            None => (long_words(comment), "LOW"),
        };
        let head = Regex::new(r#"<candidate file="([^"]*)" function="([^"]*)">"#).expect("static regex");
        let mut selected = Vec::new();
        let mut rejected = Vec::new();
        for sec in diffs.split("</candidate>") {
            let Some(c) = head.captures(sec) else { continue };
            let body = &sec[c.get(0).expect("match").end()..];
            let cited = body.lines().find_map(|l| {
                let changed = l.strip_prefix('+').or_else(|| l.strip_prefix('-'))?;
                if changed.starts_with("++") || changed.starts_with("--") {
                    return None;
                }
                let t = changed.trim();
                evidence.iter().any(|e| t.contains(e.as_str())).then_some(t)
            });
            match cited {
                Some(line) if !line.is_empty() => selected.push(json!({
                    "file_path": &c[1],
                    "function": &c[2],
                    "cited_lines": [line],
                    "justification": "the changed line touches the value the comment is about",
                })),
                _ => rejected.push(json!({
                    "file_path": &c[1],
                    "function": &c[2],
                    "reason": "no changed line carries evidence for the concern",
                })),
            }
        }
        let confidence = if selected.is_empty() { Value::Null } else { json!(confidence) };
        json!({"selected": selected, "rejected": rejected, "confidence": confidence})
    }

    fn annotate(&self, comment: &str, hint: Option<&str>, payload: &str) -> Value {
        let head = Regex::new(r#"<function name="([^"]*)" file="([^"]*)">\n"#).expect("static regex");
        let Some(c) = head.captures(payload) else {
            return json!({"annotations": []});
        };
        let start = c.get(0).expect("match").end();
        let end = payload.rfind("\n</function>").unwrap_or(payload.len()).max(start);
        let function = &payload[start..end];
        let macros: Vec<String> = match self.rules.annotate.iter().find(|r| r.pattern.is_match(comment)) {
            Some(r) => r.macros.clone(),
            None => match hint_cwe(hint) {
                Some(cwe) => self
                    .rules
                    .annotate_cwe
                    .iter()
                    .find(|r| r.cwe.contains(&cwe))
                    .map(|r| r.macros.clone())
                    .unwrap_or_default(),
                None => Vec::new(),
            },
        };
        let mut plans = Vec::new();
        for m in &macros {
            plans.extend(plans_for(m, function));
        }
        plans.truncate(5);
        json!({"annotations": plans})
    }
}

fn long_words(s: &str) -> Vec<String> {
    let re = Regex::new(r"[A-Za-z_][A-Za-z0-9_]{3,}").expect("static regex");
    re.find_iter(s).map(|m| m.as_str().to_string()).collect()
}

/// One code line of a function: its trimmed text and byte range.
struct Line<'a> {
    text: &'a str,
    start: usize,
    end: usize,
}

fn code_lines(function: &str) -> Vec<Line<'_>> {
    let masked = csrc::mask(function, true);
    csrc::line_spans(function)
        .into_iter()
        .filter_map(|(s, e)| {
            let code = std::str::from_utf8(&masked[s..e]).ok()?.trim();
            if code.is_empty() {
                return None;
            }
            let raw = &function[s..e];
            let lead = raw.len() - raw.trim_start().len();
            // Keep the verbatim text but cut trailing comments off.
            let code_end = s + masked[s..e].iter().rposition(|c| !c.is_ascii_whitespace())? + 1;
            Some(Line { text: &function[s + lead..code_end], start: s + lead, end: code_end })
        })
        .collect()
}

/// The shortest run of whole lines ending at line `i` whose text occurs only
/// once in the function.
fn unique_pre_anchor<'a>(function: &'a str, lines: &[Line<'a>], i: usize) -> &'a str {
    let end = lines[i].end;
    for back in 0..3.min(i + 1) {
        let a = &function[lines[i - back].start..end];
        if function.matches(a).count() == 1 {
            return a;
        }
    }
    &function[lines[i.saturating_sub(2)].start..end]
}

fn assignment(stmt: &str) -> Option<(&str, &str)> {
    let body = stmt.strip_suffix(';')?;
    let b = body.as_bytes();
    let pos = (1..b.len().saturating_sub(1)).find(|&k| {
        b[k] == b'=' && b[k + 1] != b'=' && !matches!(b[k - 1], b'=' | b'!' | b'<' | b'>' | b'+' | b'-' | b'*' | b'/' | b'%' | b'&' | b'|' | b'^')
    })?;
    let lhs = body[..pos].trim();
    let rhs = body[pos + 1..].trim();
    (!lhs.is_empty() && !rhs.is_empty()).then_some((lhs, rhs))
}

/// `size_t n` declares; `EG(x)`, `p->len` and `n` do not.
fn declared_name(lhs: &str) -> Option<&str> {
    if lhs.contains(['(', '[', '.']) || lhs.contains("->") {
        return None;
    }
    let mut parts = lhs.split_whitespace();
    parts.next()?;
    Some(parts.last()?.trim_start_matches('*'))
}

fn is_constant(rhs: &str) -> bool {
    let r = rhs.trim_start_matches('-');
    r.bytes().all(|c| c.is_ascii_digit())
        || (r.bytes().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == b'_') && !r.is_empty())
        || matches!(r, "NULL" | "true" | "false")
}

fn is_simple_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_') && !s.as_bytes()[0].is_ascii_digit()
}

/// Inner text of `if (...)` / `switch (...)` when it is on one line.
fn header_condition<'a>(text: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = text.strip_prefix(keyword)?.trim_start();
    let inner = rest.strip_prefix('(')?;
    let mut depth = 1;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(inner[..i].trim());
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits `a OP b` at the first top-level relational operator.
fn relation(cond: &str) -> Option<(&str, &str, &str)> {
    if cond.contains("&&") || cond.contains("||") {
        return None;
    }
    let b = cond.as_bytes();
    let mut depth = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            b'<' | b'>' if depth == 0 => {
                let prev = if i > 0 { b[i - 1] } else { b' ' };
                let next = b.get(i + 1).copied().unwrap_or(b' ');
                if prev == b'-' || next == b[i] || prev == b[i] {
                    i += 2;
                    continue;
                }
                let len = if next == b'=' { 2 } else { 1 };
                let (a, op, c) = (cond[..i].trim(), &cond[i..i + len], cond[i + len..].trim());
                return (!a.is_empty() && !c.is_empty()).then_some((a, op, c));
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn paren(e: &str) -> String {
    if is_simple_ident(e) {
        e.to_string()
    } else {
        format!("({e})")
    }
}

fn plan(macro_: &str, snippet: String, where_: String, pre: &str, post: &str, rationale: String) -> Value {
    json!({
        "macro": macro_,
        "snippet": snippet,
        "insertion_description": where_,
        "pre_anchor": pre,
        "post_anchor": post,
        "rationale": rationale,
    })
}

/// Candidate plans for one macro, in source order.
fn plans_for(macro_: &str, function: &str) -> Vec<Value> {
    let lines = code_lines(function);
    let mut out = Vec::new();
    // Statements inside the body only: skip the signature and brace lines.
    let body: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].start > function.find('{').unwrap_or(0)).collect();
    for &i in &body {
        let l = &lines[i];
        let Some(next) = lines.get(i + 1) else { continue };
        let after = |snippet: String, rationale: String| {
            plan(
                macro_,
                snippet,
                format!("after `{}`", l.text),
                unique_pre_anchor(function, &lines, i),
                next.text,
                rationale,
            )
        };
        let before = |snippet: String, rationale: String| {
            let prev = i.checked_sub(1)?;
            if lines[prev].start < function.find('{').unwrap_or(0) {
                return None;
            }
            Some(plan(
                macro_,
                snippet,
                format!("before `{}`", l.text),
                unique_pre_anchor(function, &lines, prev),
                l.text,
                rationale,
            ))
        };
        match macro_ {
            "SET" => {
                // Values committed to state that outlives the call.
                if let Some((lhs, rhs)) = assignment(l.text) {
                    let committed = lhs.contains('(') || lhs.contains("->") || lhs.contains('.');
                    if committed && declared_name(lhs).is_none() && !is_constant(rhs) {
                        out.push(after(
                            format!("IJON_SET({lhs});"),
                            format!("Keeps inputs that commit new values to `{lhs}` even when control flow is unchanged."),
                        ));
                    }
                }
            }
            "MAX" | "BITS" => {
                if let Some((lhs, rhs)) = assignment(l.text) {
                    let var = declared_name(lhs).unwrap_or(lhs);
                    if is_simple_ident(var) && !is_constant(rhs) {
                        let what = if macro_ == "MAX" { "magnitude" } else { "set bits" };
                        out.push(after(
                            format!("IJON_{macro_}({var});"),
                            format!("Rewards inputs that push the {what} of `{var}` further."),
                        ));
                    }
                }
            }
            "MIN" | "DIST" => {
                if let Some((a, op, b)) = header_condition(l.text, "if").and_then(relation) {
                    let snippet = if macro_ == "DIST" {
                        format!("IJON_DIST({a}, {b});")
                    } else if op.starts_with('>') {
                        format!("IJON_MIN({} - {});", paren(b), paren(a))
                    } else {
                        format!("IJON_MIN({} - {});", paren(a), paren(b))
                    };
                    if let Some(p) = before(snippet, format!("Rewards inputs that bring `{a}` and `{b}` closer to the `{op}` boundary.")) {
                        out.push(p);
                    }
                }
            }
            "STATE" => {
                if let Some((lhs, rhs)) = assignment(l.text) {
                    if lhs.to_ascii_lowercase().contains("state") && declared_name(lhs).is_none() && !is_constant(rhs) {
                        out.push(after(
                            format!("IJON_STATE({lhs});"),
                            format!("Treats each value of `{lhs}` as a distinct protocol state."),
                        ));
                    }
                }
            }
            "CTX" => {
                if let Some(expr) = header_condition(l.text, "switch") {
                    if let Some(p) = before(format!("IJON_CTX({expr});"), format!("Separates feedback by the value of `{expr}`.")) {
                        out.push(p);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_rules_load() {
        let r = MockRules::bundled();
        assert!(r.relevance.iter().all(|r| r.security != "no"));
    }

    #[test]
    fn rejects_no_verdict_rule() {
        let text = BUNDLED_RULES.replacen("\"security\": \"yes\"", "\"security\": \"no\"", 1);
        assert!(matches!(MockRules::parse(&text), Err(RulesError::Rule { section: "relevance", index: 0, .. })));
    }

    #[test]
    fn tags() {
        let p = "<task>cwe</task>\n<comment>\nhello\n</comment>";
        assert_eq!(tag(p, "task"), Some("cwe"));
        assert_eq!(tag(p, "comment"), Some("hello"));
        assert_eq!(tag(p, "pack"), None);
    }

    #[test]
    fn assignment_forms() {
        assert_eq!(assignment("EG(x) = tmp;"), Some(("EG(x)", "tmp")));
        assert_eq!(assignment("n += 1;"), None);
        assert_eq!(assignment("if (a == b);"), None);
        assert_eq!(declared_name("zend_long tmp"), Some("tmp"));
        assert_eq!(declared_name("EG(x)"), None);
        assert_eq!(declared_name("n"), None);
    }

    #[test]
    fn relations() {
        assert_eq!(relation("len + n > cap"), Some(("len + n", ">", "cap")));
        assert_eq!(relation("p->len <= max"), Some(("p->len", "<=", "max")));
        assert_eq!(relation("a << 2"), None);
        assert_eq!(relation("a < b && c"), None);
    }

    const FIBER: &str = "static ZEND_INI_MH(OnUpdateFiberStackSize)\n{\n\tif (new_value) {\n\t\tzend_long tmp = zend_ini_parse_quantity_warn(new_value, name);\n\t\tif (tmp < 0) {\n\t\t\treturn FAILURE;\n\t\t}\n\t\tEG(fiber_stack_size) = tmp;\n\t} else {\n\t\tEG(fiber_stack_size) = ZEND_FIBER_DEFAULT_C_STACK_SIZE;\n\t}\n\treturn SUCCESS;\n}";

    #[test]
    fn set_plan_on_committed_value() {
        let plans = plans_for("SET", FIBER);
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0]["snippet"], "IJON_SET(EG(fiber_stack_size));");
        assert_eq!(plans[0]["pre_anchor"], "EG(fiber_stack_size) = tmp;");
        assert_eq!(plans[0]["post_anchor"], "} else {");
    }
}
