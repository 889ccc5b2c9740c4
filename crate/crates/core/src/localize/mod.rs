//! From a classified comment to the functions it is about.
//!
//! Candidates are the functions a pull request changed. Step 1 shows the
//! model only their names and paths and lets it rank or abstain. Step 2
//! shows the hunks of the top three and keeps a candidate only if the model
//! cites a diff line that really is in those hunks.

pub mod diff;
pub mod functions;

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::classify::{ask_with_repair, parse_object, ClientError, ModelClient, PromptSet};
pub use diff::{FilePatch, Hunk};
pub use functions::{extract_functions, FunctionSpan};

/// Step-2 sees at most this many Step-1 candidates.
pub const VERIFY_TOP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedFunction {
    pub file_path: String,
    pub name: String,
    /// Post-image line span, 1-based and inclusive.
    pub span: (usize, usize),
    /// Verbatim hunks overlapping the span.
    pub hunks: Vec<String>,
}

impl ChangedFunction {
    pub fn reference(&self) -> FunctionRef {
        FunctionRef { file_path: self.file_path.clone(), function: self.name.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionRef {
    pub file_path: String,
    pub function: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

impl Confidence {
    fn parse(s: &str) -> Option<Confidence> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HIGH" => Some(Confidence::High),
            "MEDIUM" => Some(Confidence::Medium),
            "LOW" => Some(Confidence::Low),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranked {
    pub file_path: String,
    pub function: String,
    pub justification: String,
    /// Diff lines backing the choice; empty after Step 1.
    pub cited_lines: Vec<String>,
}

impl Ranked {
    pub fn reference(&self) -> FunctionRef {
        FunctionRef { file_path: self.file_path.clone(), function: self.function.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub file_path: String,
    pub function: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub concern: String,
    pub ranked: Vec<Ranked>,
    pub rejected: Vec<Rejected>,
    pub confidence: Option<Confidence>,
    pub cwe_used: bool,
    pub abstained: bool,
}

impl LocalizationResult {
    fn abstain(concern: String, rejected: Vec<Rejected>, cwe_used: bool) -> Self {
        LocalizationResult { concern, ranked: Vec::new(), rejected, confidence: None, cwe_used, abstained: true }
    }

    /// Checks the structural invariants against the candidate set.
    pub fn check(&self, candidates: &[FunctionRef]) -> Result<(), String> {
        if self.abstained != self.ranked.is_empty() {
            return Err("abstained must hold exactly when nothing is ranked".into());
        }
        if self.abstained == self.confidence.is_some() {
            return Err("confidence must be present exactly when not abstained".into());
        }
        match self.ranked.iter().find(|r| !candidates.contains(&r.reference())) {
            Some(r) => Err(format!("{}:{} is not a candidate", r.file_path, r.function)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("repository checkout {0} does not exist")]
    MissingCheckout(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Diff { path: PathBuf, source: diff::DiffError },
    #[error("{path}: the diff does not turn the pre-image into the post-image")]
    Inconsistent { path: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Changed functions of one file. The post-image's function boundaries are
/// matched against the lines the patch touched.
pub fn extract_changed_functions(
    file_path: &str,
    pre: &str,
    post: &str,
    patch: &FilePatch,
) -> Result<Result<Vec<ChangedFunction>, functions::Unbalanced>, LocalizeError> {
    let applied = diff::apply(pre, patch).map_err(|source| LocalizeError::Diff { path: file_path.into(), source })?;
    if applied != post {
        return Err(LocalizeError::Inconsistent { path: file_path.into() });
    }
    let fns = match extract_functions(post) {
        Ok(f) => f,
        Err(u) => return Ok(Err(u)),
    };
    let touched: Vec<usize> = patch.hunks.iter().flat_map(diff::touched_new_lines).collect();
    let mut out = Vec::new();
    for f in fns {
        if !touched.iter().any(|&l| f.start_line <= l && l <= f.end_line) {
            continue;
        }
        let hunks = patch
            .hunks
            .iter()
            .filter(|h| {
                let (s, e) = (h.new_start, h.new_start + h.new_len.max(1) - 1);
                s <= f.end_line && f.start_line <= e
            })
            .map(|h| h.raw.clone())
            .collect();
        out.push(ChangedFunction { file_path: file_path.into(), name: f.name, span: (f.start_line, f.end_line), hunks });
    }
    Ok(Ok(out))
}

/// Changed functions of a whole pull request against a checkout holding
/// the post-images. Files that cannot be scanned become warnings.
pub fn changed_functions_for_pr(
    checkout: &Path,
    diff_text: &str,
    diff_path: &Path,
) -> Result<(Vec<ChangedFunction>, Vec<String>), LocalizeError> {
    if !checkout.is_dir() {
        return Err(LocalizeError::MissingCheckout(checkout.to_path_buf()));
    }
    let patches = diff::parse(diff_text).map_err(|source| LocalizeError::Diff { path: diff_path.into(), source })?;
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for p in &patches {
        let Some(new_path) = &p.new_path else { continue };
        let full = checkout.join(new_path);
        let post = match fs::read_to_string(&full) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("{new_path}: skipped, cannot read post-image: {e}"));
                continue;
            }
        };
        let pre = if p.old_path.is_none() {
            String::new()
        } else {
            diff::reverse_apply(&post, p).map_err(|source| LocalizeError::Diff { path: diff_path.into(), source })?
        };
        match extract_changed_functions(new_path, &pre, &post, p)? {
            Ok(fs) => out.extend(fs),
            Err(u) => warnings.push(format!("{new_path}: skipped, {u}")),
        }
    }
    Ok((out, warnings))
}

#[derive(Deserialize)]
struct RawRef {
    #[serde(default)]
    file_path: String,
    function: String,
    #[serde(default)]
    justification: String,
    #[serde(default)]
    reason: String,
    #[serde(default)]
    cited_lines: Vec<String>,
}

#[derive(Deserialize)]
struct RawStep {
    #[serde(default)]
    concern: String,
    #[serde(default)]
    ranked: Vec<RawRef>,
    #[serde(default)]
    selected: Vec<RawRef>,
    #[serde(default)]
    rejected: Vec<RawRef>,
    confidence: Option<String>,
    #[serde(default)]
    cwe_used: bool,
}

fn parse_step(reply: &str) -> Result<RawStep, String> {
    let raw: RawStep = serde_json::from_value(parse_object(reply)?).map_err(|e| format!("schema: {e}"))?;
    if let Some(c) = &raw.confidence {
        Confidence::parse(c).ok_or_else(|| format!("confidence must be HIGH, MEDIUM or LOW, got `{c}`"))?;
    }
    Ok(raw)
}

fn render(name: &str, template: &str, vars: &[(&str, &str)]) -> String {
    crate::classify::render(name, template, vars).expect("validated at load")
}

/// Matches a model-named function to a candidate; the path may be omitted
/// when the name alone is unambiguous.
fn resolve<'a>(r: &RawRef, candidates: &'a [FunctionRef]) -> Option<&'a FunctionRef> {
    let mut hits = candidates.iter().filter(|c| c.function == r.function.trim());
    let path = r.file_path.trim();
    if path.is_empty() {
        let first = hits.next()?;
        return hits.next().is_none().then_some(first);
    }
    hits.find(|c| c.file_path == path)
}

fn rejected_from(raw: &[RawRef]) -> Vec<Rejected> {
    raw.iter()
        .map(|r| Rejected { file_path: r.file_path.clone(), function: r.function.clone(), reason: r.reason.clone() })
        .collect()
}

/// Step 1: rank candidates by name and path only.
pub fn select_candidates(
    comment: &str,
    candidates: &[FunctionRef],
    cwe_hint: Option<&str>,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> Result<LocalizationResult, ClientError> {
    let list: String = candidates.iter().map(|c| format!("- {}: {}\n", c.file_path, c.function)).collect();
    let user = render(
        "localize_step1_user.txt",
        &prompts.localize_step1_user,
        &[("comment", comment), ("candidates", list.trim_end()), ("cwe_hint", cwe_hint.unwrap_or("none"))],
    );
    let raw = match ask_with_repair(client, prompts, &prompts.localize_step1_system, &user, max_tokens, parse_step)? {
        Ok(r) => r,
        Err(e) => return Ok(LocalizationResult::abstain(format!("unusable model output: {e}"), Vec::new(), false)),
    };
    let cwe_used = raw.cwe_used && cwe_hint.is_some();
    let mut rejected = rejected_from(&raw.rejected);
    let mut ranked: Vec<Ranked> = Vec::new();
    for r in &raw.ranked {
        match resolve(r, candidates) {
            Some(c) if !ranked.iter().any(|x| x.reference() == *c) => ranked.push(Ranked {
                file_path: c.file_path.clone(),
                function: c.function.clone(),
                justification: r.justification.clone(),
                cited_lines: Vec::new(),
            }),
            Some(_) => {}
            None => rejected.push(Rejected {
                file_path: r.file_path.clone(),
                function: r.function.clone(),
                reason: "dropped: not among the candidates".into(),
            }),
        }
    }
    if ranked.is_empty() {
        return Ok(LocalizationResult::abstain(raw.concern, rejected, cwe_used));
    }
    let confidence = raw.confidence.as_deref().and_then(Confidence::parse).unwrap_or(Confidence::Low);
    Ok(LocalizationResult { concern: raw.concern, ranked, rejected, confidence: Some(confidence), cwe_used, abstained: false })
}

/// Step 2: confirm against the actual hunks of the top candidates.
pub fn verify_with_diffs(
    comment: &str,
    step1: &LocalizationResult,
    changed: &[ChangedFunction],
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> Result<LocalizationResult, ClientError> {
    if step1.abstained {
        return Ok(step1.clone());
    }
    let top: Vec<&ChangedFunction> = step1
        .ranked
        .iter()
        .take(VERIFY_TOP)
        .filter_map(|r| changed.iter().find(|c| c.file_path == r.file_path && c.name == r.function))
        .collect();
    let top_refs: Vec<FunctionRef> = top.iter().map(|c| c.reference()).collect();
    let mut diffs = String::new();
    for c in &top {
        diffs.push_str(&format!("<candidate file=\"{}\" function=\"{}\">\n", c.file_path, c.name));
        for h in &c.hunks {
            diffs.push_str(h);
            if !h.ends_with('\n') {
                diffs.push('\n');
            }
        }
        diffs.push_str("</candidate>\n");
    }
    let user = render(
        "localize_step2_user.txt",
        &prompts.localize_step2_user,
        &[("comment", comment), ("diffs", diffs.trim_end())],
    );
    let raw = match ask_with_repair(client, prompts, &prompts.localize_step2_system, &user, max_tokens, parse_step)? {
        Ok(r) => r,
        Err(e) => {
            return Ok(LocalizationResult::abstain(format!("unusable model output: {e}"), Vec::new(), step1.cwe_used));
        }
    };
    let mut rejected = rejected_from(&raw.rejected);
    let mut ranked: Vec<Ranked> = Vec::new();
    for r in &raw.selected {
        let reject = |reason: &str| Rejected { file_path: r.file_path.clone(), function: r.function.clone(), reason: reason.into() };
        let Some(c) = resolve(r, &top_refs) else {
            rejected.push(reject("dropped: not among the verified candidates"));
            continue;
        };
        let hunks = &top[top_refs.iter().position(|t| t == c).expect("resolved from top_refs")].hunks;
        let cited: Vec<String> = r.cited_lines.iter().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        let grounded = !cited.is_empty() && cited.iter().all(|l| hunks.iter().any(|h| h.contains(l.as_str())));
        if !grounded {
            rejected.push(reject("rejected: cited line is not in the candidate's hunks"));
            continue;
        }
        if ranked.iter().any(|x| x.reference() == *c) {
            continue;
        }
        ranked.push(Ranked {
            file_path: c.file_path.clone(),
            function: c.function.clone(),
            justification: r.justification.clone(),
            cited_lines: cited,
        });
    }
    if ranked.is_empty() {
        return Ok(LocalizationResult::abstain(step1.concern.clone(), rejected, step1.cwe_used));
    }
    let confidence = raw.confidence.as_deref().and_then(Confidence::parse).unwrap_or(Confidence::Low);
    Ok(LocalizationResult {
        concern: step1.concern.clone(),
        ranked,
        rejected,
        confidence: Some(confidence),
        cwe_used: step1.cwe_used,
        abstained: false,
    })
}

/// One line of the localization artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub comment_id: String,
    pub pr_id: String,
    pub cwe: Option<u32>,
    pub hint_given: bool,
    pub candidates: Vec<FunctionRef>,
    pub step1: Option<LocalizationResult>,
    pub result: LocalizationResult,
    pub warnings: Vec<String>,
}

pub const ARTIFACT: &str = "localization";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationMeta {
    /// Revision label of the checkout, not its path, so that artifacts
    /// do not depend on where the checkout lives.
    pub revision: String,
    pub cwe_hint: bool,
}

/// Runs both steps for one comment against its PR's changed functions.
#[allow(clippy::too_many_arguments)]
pub fn localize_comment(
    comment_id: &str,
    pr_id: &str,
    body: &str,
    cwe: Option<u32>,
    cwe_hint: Option<&str>,
    changed: &[ChangedFunction],
    mut warnings: Vec<String>,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> Result<LocalizationRecord, ClientError> {
    let candidates: Vec<FunctionRef> = changed.iter().map(|c| c.reference()).collect();
    let (step1, result) = if candidates.is_empty() {
        warnings.push("no changed functions to choose from".into());
        (None, LocalizationResult::abstain("no candidates".into(), Vec::new(), false))
    } else {
        let s1 = select_candidates(body, &candidates, cwe_hint, client, prompts, max_tokens)?;
        let s2 = verify_with_diffs(body, &s1, changed, client, prompts, max_tokens)?;
        (Some(s1), s2)
    };
    Ok(LocalizationRecord {
        comment_id: comment_id.into(),
        pr_id: pr_id.into(),
        cwe,
        hint_given: cwe_hint.is_some(),
        candidates,
        step1,
        result,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::MockClient;

    fn cf(name: &str, hunk: &str) -> ChangedFunction {
        ChangedFunction { file_path: "a.c".into(), name: name.into(), span: (1, 9), hunks: vec![hunk.into()] }
    }

    #[test]
    fn two_step_with_mock() {
        let p = PromptSet::bundled();
        let m = MockClient::bundled();
        let changed = vec![
            cf("unrelated_helper", "@@ -1 +1 @@\n-x\n+y\n"),
            cf("OnUpdateFiberStackSize", "@@ -1 +1,2 @@\n x\n+\t\tEG(fiber_stack_size) = tmp;\n"),
        ];
        let comment = "it may push the pointer far beyond the stack boundary";
        let rec = localize_comment("c", "1", comment, Some(787), None, &changed, vec![], &m, &p, 100).unwrap();
        let s1 = rec.step1.unwrap();
        assert_eq!(s1.ranked[0].function, "OnUpdateFiberStackSize");
        assert_eq!(s1.confidence, Some(Confidence::High));
        assert_eq!(rec.result.ranked[0].cited_lines, vec!["EG(fiber_stack_size) = tmp;"]);
        rec.result.check(&rec.candidates).unwrap();
    }

    #[test]
    fn abstains_without_overlap() {
        let p = PromptSet::bundled();
        let m = MockClient::bundled();
        let changed = vec![cf("unrelated_helper", "@@ -1 +1 @@\n-x\n+y\n")];
        let r = localize_comment("c", "1", "Please rename this.", None, None, &changed, vec![], &m, &p, 100).unwrap();
        assert!(r.result.abstained);
        assert_eq!(r.result.confidence, None);
    }
}
