//! Annotation planning and injection for localized functions.
//!
//! For each localized function the model proposes up to five plans. Each
//! plan is anchored in the checkout's source, injected inside an
//! `#ifdef _USE_IJON` guard and checked. Plans that pass are applied
//! together, per file, to one working tree.

pub mod anchor;
pub mod inject;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ask_with_repair, parse_object, ClientError, ModelClient, PromptSet};
use crate::localize::{extract_functions, FunctionRef};
use crate::runtime::Macro;
pub use anchor::{insertion_point, resolve_anchor, AnchorError, AnnotationPlan, AnnotationSite};
pub use inject::{guard_blocks, inject, inject_all, safety_check, strip_guards, InjectError, SafetyFailure};

pub const MAX_PLANS: usize = 5;
pub const ARTIFACT: &str = "sites";

#[derive(Deserialize)]
struct RawPlan {
    #[serde(rename = "macro", default)]
    macro_kind: String,
    #[serde(default)]
    snippet: String,
    #[serde(default)]
    insertion_description: String,
    #[serde(default)]
    pre_anchor: String,
    #[serde(default)]
    post_anchor: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct RawAnnotations {
    annotations: Vec<RawPlan>,
}

/// A plan the model proposed that broke a hard rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedPlan {
    pub macro_kind: String,
    pub snippet: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Proposal {
    pub plans: Vec<AnnotationPlan>,
    pub dropped: Vec<DroppedPlan>,
}

fn vet(raw: RawPlan) -> Result<AnnotationPlan, DroppedPlan> {
    let drop = |reason: &str| DroppedPlan { macro_kind: raw.macro_kind.clone(), snippet: raw.snippet.clone(), reason: reason.into() };
    let Ok(m) = raw.macro_kind.parse::<Macro>() else {
        return Err(drop("unknown-macro"));
    };
    let snippet = raw.snippet.trim();
    if snippet.contains('#') {
        return Err(drop("new-header"));
    }
    if snippet.contains('\n') {
        return Err(drop("multi-line-snippet"));
    }
    if !snippet.contains(&format!("{}(", m.c_macro())) {
        return Err(drop("macro-mismatch"));
    }
    if raw.pre_anchor.trim().is_empty() || raw.post_anchor.trim().is_empty() {
        return Err(drop("empty-anchor"));
    }
    Ok(AnnotationPlan {
        macro_kind: m,
        snippet: snippet.to_string(),
        insertion_description: raw.insertion_description,
        pre_anchor: raw.pre_anchor,
        post_anchor: raw.post_anchor,
        rationale: raw.rationale,
    })
}

fn parse_annotations(reply: &str) -> Result<Vec<RawPlan>, String> {
    let raw: RawAnnotations = serde_json::from_value(parse_object(reply)?).map_err(|e| format!("schema: {e}"))?;
    Ok(raw.annotations)
}

/// Asks for annotation plans for one function. Plans breaking a hard rule
/// are dropped, the rest cut to [`MAX_PLANS`].
#[allow(clippy::too_many_arguments)]
pub fn propose_annotations(
    function_source: &str,
    function_name: &str,
    file_path: &str,
    comment: &str,
    cwe_hint: Option<&str>,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> Result<Proposal, ClientError> {
    let user = crate::classify::render(
        "instrument_user.txt",
        &prompts.instrument_user,
        &[
            ("comment", comment),
            ("cwe_hint", cwe_hint.unwrap_or("none")),
            ("function_name", function_name),
            ("file_path", file_path),
            ("function", function_source),
        ],
    )
    .expect("validated at load");
    let raw = match ask_with_repair(client, prompts, &prompts.instrument_system, &user, max_tokens, parse_annotations)? {
        Ok(r) => r,
        Err(e) => {
            let dropped = vec![DroppedPlan { macro_kind: String::new(), snippet: String::new(), reason: format!("unusable model output: {e}") }];
            return Ok(Proposal { plans: Vec::new(), dropped });
        }
    };
    let mut out = Proposal::default();
    for r in raw {
        match vet(r) {
            Ok(p) if out.plans.len() < MAX_PLANS => out.plans.push(p),
            Ok(p) => out.dropped.push(DroppedPlan {
                macro_kind: p.macro_kind.as_str().into(),
                snippet: p.snippet,
                reason: "over-limit".into(),
            }),
            Err(d) => out.dropped.push(d),
        }
    }
    Ok(out)
}

/// One localized function to annotate, with the comment that led there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub comment_id: String,
    pub comment: String,
    pub cwe_hint: Option<String>,
    pub function: FunctionRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteStatus {
    /// Passed every check.
    Accepted,
    /// Passed and written to the output tree.
    Applied,
    Rejected,
    /// No plan was produced for the function.
    Skipped,
}

/// One line of the sites artifact: a plan and what became of it, or a
/// function that produced no plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub comment_id: String,
    pub file_path: String,
    pub function: String,
    pub group: String,
    pub status: SiteStatus,
    pub reason: Option<String>,
    pub plan: Option<AnnotationPlan>,
    pub site: Option<AnnotationSite>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitesMeta {
    pub group: String,
    pub applied: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub max_tokens: u32,
    pub parallelism: usize,
    /// Write annotated files under this root (may be the checkout itself).
    pub apply_to: Option<PathBuf>,
    /// Shell command run per annotated file, with `EYEQ_FILE` naming a
    /// temporary copy of the annotated text and `EYEQ_TARGET` the file's
    /// path in the checkout. Non-zero exit rejects the file's sites.
    pub compile_hook: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub records: Vec<SiteRecord>,
    /// Annotated text per file, for files with at least one accepted site.
    pub annotated: BTreeMap<String, String>,
    /// Unified diff of every injection, files in path order.
    pub diff: String,
}

#[derive(Debug, thiserror::Error)]
pub enum InstrumentError {
    #[error("repository checkout {0} does not exist")]
    MissingCheckout(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {source}")]
    Inject { path: String, source: InjectError },
}

/// The commit group of a checkout: its `REVISION` file if present.
pub fn checkout_group(checkout: &Path) -> String {
    fs::read_to_string(checkout.join("REVISION"))
        .ok()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "working-tree".into())
}

pub fn unified_diff(path: &str, before: &str, after: &str) -> String {
    similar::TextDiff::from_lines(before, after)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{path}"), &format!("b/{path}"))
        .to_string()
}

fn run_hook(hook: &str, checkout: &Path, target: &str, text: &str) -> Result<(), String> {
    let tmp = std::env::temp_dir().join(format!("eyeq-hook-{}-{}", std::process::id(), target.replace(['/', '\\'], "_")));
    fs::write(&tmp, text).map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
    let out = Command::new("sh")
        .arg("-c")
        .arg(hook)
        .current_dir(checkout)
        .env("EYEQ_FILE", &tmp)
        .env("EYEQ_TARGET", target)
        .output();
    let _ = fs::remove_file(&tmp);
    let out = out.map_err(|e| format!("cannot run hook: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        let err = String::from_utf8_lossy(&out.stderr);
        Err(format!("{}: {}", out.status, err.lines().next().unwrap_or("").trim()))
    }
}

fn read(checkout: &Path, rel: &str, cache: &mut BTreeMap<String, Option<String>>) -> Option<String> {
    cache.entry(rel.to_string()).or_insert_with(|| fs::read_to_string(checkout.join(rel)).ok()).clone()
}

/// Plans, checks and (optionally) applies annotations for every request
/// against one checkout. Records come out in request order, plans in the
/// order the model gave them.
pub fn instrument_checkout(
    checkout: &Path,
    requests: &[Request],
    client: &dyn ModelClient,
    prompts: &PromptSet,
    opts: &Options,
) -> Result<Outcome, InstrumentError> {
    if !checkout.is_dir() {
        return Err(InstrumentError::MissingCheckout(checkout.to_path_buf()));
    }
    let group = checkout_group(checkout);
    let mut sources: BTreeMap<String, Option<String>> = BTreeMap::new();
    for r in requests {
        read(checkout, &r.function.file_path, &mut sources);
    }

    // Planning is independent per request.
    let plan_one = |r: &Request| -> Result<Result<Proposal, String>, ClientError> {
        let Some(Some(src)) = sources.get(&r.function.file_path) else {
            return Ok(Err("source file is missing from the checkout".into()));
        };
        let fns = match extract_functions(src) {
            Ok(f) => f,
            Err(u) => return Ok(Err(format!("cannot scan file: {u}"))),
        };
        let Some(f) = fns.iter().find(|f| f.name == r.function.function) else {
            return Ok(Err("function not found in the checkout".into()));
        };
        let p = propose_annotations(
            f.text(src),
            &f.name,
            &r.function.file_path,
            &r.comment,
            r.cwe_hint.as_deref(),
            client,
            prompts,
            opts.max_tokens,
        )?;
        Ok(Ok(p))
    };
    let run = || requests.par_iter().map(plan_one).collect::<Vec<_>>();
    let proposals = match rayon::ThreadPoolBuilder::new().num_threads(opts.parallelism.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };

    let mut records = Vec::new();
    let mut accepted: BTreeMap<String, Vec<(usize, AnnotationSite)>> = BTreeMap::new();
    for (r, prop) in requests.iter().zip(proposals) {
        let base = SiteRecord {
            comment_id: r.comment_id.clone(),
            file_path: r.function.file_path.clone(),
            function: r.function.function.clone(),
            group: group.clone(),
            status: SiteStatus::Skipped,
            reason: None,
            plan: None,
            site: None,
        };
        let prop = match prop? {
            Ok(p) => p,
            Err(reason) => {
                records.push(SiteRecord { reason: Some(reason), ..base });
                continue;
            }
        };
        if prop.plans.is_empty() {
            let why = prop.dropped.iter().map(|d| d.reason.as_str()).collect::<Vec<_>>().join(", ");
            let reason = if why.is_empty() { "no annotation proposed".to_string() } else { format!("no valid plan ({why})") };
            records.push(SiteRecord { reason: Some(reason), ..base });
            continue;
        }
        let src = sources[&r.function.file_path].as_deref().expect("planned files exist");
        let fns = extract_functions(src).expect("scanned during planning");
        let f = fns.iter().find(|f| f.name == r.function.function).expect("found during planning");
        for plan in prop.plans {
            let mut rec = SiteRecord { plan: Some(plan.clone()), status: SiteStatus::Rejected, ..base.clone() };
            match check_plan(src, &r.function.file_path, f, &plan, accepted.get(&r.function.file_path)) {
                Ok(site) => {
                    rec.status = SiteStatus::Accepted;
                    rec.site = Some(site.clone());
                    accepted.entry(r.function.file_path.clone()).or_default().push((records.len(), site));
                }
                Err((reason, site)) => {
                    rec.reason = Some(reason);
                    rec.site = site;
                }
            }
            records.push(rec);
        }
    }

    let mut out = Outcome::default();
    for (path, sites) in &accepted {
        let src = sources[path].as_deref().expect("planned files exist");
        let just_sites: Vec<AnnotationSite> = sites.iter().map(|(_, s)| s.clone()).collect();
        let text = inject_all(src, &just_sites).map_err(|source| InstrumentError::Inject { path: path.clone(), source })?;
        // Re-check each site in the combined file; sites can interact.
        let mut failed: Vec<(usize, String)> = sites
            .iter()
            .filter_map(|(i, s)| safety_check(&text, s).err().map(|e| (*i, e.to_string())))
            .collect();
        if failed.is_empty() {
            if let Some(hook) = &opts.compile_hook {
                if let Err(detail) = run_hook(hook, checkout, path, &text) {
                    let reason = SafetyFailure::Compile { detail }.to_string();
                    failed = sites.iter().map(|(i, _)| (*i, reason.clone())).collect();
                }
            }
        }
        if !failed.is_empty() {
            for (i, reason) in failed.iter().cloned() {
                records[i].status = SiteStatus::Rejected;
                records[i].reason = Some(reason);
            }
            // Keep the file untouched rather than apply a partial set.
            for (i, _) in sites {
                if records[*i].status == SiteStatus::Accepted {
                    records[*i].status = SiteStatus::Rejected;
                    records[*i].reason = Some("file rejected: another site in it failed".into());
                }
            }
            continue;
        }
        out.diff.push_str(&unified_diff(path, src, &text));
        if let Some(root) = &opts.apply_to {
            let dest = root.join(path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(|source| InstrumentError::Io { path: parent.into(), source })?;
            }
            crate::record::write_atomic(&dest, text.as_bytes()).map_err(|source| InstrumentError::Io { path: dest.clone(), source })?;
            for (i, _) in sites {
                records[*i].status = SiteStatus::Applied;
            }
        }
        out.annotated.insert(path.clone(), text);
    }
    out.records = records;
    Ok(out)
}

/// Anchors one plan and checks it in isolation and against the sites
/// already accepted for the same file.
#[allow(clippy::result_large_err)]
fn check_plan(
    src: &str,
    file_path: &str,
    f: &crate::localize::FunctionSpan,
    plan: &AnnotationPlan,
    earlier: Option<&Vec<(usize, AnnotationSite)>>,
) -> Result<AnnotationSite, (String, Option<AnnotationSite>)> {
    let site = resolve_anchor(src, file_path, f, plan).map_err(|e| (e.to_string(), None))?;
    let fail = |reason: String| Err((reason, Some(site.clone())));
    if let Some(prev) = earlier {
        if prev.iter().any(|(_, s)| s.site_id == site.site_id || (s.function == site.function && s.plan.snippet == site.plan.snippet)) {
            return fail(SafetyFailure::Duplicate { copies: 2 }.to_string());
        }
    }
    let text = match inject(src, &site) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    match safety_check(&text, &site) {
        Ok(()) => Ok(site),
        Err(e) => fail(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::MockClient;

    const FIBER: &str = "static ZEND_INI_MH(OnUpdateFiberStackSize)\n{\n\tif (new_value) {\n\t\tzend_long tmp = zend_ini_parse_quantity_warn(new_value, entry->name);\n\t\tif (tmp < 0) {\n\t\t\tzend_error(E_WARNING, \"fiber.stack_size must be a positive number\");\n\t\t\treturn FAILURE;\n\t\t}\n\t\tEG(fiber_stack_size) = tmp;\n\t} else {\n\t\tEG(fiber_stack_size) = ZEND_FIBER_DEFAULT_C_STACK_SIZE;\n\t}\n\treturn SUCCESS;\n}\n";

    fn raw(m: &str, snippet: &str) -> RawPlan {
        RawPlan {
            macro_kind: m.into(),
            snippet: snippet.into(),
            insertion_description: String::new(),
            pre_anchor: "a".into(),
            post_anchor: "b".into(),
            rationale: String::new(),
        }
    }

    #[test]
    fn hard_rules() {
        assert!(vet(raw("SET", "IJON_SET(x);")).is_ok());
        assert_eq!(vet(raw("SET", "#include <x.h>")).unwrap_err().reason, "new-header");
        assert_eq!(vet(raw("MAX", "IJON_SET(x);")).unwrap_err().reason, "macro-mismatch");
        assert_eq!(vet(raw("FOO", "IJON_SET(x);")).unwrap_err().reason, "unknown-macro");
        let mut r = raw("SET", "IJON_SET(x);");
        r.post_anchor = " ".into();
        assert_eq!(vet(r).unwrap_err().reason, "empty-anchor");
    }

    #[test]
    fn fiber_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("Zend")).unwrap();
        fs::write(dir.path().join("Zend/zend.c"), FIBER).unwrap();
        let req = Request {
            comment_id: "c1".into(),
            comment: "a huge fiber.stack_size may push the pointer beyond the stack boundary".into(),
            cwe_hint: None,
            function: FunctionRef { file_path: "Zend/zend.c".into(), function: "OnUpdateFiberStackSize".into() },
        };
        let out = instrument_checkout(dir.path(), &[req], &MockClient::bundled(), &PromptSet::bundled(), &Options::default())
            .unwrap();
        let rec = &out.records[0];
        assert_eq!(rec.status, SiteStatus::Accepted, "{rec:?}");
        assert_eq!(rec.group, "working-tree");
        let text = &out.annotated["Zend/zend.c"];
        assert!(text.contains("\t\tEG(fiber_stack_size) = tmp;\n\n\t\t#ifdef _USE_IJON\n\t\tIJON_SET(EG(fiber_stack_size));\n\t\t#endif\n\t} else {"));
        assert_eq!(strip_guards(text), FIBER);
        assert!(out.diff.starts_with("--- a/Zend/zend.c\n+++ b/Zend/zend.c\n"));
    }

    #[test]
    fn missing_function_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.c"), "int f(void)\n{\n\treturn 0;\n}\n").unwrap();
        let req = Request {
            comment_id: "c".into(),
            comment: "fiber".into(),
            cwe_hint: None,
            function: FunctionRef { file_path: "a.c".into(), function: "g".into() },
        };
        let out = instrument_checkout(dir.path(), &[req], &MockClient::bundled(), &PromptSet::bundled(), &Options::default())
            .unwrap();
        assert_eq!(out.records[0].status, SiteStatus::Skipped);
        assert!(out.annotated.is_empty());
    }
}
