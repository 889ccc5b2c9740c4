//! Two-call classification of review comments.
//!
//! Stage 1 asks whether a comment is security relevant and which CWE-699
//! upper categories (at most three) it touches. Stage 2 sees only the
//! context pack for those categories and picks one subcategory or says no.
//! Model output is a single JSON object; a reply that fails to parse or
//! breaks the contract gets one repair re-prompt.

pub mod client;
pub mod mock;
pub mod prompts;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ReviewComment, ReviewCorpus};
use crate::taxonomy::{ContextPack, CweTaxonomy, Level};
pub use client::{ClientError, LiveClient, ModelClient, RecordingClient, DEFAULT_MAX_TOKENS};
pub use mock::{MockClient, MockRules};
pub use prompts::{render, PromptSet, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Yes,
    No,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Result {
    pub security: Relevance,
    pub categories: Vec<u32>,
    pub signals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subcategory {
    pub id: u32,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Result {
    /// Only `yes` or `no`.
    pub security: Relevance,
    pub subcategory: Option<Subcategory>,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Classified,
    ClassificationFailed,
}

/// One line of the classification artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub comment_id: String,
    pub pr_id: String,
    pub status: Status,
    pub stage1: Option<Stage1Result>,
    pub stage2: Option<Stage2Result>,
    /// Why classification failed; failed comments are excluded downstream.
    pub failure: Option<String>,
}

impl ClassificationRecord {
    /// The assigned CWE when stage 2 said yes.
    pub fn cwe(&self) -> Option<&Subcategory> {
        match &self.stage2 {
            Some(Stage2Result { security: Relevance::Yes, subcategory, .. }) => subcategory.as_ref(),
            _ => None,
        }
    }

    pub fn is_security_relevant(&self) -> bool {
        self.status == Status::Classified && self.cwe().is_some()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("model output unusable after repair: {0}")]
    Malformed(String),
}

impl ClassifyError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ClassifyError::Client(e) if e.is_retriable())
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub max_tokens: u32,
    pub parallelism: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { max_tokens: DEFAULT_MAX_TOKENS, parallelism: 4 }
    }
}

/// Asks once, and once more with the validation error appended if the
/// answer does not pass `check`.
pub(crate) fn ask_with_repair<T>(
    client: &dyn ModelClient,
    prompts: &PromptSet,
    system: &str,
    user: &str,
    max_tokens: u32,
    check: impl Fn(&str) -> Result<T, String>,
) -> Result<Result<T, String>, ClientError> {
    let first = client.complete(system, user, max_tokens)?;
    let err = match check(&first) {
        Ok(v) => return Ok(Ok(v)),
        Err(e) => e,
    };
    log::debug!("repairing model output: {err}");
    let retry = format!("{user}\n{}", prompts.repair_suffix(&err, &first));
    let second = client.complete(system, &retry, max_tokens)?;
    Ok(check(&second))
}

pub(crate) fn parse_object(reply: &str) -> Result<serde_json::Value, String> {
    let text = client::extract_json(reply).ok_or("no JSON object in the reply")?;
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    if v.is_object() {
        Ok(v)
    } else {
        Err("the reply is not a JSON object".into())
    }
}

#[derive(Deserialize)]
struct RawStage1 {
    security: String,
    #[serde(default)]
    categories: Vec<u32>,
    #[serde(default)]
    signals: Vec<String>,
}

fn check_stage1(reply: &str, body: &str, taxonomy: &CweTaxonomy) -> Result<Stage1Result, String> {
    let raw: RawStage1 = serde_json::from_value(parse_object(reply)?).map_err(|e| format!("schema: {e}"))?;
    let security = match raw.security.as_str() {
        "yes" => Relevance::Yes,
        "no" => Relevance::No,
        "uncertain" => Relevance::Uncertain,
        other => return Err(format!("security must be yes, no or uncertain, got `{other}`")),
    };
    let mut categories: Vec<u32> = Vec::new();
    for c in raw.categories {
        if taxonomy.category(c).is_none() {
            return Err(format!("CWE-{c} is not one of the listed categories"));
        }
        if !categories.contains(&c) {
            categories.push(c);
        }
    }
    match security {
        Relevance::No if !categories.is_empty() => return Err("categories must be empty when security is no".into()),
        Relevance::Yes | Relevance::Uncertain if categories.is_empty() || categories.len() > 3 => {
            return Err(format!("expected one to three categories, got {}", categories.len()));
        }
        _ => {}
    }
    // Signals that are not verbatim quotes carry no information; drop them.
    let signals = raw.signals.into_iter().filter(|s| !s.is_empty() && body.contains(s.as_str())).collect();
    Ok(Stage1Result { security, categories, signals })
}

pub fn classify_stage1(
    comment: &ReviewComment,
    taxonomy: &CweTaxonomy,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> Result<Stage1Result, ClassifyError> {
    let system = render("stage1_system.txt", &prompts.stage1_system, &[("few_shot", &prompts.render_few_shot())])
        .expect("validated at load");
    let user = render(
        "stage1_user.txt",
        &prompts.stage1_user,
        &[("comment", &comment.body), ("categories", &taxonomy.render_category_list())],
    )
    .expect("validated at load");
    ask_with_repair(client, prompts, &system, &user, max_tokens, |r| check_stage1(r, &comment.body, taxonomy))?
        .map_err(ClassifyError::Malformed)
}

#[derive(Deserialize)]
struct RawSub {
    id: u32,
}

#[derive(Deserialize)]
struct RawStage2 {
    security: String,
    subcategory: Option<RawSub>,
    #[serde(default)]
    rationale: String,
}

enum Stage2Check {
    Ok(Stage2Result),
    OutOfPack(u32),
}

fn first_sentences(s: &str, n: usize) -> String {
    let mut count = 0;
    let b = s.as_bytes();
    for i in 0..b.len() {
        if matches!(b[i], b'.' | b'!' | b'?') && (i + 1 == b.len() || b[i + 1] == b' ') {
            count += 1;
            if count == n {
                return s[..=i].to_string();
            }
        }
    }
    s.trim().to_string()
}

fn check_stage2(reply: &str, pack: &ContextPack) -> Result<Stage2Check, String> {
    let raw: RawStage2 = serde_json::from_value(parse_object(reply)?).map_err(|e| format!("schema: {e}"))?;
    let rationale = first_sentences(raw.rationale.trim(), 3);
    match raw.security.as_str() {
        "no" => Ok(Stage2Check::Ok(Stage2Result { security: Relevance::No, subcategory: None, rationale })),
        "yes" => {
            let id = raw.subcategory.ok_or("security is yes but no subcategory was given")?.id;
            match pack.entries.iter().find(|e| e.cwe_id == id) {
                Some(e) if e.level == Level::Subcategory => Ok(Stage2Check::Ok(Stage2Result {
                    security: Relevance::Yes,
                    subcategory: Some(Subcategory { id, title: e.title.clone() }),
                    rationale,
                })),
                Some(_) => Err(format!("CWE-{id} is a category; pick one of its subcategories")),
                None => Ok(Stage2Check::OutOfPack(id)),
            }
        }
        other => Err(format!("security must be yes or no, got `{other}`")),
    }
}

pub fn classify_stage2(
    comment: &ReviewComment,
    pack: &ContextPack,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> Result<Stage2Result, ClassifyError> {
    let user = render("stage2_user.txt", &prompts.stage2_user, &[("comment", &comment.body), ("pack", &pack.render())])
        .expect("validated at load");
    // An out-of-pack pick is repairable once, like a parse failure.
    let strict = |r: &str| match check_stage2(r, pack)? {
        Stage2Check::Ok(v) => Ok(v),
        Stage2Check::OutOfPack(id) => Err(format!("CWE-{id} is not in the provided context pack")),
    };
    let first = client.complete(&prompts.stage2_system, &user, max_tokens)?;
    let err = match strict(&first) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };
    let retry = format!("{user}\n{}", prompts.repair_suffix(&err, &first));
    let second = client.complete(&prompts.stage2_system, &retry, max_tokens)?;
    match check_stage2(&second, pack).map_err(ClassifyError::Malformed)? {
        Stage2Check::Ok(v) => Ok(v),
        Stage2Check::OutOfPack(id) => Ok(Stage2Result {
            security: Relevance::No,
            subcategory: None,
            rationale: format!("Rejected: the model insisted on CWE-{id}, which is outside the context pack."),
        }),
    }
}

pub fn classify_comment(
    comment: &ReviewComment,
    taxonomy: &CweTaxonomy,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    max_tokens: u32,
) -> ClassificationRecord {
    let mut rec = ClassificationRecord {
        comment_id: comment.id.clone(),
        pr_id: comment.pr_id.clone(),
        status: Status::ClassificationFailed,
        stage1: None,
        stage2: None,
        failure: None,
    };
    let s1 = match classify_stage1(comment, taxonomy, client, prompts, max_tokens) {
        Ok(s) => s,
        Err(e) => {
            rec.failure = Some(format!("stage 1: {e}"));
            return rec;
        }
    };
    if s1.security != Relevance::No {
        let pack = taxonomy.build_context_pack(&s1.categories).expect("stage 1 validated the categories");
        match classify_stage2(comment, &pack, client, prompts, max_tokens) {
            Ok(s2) => rec.stage2 = Some(s2),
            Err(e) => {
                rec.stage1 = Some(s1);
                rec.failure = Some(format!("stage 2: {e}"));
                return rec;
            }
        }
    }
    rec.stage1 = Some(s1);
    rec.status = Status::Classified;
    rec
}

/// Classifies every comment. Failures are recorded per comment and never
/// abort the batch. Output order is corpus order regardless of parallelism.
pub fn classify_corpus(
    corpus: &ReviewCorpus,
    taxonomy: &CweTaxonomy,
    client: &dyn ModelClient,
    prompts: &PromptSet,
    opts: &Options,
) -> Vec<ClassificationRecord> {
    let run = || {
        corpus
            .comments
            .par_iter()
            .map(|c| classify_comment(c, taxonomy, client, prompts, opts.max_tokens))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(opts.parallelism.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

/// Low-weight hint text handed to localization and annotation.
pub fn render_cwe_hint(prompts: &PromptSet, taxonomy: &CweTaxonomy, rec: &ClassificationRecord) -> Option<String> {
    let sub = rec.cwe()?;
    let cat = taxonomy.node(taxonomy.category_of(sub.id)?)?;
    let rationale = rec.stage2.as_ref().map_or("", |s| s.rationale.as_str());
    Some(
        render(
            "cwe_hint.txt",
            &prompts.cwe_hint,
            &[
                ("category_title", &cat.title),
                ("category_id", &cat.cwe_id.to_string()),
                ("subcategory_title", &sub.title),
                ("subcategory_id", &sub.id.to_string()),
                ("rationale", rationale),
            ],
        )
        .expect("validated at load"),
    )
}

pub const ARTIFACT: &str = "classification";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationMeta {
    pub client: String,
    pub max_tokens: u32,
}
