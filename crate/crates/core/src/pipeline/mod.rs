//! End-to-end orchestration: ingest, classify, localize, instrument, fuzz,
//! triage, then a report. Every stage writes one JSONL artifact under the
//! output directory and the next stage reads it back, so a run can resume
//! from the last complete artifact.

pub mod config;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::artifact::{self, NoMeta};
use crate::classify::{self, ClassificationMeta, ClassificationRecord, MockClient, MockRules, ModelClient, PromptSet};
use crate::corpus::{self, ReviewComment, ReviewCorpus};
use crate::fuzzer::{self, CampaignReport, CrashKind, FuzzConfig, Mode};
use crate::instrument::{self, SiteRecord, SiteStatus, SitesMeta};
use crate::localize::{self, ChangedFunction, LocalizationMeta, LocalizationRecord};
use crate::record::{write_atomic, Recorder};
use crate::targets::Target;
use crate::taxonomy::{self, CweTaxonomy};
pub use config::{ClientKind, ConfigError, PipelineConfig};
pub use report::{render_markdown, summarize, Funnel, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Classify,
    Localize,
    Instrument,
    Fuzz,
    Triage,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::Classify, Stage::Localize, Stage::Instrument, Stage::Fuzz, Stage::Triage];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Localize => "localize",
            Stage::Instrument => "instrument",
            Stage::Fuzz => "fuzz",
            Stage::Triage => "triage",
        }
    }

    /// Artifact file name inside the output directory.
    pub fn file(self) -> &'static str {
        match self {
            Stage::Ingest => "corpus.jsonl",
            Stage::Classify => "classification.jsonl",
            Stage::Localize => "localization.jsonl",
            Stage::Instrument => "sites.jsonl",
            Stage::Fuzz => "campaigns.jsonl",
            Stage::Triage => "triage.jsonl",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const CAMPAIGNS_ARTIFACT: &str = "campaigns";
pub const TRIAGE_ARTIFACT: &str = "triage";
pub const DIFF_FILE: &str = "injections.diff";
pub const ANNOTATED_DIR: &str = "annotated";

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {message} (last complete artifact: {})", last_artifact.as_ref().map_or("none".into(), |p| p.display().to_string()))]
pub struct PipelineError {
    pub stage: Stage,
    pub last_artifact: Option<PathBuf>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignsMeta {
    pub budget_execs: u64,
    pub rng_seeds: Vec<u64>,
    pub targets: Vec<Target>,
}

/// One unique crash of one target, with the modes that found it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub target: String,
    pub kind: CrashKind,
    pub stack_hash: String,
    pub frames: Vec<String>,
    /// Earliest reproducer, hex.
    pub input: String,
    pub first_seen: u64,
    pub modes: Vec<Mode>,
    /// Campaigns (over all modes and rng seeds) that hit this crash.
    pub campaigns: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub ran: Vec<Stage>,
    pub reused: Vec<Stage>,
    pub summary: Summary,
}

/// Loaded prompts, taxonomy and model client for one configuration. Each
/// is built on first use, so stages that never talk to the model never
/// need its credentials.
pub struct Context<'a> {
    pub cfg: &'a PipelineConfig,
    prompts: Option<PromptSet>,
    taxonomy: Option<CweTaxonomy>,
    client: Option<Box<dyn ModelClient>>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        Self { cfg, prompts: None, taxonomy: None, client: None }
    }

    fn load(&mut self) -> Result<(&PromptSet, &CweTaxonomy, &dyn ModelClient), String> {
        if self.prompts.is_none() {
            self.prompts = Some(match &self.cfg.paths.prompts {
                Some(dir) => PromptSet::from_dir(dir).map_err(|e| e.to_string())?,
                None => PromptSet::bundled(),
            });
        }
        if self.taxonomy.is_none() {
            self.taxonomy = Some(match &self.cfg.paths.taxonomy {
                Some(p) => taxonomy::load_taxonomy(p).map_err(|e| e.to_string())?,
                None => taxonomy::bundled(),
            });
        }
        if self.client.is_none() {
            self.client = Some(build_client(&self.cfg.client)?);
        }
        Ok((
            self.prompts.as_ref().expect("set above"),
            self.taxonomy.as_ref().expect("set above"),
            self.client.as_deref().expect("set above"),
        ))
    }

    fn hint(&self, rec: &ClassificationRecord) -> Option<String> {
        if self.cfg.flags.no_cwe_hint {
            return None;
        }
        classify::render_cwe_hint(self.prompts.as_ref()?, self.taxonomy.as_ref()?, rec)
    }

    pub fn classify(&mut self, corpus: &ReviewCorpus) -> Result<(ClassificationMeta, Vec<ClassificationRecord>), String> {
        let opts = classify::Options { max_tokens: self.cfg.client.max_tokens, parallelism: self.cfg.parallelism };
        let (prompts, taxonomy, client) = self.load()?;
        let recs = classify::classify_corpus(corpus, taxonomy, client, prompts, &opts);
        Ok((ClassificationMeta { client: client.name().to_string(), max_tokens: opts.max_tokens }, recs))
    }

    /// Localizes every security-relevant comment against its PR's diff.
    /// A PR without a usable diff yields a warning on its comments, never
    /// an error; a missing checkout is an error.
    pub fn localize(
        &mut self,
        corpus: &ReviewCorpus,
        classes: &[ClassificationRecord],
    ) -> Result<(LocalizationMeta, Vec<LocalizationRecord>), String> {
        let checkout = self.cfg.paths.checkout.clone();
        if !checkout.is_dir() {
            return Err(localize::LocalizeError::MissingCheckout(checkout).to_string());
        }
        self.load()?;
        let diffs = self.cfg.pr_diff_dir();
        let by_id = comment_index(corpus);
        let mut items = Vec::new();
        for c in classes.iter().filter(|c| c.is_security_relevant()) {
            let comment = by_id.get(c.comment_id.as_str()).ok_or_else(|| format!("comment {} is not in the corpus", c.comment_id))?;
            items.push((*comment, c, self.hint(c)));
        }
        let mut per_pr: BTreeMap<String, (Vec<ChangedFunction>, Vec<String>)> = BTreeMap::new();
        for (comment, _, _) in &items {
            if per_pr.contains_key(&comment.pr_id) {
                continue;
            }
            // Messages name the diff by file name only, keeping artifacts
            // independent of where the inputs live.
            let name = PathBuf::from(format!("{}.diff", comment.pr_id));
            let entry = match fs::read_to_string(diffs.join(&name)) {
                Err(e) => (Vec::new(), vec![format!("no diff for PR {}: {}: {}", comment.pr_id, name.display(), e.kind())]),
                Ok(text) => match localize::changed_functions_for_pr(&checkout, &text, &name) {
                    Ok(v) => v,
                    Err(e @ localize::LocalizeError::MissingCheckout(_)) => return Err(e.to_string()),
                    Err(e) => (Vec::new(), vec![format!("PR {}: {e}", comment.pr_id)]),
                },
            };
            per_pr.insert(comment.pr_id.clone(), entry);
        }
        let max_tokens = self.cfg.client.max_tokens;
        let cfg = self.cfg;
        let (prompts, _, client) = self.load()?;
        let work = || {
            items
                .par_iter()
                .map(|(comment, c, hint)| {
                    let (changed, warnings) = &per_pr[&comment.pr_id];
                    localize::localize_comment(
                        &comment.id,
                        &comment.pr_id,
                        &comment.body,
                        c.cwe().map(|x| x.id),
                        hint.as_deref(),
                        changed,
                        warnings.clone(),
                        client,
                        prompts,
                        max_tokens,
                    )
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let recs = in_pool(cfg.parallelism, work).map_err(|e| e.to_string())?;
        let meta = LocalizationMeta { revision: instrument::checkout_group(&checkout), cwe_hint: !cfg.flags.no_cwe_hint };
        Ok((meta, recs))
    }

    /// Proposes, checks and injects annotations for every non-abstained
    /// localization. With `apply_to`, annotated files are written there.
    pub fn instrument(
        &mut self,
        corpus: &ReviewCorpus,
        classes: &[ClassificationRecord],
        locs: &[LocalizationRecord],
        apply_to: Option<PathBuf>,
    ) -> Result<(SitesMeta, instrument::Outcome), String> {
        self.load()?;
        let by_id = comment_index(corpus);
        let class_of: BTreeMap<&str, &ClassificationRecord> = classes.iter().map(|c| (c.comment_id.as_str(), c)).collect();
        let mut requests = Vec::new();
        for l in locs.iter().filter(|l| !l.result.abstained) {
            let (Some(comment), Some(class)) = (by_id.get(l.comment_id.as_str()), class_of.get(l.comment_id.as_str())) else {
                return Err(format!("comment {} is missing upstream", l.comment_id));
            };
            let hint = self.hint(class);
            for r in &l.result.ranked {
                requests.push(instrument::Request {
                    comment_id: l.comment_id.clone(),
                    comment: comment.body.clone(),
                    cwe_hint: hint.clone(),
                    function: r.reference(),
                });
            }
        }
        let applied = apply_to.is_some();
        let opts = instrument::Options {
            max_tokens: self.cfg.client.max_tokens,
            parallelism: self.cfg.parallelism,
            apply_to,
            compile_hook: self.cfg.compile_hook.clone(),
        };
        let checkout = &self.cfg.paths.checkout;
        let (prompts, _, client) = self.load()?;
        let outcome = instrument::instrument_checkout(checkout, &requests, client, prompts, &opts).map_err(|e| e.to_string())?;
        Ok((SitesMeta { group: instrument::checkout_group(checkout), applied }, outcome))
    }
}

/// Shared state of one pipeline run.
struct Run<'a> {
    cx: Context<'a>,
    resume: bool,
    upstream_ran: bool,
    last: Option<PathBuf>,
    ran: Vec<Stage>,
    reused: Vec<Stage>,
}

impl<'a> Run<'a> {
    fn cfg(&self) -> &'a PipelineConfig {
        self.cx.cfg
    }

    fn path(&self, stage: Stage) -> PathBuf {
        self.cfg().paths.out_dir.join(stage.file())
    }

    fn fail(&self, stage: Stage, message: impl fmt::Display) -> PipelineError {
        PipelineError { stage, last_artifact: self.last.clone(), message: message.to_string() }
    }

    /// The stage's artifact, if resuming and nothing upstream changed.
    fn reuse<M: serde::de::DeserializeOwned, T: serde::de::DeserializeOwned>(
        &mut self,
        stage: Stage,
        name: &str,
    ) -> Option<(M, Vec<T>)> {
        if !self.resume || self.upstream_ran {
            return None;
        }
        let path = self.path(stage);
        match artifact::read(&path, name) {
            Ok(v) => {
                log::info!("{stage}: reusing {}", path.display());
                self.reused.push(stage);
                self.last = Some(path);
                Some(v)
            }
            Err(e) => {
                if path.exists() {
                    log::warn!("{stage}: cannot reuse artifact, re-running: {e}");
                }
                None
            }
        }
    }

    fn save<M: Serialize, T: Serialize>(&mut self, stage: Stage, name: &str, meta: &M, records: &[T]) -> Result<(), PipelineError> {
        let path = self.path(stage);
        artifact::write(&path, name, meta, records).map_err(|e| self.fail(stage, e))?;
        log::info!("{stage}: wrote {} records to {}", records.len(), path.display());
        self.upstream_ran = true;
        self.ran.push(stage);
        self.last = Some(path);
        Ok(())
    }
}

/// The model client a configuration asks for.
pub fn build_client(c: &config::ClientConfig) -> Result<Box<dyn ModelClient>, String> {
    let recorder = || c.record_dir.clone().map(Recorder::new).ok_or("client.record_dir is not set");
    Ok(match c.kind {
        ClientKind::Mock => {
            let rules = match &c.mock_rules {
                Some(p) => MockRules::load(p).map_err(|e| e.to_string())?,
                None => MockRules::bundled(),
            };
            Box::new(MockClient::new(rules))
        }
        ClientKind::Replay => Box::new(classify::RecordingClient::<classify::LiveClient> {
            inner: None,
            recorder: recorder()?,
            model: std::env::var(classify::client::MODEL_ENV).unwrap_or_else(|_| classify::client::DEFAULT_MODEL.into()),
        }),
        ClientKind::Live => {
            let live = classify::LiveClient::from_env().map_err(|e| e.to_string())?;
            let model = live.name().to_string();
            Box::new(classify::RecordingClient { inner: Some(live), recorder: recorder()?, model })
        }
    })
}

fn in_pool<T: Send>(parallelism: usize, work: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build() {
        Ok(p) => p.install(work),
        Err(_) => work(),
    }
}

fn comment_index(corpus: &ReviewCorpus) -> BTreeMap<&str, &ReviewComment> {
    corpus.comments.iter().map(|c| (c.id.as_str(), c)).collect()
}

fn stage_ingest(run: &mut Run<'_>) -> Result<ReviewCorpus, PipelineError> {
    let s = Stage::Ingest;
    if run.resume && !run.upstream_ran {
        if let Ok(c) = ReviewCorpus::load(&run.path(s)) {
            run.reused.push(s);
            run.last = Some(run.path(s));
            return Ok(c);
        }
    }
    let p = &run.cfg().paths;
    let corpus = match (&p.corpus, &p.fixtures) {
        (Some(c), _) => ReviewCorpus::load(c),
        (None, Some(dir)) => corpus::ingest_fixture(dir),
        (None, None) => unreachable!("validated config"),
    }
    .map_err(|e| run.fail(s, e))?;
    corpus.save(&run.path(s)).map_err(|e| run.fail(s, e))?;
    log::info!("{s}: {} comments", corpus.comments.len());
    run.upstream_ran = true;
    run.ran.push(s);
    run.last = Some(run.path(s));
    Ok(corpus)
}

fn stage_classify(run: &mut Run<'_>, corpus: &ReviewCorpus) -> Result<Vec<ClassificationRecord>, PipelineError> {
    let s = Stage::Classify;
    if let Some((_, recs)) = run.reuse::<ClassificationMeta, ClassificationRecord>(s, classify::ARTIFACT) {
        return Ok(recs);
    }
    let (meta, recs) = run.cx.classify(corpus).map_err(|e| run.fail(s, e))?;
    run.save(s, classify::ARTIFACT, &meta, &recs)?;
    Ok(recs)
}

fn stage_localize(
    run: &mut Run<'_>,
    corpus: &ReviewCorpus,
    classes: &[ClassificationRecord],
) -> Result<Vec<LocalizationRecord>, PipelineError> {
    let s = Stage::Localize;
    if let Some((_, recs)) = run.reuse::<LocalizationMeta, LocalizationRecord>(s, localize::ARTIFACT) {
        return Ok(recs);
    }
    let (meta, recs) = run.cx.localize(corpus, classes).map_err(|e| run.fail(s, e))?;
    run.save(s, localize::ARTIFACT, &meta, &recs)?;
    Ok(recs)
}

fn stage_instrument(
    run: &mut Run<'_>,
    corpus: &ReviewCorpus,
    classes: &[ClassificationRecord],
    locs: &[LocalizationRecord],
) -> Result<Vec<SiteRecord>, PipelineError> {
    let s = Stage::Instrument;
    if let Some((_, recs)) = run.reuse::<SitesMeta, SiteRecord>(s, instrument::ARTIFACT) {
        return Ok(recs);
    }
    let out_dir = run.cfg().paths.out_dir.clone();
    let annotated = out_dir.join(ANNOTATED_DIR);
    if run.cfg().flags.apply && annotated.exists() {
        fs::remove_dir_all(&annotated).map_err(|e| run.fail(s, format!("{}: {e}", annotated.display())))?;
    }
    let apply_to = run.cfg().flags.apply.then(|| annotated.clone());
    let (meta, outcome) = run.cx.instrument(corpus, classes, locs, apply_to).map_err(|e| run.fail(s, e))?;
    let diff_path = out_dir.join(DIFF_FILE);
    write_atomic(&diff_path, outcome.diff.as_bytes()).map_err(|e| run.fail(s, format!("{}: {e}", diff_path.display())))?;
    run.save(s, instrument::ARTIFACT, &meta, &outcome.records)?;
    Ok(outcome.records)
}

fn is_live(r: &SiteRecord) -> bool {
    matches!(r.status, SiteStatus::Accepted | SiteStatus::Applied)
}

/// Targets reached by accepted sites, plus the configured extras.
pub fn fuzz_targets(sites: &[SiteRecord], extra: &[Target]) -> Vec<Target> {
    let mut t: BTreeSet<Target> = sites.iter().filter(|r| is_live(r)).filter_map(|r| Target::from_analog(&r.file_path, &r.function)).collect();
    t.extend(extra.iter().copied());
    t.into_iter().collect()
}

/// Every target in both modes under every rng seed, from the built-in seeds.
pub fn run_campaigns(
    targets: &[Target],
    f: &config::FuzzSettings,
    parallelism: usize,
) -> Result<(CampaignsMeta, Vec<CampaignReport>), fuzzer::FuzzError> {
    let mut jobs = Vec::new();
    for &t in targets {
        for mode in [Mode::Annot, Mode::Baseline] {
            for &seed in &f.rng_seeds {
                let mut cfg = FuzzConfig::new(mode, f.budget_execs, seed);
                cfg.stop_after_crashes = f.stop_after_crashes;
                jobs.push((t, cfg));
            }
        }
    }
    let work = || {
        jobs.par_iter()
            .map(|(t, cfg)| {
                let seeds: Vec<Vec<u8>> = t.default_seeds().into_iter().map(|(_, s)| s).collect();
                fuzzer::run_campaign(t, &seeds, cfg).map(|c| c.report)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let reports = in_pool(parallelism, work)?;
    Ok((CampaignsMeta { budget_execs: f.budget_execs, rng_seeds: f.rng_seeds.clone(), targets: targets.to_vec() }, reports))
}

fn stage_fuzz(run: &mut Run<'_>, sites: &[SiteRecord]) -> Result<Vec<CampaignReport>, PipelineError> {
    let s = Stage::Fuzz;
    if let Some((_, recs)) = run.reuse::<CampaignsMeta, CampaignReport>(s, CAMPAIGNS_ARTIFACT) {
        return Ok(recs);
    }
    let f = &run.cfg().fuzz;
    let targets = fuzz_targets(sites, &f.extra_targets);
    let (meta, reports) = run_campaigns(&targets, f, run.cfg().parallelism).map_err(|e| run.fail(s, e))?;
    run.save(s, CAMPAIGNS_ARTIFACT, &meta, &reports)?;
    Ok(reports)
}

/// Unique crashes per target across all campaigns.
pub fn triage(reports: &[CampaignReport]) -> Vec<TriageRecord> {
    let mut by_target: BTreeMap<&str, Vec<CampaignReport>> = BTreeMap::new();
    for r in reports {
        by_target.entry(r.target.as_str()).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (t, rs) in by_target {
        let merged = fuzzer::merge_reports(&rs);
        for (c, found) in merged.unique_crashes.iter().zip(&merged.found_in) {
            let modes: Vec<Mode> = [Mode::Annot, Mode::Baseline].into_iter().filter(|m| found.iter().any(|&i| rs[i].mode == *m)).collect();
            out.push(TriageRecord {
                target: t.to_string(),
                kind: c.kind,
                stack_hash: c.stack_hash.clone(),
                frames: c.frames.clone(),
                input: c.input.clone(),
                first_seen: c.first_seen,
                modes,
                campaigns: found.len(),
            });
        }
    }
    out
}

fn stage_triage(run: &mut Run<'_>, reports: &[CampaignReport]) -> Result<Vec<TriageRecord>, PipelineError> {
    let s = Stage::Triage;
    if let Some((_, recs)) = run.reuse::<NoMeta, TriageRecord>(s, TRIAGE_ARTIFACT) {
        return Ok(recs);
    }
    let recs = triage(reports);
    run.save(s, TRIAGE_ARTIFACT, &NoMeta {}, &recs)?;
    Ok(recs)
}

/// Stage counts from the artifacts, in comments.
pub fn funnel(
    corpus: &ReviewCorpus,
    classes: &[ClassificationRecord],
    locs: &[LocalizationRecord],
    sites: &[SiteRecord],
    fuzzed_targets: &[Target],
) -> Funnel {
    let annotated: BTreeSet<&str> = sites.iter().filter(|r| is_live(r)).map(|r| r.comment_id.as_str()).collect();
    let fuzzed: BTreeSet<&str> = sites
        .iter()
        .filter(|r| is_live(r) && Target::from_analog(&r.file_path, &r.function).is_some_and(|t| fuzzed_targets.contains(&t)))
        .map(|r| r.comment_id.as_str())
        .collect();
    Funnel {
        comments: corpus.comments.len(),
        security_relevant: classes.iter().filter(|c| c.is_security_relevant()).count(),
        localized: locs.iter().filter(|l| !l.result.abstained).count(),
        annotated: annotated.len(),
        fuzzed: fuzzed.len(),
    }
}

fn fuzzed_targets(reports: &[CampaignReport]) -> Vec<Target> {
    reports.iter().filter_map(|r| r.target.parse().ok()).collect()
}

/// Runs every stage in order. With `resume`, stages whose artifact already
/// exists are read back instead of re-run, up to the first one that is
/// missing; everything after it runs again.
pub fn run_pipeline(cfg: &PipelineConfig, resume: bool) -> Result<PipelineOutcome, PipelineError> {
    let mut run = Run { cx: Context::new(cfg), resume, upstream_ran: false, last: None, ran: Vec::new(), reused: Vec::new() };
    fs::create_dir_all(&cfg.paths.out_dir)
        .map_err(|e| run.fail(Stage::Ingest, format!("{}: {e}", cfg.paths.out_dir.display())))?;
    let corpus = stage_ingest(&mut run)?;
    let classes = stage_classify(&mut run, &corpus)?;
    let locs = stage_localize(&mut run, &corpus, &classes)?;
    let sites = stage_instrument(&mut run, &corpus, &classes, &locs)?;
    let reports = stage_fuzz(&mut run, &sites)?;
    stage_triage(&mut run, &reports)?;
    let summary = summarize(&reports, funnel(&corpus, &classes, &locs, &sites, &fuzzed_targets(&reports)));
    write_report(&cfg.paths.out_dir, &summary).map_err(|e| run.fail(Stage::Triage, e))?;
    Ok(PipelineOutcome { ran: run.ran, reused: run.reused, summary })
}

/// Writes `report.json` and `report.md`.
pub fn write_report(out_dir: &Path, summary: &Summary) -> Result<(), String> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    for (name, body) in [("report.json", json), ("report.md", render_markdown(summary))] {
        let p = out_dir.join(name);
        write_atomic(&p, body.as_bytes()).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

/// Rebuilds the summary from the artifacts of a finished run.
pub fn report_from_dir(out_dir: &Path) -> Result<Summary, String> {
    let p = |s: Stage| out_dir.join(s.file());
    let corpus = ReviewCorpus::load(&p(Stage::Ingest)).map_err(|e| e.to_string())?;
    let (_, classes): (ClassificationMeta, Vec<ClassificationRecord>) =
        artifact::read(&p(Stage::Classify), classify::ARTIFACT).map_err(|e| e.to_string())?;
    let (_, locs): (LocalizationMeta, Vec<LocalizationRecord>) =
        artifact::read(&p(Stage::Localize), localize::ARTIFACT).map_err(|e| e.to_string())?;
    let (_, sites): (SitesMeta, Vec<SiteRecord>) =
        artifact::read(&p(Stage::Instrument), instrument::ARTIFACT).map_err(|e| e.to_string())?;
    let (_, reports): (CampaignsMeta, Vec<CampaignReport>) =
        artifact::read(&p(Stage::Fuzz), CAMPAIGNS_ARTIFACT).map_err(|e| e.to_string())?;
    Ok(summarize(&reports, funnel(&corpus, &classes, &locs, &sites, &fuzzed_targets(&reports))))
}
