//! `eyeq`: review comments in, annotated sources and fuzzing reports out.
//!
//! Every stage subcommand reads and writes the same JSONL artifacts as
//! `eyeq run`. Exit status is 0 on success, 2 when a stage fails and 3 for
//! configuration or usage errors.

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use eyeq_core::artifact::{self, NoMeta};
use eyeq_core::classify::{self, ClassificationMeta, ClassificationRecord};
use eyeq_core::corpus::{self, GithubSource, ReviewCorpus};
use eyeq_core::fuzzer::{self, CampaignReport, Exec, FuzzConfig, Harness, Mode, Outcome};
use eyeq_core::instrument::{self, SitesMeta};
use eyeq_core::localize::{self, LocalizationMeta, LocalizationRecord};
use eyeq_core::pipeline::config::{ClientConfig, Flags, FuzzSettings, Paths};
use eyeq_core::pipeline::{self, ClientKind, Context, PipelineConfig, CAMPAIGNS_ARTIFACT, TRIAGE_ARTIFACT};
use eyeq_core::record::{write_atomic, Recorder};
use eyeq_core::runtime::{AnnotationEvent, FeedbackState};
use eyeq_core::targets::Target;
use eyeq_core::taxonomy;

const EXIT_STAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "eyeq", version, about = "Turn security review comments into fuzzing annotations")]
struct Cli {
    /// Pipeline configuration. Its settings take precedence over flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect review comments into a corpus.
    Ingest(IngestArgs),
    /// Relevance and CWE classification of every comment.
    Classify(ClassifyArgs),
    /// Map security-relevant comments to changed functions.
    Localize(LocalizeArgs),
    /// Propose, check and inject annotations.
    Instrument(InstrumentArgs),
    /// One fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Merge campaign reports and deduplicate their crashes.
    Triage(TriageArgs),
    /// Inspect the CWE taxonomy.
    Taxonomy {
        #[command(subcommand)]
        command: TaxonomyCommand,
    },
    /// Inspect or run the benchmark targets.
    Target {
        #[command(subcommand)]
        command: TargetCommand,
    },
    /// Every stage in order, from a configuration file.
    Run {
        /// Reuse artifacts already in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Rebuild report.json and report.md from a finished run.
    Report {
        /// Output directory of the run; taken from --config when absent.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// GitHub repository, `owner/name`.
    #[arg(long, requires = "prs", conflicts_with = "fixture")]
    repo: Option<String>,
    /// Pull requests, e.g. `6562,6890-6900`.
    #[arg(long)]
    prs: Option<String>,
    /// Directory of `*.jsonl` comment fixtures.
    #[arg(long, required_unless_present = "repo")]
    fixture: Option<PathBuf>,
    /// Where API responses are recorded and replayed from.
    #[arg(long, default_value = ".eyeq/recordings")]
    record_dir: PathBuf,
    #[arg(long, default_value = "corpus.jsonl")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClientArg {
    Mock,
    Replay,
    Live,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "mock")]
    client: ClientArg,
    /// Rules for the mock client.
    #[arg(long)]
    mock_rules: Option<PathBuf>,
    /// Recordings for the replay and live clients.
    #[arg(long, default_value = ".eyeq/recordings")]
    record_dir: PathBuf,
    /// Prompt template directory.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// CWE listing in the bundled TSV format.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = classify::DEFAULT_MAX_TOKENS)]
    max_tokens: u32,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, default_value = "corpus.jsonl")]
    corpus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "stage12.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long, default_value = "corpus.jsonl")]
    corpus: PathBuf,
    #[arg(long, default_value = "stage12.jsonl")]
    stage12: PathBuf,
    #[arg(long)]
    repo_checkout: PathBuf,
    /// Directory of `<pr>.diff` files; `<checkout>/.eyeq/prs` by default.
    #[arg(long)]
    pr_diffs: Option<PathBuf>,
    #[arg(long)]
    no_cwe_hint: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "localized.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct InstrumentArgs {
    #[arg(long, default_value = "corpus.jsonl")]
    corpus: PathBuf,
    #[arg(long, default_value = "stage12.jsonl")]
    stage12: PathBuf,
    #[arg(long, default_value = "localized.jsonl")]
    localized: PathBuf,
    #[arg(long)]
    repo_checkout: PathBuf,
    /// Write the annotated files into the checkout.
    #[arg(long)]
    apply: bool,
    /// Write the annotated files under this directory instead.
    #[arg(long, conflicts_with = "apply")]
    apply_to: Option<PathBuf>,
    /// Save the unified diff here instead of printing it.
    #[arg(long)]
    diff: Option<PathBuf>,
    /// Shell command run on each annotated file (`$EYEQ_FILE`).
    #[arg(long)]
    compile_hook: Option<String>,
    #[arg(long)]
    no_cwe_hint: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "sites.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    target: Target,
    #[arg(long, default_value = "annot")]
    mode: Mode,
    /// Seed inputs, one per file; the target's built-in seeds when absent.
    #[arg(long)]
    seeds: Option<PathBuf>,
    #[arg(long)]
    budget_execs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long)]
    stop_after_crashes: Option<usize>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct TriageArgs {
    /// Campaign reports: `report.json` files or `campaigns.jsonl` artifacts.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Re-execute every unique crash and fail unless it reproduces.
    #[arg(long)]
    check_replay: bool,
    #[arg(long, default_value = "triage.jsonl")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TaxonomyCommand {
    /// The category list, or one category with its subcategories.
    Show {
        #[arg(long, value_delimiter = ',')]
        category: Vec<u32>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TargetCommand {
    /// Every target with its annotation sites, as JSON.
    List,
    /// Runs one input once.
    Run {
        #[arg(long)]
        name: Target,
        #[arg(long)]
        input_hex: String,
        #[arg(long, default_value = "annot")]
        mode: Mode,
    },
}

/// Failure class, which decides the exit status.
enum Failure {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

type Result<T> = std::result::Result<T, Failure>;

trait StageErr<T> {
    fn stage(self) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> StageErr<T> for std::result::Result<T, E> {
    fn stage(self) -> Result<T> {
        self.map_err(|e| Failure::Stage(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).map_err(|e| Failure::Config(e.into()))
}

fn require_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(p) => load_config(p),
        None => Err(Failure::Config(anyhow!("this command needs --config <FILE>"))),
    }
}

/// A configuration from stage flags, or the `--config` file when given.
fn stage_config(cli: &Cli, model: &ModelArgs, paths: Paths, flags: Flags, compile_hook: Option<String>) -> Result<PipelineConfig> {
    if let Some(p) = &cli.config {
        return load_config(p);
    }
    let kind = match model.client {
        ClientArg::Mock => ClientKind::Mock,
        ClientArg::Replay => ClientKind::Replay,
        ClientArg::Live => ClientKind::Live,
    };
    Ok(PipelineConfig {
        paths: Paths { prompts: model.prompts.clone(), taxonomy: model.taxonomy.clone(), ..paths },
        client: ClientConfig {
            kind,
            mock_rules: model.mock_rules.clone(),
            record_dir: Some(model.record_dir.clone()),
            max_tokens: model.max_tokens,
        },
        parallelism: model.parallelism,
        fuzz: FuzzSettings { budget_execs: 1, rng_seeds: vec![0], extra_targets: Vec::new(), stop_after_crashes: None },
        flags,
        compile_hook,
    })
}

fn paths(checkout: PathBuf, pr_diffs: Option<PathBuf>) -> Paths {
    Paths { fixtures: None, corpus: None, checkout, pr_diffs, prompts: None, taxonomy: None, out_dir: PathBuf::from(".") }
}

fn load_corpus(p: &Path) -> Result<ReviewCorpus> {
    ReviewCorpus::load(p).stage()
}

fn load_classes(p: &Path) -> Result<Vec<ClassificationRecord>> {
    artifact::read::<ClassificationMeta, _>(p, classify::ARTIFACT).map(|(_, r)| r).stage()
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Classify(a) => {
            let cfg = stage_config(cli, &a.model, paths(PathBuf::from("."), None), Flags::default(), None)?;
            let corpus = load_corpus(&a.corpus)?;
            let (meta, recs) = Context::new(&cfg).classify(&corpus).map_err(|e| Failure::Stage(anyhow!(e)))?;
            artifact::write(&a.out, classify::ARTIFACT, &meta, &recs).stage()?;
            let relevant = recs.iter().filter(|r| r.is_security_relevant()).count();
            println!("{} comments classified, {relevant} security-relevant -> {}", recs.len(), a.out.display());
            Ok(())
        }
        Command::Localize(a) => {
            let flags = Flags { no_cwe_hint: a.no_cwe_hint, apply: false };
            let cfg = stage_config(cli, &a.model, paths(a.repo_checkout.clone(), a.pr_diffs.clone()), flags, None)?;
            let corpus = load_corpus(&a.corpus)?;
            let classes = load_classes(&a.stage12)?;
            let (meta, recs) = Context::new(&cfg).localize(&corpus, &classes).map_err(|e| Failure::Stage(anyhow!(e)))?;
            artifact::write(&a.out, localize::ARTIFACT, &meta, &recs).stage()?;
            let kept = recs.iter().filter(|r| !r.result.abstained).count();
            println!("{} comments localized, {kept} with a function -> {}", recs.len(), a.out.display());
            Ok(())
        }
        Command::Instrument(a) => instrument(cli, a),
        Command::Fuzz(a) => fuzz(cli, a),
        Command::Triage(a) => triage(a),
        Command::Taxonomy { command: TaxonomyCommand::Show { category, file } } => {
            let tax = match file {
                Some(p) => taxonomy::load_taxonomy(p).map_err(|e| Failure::Config(e.into()))?,
                None => taxonomy::bundled(),
            };
            if category.is_empty() {
                print!("{}", tax.render_category_list());
            } else {
                let pack = tax.build_context_pack(category).map_err(|e| Failure::Config(e.into()))?;
                print!("{}", pack.render());
            }
            Ok(())
        }
        Command::Target { command } => target(command),
        Command::Run { resume } => {
            let cfg = require_config(cli)?;
            let out = pipeline::run_pipeline(&cfg, *resume).stage()?;
            let names = |v: &[pipeline::Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
            if !out.reused.is_empty() {
                println!("reused: {}", names(&out.reused));
            }
            println!("ran: {}", names(&out.ran));
            print!("{}", pipeline::render_markdown(&out.summary));
            Ok(())
        }
        Command::Report { out_dir } => {
            let dir = match out_dir {
                Some(d) => d.clone(),
                None => require_config(cli)?.paths.out_dir,
            };
            let summary = pipeline::report_from_dir(&dir).map_err(|e| Failure::Stage(anyhow!(e)))?;
            pipeline::write_report(&dir, &summary).map_err(|e| Failure::Stage(anyhow!(e)))?;
            print!("{}", pipeline::render_markdown(&summary));
            Ok(())
        }
    }
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let corpus = match (&a.repo, &a.fixture) {
        (Some(repo), _) => {
            let prs = corpus::parse_pr_range(a.prs.as_deref().unwrap_or_default()).map_err(|e| Failure::Config(e.into()))?;
            GithubSource::new(repo, Recorder::new(&a.record_dir)).ingest(&prs).stage()?
        }
        (None, Some(dir)) => corpus::ingest_fixture(dir).stage()?,
        (None, None) => return Err(Failure::Config(anyhow!("give --repo and --prs, or --fixture"))),
    };
    corpus.save(&a.out).stage()?;
    println!("{} comments -> {}", corpus.comments.len(), a.out.display());
    Ok(())
}

fn instrument(cli: &Cli, a: &InstrumentArgs) -> Result<()> {
    let flags = Flags { no_cwe_hint: a.no_cwe_hint, apply: a.apply };
    let cfg = stage_config(cli, &a.model, paths(a.repo_checkout.clone(), None), flags, a.compile_hook.clone())?;
    let corpus = load_corpus(&a.corpus)?;
    let classes = load_classes(&a.stage12)?;
    let (_, locs) = artifact::read::<LocalizationMeta, LocalizationRecord>(&a.localized, localize::ARTIFACT).stage()?;
    let apply_to = match (&a.apply_to, cfg.flags.apply) {
        (Some(dir), _) => Some(dir.clone()),
        (None, true) => Some(cfg.paths.checkout.clone()),
        (None, false) => None,
    };
    let (meta, outcome): (SitesMeta, instrument::Outcome) =
        Context::new(&cfg).instrument(&corpus, &classes, &locs, apply_to).map_err(|e| Failure::Stage(anyhow!(e)))?;
    artifact::write(&a.out, instrument::ARTIFACT, &meta, &outcome.records).stage()?;
    match &a.diff {
        Some(p) => write_atomic(p, outcome.diff.as_bytes()).with_context(|| p.display().to_string()).stage()?,
        None => print!("{}", outcome.diff),
    }
    let accepted = outcome.records.iter().filter(|r| r.site.is_some()).count();
    eprintln!("{} plans, {accepted} injected -> {}", outcome.records.len(), a.out.display());
    Ok(())
}

fn read_seed_dir(dir: &Path) -> anyhow::Result<Vec<Vec<u8>>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| dir.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files.iter().map(|p| fs::read(p).with_context(|| p.display().to_string())).collect()
}

fn fuzz(cli: &Cli, a: &FuzzArgs) -> Result<()> {
    let (budget, stop_after) = match &cli.config {
        Some(p) => {
            let c = load_config(p)?;
            (c.fuzz.budget_execs, c.fuzz.stop_after_crashes)
        }
        None => match a.budget_execs {
            Some(b) => (b, a.stop_after_crashes),
            None => return Err(Failure::Config(anyhow!("--budget-execs is required without --config"))),
        },
    };
    let seeds = match &a.seeds {
        Some(dir) => read_seed_dir(dir).stage()?,
        None => a.target.default_seeds().into_iter().map(|(_, s)| s).collect(),
    };
    let mut cfg = FuzzConfig::new(a.mode, budget, a.rng_seed);
    cfg.stop_after_crashes = stop_after;
    let report = fuzzer::run_campaign(&a.target, &seeds, &cfg).stage()?.report;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_atomic(&a.out, json.as_bytes()).with_context(|| a.out.display().to_string()).stage()?;
    match report.execs_to_first_crash() {
        Some(n) => println!("{} {}: first crash after {n} execs -> {}", report.target, a.mode.as_str(), a.out.display()),
        None => println!("{} {}: no crash in {} execs -> {}", report.target, a.mode.as_str(), report.total_execs, a.out.display()),
    }
    Ok(())
}

fn read_reports(p: &Path) -> anyhow::Result<Vec<CampaignReport>> {
    let text = fs::read_to_string(p).with_context(|| p.display().to_string())?;
    if text.trim_start().starts_with("{\"schema_version\"") && text.contains("\"artifact\"") {
        let (_, reports): (pipeline::CampaignsMeta, Vec<CampaignReport>) = artifact::parse(p, &text, CAMPAIGNS_ARTIFACT)?;
        return Ok(reports);
    }
    Ok(vec![serde_json::from_str(&text).with_context(|| p.display().to_string())?])
}

fn triage(a: &TriageArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &a.reports {
        reports.extend(read_reports(p).stage()?);
    }
    let recs = pipeline::triage(&reports);
    if a.check_replay {
        for r in &recs {
            let t: Target = r.target.parse().map_err(|e: String| Failure::Stage(anyhow!(e)))?;
            let input = hex::decode(&r.input).stage()?;
            let mode = r.modes.first().copied().unwrap_or(Mode::Annot);
            if fuzzer::replay(&t, &input, mode) != Some((r.kind, r.stack_hash.clone())) {
                return Err(Failure::Stage(anyhow!("{} crash {} does not reproduce", r.target, r.stack_hash)));
            }
        }
    }
    artifact::write(&a.out, TRIAGE_ARTIFACT, &NoMeta {}, &recs).stage()?;
    println!("{} reports, {} unique crashes -> {}", reports.len(), recs.len(), a.out.display());
    Ok(())
}

fn target(cmd: &TargetCommand) -> Result<()> {
    match cmd {
        TargetCommand::List => {
            let specs: Vec<_> = Target::ALL.iter().map(|t| t.spec()).collect();
            println!("{}", serde_json::to_string_pretty(&specs).expect("specs serialize"));
            Ok(())
        }
        TargetCommand::Run { name, input_hex, mode } => {
            let input = hex::decode(input_hex.trim()).map_err(|e| Failure::Config(anyhow!("--input-hex: {e}")))?;
            let mut fb = FeedbackState::new();
            let mut events: Vec<AnnotationEvent> = Vec::new();
            let outcome = {
                let mut x = Exec::new(&mut fb, mode.annotations()).with_event_log(&mut events);
                name.execute(&input, &mut x)
            };
            let (crash, frames, hash) = match &outcome {
                Outcome::Ok => (None, Vec::new(), None),
                Outcome::Crash { kind, frames } => {
                    (Some(kind.as_str()), frames.clone(), Some(format!("{:016x}", fuzzer::stack_hash(frames))))
                }
            };
            let v = serde_json::json!({
                "target": name.name(),
                "mode": mode.as_str(),
                "crash": crash,
                "stack_hash": hash,
                "frames": frames,
                "annotation_events": events.len(),
            });
            println!("{v}");
            Ok(())
        }
    }
}
