//! Greybox fuzzing loop with edge and annotation feedback.
//!
//! The loop is single-threaded and fully determined by the configuration:
//! time is measured in executions and in a simulated cost model, never in
//! wall-clock time, unless a wall-clock budget is explicitly requested.

pub mod harness;
pub mod mutate;
pub mod triage;

pub use harness::{exec_us, frame_id, stack_hash, CrashKind, Exec, Harness, Outcome};
pub use triage::{dedup, merge_reports, CrashRecord, TriageReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use crate::runtime::{CampaignState, FeedbackState, Novelty};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ENERGY: u32 = 64;
/// Energy multiplier for annotation-novel seeds in annotation mode.
pub const ANNOTATION_ENERGY_FACTOR: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Annot,
    Baseline,
}

impl Mode {
    pub fn annotations(self) -> bool {
        self == Mode::Annot
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Annot => "annot",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "annot" => Ok(Mode::Annot),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(format!("unknown mode `{s}` (expected annot or baseline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoundBy {
    Initial,
    Mutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltySource {
    Edge,
    Annotation,
    Both,
}

impl NoveltySource {
    fn from_novelty(n: Novelty) -> Self {
        match (n.edge, n.annotation) {
            (_, false) => NoveltySource::Edge,
            (false, true) => NoveltySource::Annotation,
            (true, true) => NoveltySource::Both,
        }
    }

    pub fn includes_annotation(self) -> bool {
        self != NoveltySource::Edge
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub id: usize,
    #[serde(with = "hex_bytes")]
    pub input: Vec<u8>,
    pub exec_us: u64,
    pub found_by: FoundBy,
    pub parent: Option<usize>,
    pub novelty_source: NoveltySource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub mode: Mode,
    pub budget_execs: u64,
    /// Optional wall-clock cap. Reports are only reproducible without it.
    pub budget_secs: Option<f64>,
    pub rng_seed: u64,
    pub max_len: usize,
    pub energy: u32,
    /// Stop once this many unique crashes are known.
    pub stop_after_crashes: Option<usize>,
}

impl FuzzConfig {
    pub fn new(mode: Mode, budget_execs: u64, rng_seed: u64) -> Self {
        Self {
            mode,
            budget_execs,
            budget_secs: None,
            rng_seed,
            max_len: mutate::DEFAULT_MAX_LEN,
            energy: DEFAULT_ENERGY,
            stop_after_crashes: None,
        }
    }

    pub fn stop_after(mut self, n: usize) -> Self {
        self.stop_after_crashes = Some(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub target: String,
    pub mode: Mode,
    pub rng_seed: u64,
    pub budget_execs: u64,
    pub total_execs: u64,
    pub total_exec_us: u64,
    pub initial_seeds: usize,
    pub corpus_size: usize,
    pub annotation_seeds: usize,
    pub edges_seen: usize,
    pub annot_seen: usize,
    pub total_crashes: u64,
    pub unique_crashes: Vec<CrashRecord>,
}

impl CampaignReport {
    /// Executions until the first crash, or `None` if nothing crashed.
    pub fn execs_to_first_crash(&self) -> Option<u64> {
        self.unique_crashes.iter().map(|c| c.first_seen).min()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FuzzError {
    #[error("no seeds given")]
    NoSeeds,
    #[error("every initial seed crashes the target")]
    AllSeedsCrash,
    #[error("target `{target}` panicked on input {input_hex}: {message}")]
    HarnessPanic { target: String, input_hex: String, message: String },
}

/// Everything a campaign produced, including the final corpus.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub report: CampaignReport,
    pub corpus: Vec<Seed>,
}

/// Round-robin scheduler: one pass over the queue per cycle, each seed getting
/// `energy` trials, doubled for annotation-novel seeds in annotation mode.
pub fn energy_for(seed: &Seed, mode: Mode, base: u32) -> u32 {
    if mode.annotations() && seed.novelty_source.includes_annotation() {
        base * ANNOTATION_ENERGY_FACTOR
    } else {
        base
    }
}

/// Next seed index and its energy. `cursor` is advanced past the returned seed
/// and wraps at the end of the corpus.
pub fn schedule(corpus: &[Seed], cursor: &mut usize, mode: Mode, base: u32) -> (usize, u32) {
    assert!(!corpus.is_empty(), "schedule on an empty corpus");
    if *cursor >= corpus.len() {
        *cursor = 0;
    }
    let i = *cursor;
    *cursor += 1;
    (i, energy_for(&corpus[i], mode, base))
}

struct Runner<'h> {
    target: &'h dyn Harness,
    fb: FeedbackState,
    campaign: CampaignState,
    annotations: bool,
}

enum Ran {
    Ok { novelty: Novelty, exec_us: u64 },
    Crash { kind: CrashKind, frames: Vec<&'static str>, exec_us: u64 },
}

impl Runner<'_> {
    fn run(&mut self, input: &[u8]) -> Result<Ran, FuzzError> {
        self.fb.reset();
        let fb = &mut self.fb;
        let target = self.target;
        let annotations = self.annotations;
        let res = catch_unwind(AssertUnwindSafe(|| {
            let mut x = Exec::new(fb, annotations);
            let out = target.execute(input, &mut x);
            (out, x.cost())
        }));
        let (out, cost) = res.map_err(|p| FuzzError::HarnessPanic {
            target: self.target.name().to_string(),
            input_hex: hex::encode(input),
            message: panic_message(&*p),
        })?;
        let exec_us = exec_us(input.len(), cost);
        Ok(match out {
            Outcome::Ok => Ran::Ok { novelty: self.campaign.is_interesting(&self.fb), exec_us },
            Outcome::Crash { kind, frames } => Ran::Crash { kind, frames, exec_us },
        })
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Runs one campaign. The result depends only on the arguments (and on the
/// wall clock if `budget_secs` is set).
pub fn run_campaign(target: &dyn Harness, seeds: &[Vec<u8>], cfg: &FuzzConfig) -> Result<Campaign, FuzzError> {
    if seeds.is_empty() {
        return Err(FuzzError::NoSeeds);
    }
    let started = Instant::now();
    let deadline = cfg.budget_secs.map(|s| started + Duration::from_secs_f64(s.max(0.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut runner = Runner {
        target,
        fb: FeedbackState::new(),
        campaign: CampaignState::new(),
        annotations: cfg.mode.annotations(),
    };
    let mut corpus: Vec<Seed> = Vec::new();
    let mut crashes: Vec<CrashRecord> = Vec::new();
    let mut crash_keys: HashSet<(CrashKind, u64)> = HashSet::new();
    let mut execs = 0u64;
    let mut elapsed_us = 0u64;
    let mut total_crashes = 0u64;

    let out_of_budget = |execs: u64| execs >= cfg.budget_execs || deadline.is_some_and(|d| Instant::now() >= d);

    let mut record_crash = |kind: CrashKind,
                            frames: &[&str],
                            input: &[u8],
                            parent: Option<usize>,
                            execs: u64,
                            elapsed: u64| {
        let h = stack_hash(frames);
        if crash_keys.insert((kind, h)) {
            crashes.push(CrashRecord {
                kind,
                stack_hash: format!("{h:016x}"),
                frames: frames.iter().take(3).map(|f| f.to_string()).collect(),
                input: hex::encode(input),
                first_seen: execs,
                time_to_discovery_us: elapsed,
                parent,
            });
        }
        crashes.len()
    };
    let done = |n: usize| cfg.stop_after_crashes.is_some_and(|k| n >= k);

    // Initial seeds are executed once each; with no budget left they join
    // the corpus unexecuted.
    let mut unique = 0usize;
    for input in seeds {
        let input: Vec<u8> = input.iter().copied().take(cfg.max_len).collect();
        if out_of_budget(execs) || done(unique) {
            corpus.push(Seed {
                id: corpus.len(),
                input,
                exec_us: 1,
                found_by: FoundBy::Initial,
                parent: None,
                novelty_source: NoveltySource::Edge,
            });
            continue;
        }
        execs += 1;
        match runner.run(&input)? {
            Ran::Ok { novelty, exec_us } => {
                elapsed_us += exec_us;
                corpus.push(Seed {
                    id: corpus.len(),
                    input,
                    exec_us,
                    found_by: FoundBy::Initial,
                    parent: None,
                    novelty_source: NoveltySource::from_novelty(novelty),
                });
            }
            Ran::Crash { kind, frames, exec_us } => {
                elapsed_us += exec_us;
                total_crashes += 1;
                unique = record_crash(kind, &frames, &input, None, execs, elapsed_us);
            }
        }
    }
    if corpus.is_empty() {
        return Err(FuzzError::AllSeedsCrash);
    }

    let mut cursor = 0usize;
    'outer: while !out_of_budget(execs) && !done(unique) {
        let (idx, energy) = schedule(&corpus, &mut cursor, cfg.mode, cfg.energy);
        for _ in 0..energy {
            if out_of_budget(execs) || done(unique) {
                break 'outer;
            }
            let child = {
                let donors: Vec<&[u8]> = if corpus.len() > 1 {
                    let j = rng.gen_range(0..corpus.len());
                    vec![corpus[j].input.as_slice()]
                } else {
                    vec![]
                };
                mutate::mutate(&corpus[idx].input, &mut rng, &donors, cfg.max_len)
            };
            execs += 1;
            match runner.run(&child)? {
                Ran::Ok { novelty, exec_us } => {
                    elapsed_us += exec_us;
                    if novelty.any() {
                        corpus.push(Seed {
                            id: corpus.len(),
                            input: child,
                            exec_us,
                            found_by: FoundBy::Mutation,
                            parent: Some(idx),
                            novelty_source: NoveltySource::from_novelty(novelty),
                        });
                    }
                }
                Ran::Crash { kind, frames, exec_us } => {
                    elapsed_us += exec_us;
                    total_crashes += 1;
                    unique = record_crash(kind, &frames, &child, Some(idx), execs, elapsed_us);
                }
            }
        }
    }

    let report = CampaignReport {
        schema_version: REPORT_SCHEMA_VERSION,
        target: target.name().to_string(),
        mode: cfg.mode,
        rng_seed: cfg.rng_seed,
        budget_execs: cfg.budget_execs,
        total_execs: execs,
        total_exec_us: elapsed_us,
        initial_seeds: seeds.len(),
        corpus_size: corpus.len(),
        annotation_seeds: corpus.iter().filter(|s| s.novelty_source.includes_annotation()).count(),
        edges_seen: runner.campaign.edges_seen(),
        annot_seen: runner.campaign.annot_seen(),
        total_crashes,
        unique_crashes: crashes,
    };
    Ok(Campaign { report, corpus })
}

/// Re-executes a crash input and returns its `(kind, stack_hash)` if it
/// still crashes.
pub fn replay(target: &dyn Harness, input: &[u8], mode: Mode) -> Option<(CrashKind, String)> {
    let mut fb = FeedbackState::new();
    let mut x = Exec::new(&mut fb, mode.annotations());
    match target.execute(input, &mut x) {
        Outcome::Crash { kind, frames } => Some((kind, format!("{:016x}", stack_hash(&frames)))),
        Outcome::Ok => None,
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::Target;

    fn seed(src: NoveltySource) -> Seed {
        Seed { id: 0, input: vec![1], exec_us: 1, found_by: FoundBy::Initial, parent: None, novelty_source: src }
    }

    #[test]
    fn uniform_energy_for_edge_corpus() {
        let c = vec![seed(NoveltySource::Edge), seed(NoveltySource::Edge)];
        let mut cur = 0;
        let e: Vec<_> = (0..4).map(|_| schedule(&c, &mut cur, Mode::Annot, 10)).collect();
        assert_eq!(e, vec![(0, 10), (1, 10), (0, 10), (1, 10)]);
    }

    #[test]
    fn annotation_seed_gets_double_energy() {
        let c = vec![seed(NoveltySource::Edge), seed(NoveltySource::Annotation), seed(NoveltySource::Edge)];
        let mut cur = 0;
        let e: Vec<_> = (0..3).map(|_| schedule(&c, &mut cur, Mode::Annot, 10).1).collect();
        assert_eq!(e, vec![10, 20, 10]);
        let mut cur = 0;
        let e: Vec<_> = (0..3).map(|_| schedule(&c, &mut cur, Mode::Baseline, 10).1).collect();
        assert_eq!(e, vec![10, 10, 10]);
    }

    #[test]
    fn zero_budget_keeps_initial_corpus() {
        let seeds = vec![b"a".to_vec(), b"b".to_vec()];
        let c = run_campaign(&Target::Magic, &seeds, &FuzzConfig::new(Mode::Annot, 0, 1)).unwrap();
        assert_eq!(c.report.total_execs, 0);
        assert_eq!(c.report.corpus_size, 2);
        assert!(c.report.unique_crashes.is_empty());
    }

    #[test]
    fn no_seeds_is_an_error() {
        assert!(matches!(
            run_campaign(&Target::Magic, &[], &FuzzConfig::new(Mode::Annot, 10, 1)),
            Err(FuzzError::NoSeeds)
        ));
    }

    #[test]
    fn crashing_seed_is_recorded() {
        let seeds = vec![b"\x7fELF".to_vec(), b"zzzz".to_vec()];
        let c = run_campaign(&Target::Magic, &seeds, &FuzzConfig::new(Mode::Baseline, 10, 1)).unwrap();
        assert_eq!(c.report.unique_crashes.len(), 1);
        assert_eq!(c.report.unique_crashes[0].first_seen, 1);
        assert_eq!(c.report.corpus_size, 1 + c.corpus.iter().filter(|s| s.found_by == FoundBy::Mutation).count());
    }

    struct Panicky;
    impl Harness for Panicky {
        fn name(&self) -> &'static str {
            "panicky"
        }
        fn execute(&self, input: &[u8], _x: &mut Exec<'_>) -> Outcome {
            if input.first() == Some(&b'!') {
                panic!("boom");
            }
            Outcome::Ok
        }
    }

    #[test]
    fn harness_panic_aborts() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let r = run_campaign(&Panicky, &[b"!".to_vec()], &FuzzConfig::new(Mode::Annot, 5, 0));
        std::panic::set_hook(prev);
        match r {
            Err(FuzzError::HarnessPanic { message, input_hex, .. }) => {
                assert_eq!(message, "boom");
                assert_eq!(input_hex, "21");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reproducible() {
        let seeds: Vec<Vec<u8>> = Target::Maze.default_seeds().into_iter().map(|s| s.1).collect();
        let cfg = FuzzConfig::new(Mode::Annot, 20_000, 5);
        let a = run_campaign(&Target::Maze, &seeds, &cfg).unwrap();
        let b = run_campaign(&Target::Maze, &seeds, &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.corpus, b.corpus);
    }
}
