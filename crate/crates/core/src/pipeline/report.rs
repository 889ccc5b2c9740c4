//! Summary of a pipeline run: unique crashes per mode, their overlap, and
//! how many comments survived each stage. The markdown is rendered from the
//! JSON summary alone.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::fuzzer::{CampaignReport, CrashKind, Mode};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub comments: usize,
    pub security_relevant: usize,
    pub localized: usize,
    pub annotated: usize,
    pub fuzzed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts {
    pub campaigns: usize,
    pub campaigns_with_crash: usize,
    pub total_execs: u64,
    pub unique_crashes: usize,
}

/// Unique crashes split by which modes found them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub annot_only: usize,
    pub baseline_only: usize,
    pub both: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRow {
    pub target: String,
    pub annot: ModeCounts,
    pub baseline: ModeCounts,
    /// Median executions to the first crash; a campaign without a crash
    /// counts as its budget.
    pub annot_median_execs: Option<u64>,
    pub baseline_median_execs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub funnel: Funnel,
    pub annot: ModeCounts,
    pub baseline: ModeCounts,
    pub overlap: Overlap,
    pub targets: Vec<TargetRow>,
}

type Key = (String, CrashKind, String);

fn keys(r: &CampaignReport) -> impl Iterator<Item = Key> + '_ {
    r.unique_crashes.iter().map(|c| (r.target.clone(), c.kind, c.stack_hash.clone()))
}

fn counts<'a>(reports: impl Iterator<Item = &'a CampaignReport>) -> (ModeCounts, BTreeSet<Key>) {
    let mut m = ModeCounts::default();
    let mut seen = BTreeSet::new();
    for r in reports {
        m.campaigns += 1;
        m.total_execs += r.total_execs;
        if !r.unique_crashes.is_empty() {
            m.campaigns_with_crash += 1;
        }
        seen.extend(keys(r));
    }
    m.unique_crashes = seen.len();
    (m, seen)
}

/// Lower median, so the value is always one of the observations.
pub fn median(mut v: Vec<u64>) -> Option<u64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

fn median_execs<'a>(reports: impl Iterator<Item = &'a CampaignReport>) -> Option<u64> {
    median(reports.map(|r| r.execs_to_first_crash().unwrap_or(r.budget_execs)).collect())
}

pub fn summarize(reports: &[CampaignReport], funnel: Funnel) -> Summary {
    let of = |mode: Mode| reports.iter().filter(move |r| r.mode == mode);
    let (annot, a_keys) = counts(of(Mode::Annot));
    let (baseline, b_keys) = counts(of(Mode::Baseline));
    let overlap = Overlap {
        annot_only: a_keys.difference(&b_keys).count(),
        baseline_only: b_keys.difference(&a_keys).count(),
        both: a_keys.intersection(&b_keys).count(),
    };
    let mut by_target: BTreeMap<&str, Vec<&CampaignReport>> = BTreeMap::new();
    for r in reports {
        by_target.entry(r.target.as_str()).or_default().push(r);
    }
    let targets = by_target
        .into_iter()
        .map(|(t, rs)| {
            let of = |mode: Mode| rs.iter().copied().filter(move |r| r.mode == mode);
            TargetRow {
                target: t.to_string(),
                annot: counts(of(Mode::Annot)).0,
                baseline: counts(of(Mode::Baseline)).0,
                annot_median_execs: median_execs(of(Mode::Annot)),
                baseline_median_execs: median_execs(of(Mode::Baseline)),
            }
        })
        .collect();
    Summary { funnel, annot, baseline, overlap, targets }
}

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

pub fn render_markdown(s: &Summary) -> String {
    let mut o = String::new();
    let f = &s.funnel;
    let _ = writeln!(o, "# Pipeline report\n");
    let _ = writeln!(o, "## Stage funnel\n");
    let _ = writeln!(o, "| stage | comments |\n|---|---:|");
    for (name, n) in [
        ("ingested", f.comments),
        ("security-relevant", f.security_relevant),
        ("localized", f.localized),
        ("annotated", f.annotated),
        ("fuzzed", f.fuzzed),
    ] {
        let _ = writeln!(o, "| {name} | {n} |");
    }
    let _ = writeln!(o, "\n## Unique crashes per mode\n");
    let _ = writeln!(o, "| mode | campaigns | campaigns with a crash | executions | unique crashes |\n|---|---:|---:|---:|---:|");
    for (name, m) in [("annotation-aware", &s.annot), ("baseline", &s.baseline)] {
        let _ = writeln!(
            o,
            "| {name} | {} | {} | {} | {} |",
            m.campaigns, m.campaigns_with_crash, m.total_execs, m.unique_crashes
        );
    }
    let _ = writeln!(o, "\n## Overlap\n");
    let _ = writeln!(o, "| found by | unique crashes |\n|---|---:|");
    let _ = writeln!(o, "| annotation-aware only | {} |", s.overlap.annot_only);
    let _ = writeln!(o, "| baseline only | {} |", s.overlap.baseline_only);
    let _ = writeln!(o, "| both | {} |", s.overlap.both);
    if !s.targets.is_empty() {
        let _ = writeln!(o, "\n## Targets\n");
        let _ = writeln!(
            o,
            "| target | annot hits | baseline hits | annot median execs | baseline median execs |\n|---|---:|---:|---:|---:|"
        );
        for t in &s.targets {
            let _ = writeln!(
                o,
                "| {} | {}/{} | {}/{} | {} | {} |",
                t.target,
                t.annot.campaigns_with_crash,
                t.annot.campaigns,
                t.baseline.campaigns_with_crash,
                t.baseline.campaigns,
                opt(t.annot_median_execs),
                opt(t.baseline_median_execs)
            );
        }
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzer::CrashRecord;

    fn report(mode: Mode, crashes: &[(&str, u64)]) -> CampaignReport {
        CampaignReport {
            schema_version: 1,
            target: "t".into(),
            mode,
            rng_seed: 0,
            budget_execs: 100,
            total_execs: 100,
            total_exec_us: 0,
            initial_seeds: 1,
            corpus_size: 1,
            annotation_seeds: 0,
            edges_seen: 0,
            annot_seen: 0,
            total_crashes: crashes.len() as u64,
            unique_crashes: crashes
                .iter()
                .map(|(h, at)| CrashRecord {
                    kind: CrashKind::Segv,
                    stack_hash: (*h).into(),
                    frames: vec![],
                    input: String::new(),
                    first_seen: *at,
                    time_to_discovery_us: 0,
                    parent: None,
                })
                .collect(),
        }
    }

    #[test]
    fn shared_crash_counts_once_in_overlap() {
        let s = summarize(&[report(Mode::Annot, &[("aa", 5), ("bb", 9)]), report(Mode::Baseline, &[("aa", 50)])], Funnel::default());
        assert_eq!(s.overlap, Overlap { annot_only: 1, baseline_only: 0, both: 1 });
        assert_eq!(s.targets[0].annot_median_execs, Some(5));
        assert_eq!(s.targets[0].baseline_median_execs, Some(50));
    }

    #[test]
    fn degenerate_inputs() {
        let s = summarize(&[report(Mode::Annot, &[("aa", 5)])], Funnel::default());
        assert_eq!(s.overlap, Overlap { annot_only: 1, baseline_only: 0, both: 0 });
        assert_eq!(s.baseline, ModeCounts::default());
        let e = summarize(&[], Funnel::default());
        assert_eq!(e, Summary::default());
        assert!(render_markdown(&e).contains("| both | 0 |"));
    }

    #[test]
    fn timeouts_count_as_budget() {
        let rs = [report(Mode::Baseline, &[]), report(Mode::Baseline, &[]), report(Mode::Baseline, &[("aa", 7)])];
        assert_eq!(summarize(&rs, Funnel::default()).targets[0].baseline_median_execs, Some(100));
    }
}
