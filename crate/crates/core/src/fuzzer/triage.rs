//! Crash records, deduplication and merging of campaign reports.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::harness::CrashKind;
use super::CampaignReport;

/// One crashing input. `(kind, stack_hash)` is the dedup key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub kind: CrashKind,
    /// Hex-encoded 64-bit hash of the innermost three frames.
    pub stack_hash: String,
    pub frames: Vec<String>,
    /// Hex-encoded crashing input.
    pub input: String,
    /// Execution counter at discovery, starting at 1.
    pub first_seen: u64,
    /// Simulated microseconds spent before discovery.
    pub time_to_discovery_us: u64,
    /// Corpus id of the seed the input was mutated from; `None` for an
    /// initial seed that crashed.
    pub parent: Option<usize>,
}

impl CrashRecord {
    pub fn key(&self) -> (CrashKind, &str) {
        (self.kind, self.stack_hash.as_str())
    }

    pub fn input_bytes(&self) -> Vec<u8> {
        hex::decode(&self.input).unwrap_or_default()
    }
}

/// Groups crashes by `(kind, stack_hash)` keeping the earliest of each group.
/// Ties on `first_seen` go to the lexicographically smaller input so the
/// result does not depend on the order of `crashes`.
pub fn dedup(crashes: &[CrashRecord]) -> Vec<CrashRecord> {
    let mut best: BTreeMap<(CrashKind, String), &CrashRecord> = BTreeMap::new();
    for c in crashes {
        let k = (c.kind, c.stack_hash.clone());
        match best.get(&k) {
            Some(b) if (b.first_seen, &b.input) <= (c.first_seen, &c.input) => {}
            _ => {
                best.insert(k, c);
            }
        }
    }
    let mut out: Vec<CrashRecord> = best.into_values().cloned().collect();
    out.sort_by(|a, b| (a.first_seen, a.kind, &a.stack_hash).cmp(&(b.first_seen, b.kind, &b.stack_hash)));
    out
}

/// Result of merging several campaign reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageReport {
    pub schema_version: u32,
    pub reports: usize,
    pub total_execs: u64,
    pub unique_crashes: Vec<CrashRecord>,
    /// For each unique crash, the indices of the input reports that hit it.
    pub found_in: Vec<Vec<usize>>,
}

pub fn merge_reports(reports: &[CampaignReport]) -> TriageReport {
    let all: Vec<CrashRecord> = reports.iter().flat_map(|r| r.unique_crashes.iter().cloned()).collect();
    let unique = dedup(&all);
    let found_in = unique
        .iter()
        .map(|u| {
            reports
                .iter()
                .enumerate()
                .filter(|(_, r)| r.unique_crashes.iter().any(|c| c.key() == u.key()))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    TriageReport {
        schema_version: super::REPORT_SCHEMA_VERSION,
        reports: reports.len(),
        total_execs: reports.iter().map(|r| r.total_execs).sum(),
        unique_crashes: unique,
        found_in,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: CrashKind, hash: &str, seen: u64) -> CrashRecord {
        CrashRecord {
            kind,
            stack_hash: hash.into(),
            frames: vec![],
            input: format!("{seen:02x}"),
            first_seen: seen,
            time_to_discovery_us: seen,
            parent: None,
        }
    }

    #[test]
    fn same_frames_same_kind_collapse() {
        let u = dedup(&[rec(CrashKind::Segv, "aa", 9), rec(CrashKind::Segv, "aa", 4)]);
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].first_seen, 4);
    }

    #[test]
    fn kind_is_part_of_the_key() {
        let u = dedup(&[rec(CrashKind::Segv, "aa", 1), rec(CrashKind::Abort, "aa", 2)]);
        assert_eq!(u.len(), 2);
    }

    #[test]
    fn empty() {
        assert!(dedup(&[]).is_empty());
    }

    #[test]
    fn idempotent_and_order_free() {
        let v = vec![
            rec(CrashKind::Segv, "aa", 3),
            rec(CrashKind::Abort, "bb", 1),
            rec(CrashKind::Segv, "aa", 2),
            rec(CrashKind::Assert, "aa", 7),
        ];
        let once = dedup(&v);
        assert_eq!(dedup(&once), once);
        let mut r = v.clone();
        r.reverse();
        assert_eq!(dedup(&r), once);
    }
}
