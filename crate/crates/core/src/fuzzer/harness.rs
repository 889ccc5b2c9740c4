use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::runtime::{fnv1a64, AnnotationEvent, FeedbackState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashKind {
    Segv,
    Abort,
    StackOverflow,
    Assert,
}

impl CrashKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CrashKind::Segv => "segv",
            CrashKind::Abort => "abort",
            CrashKind::StackOverflow => "stack_overflow",
            CrashKind::Assert => "assert",
        }
    }
}

impl fmt::Display for CrashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CrashKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "segv" => Ok(CrashKind::Segv),
            "abort" => Ok(CrashKind::Abort),
            "stack_overflow" => Ok(CrashKind::StackOverflow),
            "assert" => Ok(CrashKind::Assert),
            _ => Err(format!("unknown crash kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// `frames` is innermost first.
    Crash { kind: CrashKind, frames: Vec<&'static str> },
}

impl Outcome {
    pub fn crash(kind: CrashKind, frames: &[&'static str]) -> Self {
        Outcome::Crash { kind, frames: frames.to_vec() }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, Outcome::Crash { .. })
    }
}

pub fn frame_id(name: &str) -> u64 {
    fnv1a64(name.as_bytes())
}

/// Hash of the innermost three frames; the crash dedup key is (kind, this).
pub fn stack_hash(frames: &[&str]) -> u64 {
    let mut buf = Vec::with_capacity(24);
    for f in frames.iter().take(3) {
        buf.extend_from_slice(&frame_id(f).to_le_bytes());
    }
    fnv1a64(&buf)
}

/// Execution context handed to a target for one run.
///
/// Annotation events are dropped here when annotations are disabled, so a
/// target never needs to know which mode the fuzzer runs in.
pub struct Exec<'a> {
    fb: &'a mut FeedbackState,
    annotations: bool,
    cost: u64,
    events: Option<&'a mut Vec<AnnotationEvent>>,
}

impl<'a> Exec<'a> {
    pub fn new(fb: &'a mut FeedbackState, annotations: bool) -> Self {
        Self { fb, annotations, cost: 0, events: None }
    }

    /// Also records every delivered annotation event.
    pub fn with_event_log(mut self, log: &'a mut Vec<AnnotationEvent>) -> Self {
        self.events = Some(log);
        self
    }

    #[inline]
    pub fn block(&mut self, id: u32) {
        self.cost += 1;
        self.fb.hit_block(id);
    }

    #[inline]
    pub fn annotate(&mut self, e: AnnotationEvent) {
        if !self.annotations {
            return;
        }
        self.cost += 1;
        self.fb.apply_event(&e);
        if let Some(log) = self.events.as_deref_mut() {
            log.push(e);
        }
    }

    /// Extra simulated work, in abstract cost units.
    pub fn work(&mut self, units: u64) {
        self.cost += units;
    }

    pub fn annotations_enabled(&self) -> bool {
        self.annotations
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }
}

/// The execution boundary between the fuzzer and a target.
pub trait Harness: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs one input. Must be a pure function of `input`.
    fn execute(&self, input: &[u8], x: &mut Exec<'_>) -> Outcome;
}

/// Deterministic cost model standing in for wall-clock execution time.
pub fn exec_us(input_len: usize, cost: u64) -> u64 {
    1 + cost / 4 + input_len as u64 / 64
}

/// Block id for a label, computed at compile time.
#[macro_export]
macro_rules! blk {
    ($x:expr, $label:literal) => {{
        const ID: u32 = $crate::runtime::block_id($label);
        $x.block(ID)
    }};
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::Macro;

    #[test]
    fn stack_hash_uses_three_frames() {
        assert_eq!(stack_hash(&["a", "b", "c", "d"]), stack_hash(&["a", "b", "c", "x"]));
        assert_ne!(stack_hash(&["a", "b", "c"]), stack_hash(&["a", "b", "d"]));
    }

    #[test]
    fn disabled_annotations_are_dropped() {
        let mut fb = FeedbackState::new();
        let mut log = Vec::new();
        {
            let mut x = Exec::new(&mut fb, false).with_event_log(&mut log);
            x.annotate(AnnotationEvent::new(1, Macro::Set, 1));
        }
        assert!(log.is_empty());
        assert!(fb.touched_annot().is_empty());
    }
}
