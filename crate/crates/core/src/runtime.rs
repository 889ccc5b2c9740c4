//! Executable semantics of the annotation primitives and the two feedback maps.
//!
//! Edge coverage and annotation feedback live in separate 64 KiB maps so that
//! annotation slots never collide with edge slots. Per-execution state is kept
//! in [`FeedbackState`]; the campaign-wide view used to decide novelty is
//! [`CampaignState`].

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const MAP_SIZE: usize = 1 << 16;
pub const MAP_MASK: u64 = (MAP_SIZE as u64) - 1;
pub const MAX_REGS: usize = 512;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64 over raw bytes.
pub const fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(FNV_PRIME);
        i += 1;
    }
    h
}

/// FNV-1a 64 over the 24-byte little-endian encoding of three words.
pub fn hash3(x: u64, y: u64, z: u64) -> u64 {
    let mut buf = [0u8; 24];
    buf[..8].copy_from_slice(&x.to_le_bytes());
    buf[8..16].copy_from_slice(&y.to_le_bytes());
    buf[16..].copy_from_slice(&z.to_le_bytes());
    fnv1a64(&buf)
}

/// Stable 64-bit id of an annotation site.
pub fn site_id(file_path: &str, function: &str, kind: Macro, snippet: &str) -> u64 {
    let mut buf = Vec::with_capacity(file_path.len() + function.len() + snippet.len() + 16);
    for part in [file_path, function, kind.as_str(), snippet] {
        buf.extend_from_slice(part.as_bytes());
        buf.push(0);
    }
    fnv1a64(&buf)
}

/// Stable basic-block id derived from a label, usable in const context.
pub const fn block_id(label: &str) -> u32 {
    let h = fnv1a64(label.as_bytes());
    (h ^ (h >> 32)) as u32
}

/// Hitcount bucket class, 0..=8.
pub fn bucket(hits: u8) -> u8 {
    match hits {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        32..=127 => 7,
        _ => 8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Macro {
    Set,
    Max,
    Min,
    Inc,
    Dist,
    Bits,
    State,
    Ctx,
}

impl Macro {
    pub const ALL: [Macro; 8] = [
        Macro::Set,
        Macro::Max,
        Macro::Min,
        Macro::Inc,
        Macro::Dist,
        Macro::Bits,
        Macro::State,
        Macro::Ctx,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Macro::Set => "SET",
            Macro::Max => "MAX",
            Macro::Min => "MIN",
            Macro::Inc => "INC",
            Macro::Dist => "DIST",
            Macro::Bits => "BITS",
            Macro::State => "STATE",
            Macro::Ctx => "CTX",
        }
    }

    /// Name of the C macro emitted into annotated sources.
    pub fn c_macro(self) -> String {
        format!("IJON_{}", self.as_str())
    }
}

impl fmt::Display for Macro {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Macro {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let t = t.strip_prefix("IJON_").unwrap_or(t);
        Macro::ALL
            .iter()
            .copied()
            .find(|m| m.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown annotation macro `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub site_id: u64,
    pub kind: Macro,
    pub a: i64,
    pub b: Option<i64>,
}

impl AnnotationEvent {
    pub fn new(site_id: u64, kind: Macro, a: i64) -> Self {
        debug_assert!(kind != Macro::Dist, "DIST needs two operands");
        Self { site_id, kind, a, b: None }
    }

    pub fn dist(site_id: u64, a: i64, b: i64) -> Self {
        Self { site_id, kind: Macro::Dist, a, b: Some(b) }
    }

    pub fn is_well_formed(&self) -> bool {
        (self.kind == Macro::Dist) == self.b.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaxReg {
    pub seen: bool,
    pub value: i64,
}

pub fn reg_index(site_id: u64) -> usize {
    (site_id % MAX_REGS as u64) as usize
}

/// SET slot for a value under the current context/state registers.
pub fn set_slot(ctx_reg: u64, state_reg: u64, site_id: u64, a: i64) -> usize {
    (hash3(ctx_reg ^ state_reg, site_id, a as u64) & MAP_MASK) as usize
}

fn floor_log2(a: i64) -> i64 {
    let v = a.max(1) as u64;
    63 - v.leading_zeros() as i64
}

/// Per-execution feedback. Maps are reset through dirty lists, so a reset
/// costs proportional to what the previous execution touched.
#[derive(Clone)]
pub struct FeedbackState {
    edge_map: Vec<u8>,
    annot_map: Vec<u8>,
    max_regs: Vec<MaxReg>,
    pub state_reg: u64,
    pub ctx_reg: u64,
    prev_loc: u64,
    dirty_edges: Vec<u16>,
    dirty_annot: Vec<u16>,
    dirty_regs: Vec<u16>,
}

impl Default for FeedbackState {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for FeedbackState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackState")
            .field("edges", &self.dirty_edges.len())
            .field("annot", &self.dirty_annot.len())
            .field("regs", &self.dirty_regs.len())
            .field("state_reg", &self.state_reg)
            .field("ctx_reg", &self.ctx_reg)
            .finish()
    }
}

impl PartialEq for FeedbackState {
    fn eq(&self, other: &Self) -> bool {
        self.edge_map == other.edge_map
            && self.annot_map == other.annot_map
            && self.max_regs == other.max_regs
            && self.state_reg == other.state_reg
            && self.ctx_reg == other.ctx_reg
    }
}

impl FeedbackState {
    pub fn new() -> Self {
        Self {
            edge_map: vec![0; MAP_SIZE],
            annot_map: vec![0; MAP_SIZE],
            max_regs: vec![MaxReg::default(); MAX_REGS],
            state_reg: 0,
            ctx_reg: 0,
            prev_loc: 0,
            dirty_edges: Vec::new(),
            dirty_annot: Vec::new(),
            dirty_regs: Vec::new(),
        }
    }

    /// Clears everything an execution wrote.
    pub fn reset(&mut self) {
        for &i in &self.dirty_edges {
            self.edge_map[i as usize] = 0;
        }
        for &i in &self.dirty_annot {
            self.annot_map[i as usize] = 0;
        }
        for &i in &self.dirty_regs {
            self.max_regs[i as usize] = MaxReg::default();
        }
        self.dirty_edges.clear();
        self.dirty_annot.clear();
        self.dirty_regs.clear();
        self.state_reg = 0;
        self.ctx_reg = 0;
        self.prev_loc = 0;
    }

    pub fn edge_map(&self) -> &[u8] {
        &self.edge_map
    }

    pub fn annot_map(&self) -> &[u8] {
        &self.annot_map
    }

    pub fn max_regs(&self) -> &[MaxReg] {
        &self.max_regs
    }

    pub fn touched_edges(&self) -> &[u16] {
        &self.dirty_edges
    }

    pub fn touched_annot(&self) -> &[u16] {
        &self.dirty_annot
    }

    pub fn touched_regs(&self) -> &[u16] {
        &self.dirty_regs
    }

    /// Records entry into basic block `cur` (AFL-style `cur ^ prev` edges).
    #[inline]
    pub fn hit_block(&mut self, cur: u32) {
        let idx = ((cur as u64 ^ self.prev_loc) & MAP_MASK) as usize;
        self.prev_loc = (cur as u64) >> 1;
        let c = &mut self.edge_map[idx];
        if *c == 0 {
            self.dirty_edges.push(idx as u16);
        }
        *c = c.saturating_add(1);
    }

    fn annot_write(&mut self, slot: usize, presence: bool) -> bool {
        let c = &mut self.annot_map[slot];
        let before = bucket(*c);
        if *c == 0 {
            self.dirty_annot.push(slot as u16);
        }
        if presence {
            if *c == 0 {
                *c = 1;
            }
        } else {
            *c = c.saturating_add(1);
        }
        bucket(*c) > before
    }

    fn set(&mut self, site_id: u64, a: i64) -> bool {
        let slot = set_slot(self.ctx_reg, self.state_reg, site_id, a);
        self.annot_write(slot, true)
    }

    fn max(&mut self, site_id: u64, a: i64) -> bool {
        let r = reg_index(site_id);
        let reg = &mut self.max_regs[r];
        let improved = !reg.seen || a > reg.value;
        if !reg.seen {
            self.dirty_regs.push(r as u16);
        }
        if improved {
            *reg = MaxReg { seen: true, value: a };
        }
        let magnitude = self.set(site_id, floor_log2(a));
        improved || magnitude
    }

    /// Applies one annotation event; returns whether it was novel relative to
    /// what this state has already observed.
    pub fn apply_event(&mut self, e: &AnnotationEvent) -> bool {
        match e.kind {
            Macro::Set => self.set(e.site_id, e.a),
            Macro::Inc => {
                let slot = set_slot(self.ctx_reg, self.state_reg, e.site_id, e.a);
                self.annot_write(slot, false)
            }
            Macro::Max => self.max(e.site_id, e.a),
            Macro::Min => self.max(e.site_id, e.a.saturating_neg()),
            Macro::Dist => {
                let b = e.b.unwrap_or(e.a);
                let d = e.a.abs_diff(b).min(i64::MAX as u64) as i64;
                self.max(e.site_id, d.saturating_neg())
            }
            Macro::Bits => self.max(e.site_id, (e.a as u64).count_ones() as i64),
            Macro::State => {
                let novel = self.set(e.site_id, e.a);
                self.state_reg = hash3(self.state_reg, e.site_id, e.a as u64);
                novel
            }
            Macro::Ctx => {
                self.ctx_reg = e.a as u64;
                false
            }
        }
    }
}

/// Which kind of feedback made an execution interesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Novelty {
    pub edge: bool,
    pub annotation: bool,
}

impl Novelty {
    pub fn any(self) -> bool {
        self.edge || self.annotation
    }
}

/// Campaign-wide record of every bucket class seen per map index, plus the
/// best value ever observed per MAX register.
#[derive(Clone)]
pub struct CampaignState {
    virgin_edges: Vec<u16>,
    virgin_annot: Vec<u16>,
    max_regs: Vec<MaxReg>,
}

impl Default for CampaignState {
    fn default() -> Self {
        Self::new()
    }
}

impl CampaignState {
    pub fn new() -> Self {
        Self {
            virgin_edges: vec![0; MAP_SIZE],
            virgin_annot: vec![0; MAP_SIZE],
            max_regs: vec![MaxReg::default(); MAX_REGS],
        }
    }

    pub fn max_regs(&self) -> &[MaxReg] {
        &self.max_regs
    }

    pub fn edges_seen(&self) -> usize {
        self.virgin_edges.iter().filter(|m| **m != 0).count()
    }

    pub fn annot_seen(&self) -> usize {
        self.virgin_annot.iter().filter(|m| **m != 0).count()
    }

    /// Novelty of an execution without recording it.
    pub fn novelty(&self, exec: &FeedbackState) -> Novelty {
        let new_class = |virgin: &[u16], map: &[u8], touched: &[u16]| {
            touched.iter().any(|&i| {
                let class = bucket(map[i as usize]);
                virgin[i as usize] & (1 << class) == 0
            })
        };
        let edge = new_class(&self.virgin_edges, &exec.edge_map, &exec.dirty_edges);
        let mut annotation =
            new_class(&self.virgin_annot, &exec.annot_map, &exec.dirty_annot);
        if !annotation {
            annotation = exec.dirty_regs.iter().any(|&r| {
                let e = exec.max_regs[r as usize];
                let c = self.max_regs[r as usize];
                e.seen && (!c.seen || e.value > c.value)
            });
        }
        Novelty { edge, annotation }
    }

    /// Folds an execution into the campaign maps unconditionally.
    pub fn absorb(&mut self, exec: &FeedbackState) {
        for &i in &exec.dirty_edges {
            self.virgin_edges[i as usize] |= 1 << bucket(exec.edge_map[i as usize]);
        }
        for &i in &exec.dirty_annot {
            self.virgin_annot[i as usize] |= 1 << bucket(exec.annot_map[i as usize]);
        }
        for &r in &exec.dirty_regs {
            let e = exec.max_regs[r as usize];
            let c = &mut self.max_regs[r as usize];
            if e.seen && (!c.seen || e.value > c.value) {
                *c = e;
            }
        }
    }

    /// True iff the execution reached a new bucket class on either map or
    /// improved a MAX register; campaign state is updated only in that case.
    pub fn is_interesting(&mut self, exec: &FeedbackState) -> Novelty {
        let n = self.novelty(exec);
        if n.any() {
            self.absorb(exec);
        }
        n
    }

    /// Merges another campaign's state (used when parallel workers sync).
    pub fn merge(&mut self, other: &CampaignState) {
        for (a, b) in self.virgin_edges.iter_mut().zip(&other.virgin_edges) {
            *a |= *b;
        }
        for (a, b) in self.virgin_annot.iter_mut().zip(&other.virgin_annot) {
            *a |= *b;
        }
        for (a, b) in self.max_regs.iter_mut().zip(&other.max_regs) {
            if b.seen && (!a.seen || b.value > a.value) {
                *a = *b;
            }
        }
    }
}

/// Returns pairs of known site ids that share a MAX register.
pub fn register_collisions(site_ids: &[u64]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for (i, a) in site_ids.iter().enumerate() {
        for b in &site_ids[i + 1..] {
            if a != b && reg_index(*a) == reg_index(*b) {
                out.push((*a, *b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(bucket(1), 1);
        assert_eq!(bucket(7), 4);
        assert_eq!(bucket(255), 8);
        assert_eq!(bucket(0), 0);
        assert_eq!(bucket(128), 8);
        assert_eq!(bucket(127), 7);
    }

    #[test]
    fn max_strict_increase() {
        let mut s = FeedbackState::new();
        assert!(s.apply_event(&AnnotationEvent::new(3, Macro::Max, 5)));
        assert!(!s.apply_event(&AnnotationEvent::new(3, Macro::Max, 5)));
        assert!(s.apply_event(&AnnotationEvent::new(3, Macro::Max, 6)));
    }

    #[test]
    fn dist_identity_is_novel_once() {
        let mut s = FeedbackState::new();
        assert!(s.apply_event(&AnnotationEvent::dist(9, 10, 10)));
        assert!(!s.apply_event(&AnnotationEvent::dist(9, 10, 10)));
        assert_eq!(s.max_regs()[reg_index(9)].value, 0);
    }

    #[test]
    fn set_is_presence_inc_counts() {
        let mut s = FeedbackState::new();
        let e = AnnotationEvent::new(1, Macro::Set, 4);
        assert!(s.apply_event(&e));
        assert!(!s.apply_event(&e));
        let slot = set_slot(0, 0, 1, 4);
        assert_eq!(s.annot_map()[slot], 1);

        let mut s = FeedbackState::new();
        let e = AnnotationEvent::new(1, Macro::Inc, 4);
        assert!(s.apply_event(&e));
        assert!(s.apply_event(&e)); // 1 -> 2 changes class
        assert!(s.apply_event(&e)); // 2 -> 3
        assert!(s.apply_event(&e)); // 3 -> 4
        assert!(!s.apply_event(&e)); // 4 -> 5 same class
    }

    #[test]
    fn ctx_changes_set_slot() {
        let mut s = FeedbackState::new();
        s.apply_event(&AnnotationEvent::new(2, Macro::Set, 1));
        s.apply_event(&AnnotationEvent::new(0, Macro::Ctx, 77));
        assert!(s.apply_event(&AnnotationEvent::new(2, Macro::Set, 1)));
        assert_eq!(s.ctx_reg, 77);
    }

    #[test]
    fn state_uses_pre_update_register() {
        let mut s = FeedbackState::new();
        s.apply_event(&AnnotationEvent::new(5, Macro::State, 2));
        assert_eq!(s.annot_map()[set_slot(0, 0, 5, 2)], 1);
        assert_eq!(s.state_reg, hash3(0, 5, 2));
    }

    #[test]
    fn edges_never_touch_annot_map() {
        let mut s = FeedbackState::new();
        for b in 0..1000u32 {
            s.hit_block(b.wrapping_mul(2654435761));
        }
        assert!(s.annot_map().iter().all(|c| *c == 0));
        let mut s = FeedbackState::new();
        for a in 0..1000 {
            s.apply_event(&AnnotationEvent::new(11, Macro::Set, a));
            s.apply_event(&AnnotationEvent::new(12, Macro::Max, a));
        }
        assert!(s.edge_map().iter().all(|c| *c == 0));
    }

    #[test]
    fn reset_clears_everything() {
        let mut s = FeedbackState::new();
        s.hit_block(10);
        s.apply_event(&AnnotationEvent::new(1, Macro::Max, 3));
        s.apply_event(&AnnotationEvent::new(1, Macro::State, 3));
        s.reset();
        assert_eq!(s, FeedbackState::new());
    }

    #[test]
    fn interesting_rules() {
        let mut camp = CampaignState::new();
        let mut s = FeedbackState::new();
        s.hit_block(1);
        s.hit_block(2);
        assert!(camp.is_interesting(&s).edge);
        assert!(!camp.is_interesting(&s).any());

        s.apply_event(&AnnotationEvent::new(4, Macro::Set, 99));
        let n = camp.is_interesting(&s);
        assert!(!n.edge && n.annotation);
        assert!(!camp.is_interesting(&s).any());
    }

    #[test]
    fn max_register_improvement_is_interesting() {
        let mut camp = CampaignState::new();
        let mut s = FeedbackState::new();
        s.apply_event(&AnnotationEvent::new(4, Macro::Max, 8));
        assert!(camp.is_interesting(&s).annotation);
        s.reset();
        // 9 shares the log2 class of 8, so only the register can signal it.
        s.apply_event(&AnnotationEvent::new(4, Macro::Max, 9));
        assert!(camp.is_interesting(&s).annotation);
        assert_eq!(camp.max_regs()[reg_index(4)].value, 9);
        s.reset();
        s.apply_event(&AnnotationEvent::new(4, Macro::Max, 9));
        assert!(!camp.is_interesting(&s).any());
    }

    #[test]
    fn macro_parse() {
        assert_eq!("IJON_SET".parse::<Macro>().unwrap(), Macro::Set);
        assert_eq!("dist".parse::<Macro>().unwrap(), Macro::Dist);
        assert!("NOPE".parse::<Macro>().is_err());
    }
}
