//! A six-step command protocol. Each input byte is one command; the expected
//! command advances the state, anything else resets it to zero. Transitions
//! go through a lookup table, so no branch depends on the current state.
//!
//! The STATE site reports a state the first time an execution reaches it.
//! Reporting resets and repeated visits too would make every distinct
//! reset history a fresh annotation slot, since the runtime chains STATE
//! values into its state register.

use std::sync::OnceLock;

use crate::blk;
use crate::fuzzer::{CrashKind, Exec, Outcome};
use crate::runtime::{site_id, AnnotationEvent, Macro};

/// Command expected in each state; reaching state 6 is the bug.
pub const SEQUENCE: [u8; 6] = *b"HAMRDQ";
pub const FINAL_STATE: u8 = SEQUENCE.len() as u8;

pub const SITE_FILE: &str = "targets/proto.c";
pub const SITE_FUNCTION: &str = "proto_step";
pub const STATE_SNIPPET: &str = "IJON_STATE(state);";

/// Function of the review fixtures this target stands in for.
pub const ANALOG_FILE: &str = "ext/proto/proto.c";
pub const ANALOG_FUNCTION: &str = "proto_handle_command";

pub const CRASH_FRAMES: [&str; 3] = ["proto_finish", "proto_step", "proto_main"];

pub fn proto_site() -> u64 {
    static ID: OnceLock<u64> = OnceLock::new();
    *ID.get_or_init(|| site_id(SITE_FILE, SITE_FUNCTION, Macro::State, STATE_SNIPPET))
}

fn table() -> &'static [[u8; 256]; SEQUENCE.len()] {
    static T: OnceLock<[[u8; 256]; SEQUENCE.len()]> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = [[0u8; 256]; SEQUENCE.len()];
        for (s, row) in t.iter_mut().enumerate() {
            row[SEQUENCE[s] as usize] = s as u8 + 1;
        }
        t
    })
}

pub fn run(input: &[u8], x: &mut Exec<'_>) -> Outcome {
    blk!(x, "proto_main");
    let t = table();
    let mut state = 0u8;
    let mut deepest = 0u8;
    for &b in input {
        blk!(x, "proto_step");
        let next = t[state as usize][b as usize];
        if next > deepest {
            deepest = next;
            x.annotate(AnnotationEvent::new(proto_site(), Macro::State, next as i64));
        }
        state = next;
        if state == FINAL_STATE {
            return Outcome::crash(CrashKind::Segv, &CRASH_FRAMES);
        }
    }
    blk!(x, "proto_done");
    Outcome::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::FeedbackState;

    fn go(input: &[u8]) -> Outcome {
        let mut fb = FeedbackState::new();
        let mut x = Exec::new(&mut fb, true);
        run(input, &mut x)
    }

    #[test]
    fn full_sequence_crashes() {
        assert!(go(b"HAMRDQ").is_crash());
        assert!(go(b"xxHAMRDQ").is_crash());
    }

    #[test]
    fn partial_and_reset() {
        assert!(!go(b"H").is_crash());
        assert!(!go(b"HAMx").is_crash());
        assert!(!go(b"HAMRxDQ").is_crash());
        assert!(go(b"HAMRxHAMRDQ").is_crash());
    }

    #[test]
    fn each_state_reported_once() {
        let mut fb = FeedbackState::new();
        let mut log = Vec::new();
        {
            let mut x = Exec::new(&mut fb, true).with_event_log(&mut log);
            run(b"HAxHAMx", &mut x);
        }
        let states: Vec<i64> = log.iter().map(|e| e.a).collect();
        assert_eq!(states, vec![1, 2, 3]);
    }

    #[test]
    fn coverage_is_state_blind() {
        let edges = |i: &[u8]| {
            let mut fb = FeedbackState::new();
            let mut x = Exec::new(&mut fb, false);
            run(i, &mut x);
            fb.edge_map().to_vec()
        };
        assert_eq!(edges(b"HAMRD"), edges(b"zzzzz"));
    }
}
