//! Four-byte magic gate compared one byte at a time. No annotation sites.

use crate::blk;
use crate::fuzzer::{CrashKind, Exec, Outcome};

pub const MAGIC: [u8; 4] = [0x7f, b'E', b'L', b'F'];
pub const CRASH_FRAMES: [&str; 3] = ["parse_header", "load_image", "magic_main"];

pub fn run(input: &[u8], x: &mut Exec<'_>) -> Outcome {
    blk!(x, "magic_main");
    if input.len() < MAGIC.len() {
        blk!(x, "magic_short");
        return Outcome::Ok;
    }
    if input[0] != MAGIC[0] {
        return Outcome::Ok;
    }
    blk!(x, "magic_0");
    if input[1] != MAGIC[1] {
        return Outcome::Ok;
    }
    blk!(x, "magic_1");
    if input[2] != MAGIC[2] {
        return Outcome::Ok;
    }
    blk!(x, "magic_2");
    if input[3] != MAGIC[3] {
        return Outcome::Ok;
    }
    Outcome::crash(CrashKind::Abort, &CRASH_FRAMES)
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
    fn gate() {
        assert!(go(b"\x7fELF....").is_crash());
        assert!(!go(b"\x7fELG").is_crash());
        assert!(!go(b"\x7fEL").is_crash());
        assert!(!go(b"").is_crash());
    }
}
