//! Havoc-style stacked mutations.

use rand::Rng;

pub const DEFAULT_MAX_LEN: usize = 4096;
pub const ARITH_MAX: u32 = 35;
/// Largest stack is `1 << MAX_STACK_POW` operations.
pub const MAX_STACK_POW: u32 = 6;

/// Substitution values, written truncated to the chosen word width.
pub const INTERESTING: [i64; 10] = [
    0,
    1,
    -1,
    127,
    128,
    255,
    (1 << 15) - 1,
    (1 << 15) + 1,
    (1 << 31) - 1,
    (1 << 31) + 1,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    BitFlip,
    ByteSet,
    RandomByte,
    Arith,
    ChunkDelete,
    ChunkDuplicate,
    Splice,
    Interesting,
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::BitFlip,
        Op::ByteSet,
        Op::RandomByte,
        Op::Arith,
        Op::ChunkDelete,
        Op::ChunkDuplicate,
        Op::Splice,
        Op::Interesting,
    ];
}

/// Applies `1..=64` stacked operations (a power of two) to a copy of `input`.
/// `donors` feed the splice operation; an empty slice disables it.
pub fn mutate<R: Rng>(input: &[u8], rng: &mut R, donors: &[&[u8]], max_len: usize) -> Vec<u8> {
    let mut out = input.to_vec();
    let stack = 1usize << rng.gen_range(0..=MAX_STACK_POW);
    for _ in 0..stack {
        let op = Op::ALL[rng.gen_range(0..Op::ALL.len())];
        apply(op, &mut out, rng, donors, max_len);
    }
    if out.is_empty() {
        out.push(rng.gen());
    }
    out.truncate(max_len.max(1));
    out
}

/// Applies one operation in place. Operations that cannot apply to the
/// current buffer (say, a word write on a one-byte input) leave it unchanged.
pub fn apply<R: Rng>(op: Op, buf: &mut Vec<u8>, rng: &mut R, donors: &[&[u8]], max_len: usize) {
    let len = buf.len();
    match op {
        Op::BitFlip => {
            if len > 0 {
                let bit = rng.gen_range(0..len * 8);
                buf[bit / 8] ^= 0x80 >> (bit % 8);
            }
        }
        Op::ByteSet => {
            // Overwrite a short run with one byte value, either random or
            // taken from elsewhere in the input.
            if len > 0 {
                let n = chunk_len(rng, len);
                let at = rng.gen_range(0..=len - n);
                let v = if rng.gen_bool(0.5) { rng.gen() } else { buf[rng.gen_range(0..len)] };
                buf[at..at + n].fill(v);
            }
        }
        Op::RandomByte => {
            if len > 0 {
                let i = rng.gen_range(0..len);
                buf[i] ^= rng.gen_range(1..=255u8);
            }
        }
        Op::Arith => {
            let width = [1usize, 2, 4][rng.gen_range(0..3)];
            if len >= width {
                let at = rng.gen_range(0..=len - width);
                let delta = rng.gen_range(1..=ARITH_MAX) as u64;
                let sub = rng.gen_bool(0.5);
                let be = width > 1 && rng.gen_bool(0.5);
                let w = &mut buf[at..at + width];
                let mut v = read_word(w, be);
                v = if sub { v.wrapping_sub(delta) } else { v.wrapping_add(delta) };
                write_word(w, v, be);
            }
        }
        Op::ChunkDelete => {
            if len > 1 {
                let n = chunk_len(rng, len - 1);
                let at = rng.gen_range(0..=len - n);
                buf.drain(at..at + n);
            }
        }
        Op::ChunkDuplicate => {
            if len > 0 && len < max_len {
                let n = chunk_len(rng, len.min(max_len - len));
                let from = rng.gen_range(0..=len - n);
                let to = rng.gen_range(0..=len);
                let chunk = buf[from..from + n].to_vec();
                buf.splice(to..to, chunk);
            }
        }
        Op::Splice => {
            if !donors.is_empty() {
                let other = donors[rng.gen_range(0..donors.len())];
                if let Some(s) = splice(buf, other, rng) {
                    *buf = s;
                    buf.truncate(max_len);
                }
            }
        }
        Op::Interesting => {
            let width = [1usize, 2, 4][rng.gen_range(0..3)];
            if len >= width {
                let at = rng.gen_range(0..=len - width);
                let be = width > 1 && rng.gen_bool(0.5);
                let v = INTERESTING[rng.gen_range(0..INTERESTING.len())];
                write_word(&mut buf[at..at + width], v as u64, be);
            }
        }
    }
}

/// Block length in `1..=limit`, mostly short: three quarters of the time at
/// most 32 bytes, rarely more than 128.
fn chunk_len<R: Rng>(rng: &mut R, limit: usize) -> usize {
    let (lo, hi) = match rng.gen_range(0..16) {
        0..=11 => (1, 32),
        12..=14 => (33, 128),
        _ => (129, 1500),
    };
    let hi = hi.min(limit).max(1);
    rng.gen_range(lo.min(hi)..=hi)
}

fn read_word(w: &[u8], be: bool) -> u64 {
    let mut v = 0u64;
    for i in 0..w.len() {
        let b = if be { w[i] } else { w[w.len() - 1 - i] };
        v = (v << 8) | b as u64;
    }
    v
}

fn write_word(w: &mut [u8], v: u64, be: bool) {
    let n = w.len();
    for i in 0..n {
        let b = (v >> (8 * i)) as u8;
        if be {
            w[n - 1 - i] = b;
        } else {
            w[i] = b;
        }
    }
}

/// Prefix of `a` plus suffix of `b`, cut at one offset inside the region where
/// they differ. Returns `None` when the inputs differ in fewer than two bytes.
pub fn splice<R: Rng>(a: &[u8], b: &[u8], rng: &mut R) -> Option<Vec<u8>> {
    let n = a.len().min(b.len());
    let first = (0..n).find(|&i| a[i] != b[i])?;
    let last = (0..n).rev().find(|&i| a[i] != b[i])?;
    if last <= first {
        return None;
    }
    let cut = rng.gen_range(first + 1..=last);
    let mut out = a[..cut].to_vec();
    out.extend_from_slice(&b[cut..]);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bit_flip_on_a_can_give_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let found = (0..2000).any(|_| {
            let mut b = b"A".to_vec();
            apply(Op::BitFlip, &mut b, &mut rng, &[], 16);
            b == b"C"
        });
        assert!(found);
    }

    #[test]
    fn never_empty_never_too_long() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let donor = vec![7u8; 300];
        let mut cur = vec![1u8];
        for _ in 0..5000 {
            cur = mutate(&cur, &mut rng, &[&donor], 64);
            assert!(!cur.is_empty() && cur.len() <= 64);
        }
    }

    #[test]
    fn delete_everything_then_grow() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = b"xy".to_vec();
        apply(Op::ChunkDelete, &mut b, &mut rng, &[], 16);
        assert_eq!(b.len(), 1);
        apply(Op::ChunkDelete, &mut b, &mut rng, &[], 16);
        assert_eq!(b.len(), 1);
        apply(Op::ChunkDuplicate, &mut b, &mut rng, &[], 16);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn splice_is_prefix_plus_suffix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = b"aaaaaaaa";
        let b = b"abbbbbba";
        for _ in 0..100 {
            let s = splice(a, b, &mut rng).unwrap();
            assert_eq!(s.len(), 8);
            let cut = s.iter().position(|&c| c == b'b').unwrap();
            assert!((2..=6).contains(&cut));
            assert!(s[..cut].iter().all(|&c| c == b'a'));
            assert_eq!(&s[cut..], &b[cut..]);
        }
        assert_eq!(splice(b"abc", b"abc", &mut rng), None);
        assert_eq!(splice(b"abc", b"abd", &mut rng), None);
    }

    #[test]
    fn only_duplicate_and_splice_grow() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for op in Op::ALL {
            for _ in 0..200 {
                let mut b = b"abcdefgh".to_vec();
                apply(op, &mut b, &mut rng, &[b"zzzzzzzzzzzzzzzz"], 64);
                if !matches!(op, Op::ChunkDuplicate | Op::Splice) {
                    assert!(b.len() <= 8, "{op:?}");
                }
            }
        }
    }

    #[test]
    fn words_round_trip() {
        let mut w = [0u8; 4];
        write_word(&mut w, 0x01020304, true);
        assert_eq!(w, [1, 2, 3, 4]);
        assert_eq!(read_word(&w, true), 0x01020304);
        write_word(&mut w, 0x01020304, false);
        assert_eq!(w, [4, 3, 2, 1]);
        assert_eq!(read_word(&w, false), 0x01020304);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| mutate(b"hello world", &mut rng, &[b"HELLO there"], 128)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
