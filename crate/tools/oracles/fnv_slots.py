#!/usr/bin/env python3
"""Independent FNV-1a 64 reference for annotation-map slots.

slot = FNV-1a-64(le64(ctx ^ state) || le64(site) || le64(a)) mod 65536

With no arguments prints the slot for site=7, a=42 on fresh registers.
With `--events N OUT` writes N random (ctx, state, site, a) tuples and their
slots as JSON lines, using a fixed RNG seed.
"""
import json
import random
import struct
import sys

OFFSET = 0xCBF29CE484222325
PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = OFFSET
    for b in data:
        h ^= b
        h = (h * PRIME) & MASK64
    return h


def slot(ctx: int, state: int, site: int, a: int) -> int:
    buf = struct.pack("<QQq", ctx ^ state, site, a)
    return fnv1a64(buf) % 65536


def main():
    if len(sys.argv) >= 2 and sys.argv[1] == "--events":
        n, out = int(sys.argv[2]), sys.argv[3]
        rng = random.Random(20240611)
        with open(out, "w") as f:
            for _ in range(n):
                ctx = rng.getrandbits(64) if rng.random() < 0.3 else 0
                state = rng.getrandbits(64) if rng.random() < 0.3 else 0
                site = rng.getrandbits(64)
                a = rng.randint(-(1 << 63), (1 << 63) - 1)
                f.write(json.dumps({"ctx": ctx, "state": state, "site": site, "a": a,
                                    "slot": slot(ctx, state, site, a)}) + "\n")
        return
    print(f"fnv1a64(empty)={fnv1a64(b''):#018x}")
    print(f"slot(site=7,a=42)={slot(0, 0, 7, 42)}")


if __name__ == "__main__":
    main()
