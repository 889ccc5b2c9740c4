#!/usr/bin/env python3
"""Rendered size of the full CWE-699 listing versus category slices.

Independent re-implementation of the pack rendering: one line per node,
"CWE-<id> (<level>): <title> — <first sentence>", sizes in UTF-8 bytes.
Prints the full size, the largest three-category pack and the reduction
factor for that worst-case selection.
"""
import itertools
import re
import sys

path = sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/cwe699.tsv"

def first_sentence(s):
    m = re.search(r"\.( |$)", s)
    return s[: m.start() + 1] if m else s

cats, subs = [], {}
for line in open(path, encoding="utf-8"):
    line = line.rstrip("\n")
    if not line or line.startswith("#"):
        continue
    f = line.split("\t")
    if f[0] == "category":
        cats.append((int(f[1]), f[3], f[4]))
        subs.setdefault(int(f[1]), [])
    elif f[0] == "sub":
        subs.setdefault(int(f[2]), []).append((int(f[1]), f[3], f[4]))

def render(cid, level, title, desc):
    return f"CWE-{cid} ({level}): {title} — {first_sentence(desc)}\n"

sizes = {}
for cid, title, desc in cats:
    text = render(cid, "category", title, desc)
    text += "".join(render(s, "subcategory", t, d) for s, t, d in subs[cid])
    sizes[cid] = len(text.encode("utf-8"))

full = sum(sizes.values())
worst = max(itertools.combinations(sizes, 3), key=lambda c: sum(sizes[i] for i in c))
worst_size = sum(sizes[i] for i in worst)
print(f"categories={len(cats)} nodes={len(cats) + sum(len(v) for v in subs.values())}")
print(f"full_bytes={full}")
print(f"worst_triple={sorted(worst)} worst_bytes={worst_size}")
print(f"min_factor={full / worst_size:.4f}")
