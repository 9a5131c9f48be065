"""Independent reference for the LocalHash embedder and the pairwise scan.

Generates the bundled labeled backlog (backlog51.json), its ground-truth pair
list (truth51.csv) and the expected detection list at the documented threshold
(expected_detections.csv). Run from this directory:

    python3 oracle.py [threshold]
"""
import itertools
import json
import math
import sys
from datetime import datetime, timedelta, timezone

from issues import GROUPS, SINGLETONS

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
DIM = 256
PROJECT = "SHOP"


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def normalize(text: str) -> str:
    out = "".join(c if c.isalnum() else " " for c in text.lower())
    return " ".join(out.split())


def local_hash(text: str, dim: int = DIM):
    norm = normalize(text)
    chars = list(norm)
    if len(chars) < 3:
        raise ValueError("degenerate")
    v = [0.0] * dim
    for i in range(len(chars) - 2):
        tri = "".join(chars[i : i + 3])
        v[fnv1a64(tri.encode("utf-8")) % dim] += 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    return dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))


def issue_text(summary, description):
    return summary if not description else summary + "\n" + description


def build():
    # Interleave groups and singletons so duplicates are scattered through the backlog.
    slots = []
    for gi, g in enumerate(GROUPS):
        for mi, item in enumerate(g):
            slots.append((gi, mi, item))
    for si, item in enumerate(SINGLETONS):
        slots.append((None, si, item))
    # deterministic scatter: stride through the list
    n = len(slots)
    stride = 19
    assert math.gcd(stride, n) == 1
    order = [slots[(i * stride) % n] for i in range(n)]
    base = datetime(2024, 1, 8, 9, 0, tzinfo=timezone.utc)
    issues, groups = [], {}
    for i, (gi, _, (summary, description)) in enumerate(order):
        key = f"{PROJECT}-{i + 1}"
        created = base + timedelta(hours=7 * i)
        updated = created + timedelta(days=2)
        issues.append(
            {
                "key": key,
                "summary": summary,
                "description": description,
                "status": "Open",
                "labels": [],
                "created_at": created.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "updated_at": updated.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "comments": [],
            }
        )
        if gi is not None:
            groups.setdefault(gi, []).append(key)
    truth = set()
    for keys in groups.values():
        for a, b in itertools.combinations(keys, 2):
            truth.add(tuple(sorted((a, b))))
    return issues, truth


def main():
    threshold = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
    issues, truth = build()
    vecs = {i["key"]: local_hash(issue_text(i["summary"], i["description"])) for i in issues}
    keys = [i["key"] for i in issues]
    scored = []
    for x in range(len(keys)):
        for y in range(x + 1, len(keys)):
            a, b = sorted((keys[x], keys[y]))
            scored.append(((a, b), cosine(vecs[a], vecs[b])))
    hits = [(p, s) for p, s in scored if s >= threshold]
    hits.sort(key=lambda t: (-t[1], t[0]))
    tp = sum(1 for p, _ in hits if p in truth)
    fp = len(hits) - tp
    best_false = max(s for p, s in scored if p not in truth)
    worst_true = min(s for p, s in scored if p in truth)
    print(f"n={len(issues)} pairs={len(scored)} truth={len(truth)} threshold={threshold}")
    print(f"hits={len(hits)} tp={tp} fp={fp} max_non_dup={best_false:.6f} min_dup={worst_true:.6f}")
    with open("../backlog51.json", "w") as f:
        json.dump({"project_key": PROJECT, "issues": issues}, f, indent=2)
        f.write("\n")
    with open("../truth51.csv", "w") as f:
        f.write(f"#n={len(issues)}\nissue_a,issue_b\n")
        for a, b in sorted(truth):
            f.write(f"{a},{b}\n")
    with open("../expected_detections.csv", "w") as f:
        f.write(f"# threshold={threshold}\nissue_a,issue_b,score\n")
        for (a, b), s in hits:
            f.write(f"{a},{b},{s:.12f}\n")
    # FNV and LocalHash spot values used by unit tests
    print("fnv1a64(abc) =", fnv1a64(b"abc"), "mod 256 =", fnv1a64(b"abc") % 256)


if __name__ == "__main__":
    main()
