#!/usr/bin/env python3
"""Regenerates crates/core/data/synthetic/.

Six clusters of ten events. Clusters 2m and 2m+1 reuse the same actor and
predicate at each position and differ only in the object, so plain event
composition sees them as near duplicates. Each cluster has its own intent
and the two clusters of a pair carry opposite emotions.
"""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "data" / "synthetic"
DIM = 10
CLUSTERS = 6
PER_CLUSTER = 10

ACTORS = ["alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy"]
INTENTS = [
    "to win the race",
    "to fix the roof",
    "to impress the boss",
    "to hide the mistake",
    "to feed the family",
    "to escape the storm",
]
EMOTIONS = [
    "happy,proud",
    "sad,be regretful,feel sorry,afraid",
    "excited,grateful",
    "angry,ashamed",
    "pleased,relieved",
    "scared,lonely",
]


def event(c, j):
    pair = c // 2
    return f"{ACTORS[j]}|verb{pair}x{j}|thing{c}x{j}"


def main():
    rng = random.Random(17)
    OUT.mkdir(parents=True, exist_ok=True)
    events = [[event(c, j) for j in range(PER_CLUSTER)] for c in range(CLUSTERS)]

    words = []
    for c in range(CLUSTERS):
        for e in events[c]:
            for arg in e.split("|"):
                words.extend(arg.split())
    for intent in INTENTS:
        words.extend(intent.split())
    seen = []
    for w in words:
        if w not in seen:
            seen.append(w)
    with open(OUT / "vectors.txt", "w") as f:
        for w in seen:
            f.write(w + " " + " ".join(f"{rng.gauss(0, 0.5):.6f}" for _ in range(DIM)) + "\n")

    with open(OUT / "annotations.tsv", "w") as f:
        for c in range(CLUSTERS):
            for e in events[c]:
                f.write(f"{e}\t{INTENTS[c]}\t{EMOTIONS[c]}\n")

    with open(OUT / "corpus.txt", "w") as f:
        for c in range(CLUSTERS):
            for e in events[c]:
                f.write(e + "\n")

    with open(OUT / "hardsim.tsv", "w") as f:
        for c in range(CLUSTERS):
            for j in range(PER_CLUSTER):
                similar = (events[c][j], events[c][(j + 1) % PER_CLUSTER])
                dissimilar = (events[c][j], events[c ^ 1][j])
                f.write("\t".join(similar + dissimilar) + "\n")

    with open(OUT / "transitive.tsv", "w") as f:
        for c in range(CLUSTERS):
            for j in range(0, PER_CLUSTER, 2):
                f.write(f"{events[c][j]}\t{events[c][(j + 3) % PER_CLUSTER]}\t6.5\n")
                f.write(f"{events[c][j]}\t{events[c ^ 1][j]}\t2.0\n")
                other = (c + 2) % CLUSTERS
                f.write(f"{events[c][j]}\t{events[other][(j + 5) % PER_CLUSTER]}\t1.0\n")


if __name__ == "__main__":
    main()
