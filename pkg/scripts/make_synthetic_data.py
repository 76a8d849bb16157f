#!/usr/bin/env python3
"""Generate synthetic irony-vs-literal datasets in the TSV format the CLI
consumes.

Positive examples pair an enthusiastic opener with a mundane annoyance
("oh wonderful, the printer died again"); negatives are flat factual
statements. Deliberately easy: the point is pipeline plumbing and quick
overfit checks, not linguistic realism. Binary files carry 0/1 labels;
the score variant maps intensity words to -5..5."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from figlang.data import write_dataset

OPENERS = ["oh great", "oh wonderful", "fantastic", "perfect", "oh joy",
           "sure, love that", "how lovely", "just brilliant"]
ANNOYANCES = ["the printer died again", "another meeting ran long",
              "the train is delayed", "it rained on the parade",
              "the wifi dropped mid call", "the coffee machine broke",
              "weekend plans got cancelled", "the report needs redoing"]
SUBJECTS = ["the train", "the report", "the meeting", "the package",
            "the invoice", "the update", "the bus", "the email"]
FACTS = ["arrived at nine", "was sent on monday", "moved to room four",
         "shipped yesterday", "was paid in full", "installed cleanly",
         "left on schedule", "reached the whole team"]

# intensity of the ironic opener, on the -5..5 scale used by the score task
OPENER_SCORE = {"oh great": 2, "oh wonderful": 3, "fantastic": 4, "perfect": 4,
                "oh joy": 3, "sure, love that": 2, "how lovely": 3,
                "just brilliant": 5}


def binary_rows(rng, n):
    rows = []
    for i in range(n):
        if i % 2 == 0:
            text = f"{rng.choice(OPENERS)}, {rng.choice(ANNOYANCES)}"
            rows.append((f"pos{i}", 1, text))
        else:
            text = f"{rng.choice(SUBJECTS)} {rng.choice(FACTS)}"
            rows.append((f"neg{i}", 0, text))
    return rows


def score_rows(rng, n):
    rows = []
    for i in range(n):
        if i % 2 == 0:
            opener = str(rng.choice(OPENERS))
            text = f"{opener}, {rng.choice(ANNOYANCES)}"
            rows.append((f"pos{i}", OPENER_SCORE[opener], text))
        else:
            text = f"{rng.choice(SUBJECTS)} {rng.choice(FACTS)}"
            rows.append((f"neg{i}", -int(rng.integers(0, 3)), text))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="data", help="output directory")
    ap.add_argument("--n-train", type=int, default=64)
    ap.add_argument("--n-test", type=int, default=16)
    ap.add_argument("--schema", choices=["binary", "score"], default="binary")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    make = binary_rows if args.schema == "binary" else score_rows
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, n in (("train", args.n_train), ("test", args.n_test)):
        path = out / f"{split}.tsv"
        write_dataset(path, make(rng, n))
        print(f"wrote {n} rows -> {path}")
    corpus = out / "corpus.txt"
    with open(corpus, "w", encoding="utf-8") as f:
        for _, _, text in make(rng, args.n_train):
            f.write(text + "\n")
    print(f"wrote pretraining corpus -> {corpus}")


if __name__ == "__main__":
    main()
