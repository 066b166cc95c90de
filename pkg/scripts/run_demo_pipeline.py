#!/usr/bin/env python3
"""End-to-end demo: synthetic corpus -> dataset -> reports -> self-eval.

Builds everything under a working directory (default demo_out/), printing
each stage's artifacts. A fresh secret key is generated if none exists.

Usage:
    python scripts/run_demo_pipeline.py [--workdir demo_out] [--seed 7]
"""

import argparse
import json
from pathlib import Path

from simpact.cli import main as simpact
from simpact.events import write_events
from simpact.privacy import SecretKey
from simpact.synth import synth_corpus
from simpact.threads import read_threads


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo_out")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--events", type=int, default=500)
    parser.add_argument("--users", type=int, default=30)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    events_path = workdir / "raw_events.jsonl"
    write_events(events_path, synth_corpus(args.events, args.users, args.seed))
    key_path = workdir / "secret.key"
    if not key_path.exists():
        SecretKey.generate().save(key_path)
        print(f"generated secret key at {key_path}")

    out = workdir / "out"
    base = ["--out", str(out), "--seed", str(args.seed)]
    stages = [
        ["ingest", *base, "--input", str(events_path)],
        ["anonymize", *base],
        ["embed", *base, "--dim", "64"],
        ["cluster", *base, "--k", "2,3", "--min-size", "4"],
        ["threads", *base, "--key-file", str(key_path), "--k", "2"],
        ["stats", *base, "--k", "2"],
        ["keywords", *base, "--k", "2"],
    ]
    for stage in stages:
        print(f"\n$ simpact {' '.join(stage)}")
        code = simpact(stage)
        if code != 0:
            raise SystemExit(code)

    # score the dataset against itself: the ceiling every metric should hit
    generations = workdir / "self_generations.jsonl"
    lines = []
    for shard in sorted((out / "threads").glob("cluster_*.jsonl")):
        for thread in read_threads(shard):
            if thread.terminal.text:
                lines.append(json.dumps({
                    "cluster": thread.cluster,
                    "prompt_thread_id": thread.thread_id,
                    "output": {"text": thread.terminal.text},
                }))
    generations.write_text("\n".join(lines) + "\n")
    print(f"\n$ simpact eval --generations {generations}")
    code = simpact(["eval", *base, "--generations", str(generations), "--dim", "64"])
    if code != 0:
        raise SystemExit(code)

    print("\n--- metrics.txt ---")
    print((out / "metrics.txt").read_text())
    print("--- stats.txt (head) ---")
    print("\n".join((out / "stats.txt").read_text().splitlines()[:8]))


if __name__ == "__main__":
    main()
