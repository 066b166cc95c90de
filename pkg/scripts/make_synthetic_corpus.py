#!/usr/bin/env python3
"""Write a seeded synthetic event corpus for pipeline experiments.

Usage:
    python scripts/make_synthetic_corpus.py events.jsonl --events 500 --users 30 --seed 7
"""

import argparse

from simpact.events import write_events
from simpact.synth import synth_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("output", help="destination JSONL path")
    parser.add_argument("--events", type=int, default=500)
    parser.add_argument("--users", type=int, default=30)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    count = write_events(args.output, synth_corpus(args.events, args.users, args.seed))
    print(f"wrote {count} events to {args.output}")


if __name__ == "__main__":
    main()
