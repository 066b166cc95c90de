"""Seeded synthetic event corpora for demos and hermetic end-to-end runs."""

from __future__ import annotations

import random

from .events import ActionKind, RawEvent

_TOPIC_POOLS = [
    ["housing", "budget", "carbon", "tax", "debate", "riding", "pipeline", "tariffs"],
    ["healthcare", "dental", "pharmacare", "clinic", "nurses", "wait", "times", "funding"],
    ["hockey", "playoffs", "goalie", "trade", "deadline", "season", "arena", "tickets"],
]
_KEYWORDS = ["cdnpoli", "canada", "election", "canpoli", "cdnpolitics"]
_MENTIONS = ["@press.gallery.example", "@civic.watch.example", "@localnews.example"]
_EMAILS = ["tips@newsroom.example", "press@office.example"]


def synth_corpus(n_events: int = 500, n_users: int = 30, seed: int = 7) -> list[RawEvent]:
    """Generate a keyword-bearing event stream with replies, likes, and follows.

    Pure function of its arguments; users fall into latent topic groups so
    downstream clustering has structure to find.
    """
    rng = random.Random(seed)
    users = [f"did:plc:synth{u:04d}" for u in range(n_users)]
    groups = {did: i % len(_TOPIC_POOLS) for i, did in enumerate(users)}
    events: list[RawEvent] = []
    posts: list[RawEvent] = []
    counter = 0

    def next_uri(did: str, collection: str) -> str:
        nonlocal counter
        counter += 1
        return f"at://{did}/{collection}/{counter:06d}"

    def make_text(did: str) -> str:
        pool = _TOPIC_POOLS[groups[did]]
        words = [rng.choice(pool) for _ in range(rng.randint(4, 9))]
        words.insert(rng.randrange(len(words) + 1), rng.choice(_KEYWORDS))
        if rng.random() < 0.15:
            words.append(rng.choice(_MENTIONS))
        if rng.random() < 0.08:
            words.append("reach us at " + rng.choice(_EMAILS))
        return " ".join(words)

    # Seed every user with two posts so activity pruning keeps them.
    base_time = 1_700_000_000_000_000
    t = base_time
    for did in users:
        for _ in range(2):
            t += rng.randint(1, 2000)
            post = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.feed.post"),
                kind=ActionKind.POST,
                created_at=t,
                text=make_text(did),
                langs=["en"],
            )
            events.append(post)
            posts.append(post)

    while len(events) < n_events:
        t += rng.randint(1, 2000)
        did = rng.choice(users)
        roll = rng.random()
        if roll < 0.35 or not posts:
            event = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.feed.post"),
                kind=ActionKind.POST,
                created_at=t,
                text=make_text(did),
                langs=["en"] if rng.random() > 0.05 else ["fr"],
            )
            posts.append(event)
        elif roll < 0.55:
            parent = rng.choice(posts)
            event = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.feed.post"),
                kind=ActionKind.REPLY,
                created_at=t,
                text=make_text(did),
                langs=["en"],
                parent_uri=parent.uri,
                root_uri=parent.root_uri or parent.uri,
            )
            posts.append(event)
        elif roll < 0.62:
            quoted = rng.choice(posts)
            event = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.feed.post"),
                kind=ActionKind.QUOTE,
                created_at=t,
                text=make_text(did),
                langs=["en"],
                subject_uri=quoted.uri,
            )
            posts.append(event)
        elif roll < 0.82:
            event = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.feed.like"),
                kind=ActionKind.LIKE,
                created_at=t,
                subject_uri=rng.choice(posts).uri,
            )
        elif roll < 0.92:
            target = rng.choice([u for u in users if u != did])
            event = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.graph.follow"),
                kind=ActionKind.FOLLOW,
                created_at=t,
                subject_did=target,
            )
        else:
            event = RawEvent(
                did=did,
                uri=next_uri(did, "app.bsky.feed.repost"),
                kind=ActionKind.REPOST,
                created_at=t,
                subject_uri=rng.choice(posts).uri,
            )
        events.append(event)
    return events
