"""Shared generators: synthetic PII corpus, random threads, fuzzed orderings."""

from __future__ import annotations

import ipaddress
import random

import numpy as np
import pytest

from simpact.events import ActionKind
from simpact.threads import ACTION, POST, Thread, ThreadElement


def brute_force_min_cost(cost: np.ndarray, min_size: int) -> float:
    """Exhaustive minimum over all size-feasible assignments (vectorized)."""
    n, k = cost.shape
    best = np.inf
    chunk = 1 << 18
    for start in range(0, k ** n, chunk):
        reps = np.arange(start, min(start + chunk, k ** n))
        assignments = np.empty((len(reps), n), dtype=np.int8)
        for i in range(n):
            assignments[:, i] = (reps // k ** i) % k
        totals = cost[np.arange(n), assignments].sum(axis=1)
        feasible = np.ones(len(assignments), dtype=bool)
        for j in range(k):
            feasible &= (assignments == j).sum(axis=1) >= min_size
        if feasible.any():
            best = min(best, float(totals[feasible].min()))
    return best

# ------------------------------------------------------------ PII corpus

_WORDS = (
    "please contact our office about the upcoming town hall meeting "
    "volunteers welcome every riding deserves better transit schools and "
    "housing plans were shared during the debate last night"
).split()

_BASE58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_BECH32 = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"


def _luhn_checksum(digits: str) -> int:
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = int(ch)
        if i % 2 == 0:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10


def make_card(rng: random.Random) -> str:
    body = "".join(str(rng.randrange(10)) for _ in range(15))
    check = (10 - _luhn_checksum(body)) % 10
    digits = body + str(check)
    style = rng.randrange(3)
    if style == 0:
        return digits
    sep = " " if style == 1 else "-"
    return sep.join(digits[i:i + 4] for i in range(0, 16, 4))


def make_phone(rng: random.Random) -> str:
    fmt = rng.randrange(4)
    d = lambda n: "".join(str(rng.randrange(10)) for _ in range(n))
    if fmt == 0:
        return f"+1 {d(3)} {d(3)} {d(4)}"
    if fmt == 1:
        return f"({d(3)}) {d(3)}-{d(4)}"
    if fmt == 2:
        return f"{d(3)}-{d(3)}-{d(4)}"
    return f"+44 20 {d(4)} {d(4)}"


def make_email(rng: random.Random) -> str:
    local = rng.choice(["jane.doe", "press", "tips99", "info"]) + str(rng.randrange(100))
    domain = rng.choice(["example.org", "mail.example.com", "news.example.ca"])
    return f"{local}@{domain}"


def make_url(rng: random.Random) -> str:
    host = rng.choice(["petition.example.org", "example.com", "vote.example.ca"])
    path = rng.choice(["x", "sign/here", "2025/form"])
    return f"https://{host}/{path}?id={rng.randrange(1000)}"


def make_ipv4(rng: random.Random) -> str:
    return ".".join(str(rng.randrange(1, 255)) for _ in range(4))


def make_ipv6(rng: random.Random) -> str:
    return str(ipaddress.IPv6Address(rng.getrandbits(128)))


def make_crypto(rng: random.Random) -> str:
    style = rng.randrange(3)
    if style == 0:
        return "1" + "".join(rng.choice(_BASE58) for _ in range(27))
    if style == 1:
        return "0x" + "".join(rng.choice("0123456789abcdef") for _ in range(40))
    return "bc1" + "".join(rng.choice(_BECH32) for _ in range(30))


ENTITY_MAKERS = (
    make_email, make_phone, make_card, make_ipv4, make_ipv6, make_crypto, make_url,
)


def make_pii_corpus(n_lines: int = 220, seed: int = 13) -> list[tuple[str, list[str]]]:
    """Synthetic lines, each planted with 1-3 known sensitive entities."""
    rng = random.Random(seed)
    corpus = []
    for _ in range(n_lines):
        entities = [rng.choice(ENTITY_MAKERS)(rng) for _ in range(rng.randint(1, 3))]
        parts = []
        for entity in entities:
            parts.extend(rng.choice(_WORDS) for _ in range(rng.randint(1, 4)))
            parts.append(entity)
        parts.extend(rng.choice(_WORDS) for _ in range(rng.randint(1, 3)))
        corpus.append((" ".join(parts), entities))
    return corpus


# ------------------------------------------------------------ threads

_TERMINAL_KINDS = list(ActionKind)
_TEXT_KINDS = {ActionKind.POST, ActionKind.REPLY, ActionKind.QUOTE, ActionKind.POST_UPDATE}


def make_valid_thread(rng: random.Random) -> Thread:
    """A random grammar-valid exported thread (pseudonymous, ranked)."""
    n_posts = rng.randint(0, 4)
    authors = [f"user_{rng.getrandbits(32):08x}" for _ in range(3)]
    elements = []
    rank = rng.randint(1, 50)
    if n_posts == 0:
        elements.append(
            ThreadElement(
                type=ACTION, kind=ActionKind.POST, author=rng.choice(authors),
                text=f"standalone {rng.randrange(1000)}", rank=rank,
            )
        )
    else:
        for i in range(n_posts):
            kind = ActionKind.POST if i == 0 else rng.choice(
                [ActionKind.REPLY, ActionKind.QUOTE]
            )
            elements.append(
                ThreadElement(
                    type=POST, kind=kind, author=rng.choice(authors),
                    text=f"post {rng.randrange(1000)}", rank=rank,
                    target=elements[-1].rank if elements and rng.random() < 0.8 else None,
                )
            )
            rank += rng.randint(1, 5)
        terminal_kind = rng.choice(_TERMINAL_KINDS)
        elements.append(
            ThreadElement(
                type=ACTION, kind=terminal_kind, author=rng.choice(authors),
                text=f"terminal {rng.randrange(1000)}" if terminal_kind in _TEXT_KINDS else None,
                rank=rank, target=elements[-1].rank,
            )
        )
    return Thread(
        elements=elements,
        cluster=rng.randrange(8),
        thread_id=f"{rng.getrandbits(64):016x}",
        truncated=rng.random() < 0.1,
    )


def _post_el(rng: random.Random, rank: int) -> ThreadElement:
    return ThreadElement(
        type=POST, kind=ActionKind.POST, author="user_x",
        text=f"p{rng.randrange(100)}", rank=rank,
    )


def _action_el(rng: random.Random, rank: int) -> ThreadElement:
    return ThreadElement(
        type=ACTION, kind=ActionKind.LIKE, author="user_x", rank=rank,
    )


def make_invalid_elements(rng: random.Random) -> tuple[list[ThreadElement], str]:
    """Elements violating the grammar, plus the production that must be named."""
    case = rng.randrange(7)
    if case == 0:  # action first
        return [_action_el(rng, 1), _post_el(rng, 2), _action_el(rng, 3)], "post"
    if case == 1:  # action in the middle
        return [_post_el(rng, 1), _action_el(rng, 2), _post_el(rng, 3), _action_el(rng, 4)], "posts"
    if case == 2:  # ends with a post (two terminal-position violations)
        return [_post_el(rng, 1), _action_el(rng, 2)][:1] + [_post_el(rng, 3)], "action"
    if case == 3:  # empty
        return [], "thread"
    if case == 4:  # lone post element, no action
        return [_post_el(rng, 1)], "action"
    if case == 5:  # lone non-post action
        return [_action_el(rng, 1)], "post"
    post = _post_el(rng, 1)
    post.text = None  # post without a body
    return [post, _action_el(rng, 2)], "post"


@pytest.fixture
def rng() -> random.Random:
    return random.Random(99)
