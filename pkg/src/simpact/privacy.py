"""Privacy safeguards: PII redaction, rank obfuscation, keyed pseudonyms.

The three stages are cumulative: text is scrubbed of sensitive entities
and mentions, absolute timestamps are replaced by per-cluster sequence
ranks, and author identifiers are replaced by thread-scoped keyed-hash
pseudonyms that cannot be linked across threads without the secret key.
"""

from __future__ import annotations

import hashlib
import hmac
import ipaddress
import logging
import re
import secrets
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .threads import Thread, ThreadGrammarError, validate_thread

logger = logging.getLogger(__name__)

KEY_LEN = 32
PSEUDONYM_HEX_LEN = 16  # 64-bit truncation of the keyed digest

EMAIL_ADDRESS = "EMAIL_ADDRESS"
PHONE_NUMBER = "PHONE_NUMBER"
CREDIT_CARD = "CREDIT_CARD"
IP_ADDRESS = "IP_ADDRESS"
CRYPTO_ADDRESS = "CRYPTO_ADDRESS"
URL = "URL"
USERNAME = "USERNAME"


class SecretKeyError(Exception):
    """Secret key missing, malformed, or mismatched with a dataset."""


@dataclass(frozen=True, repr=False)
class SecretKey:
    """32 bytes of secret material; never serialized into dataset artifacts."""

    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != KEY_LEN:
            raise SecretKeyError(f"secret key must be {KEY_LEN} bytes, got {len(self.key)}")

    def __repr__(self) -> str:  # never leak key bytes into logs
        return f"SecretKey(fingerprint={self.fingerprint!r})"

    @property
    def fingerprint(self) -> str:
        """Provenance tag: first 8 hex chars of the unkeyed digest of the key."""
        return hashlib.sha256(self.key).hexdigest()[:8]

    @classmethod
    def generate(cls) -> "SecretKey":
        return cls(secrets.token_bytes(KEY_LEN))

    @classmethod
    def from_file(cls, path: str | Path) -> "SecretKey":
        raw = Path(path).read_bytes()
        if len(raw) == KEY_LEN:
            return cls(raw)
        text = raw.decode("ascii", errors="replace").strip()
        if len(text) == 2 * KEY_LEN:
            try:
                return cls(bytes.fromhex(text))
            except ValueError as exc:
                raise SecretKeyError(f"{path}: invalid hex key") from exc
        raise SecretKeyError(f"{path}: expected {KEY_LEN} raw bytes or {2 * KEY_LEN} hex chars")

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.key)


@dataclass(frozen=True)
class Redaction:
    start: int  # character offsets into the scanned text
    end: int
    category: str
    original: str


def _luhn_ok(digits: str) -> bool:
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = int(ch)
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


_URL_RE = re.compile(r"\b(?:https?|ftp)://[^\s<>\"']+", re.IGNORECASE)
_EMAIL_RE = re.compile(r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b")
_CRYPTO_RE = re.compile(
    r"\b0x[0-9a-fA-F]{40}\b"
    r"|\b(?:bc1|tb1)[02-9ac-hj-np-z]{25,87}\b"
    r"|\b[13][1-9A-HJ-NP-Za-km-z]{25,34}\b"
)
_IPV4_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")
_IPV6_RE = re.compile(r"(?<![\w:.])[0-9A-Fa-f:]{2,45}(?![\w:])")
_CARD_RE = re.compile(r"(?<!\d)(?:\d[ -]?){12,18}\d(?!\d)")
_PHONE_RE = re.compile(r"(?<![\w+])\+?\(?\d{1,4}\)?(?:[ .-]?\d{2,4}){2,5}(?!\d)")

_TRAILING_PUNCT = ".,;:!?)'\"]"


def _scan(text: str) -> list[Redaction]:
    found: list[Redaction] = []

    for m in _URL_RE.finditer(text):
        end = m.end()
        while end > m.start() and text[end - 1] in _TRAILING_PUNCT:
            end -= 1
        found.append(Redaction(m.start(), end, URL, text[m.start():end]))

    for m in _EMAIL_RE.finditer(text):
        found.append(Redaction(m.start(), m.end(), EMAIL_ADDRESS, m.group()))

    for m in _CRYPTO_RE.finditer(text):
        found.append(Redaction(m.start(), m.end(), CRYPTO_ADDRESS, m.group()))

    for m in _IPV4_RE.finditer(text):
        try:
            ipaddress.IPv4Address(m.group())
        except ValueError:
            continue
        found.append(Redaction(m.start(), m.end(), IP_ADDRESS, m.group()))

    for m in _IPV6_RE.finditer(text):
        if m.group().count(":") < 2:
            continue
        try:
            ipaddress.IPv6Address(m.group())
        except ValueError:
            continue
        found.append(Redaction(m.start(), m.end(), IP_ADDRESS, m.group()))

    for m in _CARD_RE.finditer(text):
        digits = re.sub(r"[ -]", "", m.group())
        if 13 <= len(digits) <= 19 and _luhn_ok(digits):
            found.append(Redaction(m.start(), m.end(), CREDIT_CARD, m.group()))

    for m in _PHONE_RE.finditer(text):
        digits = re.sub(r"\D", "", m.group())
        if 7 <= len(digits) <= 15:
            found.append(Redaction(m.start(), m.end(), PHONE_NUMBER, m.group()))

    return found


# Priority when candidate spans tie in length; earlier wins.
_PRIORITY = {URL: 0, EMAIL_ADDRESS: 1, CRYPTO_ADDRESS: 2, IP_ADDRESS: 3, CREDIT_CARD: 4, PHONE_NUMBER: 5}


def _resolve_overlaps(found: list[Redaction]) -> list[Redaction]:
    ordered = sorted(
        found, key=lambda r: (-(r.end - r.start), _PRIORITY[r.category], r.start)
    )
    kept: list[Redaction] = []
    for cand in ordered:
        if all(cand.end <= k.start or cand.start >= k.end for k in kept):
            kept.append(cand)
    kept.sort(key=lambda r: r.start)
    return kept


def redact_pii(text: str) -> tuple[str, list[Redaction]]:
    """Replace detected sensitive entities with <CATEGORY> tokens.

    Detection is pattern-based (with Luhn and address-syntax validation);
    overlaps resolve longest-match-first. Idempotent: category tokens
    never re-match any scanner.
    """
    kept = _resolve_overlaps(_scan(text))
    if not kept:
        return text, []
    out: list[str] = []
    cursor = 0
    for r in kept:
        out.append(text[cursor:r.start])
        out.append(f"<{r.category}>")
        cursor = r.end
    out.append(text[cursor:])
    return "".join(out), kept


_MENTION_RE = re.compile(r"(?<![\w@])@[A-Za-z0-9](?:[A-Za-z0-9.-]*[A-Za-z0-9])?")


def anonymize_mentions(text: str) -> str:
    """Replace every @handle token, dotted custom domains included."""
    return _MENTION_RE.sub(f"@<{USERNAME}>", text)


def scrub_text(text: str) -> tuple[str, list[Redaction]]:
    """Full text pass: entity redaction followed by mention anonymization."""
    redacted, redactions = redact_pii(text)
    return anonymize_mentions(redacted), redactions


def obfuscate_timestamps(events: Sequence) -> dict[str, int]:
    """Map each event uri to its 1..N sequence rank.

    Events are ordered by creation time; equal timestamps break ties by
    uri bytes so re-runs are reproducible. Accepts anything with `uri`
    and `created_at` attributes.
    """
    for e in events:
        if e.created_at is None:
            raise ValueError(f"event {e.uri} has no created_at")
    ordered = sorted(events, key=lambda e: (e.created_at, e.uri))
    return {e.uri: rank for rank, e in enumerate(ordered, 1)}


def derive_pseudonym(key: SecretKey, thread_digest: bytes, did: str) -> str:
    """Thread-scoped pseudonym: keyed hash of (thread digest, DID), truncated."""
    mac = hmac.new(key.key, thread_digest + did.encode("utf-8"), hashlib.sha256)
    return "user_" + mac.hexdigest()[:PSEUDONYM_HEX_LEN]


_SEP = b"\x1f"


def thread_content_digest(key: SecretKey, thread: Thread) -> bytes:
    """Keyed digest of a thread's identifier-free content.

    Canonical form: element texts joined by 0x1f, then action-kind names,
    then decimal ranks, all in element order. Authors and platform uris
    are excluded so the digest survives pseudonymization.
    """
    texts = _SEP.join((el.text or "").encode("utf-8") for el in thread.elements)
    kinds = _SEP.join(el.kind.value.encode("ascii") for el in thread.elements)
    ranks = _SEP.join(str(el.rank).encode("ascii") for el in thread.elements)
    mac = hmac.new(key.key, texts + _SEP + kinds + _SEP + ranks, hashlib.sha256)
    return mac.digest()


def pseudonymize_thread(key: SecretKey, thread: Thread) -> Thread:
    """Replace every author DID with its thread-scoped pseudonym.

    The same user keeps one pseudonym within the thread and gets an
    unrelated one in any other thread; raw DIDs, uris, and timestamps are
    absent from the result.
    """
    digest = thread_content_digest(key, thread)
    pseudonyms: dict[str, str] = {}
    elements = []
    for el in thread.elements:
        if el.author not in pseudonyms:
            pseudonyms[el.author] = derive_pseudonym(key, digest, el.author)
        elements.append(
            replace(
                el,
                author=pseudonyms[el.author],
                uri=None,
                created_at=None,
                target_uri=None,
            )
        )
    return replace(thread, elements=elements, thread_id=digest.hex())


def delete_user(
    key: SecretKey,
    did: str,
    threads: Iterable[Thread],
    expected_fingerprint: str | None = None,
) -> tuple[list[Thread], int]:
    """Remove every thread element the DID produced.

    Recomputes the DID's pseudonym per thread from the stored content
    digest. Threads losing their terminal action (or the grammar) are
    dropped entirely. Returns (surviving threads, count of the DID's
    removed elements); idempotent.
    """
    if expected_fingerprint is not None and key.fingerprint != expected_fingerprint:
        raise SecretKeyError(
            f"key fingerprint {key.fingerprint} does not match dataset "
            f"provenance tag {expected_fingerprint}; refusing to delete"
        )
    kept_threads: list[Thread] = []
    removed = 0
    for thread in threads:
        pseudonym = derive_pseudonym(key, bytes.fromhex(thread.thread_id), did)
        hits = sum(1 for el in thread.elements if el.author == pseudonym)
        if hits == 0:
            kept_threads.append(thread)
            continue
        removed += hits
        if thread.terminal.author == pseudonym:
            continue  # terminal gone: drop the whole thread
        remaining = [el for el in thread.elements if el.author != pseudonym]
        try:
            validate_thread(remaining)
        except ThreadGrammarError:
            continue  # removal broke the grammar: drop
        kept_threads.append(replace(thread, elements=remaining))
    return kept_threads, removed
