"""Raw platform events: parsing, serialization, and curation filters."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)


class ActionKind(str, Enum):
    POST = "post"
    REPLY = "reply"
    QUOTE = "quote"
    POST_UPDATE = "post_update"
    POST_DELETE = "post_delete"
    REPOST = "repost"
    UNREPOST = "unrepost"
    LIKE = "like"
    UNLIKE = "unlike"
    FOLLOW = "follow"
    UNFOLLOW = "unfollow"
    BLOCK = "block"
    UNBLOCK = "unblock"

    @property
    def user_directed(self) -> bool:
        return self in USER_DIRECTED

    @property
    def text_directed(self) -> bool:
        return self not in USER_DIRECTED


USER_DIRECTED = frozenset(
    {ActionKind.FOLLOW, ActionKind.UNFOLLOW, ActionKind.BLOCK, ActionKind.UNBLOCK}
)
# Kinds whose events carry a text body.
TEXT_KINDS = frozenset(
    {ActionKind.POST, ActionKind.REPLY, ActionKind.QUOTE, ActionKind.POST_UPDATE}
)


class EventError(Exception):
    """Base class for event-stream problems."""


class EventParseError(EventError):
    """Line is not a well-formed event record."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class UnknownKindError(EventError):
    """Event names an action kind outside the closed set; skippable."""


@dataclass
class RawEvent:
    """One platform event in the canonical JSONL schema."""

    did: str
    uri: str
    kind: ActionKind
    created_at: int  # microseconds since epoch; dropped after rank assignment
    text: str | None = None
    langs: list[str] | None = None
    subject_uri: str | None = None
    subject_did: str | None = None
    parent_uri: str | None = None
    root_uri: str | None = None

    def validate(self) -> None:
        if not self.did or not self.uri:
            raise EventParseError("event missing did or uri")
        if (self.text is not None) != (self.kind in TEXT_KINDS):
            raise EventParseError(
                f"kind {self.kind.value!r} {'requires' if self.kind in TEXT_KINDS else 'forbids'} a text field"
            )
        if (self.subject_did is not None) != (self.kind in USER_DIRECTED):
            raise EventParseError(
                f"kind {self.kind.value!r} {'requires' if self.kind in USER_DIRECTED else 'forbids'} subject_did"
            )
        if self.kind is ActionKind.REPLY and self.parent_uri is None:
            raise EventParseError("reply event requires parent_uri")


_FIELDS = (
    "did",
    "uri",
    "kind",
    "created_at",
    "text",
    "langs",
    "subject_uri",
    "subject_did",
    "parent_uri",
    "root_uri",
)


def parse_event(line: str, lineno: int | None = None) -> RawEvent:
    """Parse one JSONL line into a validated RawEvent.

    Raises EventParseError for malformed records, UnknownKindError when
    the kind string is outside the action set (callers skip those).
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventParseError(f"malformed JSON: {exc.msg}", lineno) from exc
    if not isinstance(obj, dict):
        raise EventParseError("event line must be a JSON object", lineno)
    kind_str = obj.get("kind")
    try:
        kind = ActionKind(kind_str)
    except ValueError:
        raise UnknownKindError(f"unknown action kind {kind_str!r}") from None
    try:
        event = RawEvent(
            did=obj.get("did", ""),
            uri=obj.get("uri", ""),
            kind=kind,
            created_at=int(obj.get("created_at", 0)),
            text=obj.get("text"),
            langs=obj.get("langs"),
            subject_uri=obj.get("subject_uri"),
            subject_did=obj.get("subject_did"),
            parent_uri=obj.get("parent_uri"),
            root_uri=obj.get("root_uri"),
        )
        event.validate()
    except (TypeError, ValueError) as exc:
        raise EventParseError(str(exc), lineno) from exc
    except EventParseError as exc:
        raise EventParseError(str(exc), lineno) from None
    return event


def serialize_event(event: RawEvent) -> str:
    """Inverse of parse_event; omits unset optional fields."""
    obj = {}
    for name in _FIELDS:
        value = getattr(event, name)
        if value is None:
            continue
        obj[name] = value.value if isinstance(value, ActionKind) else value
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def read_events(path: str | Path) -> Iterator[RawEvent]:
    """Stream events from a JSONL file, skipping unknown kinds with a warning."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parse_event(line, lineno=lineno)
            except UnknownKindError as exc:
                logger.warning("%s:%d: %s (skipped)", path, lineno, exc)


def write_events(path: str | Path, events: Iterable[RawEvent]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(serialize_event(event) + "\n")
            count += 1
    return count


@dataclass
class KeywordSet:
    """Handle / party-term / general-term lists with whole-token matching."""

    handles: list[str] = field(default_factory=list)
    party_terms: list[str] = field(default_factory=list)
    general_terms: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._pattern = _compile_keywords(self)

    def matches(self, text: str) -> bool:
        return self._pattern is not None and self._pattern.search(text) is not None


def _compile_keywords(kw: KeywordSet) -> re.Pattern[str] | None:
    parts = []
    for term in kw.party_terms + kw.general_terms:
        term = term.strip().lower()
        if term:
            parts.append(rf"\b{re.escape(term)}\b")
    for handle in kw.handles:
        handle = handle.strip().lower()
        if handle:
            # Whole-token: not embedded in a larger handle or word.
            parts.append(rf"(?<![\w@.]){re.escape(handle)}(?![\w.])")
    if not parts:
        return None
    return re.compile("|".join(parts), re.IGNORECASE | re.UNICODE)


def _read_term_file(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def load_keywords(
    handles_path: str | Path | None = None,
    party_path: str | Path | None = None,
    general_path: str | Path | None = None,
) -> KeywordSet:
    """Load keyword lists from files; any path left None uses the packaged defaults."""

    def default(name: str) -> list[str]:
        text = resources.files("simpact.data").joinpath(name).read_text(encoding="utf-8")
        return [ln.strip() for ln in text.splitlines() if ln.strip()]

    return KeywordSet(
        handles=_read_term_file(handles_path) if handles_path else default("handles.txt"),
        party_terms=_read_term_file(party_path) if party_path else default("party_terms.txt"),
        general_terms=_read_term_file(general_path) if general_path else default("general_terms.txt"),
    )


def keyword_filter(event: RawEvent, kw: KeywordSet) -> bool:
    """True iff the event's own text contains at least one keyword."""
    if event.text is None:
        return False
    return kw.matches(event.text)


def language_filter(event: RawEvent, lang: str) -> bool:
    """True iff the language tag appears in the event's metadata (no detection)."""
    if not event.langs:
        return False
    lang = lang.lower()
    return any(tag.lower() == lang for tag in event.langs)


def prune_low_activity(events: list[RawEvent], min_posts: int = 2) -> list[RawEvent]:
    """Drop every event of any author with fewer than min_posts text posts.

    Counts text-carrying events per author over the given list, then keeps
    only events whose author meets the threshold. Idempotent: a retained
    author's own posts are never removed, so counts are stable on re-runs.
    """
    if min_posts < 0:
        raise ValueError("min_posts must be >= 0")
    post_counts: Counter[str] = Counter(
        e.did for e in events if e.text is not None
    )
    return [e for e in events if post_counts[e.did] >= min_posts]
