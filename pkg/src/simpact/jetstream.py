"""Jetstream firehose adapter: commit messages -> canonical RawEvents."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterator

from .events import ActionKind, RawEvent

logger = logging.getLogger(__name__)

# Collections we consume; everything else is ignored.
_CREATE_KINDS = {
    "app.bsky.feed.like": ActionKind.LIKE,
    "app.bsky.feed.repost": ActionKind.REPOST,
    "app.bsky.graph.follow": ActionKind.FOLLOW,
    "app.bsky.graph.block": ActionKind.BLOCK,
}
_DELETE_KINDS = {
    "app.bsky.feed.post": ActionKind.POST_DELETE,
    "app.bsky.feed.like": ActionKind.UNLIKE,
    "app.bsky.feed.repost": ActionKind.UNREPOST,
    "app.bsky.graph.follow": ActionKind.UNFOLLOW,
    "app.bsky.graph.block": ActionKind.UNBLOCK,
}
COLLECTIONS = tuple(sorted(set(_CREATE_KINDS) | set(_DELETE_KINDS)))


class JetstreamError(Exception):
    """Commit message missing its payload or otherwise unusable."""


def _subject_uri(record: dict) -> str | None:
    subject = record.get("subject")
    if isinstance(subject, dict):
        return subject.get("uri")
    return None


def _quoted_uri(record: dict) -> str | None:
    embed = record.get("embed")
    if not isinstance(embed, dict):
        return None
    etype = embed.get("$type", "")
    if etype == "app.bsky.embed.record":
        inner = embed.get("record")
        if isinstance(inner, dict):
            return inner.get("uri")
    if etype == "app.bsky.embed.recordWithMedia":
        inner = embed.get("record", {})
        if isinstance(inner, dict):
            inner = inner.get("record")
            if isinstance(inner, dict):
                return inner.get("uri")
    return None


@dataclass
class JetstreamAdapter:
    """Stateful adapter; remembers graph-record subjects so deletes resolve.

    Jetstream delete commits carry no record body, so an unfollow/unblock
    can only be attributed to its target if the matching create was seen
    earlier in the stream. Unresolvable graph deletes are dropped.
    """

    _graph_subjects: dict[str, str] = field(default_factory=dict)
    _post_subjects: dict[str, str] = field(default_factory=dict)

    def adapt(self, msg: dict) -> RawEvent | None:
        if msg.get("kind") not in (None, "commit"):
            return None
        commit = msg.get("commit")
        if not isinstance(commit, dict):
            raise JetstreamError("message has no commit payload")
        collection = commit.get("collection")
        if collection not in COLLECTIONS:
            return None
        did = msg.get("did", "")
        rkey = commit.get("rkey", "")
        uri = f"at://{did}/{collection}/{rkey}"
        created_at = int(msg.get("time_us", 0))
        operation = commit.get("operation", "create")

        if operation == "delete":
            kind = _DELETE_KINDS[collection]
            subject_uri = subject_did = None
            if kind in (ActionKind.UNFOLLOW, ActionKind.UNBLOCK):
                subject_did = self._graph_subjects.pop(uri, None)
                if subject_did is None:
                    logger.warning("unresolvable %s delete %s (create not seen)", collection, uri)
                    return None
            elif kind in (ActionKind.UNLIKE, ActionKind.UNREPOST):
                subject_uri = self._post_subjects.pop(uri, None)
            event = RawEvent(
                did=did, uri=uri, kind=kind, created_at=created_at,
                subject_uri=subject_uri, subject_did=subject_did,
            )
            event.validate()
            return event

        record = commit.get("record")
        if not isinstance(record, dict):
            raise JetstreamError(f"{operation} commit has no record")

        if collection == "app.bsky.feed.post":
            reply = record.get("reply") or {}
            parent_uri = (reply.get("parent") or {}).get("uri")
            root_uri = (reply.get("root") or {}).get("uri")
            quoted = _quoted_uri(record)
            if operation == "update":
                kind = ActionKind.POST_UPDATE
            elif quoted is not None:
                kind = ActionKind.QUOTE
            elif parent_uri is not None:
                kind = ActionKind.REPLY
            else:
                kind = ActionKind.POST
            event = RawEvent(
                did=did, uri=uri, kind=kind, created_at=created_at,
                text=record.get("text", ""), langs=record.get("langs"),
                subject_uri=quoted, parent_uri=parent_uri, root_uri=root_uri,
            )
        else:
            kind = _CREATE_KINDS[collection]
            if kind in (ActionKind.FOLLOW, ActionKind.BLOCK):
                subject_did = record.get("subject")
                self._graph_subjects[uri] = subject_did
                event = RawEvent(
                    did=did, uri=uri, kind=kind, created_at=created_at,
                    subject_did=subject_did,
                )
            else:
                subject_uri = _subject_uri(record)
                self._post_subjects[uri] = subject_uri
                event = RawEvent(
                    did=did, uri=uri, kind=kind, created_at=created_at,
                    subject_uri=subject_uri,
                )
        event.validate()
        return event


def adapt_jetstream(msg: dict, adapter: JetstreamAdapter | None = None) -> RawEvent | None:
    """One-shot adaptation; pass a shared adapter to resolve graph deletes."""
    return (adapter or JetstreamAdapter()).adapt(msg)


def subscribe(
    endpoint: str,
    collections: list[str] | None = None,
    cursor: int | None = None,
) -> Iterator[RawEvent]:
    """Consume a live Jetstream websocket, yielding adapted events.

    Requires the optional `websockets` dependency (install simpact[live]).
    Runs until the connection closes or the caller stops iterating.
    """
    try:
        from websockets.sync.client import connect
    except ImportError as exc:  # pragma: no cover - exercised only without extra
        raise RuntimeError(
            "live subscription requires the websockets package (pip install simpact[live])"
        ) from exc

    params = [f"wantedCollections={c}" for c in (collections or COLLECTIONS)]
    if cursor is not None:
        params.append(f"cursor={cursor}")
    url = f"{endpoint.rstrip('/')}/subscribe?{'&'.join(params)}"
    adapter = JetstreamAdapter()
    with connect(url) as ws:  # pragma: no cover - network path
        for raw in ws:
            try:
                event = adapter.adapt(json.loads(raw))
            except (json.JSONDecodeError, JetstreamError) as exc:
                logger.warning("skipping undecodable firehose message: %s", exc)
                continue
            if event is not None:
                yield event
