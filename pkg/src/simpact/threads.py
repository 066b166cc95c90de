"""Thread assembly: grammar-checked action sequences built from raw events.

A thread is an initial post, any number of intermediate posts, and one
terminal action. A standalone post is encoded as a single element that
serves as both the initial post and a terminal action of kind `post`.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .events import TEXT_KINDS, USER_DIRECTED, ActionKind, RawEvent

logger = logging.getLogger(__name__)

POST = "post"
ACTION = "action"

# Kinds an intermediate (chain) post may carry.
CHAIN_KINDS = frozenset(
    {ActionKind.POST, ActionKind.REPLY, ActionKind.QUOTE, ActionKind.POST_UPDATE}
)


class ThreadGrammarError(ValueError):
    """Element sequence violates the thread grammar.

    `production` names the violated rule: one of "thread", "post",
    "posts", "action".
    """

    def __init__(self, production: str, message: str):
        self.production = production
        super().__init__(message)


class MalformedThreadError(Exception):
    """Reply chain cannot be walked (e.g. a parent cycle)."""


class UnclusteredActorError(KeyError):
    """Terminal actor is not covered by the cluster assignment."""


@dataclass
class ThreadElement:
    type: str  # "post" | "action"
    kind: ActionKind
    author: str  # raw DID during assembly, pseudonym after privacy stage
    text: str | None = None
    rank: int | None = None
    target: int | None = None  # rank of the referenced in-thread post
    # Assembly-only fields, absent from any exported artifact:
    uri: str | None = None
    created_at: int | None = None
    target_uri: str | None = None


@dataclass
class Thread:
    elements: list[ThreadElement]
    cluster: int = -1
    thread_id: str = ""
    truncated: bool = False

    @property
    def terminal(self) -> ThreadElement:
        return self.elements[-1]


def validate_thread(elements: list[ThreadElement]) -> None:
    """Check the element sequence against the thread grammar."""
    if not elements:
        raise ThreadGrammarError(
            "thread", "<thread> requires an initial <post> and a terminal <action>"
        )
    if len(elements) == 1:
        only = elements[0]
        if only.type == POST:
            raise ThreadGrammarError("action", "<thread> must end with <action>")
        if only.kind is not ActionKind.POST:
            raise ThreadGrammarError("post", "<thread> must begin with <post>")
    else:
        if elements[0].type != POST:
            raise ThreadGrammarError("post", "<thread> must begin with <post>")
        for el in elements[1:-1]:
            if el.type != POST:
                raise ThreadGrammarError(
                    "posts", "<posts> admits only <post> elements before the terminal <action>"
                )
        if elements[-1].type != ACTION:
            raise ThreadGrammarError("action", "<thread> must end with <action>")
    for el in elements:
        if el.type == POST:
            if el.kind not in CHAIN_KINDS:
                raise ThreadGrammarError(
                    "post", f"<post> cannot have action kind {el.kind.value!r}"
                )
            if el.text is None:
                raise ThreadGrammarError("post", "<post> requires a text body")
        elif el.type == ACTION:
            if (el.text is not None) != (el.kind in TEXT_KINDS):
                raise ThreadGrammarError(
                    "action",
                    f"<action> of kind {el.kind.value!r} "
                    f"{'requires' if el.kind in TEXT_KINDS else 'forbids'} a text body",
                )
        else:
            raise ThreadGrammarError("thread", f"unknown element type {el.type!r}")


@dataclass
class PostIndex:
    """Immutable lookup over the text posts of an event batch."""

    by_uri: dict[str, RawEvent] = field(default_factory=dict)
    by_author: dict[str, list[tuple[int, str]]] = field(default_factory=dict)

    @classmethod
    def build(cls, events: Iterable[RawEvent]) -> "PostIndex":
        by_uri: dict[str, RawEvent] = {}
        by_author: dict[str, list[tuple[int, str]]] = {}
        for event in events:
            if event.text is None:
                continue
            by_uri[event.uri] = event
            by_author.setdefault(event.did, []).append((event.created_at, event.uri))
        for posts in by_author.values():
            posts.sort()
        return cls(by_uri=by_uri, by_author=by_author)

    def latest_post_before(self, did: str, created_at: int) -> str | None:
        posts = self.by_author.get(did)
        if not posts:
            return None
        i = bisect_left(posts, (created_at, ""))
        if i == 0:
            return None
        return posts[i - 1][1]


def link_action(event: RawEvent, index: PostIndex) -> str | None:
    """Resolve the post an action responds to.

    Text-directed actions carry their reference; user-directed ones are
    linked to the target user's most recent post strictly before the
    action. Returns None when no target exists (caller drops the event).
    """
    if event.kind is ActionKind.POST:
        return None
    if event.kind in USER_DIRECTED:
        target = index.latest_post_before(event.subject_did, event.created_at)
        if target is None:
            logger.warning(
                "%s %s: target %s has no prior post; dropped",
                event.kind.value, event.uri, event.subject_did,
            )
        return target
    if event.kind is ActionKind.REPLY:
        return event.parent_uri or event.subject_uri
    if event.kind in (ActionKind.POST_UPDATE, ActionKind.POST_DELETE):
        return event.subject_uri or event.uri
    return event.subject_uri


def _parent_of(post: RawEvent) -> str | None:
    if post.parent_uri is not None:
        return post.parent_uri
    if post.kind is ActionKind.QUOTE:
        return post.subject_uri
    return None


def _element_from_post(post: RawEvent) -> ThreadElement:
    return ThreadElement(
        type=POST, kind=post.kind, author=post.did, text=post.text,
        uri=post.uri, created_at=post.created_at, target_uri=_parent_of(post),
    )


def build_thread(final_event: RawEvent, index: PostIndex) -> Thread | None:
    """Assemble the thread terminated by final_event.

    Walks parent references from the action's target post up to the root
    and emits the root-to-target chain followed by the action. Returns
    None when the action cannot be attached to any post.
    """
    if final_event.kind is ActionKind.POST:
        element = ThreadElement(
            type=ACTION, kind=ActionKind.POST, author=final_event.did,
            text=final_event.text, uri=final_event.uri,
            created_at=final_event.created_at,
        )
        return Thread(elements=[element])

    target_uri = link_action(final_event, index)
    if target_uri is None:
        return None

    truncated = False
    chain: list[RawEvent] = []
    seen: set[str] = set()
    cursor: str | None = target_uri
    while cursor is not None:
        if cursor in seen:
            raise MalformedThreadError(f"parent cycle at {cursor}")
        seen.add(cursor)
        post = index.by_uri.get(cursor)
        if post is None:
            if not chain:
                logger.warning(
                    "%s %s: referenced post %s absent; dropped",
                    final_event.kind.value, final_event.uri, cursor,
                )
                return None
            truncated = True
            break
        if post.uri == final_event.uri:
            # Self-referential target (e.g. post_update of itself): the
            # terminal element already carries the content.
            seen.discard(cursor)
            break
        chain.append(post)
        cursor = _parent_of(post)

    chain.reverse()
    elements = [_element_from_post(p) for p in chain]
    terminal = ThreadElement(
        type=ACTION, kind=final_event.kind, author=final_event.did,
        text=final_event.text, uri=final_event.uri,
        created_at=final_event.created_at,
        target_uri=target_uri if target_uri != final_event.uri else None,
    )
    elements.append(terminal)
    if len(elements) == 1 and final_event.kind is not ActionKind.POST:
        # Nothing but the action survived; cannot satisfy the grammar.
        return None
    return Thread(elements=elements, truncated=truncated)


def label_thread(thread: Thread, assignment: dict[str, int]) -> int:
    """Cluster label of a thread = cluster of its terminal element's author."""
    actor = thread.terminal.author
    if actor not in assignment:
        raise UnclusteredActorError(actor)
    return assignment[actor]


def apply_ranks(thread: Thread, rank_map: dict[str, int]) -> Thread:
    """Stamp sequence ranks onto elements and drop raw timestamps."""
    elements = []
    for el in thread.elements:
        elements.append(
            replace(
                el,
                rank=rank_map[el.uri],
                target=rank_map.get(el.target_uri) if el.target_uri else None,
                created_at=None,
            )
        )
    return replace(thread, elements=elements)


def _element_to_obj(el: ThreadElement) -> dict:
    obj: dict = {"type": el.type, "kind": el.kind.value, "author": el.author}
    if el.text is not None:
        obj["text"] = el.text
    if el.rank is None:
        raise ValueError("cannot serialize an unranked thread element")
    obj["rank"] = el.rank
    if el.target is not None:
        obj["target"] = el.target
    return obj


def serialize_thread(thread: Thread) -> str:
    """Export a thread as its canonical JSON line."""
    validate_thread(thread.elements)
    obj: dict = {
        "thread_id": thread.thread_id,
        "cluster": thread.cluster,
        "elements": [_element_to_obj(el) for el in thread.elements],
    }
    if thread.truncated:
        obj["truncated"] = True
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def parse_thread(text: str) -> Thread:
    """Parse and grammar-check one exported thread line."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ThreadGrammarError("thread", f"not a JSON object: {exc.msg}") from exc
    if not isinstance(obj, dict) or not isinstance(obj.get("elements"), list):
        raise ThreadGrammarError("thread", "thread object requires an elements list")
    elements = []
    for item in obj["elements"]:
        if not isinstance(item, dict):
            raise ThreadGrammarError("thread", "elements must be objects")
        try:
            kind = ActionKind(item.get("kind"))
        except ValueError:
            raise ThreadGrammarError(
                "thread", f"unknown action kind {item.get('kind')!r}"
            ) from None
        rank = item.get("rank")
        if not isinstance(rank, int):
            raise ThreadGrammarError("thread", "element rank must be an integer")
        elements.append(
            ThreadElement(
                type=item.get("type", ""),
                kind=kind,
                author=item.get("author", ""),
                text=item.get("text"),
                rank=rank,
                target=item.get("target"),
            )
        )
    validate_thread(elements)
    return Thread(
        elements=elements,
        cluster=int(obj.get("cluster", -1)),
        thread_id=str(obj.get("thread_id", "")),
        truncated=bool(obj.get("truncated", False)),
    )


def read_threads(path) -> Iterator[Thread]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_thread(line)


def write_threads(path, threads: Iterable[Thread]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for thread in threads:
            fh.write(serialize_thread(thread) + "\n")
            count += 1
    return count
