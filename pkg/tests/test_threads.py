import random

import pytest

from simpact.events import ActionKind, RawEvent
from simpact.threads import (
    ACTION,
    POST,
    MalformedThreadError,
    PostIndex,
    Thread,
    ThreadElement,
    ThreadGrammarError,
    UnclusteredActorError,
    apply_ranks,
    build_thread,
    label_thread,
    link_action,
    parse_thread,
    serialize_thread,
    validate_thread,
)

from conftest import make_invalid_elements, make_valid_thread


def post(did, uri, text, created_at, parent=None, root=None, kind=ActionKind.POST):
    return RawEvent(
        did=did, uri=uri, kind=kind, created_at=created_at, text=text,
        langs=["en"], parent_uri=parent, root_uri=root,
    )


@pytest.fixture
def corpus():
    events = [
        post("did:plc:ann", "p1", "root post", 100),
        post("did:plc:bob", "r1", "first reply", 200, parent="p1", root="p1",
             kind=ActionKind.REPLY),
        post("did:plc:cat", "r2", "second reply", 300, parent="r1", root="p1",
             kind=ActionKind.REPLY),
        post("did:plc:bob", "p2", "bob again", 400),
        post("did:plc:ann", "p3", "ann later", 700),
    ]
    return events, PostIndex.build(events)


# ------------------------------------------------------------ linking

def test_link_follow_to_most_recent_prior_post(corpus):
    _, index = corpus
    follow = RawEvent(
        did="did:plc:cat", uri="f1", kind=ActionKind.FOLLOW, created_at=500,
        subject_did="did:plc:bob",
    )
    assert link_action(follow, index) == "p2"  # bob's posts at 200 and 400
    early = RawEvent(
        did="did:plc:cat", uri="f2", kind=ActionKind.FOLLOW, created_at=250,
        subject_did="did:plc:bob",
    )
    assert link_action(early, index) == "r1"


def test_link_strictly_before(corpus):
    _, index = corpus
    tied = RawEvent(
        did="did:plc:cat", uri="f3", kind=ActionKind.FOLLOW, created_at=400,
        subject_did="did:plc:bob",
    )
    assert link_action(tied, index) == "r1"  # post at 400 not strictly before


def test_link_like_verbatim(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:ann", uri="l1", kind=ActionKind.LIKE, created_at=600,
        subject_uri="u5",
    )
    assert link_action(like, index) == "u5"


def test_link_block_without_prior_posts(corpus):
    _, index = corpus
    block = RawEvent(
        did="did:plc:ann", uri="b1", kind=ActionKind.BLOCK, created_at=600,
        subject_did="did:plc:lurker",
    )
    assert link_action(block, index) is None


# ------------------------------------------------------------ building

def test_build_like_walks_reply_chain(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:dee", uri="l9", kind=ActionKind.LIKE, created_at=900,
        subject_uri="r2",
    )
    thread = build_thread(like, index)
    assert [el.uri for el in thread.elements] == ["p1", "r1", "r2", "l9"]
    assert [el.type for el in thread.elements] == [POST, POST, POST, ACTION]
    assert thread.elements[-1].kind is ActionKind.LIKE
    assert not thread.truncated


def test_build_standalone_post_degenerate(corpus):
    _, index = corpus
    solo = post("did:plc:ann", "p9", "hello world", 950)
    thread = build_thread(solo, index)
    assert len(thread.elements) == 1
    only = thread.elements[0]
    assert only.type == ACTION and only.kind is ActionKind.POST
    assert only.text == "hello world"
    validate_thread(thread.elements)


def test_build_follow_thread(corpus):
    _, index = corpus
    follow = RawEvent(
        did="did:plc:cat", uri="f1", kind=ActionKind.FOLLOW, created_at=500,
        subject_did="did:plc:bob",
    )
    thread = build_thread(follow, index)
    assert [el.uri for el in thread.elements] == ["p2", "f1"]
    assert thread.elements[-1].kind is ActionKind.FOLLOW


def test_build_missing_ancestor_truncates(corpus):
    events, _ = corpus
    index = PostIndex.build([e for e in events if e.uri != "p1"])
    like = RawEvent(
        did="did:plc:dee", uri="l1", kind=ActionKind.LIKE, created_at=900,
        subject_uri="r2",
    )
    thread = build_thread(like, index)
    assert thread.truncated
    assert [el.uri for el in thread.elements] == ["r1", "r2", "l1"]


def test_build_missing_target_dropped(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:dee", uri="l1", kind=ActionKind.LIKE, created_at=900,
        subject_uri="ghost",
    )
    assert build_thread(like, index) is None


def test_build_cycle_raises():
    a = post("did:plc:x", "a", "a", 10, parent="b", kind=ActionKind.REPLY)
    b = post("did:plc:x", "b", "b", 20, parent="a", kind=ActionKind.REPLY)
    index = PostIndex.build([a, b])
    like = RawEvent(
        did="did:plc:y", uri="l", kind=ActionKind.LIKE, created_at=30,
        subject_uri="a",
    )
    with pytest.raises(MalformedThreadError):
        build_thread(like, index)


def test_reply_terminal_carries_text(corpus):
    _, index = corpus
    reply = post("did:plc:dee", "r9", "late reply", 900, parent="r2", root="p1",
                 kind=ActionKind.REPLY)
    thread = build_thread(reply, index)
    assert [el.uri for el in thread.elements] == ["p1", "r1", "r2", "r9"]
    assert thread.elements[-1].text == "late reply"


# ------------------------------------------------------------ labeling

def test_label_uses_terminal_actor(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:dee", uri="l9", kind=ActionKind.LIKE, created_at=900,
        subject_uri="r2",
    )
    thread = build_thread(like, index)
    assignment = {"did:plc:ann": 1, "did:plc:bob": 2, "did:plc:cat": 2, "did:plc:dee": 7}
    assert label_thread(thread, assignment) == 7


def test_label_ignores_intermediate_authors(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:dee", uri="l9", kind=ActionKind.LIKE, created_at=900,
        subject_uri="r2",
    )
    thread = build_thread(like, index)
    base = {"did:plc:ann": 1, "did:plc:bob": 2, "did:plc:cat": 3, "did:plc:dee": 4}
    moved = {"did:plc:ann": 5, "did:plc:bob": 6, "did:plc:cat": 0, "did:plc:dee": 4}
    assert label_thread(thread, base) == label_thread(thread, moved) == 4


def test_label_unclustered_actor_raises(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:dee", uri="l9", kind=ActionKind.LIKE, created_at=900,
        subject_uri="r2",
    )
    thread = build_thread(like, index)
    with pytest.raises(UnclusteredActorError):
        label_thread(thread, {"did:plc:ann": 1})


# ------------------------------------------------------------ ranks

def test_apply_ranks_sets_targets(corpus):
    _, index = corpus
    like = RawEvent(
        did="did:plc:dee", uri="l9", kind=ActionKind.LIKE, created_at=900,
        subject_uri="r2",
    )
    thread = build_thread(like, index)
    rank_map = {"p1": 1, "r1": 2, "r2": 3, "l9": 4}
    ranked = apply_ranks(thread, rank_map)
    assert [el.rank for el in ranked.elements] == [1, 2, 3, 4]
    assert ranked.elements[-1].target == 3  # the liked post's rank
    assert all(el.created_at is None for el in ranked.elements)
    # order-respecting: every action's target precedes it
    assert ranked.elements[-1].target < ranked.elements[-1].rank


# ------------------------------------------------------------ grammar

def test_round_trip_random_valid_threads():
    rng = random.Random(77)
    for _ in range(200):
        thread = make_valid_thread(rng)
        assert parse_thread(serialize_thread(thread)) == thread


def test_action_before_post_names_production():
    rng = random.Random(1)
    elements = [
        ThreadElement(type=ACTION, kind=ActionKind.LIKE, author="u", rank=1),
        ThreadElement(type=POST, kind=ActionKind.POST, author="u", text="x", rank=2),
    ]
    with pytest.raises(ThreadGrammarError) as err:
        validate_thread(elements)
    assert err.value.production == "post"
    assert "<thread> must begin with <post>" in str(err.value)


def test_trailing_second_action_rejected():
    elements = [
        ThreadElement(type=POST, kind=ActionKind.POST, author="u", text="x", rank=1),
        ThreadElement(type=ACTION, kind=ActionKind.LIKE, author="u", rank=2),
        ThreadElement(type=ACTION, kind=ActionKind.LIKE, author="u", rank=3),
    ]
    with pytest.raises(ThreadGrammarError) as err:
        validate_thread(elements)
    assert err.value.production == "posts"


def test_fuzzed_invalid_orderings_rejected():
    rng = random.Random(123)
    for _ in range(300):
        elements, production = make_invalid_elements(rng)
        with pytest.raises(ThreadGrammarError) as err:
            validate_thread(elements)
        assert err.value.production == production


def test_parse_rejects_malformed_json_and_shapes():
    with pytest.raises(ThreadGrammarError):
        parse_thread("{broken")
    with pytest.raises(ThreadGrammarError):
        parse_thread('{"thread_id": "x", "cluster": 0}')
    with pytest.raises(ThreadGrammarError):
        parse_thread('{"elements": [{"type": "action", "kind": "warp", "rank": 1}]}')
    with pytest.raises(ThreadGrammarError):
        parse_thread(
            '{"elements": [{"type": "action", "kind": "post", "author": "u", "text": "x"}]}'
        )


def test_serialize_requires_ranks():
    thread = Thread(elements=[
        ThreadElement(type=ACTION, kind=ActionKind.POST, author="u", text="x")
    ])
    with pytest.raises(ValueError):
        serialize_thread(thread)
