"""Canonical serialization: determinism, round-trips, insertion-order independence."""

from __future__ import annotations

import itertools
import random

from dialogmap.canonical import (
    canonical_dumps,
    canonical_loads,
    canonical_serialize,
    config_from_plain,
    config_to_plain,
    event_from_plain,
    event_to_plain,
    link_to_plain,
    node_from_plain,
    node_to_plain,
    op_from_plain,
    op_to_plain,
    topic_from_plain,
    topic_to_plain,
    turn_from_plain,
    turn_to_plain,
)
from dialogmap.engine import MapState, restore, snapshot
from dialogmap.types import (
    Actor,
    IbisTag,
    Link,
    MapMode,
    MapOp,
    Node,
    NodeLocation,
    NodeOrigin,
    OpKind,
    ProviderConfig,
    SessionConfig,
    SplitReason,
    Topic,
    TopicStatus,
    TranscriptEvent,
    Turn,
)


def test_empty_map_deterministic():
    a = snapshot(MapState(mode=MapMode.AI_MAP))
    b = snapshot(MapState(mode=MapMode.AI_MAP))
    assert a == b


def test_serialize_parse_serialize_fixed_point():
    state = MapState(mode=MapMode.HUMAN_MAP)
    state.nodes["n1"] = Node(
        node_id="n1",
        tag=IbisTag.QUESTION,
        summary="Where should sensors go?",
        origin=NodeOrigin.ai("u1", "Where should sensors go?"),
        speaker_id="alice",
        location=NodeLocation.palette(1),
        topic_id=None,
    )
    first = snapshot(state)
    second = snapshot(restore(first))
    assert first == second


def _three_link_state(order):
    state = MapState(mode=MapMode.AI_MAP)
    for nid in ("n1", "n2", "n3", "n4"):
        state.nodes[nid] = Node(
            node_id=nid,
            tag=IbisTag.IDEA,
            summary=f"idea {nid}",
            origin=NodeOrigin.user("bob"),
            speaker_id="bob",
            location=NodeLocation.canvas(1.0, 2.0),
        )
    links = {
        "l1": Link("l1", "n2", "n1", "Answers"),
        "l2": Link("l2", "n3", "n2", "Support"),
        "l3": Link("l3", "n4", "n2", "Oppose"),
    }
    for lid in order:
        state.links[lid] = links[lid]
    return state


def test_link_insertion_order_irrelevant():
    # oracle: all 3! insertion orders of the same three links
    reference = snapshot(_three_link_state(("l1", "l2", "l3")))
    for order in itertools.permutations(("l1", "l2", "l3")):
        assert snapshot(_three_link_state(order)) == reference


def test_float_fixed_precision():
    assert canonical_dumps(1.5) == b"1.500000"
    assert canonical_dumps({"x": 0.1}) == b'{"x":0.100000}'
    assert canonical_loads(canonical_dumps(0.1)) == 0.1
    # ints stay ints
    assert canonical_dumps(3) == b"3"
    assert isinstance(canonical_loads(b"3"), int)


def test_keys_sorted_and_compact():
    assert canonical_dumps({"b": 1, "a": 2}) == b'{"a":2,"b":1}'
    assert canonical_dumps([1, "x", None, True]) == b'[1,"x",null,true]'


def test_utf8_text_preserved():
    data = canonical_dumps({"text": "naïve café — résumé"})
    assert canonical_loads(data) == {"text": "naïve café — résumé"}


def test_event_round_trip():
    ev = TranscriptEvent("s1", 4, "alice", "Hello there.", True, 1530)
    assert event_from_plain(event_to_plain(ev)) == ev


def test_turn_round_trip():
    t = Turn("u3", "bob", "I think we could add sensors.", 6, 100, 900, SplitReason.SPEAKER_CHANGE)
    assert turn_from_plain(turn_to_plain(t)) == t


def test_node_round_trip_all_variants():
    variants = [
        Node("n1", IbisTag.PRO, "cheap to run", NodeOrigin.ai("u1", "It is cheap."), "a",
             NodeLocation.palette(3), "t1"),
        Node("n2", IbisTag.CON, "privacy concern", NodeOrigin.user("bob"), "bob",
             NodeLocation.canvas(-3.25, 10.5), None),
        Node("n3", IbisTag.IDEA, "use sensors", NodeOrigin.user("eve"), "eve",
             NodeLocation.deleted(), "t2"),
    ]
    for n in variants:
        assert node_from_plain(node_to_plain(n)) == n


def test_topic_and_op_round_trip():
    topic = Topic("t1", "smart entrance devices", 1, 4, TopicStatus.OPEN)
    assert topic_from_plain(topic_to_plain(topic)) == topic
    op = MapOp("op-9", Actor.user("alice"), OpKind.MOVE_NODE, {"node_id": "n1", "x": 1.0, "y": 2.0}, 7)
    assert op_from_plain(op_to_plain(op)) == op
    ai_op = MapOp("ai-merge-t1", Actor.ai(), OpKind.MERGE_GENERATED_MAP,
                  {"topic_id": "t1", "moved": [], "links": [], "rejected": False, "reason": ""}, 8)
    assert op_from_plain(op_to_plain(ai_op)) == ai_op


def test_config_round_trip():
    cfg = SessionConfig(
        mode=MapMode.AI_MAP,
        checkpoint_words=40,
        summary_word_limit=8,
        provider=ProviderConfig(kind="http", endpoint="http://x/v1", model="m", timeout_ms=5000, max_retries=2),
        max_participants=4,
    )
    assert config_from_plain(config_to_plain(cfg)) == cfg


def test_fuzzed_state_snapshot_round_trip():
    rng = random.Random(7)
    state = MapState(mode=MapMode.AI_MAP)
    for i in range(1, 40):
        nid = f"n{i}"
        loc = rng.choice([
            NodeLocation.palette(i),
            NodeLocation.canvas(rng.uniform(-500, 500), rng.uniform(-500, 500)),
            NodeLocation.deleted(),
        ])
        state.nodes[nid] = Node(
            nid,
            rng.choice(list(IbisTag)),
            f"summary {i}",
            NodeOrigin.ai(f"u{i}", f"quote {i}") if rng.random() < 0.5 else NodeOrigin.user("u"),
            rng.choice(["alice", "bob"]),
            loc,
            rng.choice([None, "t1"]),
        )
        if loc.kind == "palette":
            state.palette_order.append(nid)
    state.topics.append(Topic("t1", "anything", 1, 9, TopicStatus.OPEN))
    state.removed_link_ids = {"l9", "l2"}
    state.next_server_seq = 41
    restored = restore(snapshot(state))
    assert restored == state
    assert snapshot(restored) == snapshot(state)


def test_canonical_serialize_dispatch():
    ev = TranscriptEvent("s1", 1, "a", "hi", True, 0)
    assert canonical_serialize(ev) == canonical_dumps(event_to_plain(ev))
    assert canonical_serialize([ev, ev]) == canonical_dumps([event_to_plain(ev)] * 2)


def test_restore_rejects_truncated_bytes():
    import pytest
    from dialogmap.errors import CorruptSnapshot

    data = snapshot(MapState())
    with pytest.raises(CorruptSnapshot):
        restore(data[: len(data) // 2])
