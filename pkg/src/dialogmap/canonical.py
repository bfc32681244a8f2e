"""Canonical serialization and the plain-form converters for domain types.

The canonical form is a UTF-8 JSON subset: object keys sorted, compact
separators, floats rendered at fixed 6-decimal precision, non-ASCII kept
as UTF-8. Equal values always produce identical bytes, which the wire
protocol, session log, snapshots, and map exports all rely on.

Wire field names are fixed here and documented in docs/protocol.md.
"""

from __future__ import annotations

import json
from typing import Any

from .types import (
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

FLOAT_PRECISION = 6


def _encode(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("non-finite floats have no canonical form")
        out.append(f"{value:.{FLOAT_PRECISION}f}")
    elif isinstance(value, dict):
        out.append("{")
        first = True
        for key in sorted(value):
            if not isinstance(key, str):
                raise ValueError(f"object keys must be strings, got {key!r}")
            if not first:
                out.append(",")
            first = False
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    else:
        raise ValueError(f"no canonical form for {type(value).__name__}")


def canonical_dumps(value: Any) -> bytes:
    """Encode a plain value (dict/list/str/int/float/bool/None) canonically."""
    out: list[str] = []
    _encode(value, out)
    return "".join(out).encode("utf-8")


def canonical_loads(data: bytes | str) -> Any:
    """Parse canonical bytes back into plain values."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


# --- domain converters (plain form <-> dataclasses) ---

def event_to_plain(ev: TranscriptEvent) -> dict[str, Any]:
    return {
        "session_id": ev.session_id,
        "seq": ev.seq,
        "speaker_id": ev.speaker_id,
        "text": ev.text,
        "is_sentence_final": ev.is_sentence_final,
        "timestamp_ms": ev.timestamp_ms,
    }


def event_from_plain(d: dict[str, Any]) -> TranscriptEvent:
    ev = TranscriptEvent(
        session_id=_req(d, "session_id", str),
        seq=_req(d, "seq", int),
        speaker_id=_req(d, "speaker_id", str),
        text=_req(d, "text", str),
        is_sentence_final=_req(d, "is_sentence_final", bool),
        timestamp_ms=_req(d, "timestamp_ms", int),
    )
    ev.validate()
    return ev


def turn_to_plain(t: Turn) -> dict[str, Any]:
    return {
        "turn_id": t.turn_id,
        "speaker_id": t.speaker_id,
        "text": t.text,
        "word_count": t.word_count,
        "start_ms": t.start_ms,
        "end_ms": t.end_ms,
        "split_reason": t.split_reason.value,
    }


def turn_from_plain(d: dict[str, Any]) -> Turn:
    return Turn(
        turn_id=_req(d, "turn_id", str),
        speaker_id=_req(d, "speaker_id", str),
        text=_req(d, "text", str),
        word_count=_req(d, "word_count", int),
        start_ms=_req(d, "start_ms", int),
        end_ms=_req(d, "end_ms", int),
        split_reason=SplitReason(_req(d, "split_reason", str)),
    )


def origin_to_plain(o: NodeOrigin) -> dict[str, Any]:
    if o.kind == "ai":
        return {"kind": "ai", "turn_id": o.turn_id, "quote": o.quote}
    return {"kind": "user", "user_id": o.user_id}


def origin_from_plain(d: dict[str, Any]) -> NodeOrigin:
    kind = _req(d, "kind", str)
    if kind == "ai":
        return NodeOrigin.ai(_req(d, "turn_id", str), _req(d, "quote", str))
    if kind == "user":
        return NodeOrigin.user(_req(d, "user_id", str))
    raise ValueError(f"unknown origin kind {kind!r}")


def location_to_plain(loc: NodeLocation) -> dict[str, Any]:
    if loc.kind == "palette":
        return {"kind": "palette", "chrono_index": loc.chrono_index}
    if loc.kind == "canvas":
        return {"kind": "canvas", "x": loc.x, "y": loc.y}
    return {"kind": "deleted"}


def location_from_plain(d: dict[str, Any]) -> NodeLocation:
    kind = _req(d, "kind", str)
    if kind == "palette":
        return NodeLocation.palette(_req(d, "chrono_index", int))
    if kind == "canvas":
        return NodeLocation.canvas(_num(d, "x"), _num(d, "y"))
    if kind == "deleted":
        return NodeLocation.deleted()
    raise ValueError(f"unknown location kind {kind!r}")


def node_to_plain(n: Node) -> dict[str, Any]:
    return {
        "node_id": n.node_id,
        "tag": n.tag.value,
        "summary": n.summary,
        "origin": origin_to_plain(n.origin),
        "speaker_id": n.speaker_id,
        "location": location_to_plain(n.location),
        "topic_id": n.topic_id,
    }


def node_from_plain(d: dict[str, Any]) -> Node:
    topic_id = d.get("topic_id")
    if topic_id is not None and not isinstance(topic_id, str):
        raise ValueError("topic_id must be a string or null")
    return Node(
        node_id=_req(d, "node_id", str),
        tag=IbisTag(_req(d, "tag", str)),
        summary=_req(d, "summary", str),
        origin=origin_from_plain(_req(d, "origin", dict)),
        speaker_id=_req(d, "speaker_id", str),
        location=location_from_plain(_req(d, "location", dict)),
        topic_id=topic_id,
    )


def link_to_plain(l: Link) -> dict[str, Any]:
    return {"link_id": l.link_id, "from": l.from_id, "to": l.to_id, "label": l.label}


def link_from_plain(d: dict[str, Any]) -> Link:
    return Link(
        link_id=_req(d, "link_id", str),
        from_id=_req(d, "from", str),
        to_id=_req(d, "to", str),
        label=_req(d, "label", str),
    )


def topic_to_plain(t: Topic) -> dict[str, Any]:
    return {
        "topic_id": t.topic_id,
        "label": t.label,
        "first_turn_seq": t.first_turn_seq,
        "last_turn_seq": t.last_turn_seq,
        "status": t.status.value,
    }


def topic_from_plain(d: dict[str, Any]) -> Topic:
    return Topic(
        topic_id=_req(d, "topic_id", str),
        label=_req(d, "label", str),
        first_turn_seq=_req(d, "first_turn_seq", int),
        last_turn_seq=_req(d, "last_turn_seq", int),
        status=TopicStatus(_req(d, "status", str)),
    )


def actor_to_plain(a: Actor) -> dict[str, Any]:
    if a.kind == "user":
        return {"kind": "user", "user_id": a.user_id}
    return {"kind": "ai"}


def actor_from_plain(d: dict[str, Any]) -> Actor:
    kind = _req(d, "kind", str)
    if kind == "user":
        return Actor.user(_req(d, "user_id", str))
    if kind == "ai":
        return Actor.ai()
    raise ValueError(f"unknown actor kind {kind!r}")


def op_to_plain(op: MapOp) -> dict[str, Any]:
    return {
        "op_id": op.op_id,
        "actor": actor_to_plain(op.actor),
        "kind": op.kind.value,
        "payload": op.payload,
        "server_seq": op.server_seq,
    }


def op_from_plain(d: dict[str, Any]) -> MapOp:
    return MapOp(
        op_id=_req(d, "op_id", str),
        actor=actor_from_plain(_req(d, "actor", dict)),
        kind=OpKind(_req(d, "kind", str)),
        payload=_req(d, "payload", dict),
        server_seq=_req(d, "server_seq", int),
    )


def provider_to_plain(p: ProviderConfig) -> dict[str, Any]:
    if p.kind == "mock":
        return {"kind": "mock", "seed": p.seed}
    return {
        "kind": "http",
        "endpoint": p.endpoint,
        "model": p.model,
        "timeout_ms": p.timeout_ms,
        "max_retries": p.max_retries,
    }


def provider_from_plain(d: dict[str, Any]) -> ProviderConfig:
    kind = _req(d, "kind", str)
    if kind == "mock":
        return ProviderConfig(kind="mock", seed=_req(d, "seed", int))
    if kind == "http":
        return ProviderConfig(
            kind="http",
            endpoint=_req(d, "endpoint", str),
            model=_req(d, "model", str),
            timeout_ms=_req(d, "timeout_ms", int),
            max_retries=_req(d, "max_retries", int),
        )
    raise ValueError(f"unknown provider kind {kind!r}")


def config_to_plain(c: SessionConfig) -> dict[str, Any]:
    return {
        "mode": c.mode.value,
        "checkpoint_words": c.checkpoint_words,
        "summary_word_limit": c.summary_word_limit,
        "provider": provider_to_plain(c.provider),
        "max_participants": c.max_participants,
    }


def config_from_plain(d: dict[str, Any]) -> SessionConfig:
    cfg = SessionConfig(
        mode=MapMode(_req(d, "mode", str)),
        checkpoint_words=_req(d, "checkpoint_words", int),
        summary_word_limit=_req(d, "summary_word_limit", int),
        provider=provider_from_plain(_req(d, "provider", dict)),
        max_participants=_req(d, "max_participants", int),
    )
    cfg.validate()
    return cfg


_TO_PLAIN = {
    TranscriptEvent: event_to_plain,
    Turn: turn_to_plain,
    Node: node_to_plain,
    Link: link_to_plain,
    Topic: topic_to_plain,
    MapOp: op_to_plain,
    Actor: actor_to_plain,
    NodeOrigin: origin_to_plain,
    NodeLocation: location_to_plain,
    SessionConfig: config_to_plain,
    ProviderConfig: provider_to_plain,
}


def to_plain(value: Any) -> Any:
    """Convert a domain value (or container of them) to its plain form."""
    fn = _TO_PLAIN.get(type(value))
    if fn is not None:
        return fn(value)
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if hasattr(value, "to_plain"):
        return value.to_plain()
    return value


def canonical_serialize(value: Any) -> bytes:
    """Canonical bytes of any domain value. Equal values -> equal bytes."""
    return canonical_dumps(to_plain(value))


def _req(d: dict[str, Any], key: str, typ: type) -> Any:
    if key not in d:
        raise ValueError(f"missing field {key!r}")
    v = d[key]
    if typ is int:
        # bool is an int subclass; reject it where an int is required
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"field {key!r} must be an integer")
    elif not isinstance(v, typ):
        raise ValueError(f"field {key!r} must be {typ.__name__}")
    return v


def _num(d: dict[str, Any], key: str) -> float:
    if key not in d:
        raise ValueError(f"missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"field {key!r} must be a number")
    return float(v)
