"""Wire protocol message builders and validation.

Messages travel as canonical-serialization objects tagged with a "type"
field; framing on the byte stream is "<decimal payload length>\\n<payload>".
The normative field reference lives in docs/protocol.md; builders here are
the single source of those field names in code.

Every server->client mutation message (op_applied, nodes_generated,
topic_updated, map_generated) carries the map mutation seq: consecutive
per session, so clients can detect missed mutations.
"""

from __future__ import annotations

from typing import Any, Optional

from .canonical import (
    event_to_plain,
    node_to_plain,
    op_to_plain,
    topic_to_plain,
    turn_to_plain,
)
from .engine import MapState
from .errors import DialogmapError
from .types import MapOp, Node, Topic, TranscriptEvent, Turn

PROTOCOL_VERSION = 1

# client -> server
MSG_JOIN = "join"
MSG_SUBMIT_OP = "submit_op"
MSG_SUBMIT_TRANSCRIPT_EVENT = "submit_transcript_event"
MSG_SET_AGENDA = "set_agenda"
MSG_GET_TURN_TRANSCRIPT = "get_turn_transcript"

# server -> client
MSG_SNAPSHOT = "snapshot"
MSG_OP_APPLIED = "op_applied"
MSG_NODES_GENERATED = "nodes_generated"
MSG_TOPIC_UPDATED = "topic_updated"
MSG_MAP_GENERATED = "map_generated"
MSG_TURN_TRANSCRIPT = "turn_transcript"
MSG_ERROR = "error"

MUTATION_MESSAGES = frozenset(
    {MSG_OP_APPLIED, MSG_NODES_GENERATED, MSG_TOPIC_UPDATED, MSG_MAP_GENERATED}
)


def join_msg(session_id: str, user_id: str, display_name: str) -> dict[str, Any]:
    return {
        "type": MSG_JOIN,
        "session_id": session_id,
        "user_id": user_id,
        "display_name": display_name,
    }


def submit_op_msg(op: MapOp) -> dict[str, Any]:
    return {"type": MSG_SUBMIT_OP, "op": op_to_plain(op)}


def submit_event_msg(event: TranscriptEvent) -> dict[str, Any]:
    return {"type": MSG_SUBMIT_TRANSCRIPT_EVENT, "event": event_to_plain(event)}


def set_agenda_msg(text: str) -> dict[str, Any]:
    return {"type": MSG_SET_AGENDA, "text": text}


def get_turn_transcript_msg(turn_id: str) -> dict[str, Any]:
    return {"type": MSG_GET_TURN_TRANSCRIPT, "turn_id": turn_id}


def snapshot_msg(
    state: MapState, agenda: str, participants: list[dict[str, str]]
) -> dict[str, Any]:
    return {
        "type": MSG_SNAPSHOT,
        "server_seq": state.next_server_seq - 1,
        "map": state.to_plain(),
        "agenda": agenda,
        "participants": participants,
    }


def op_applied_msg(op: MapOp) -> dict[str, Any]:
    return {"type": MSG_OP_APPLIED, "server_seq": op.server_seq, "op": op_to_plain(op)}


def nodes_generated_msg(seq: int, turn: Turn, nodes: list[Node]) -> dict[str, Any]:
    return {
        "type": MSG_NODES_GENERATED,
        "server_seq": seq,
        "turn": turn_to_plain(turn),
        "nodes": [node_to_plain(n) for n in nodes],
    }


def topic_updated_msg(seq: int, topic: Topic) -> dict[str, Any]:
    return {"type": MSG_TOPIC_UPDATED, "server_seq": seq, "topic": topic_to_plain(topic)}


def map_generated_msg(op: MapOp) -> dict[str, Any]:
    p = op.payload
    return {
        "type": MSG_MAP_GENERATED,
        "server_seq": op.server_seq,
        "topic_id": p["topic_id"],
        "moved": p["moved"],
        "links": p["links"],
        "rejected": p["rejected"],
        "reason": p["reason"],
    }


def turn_transcript_msg(turn_id: str, text: str) -> dict[str, Any]:
    return {"type": MSG_TURN_TRANSCRIPT, "turn_id": turn_id, "text": text}


def error_msg(exc_or_code: DialogmapError | str, detail: Optional[str] = None) -> dict[str, Any]:
    if isinstance(exc_or_code, DialogmapError):
        return {"type": MSG_ERROR, "code": exc_or_code.code, "detail": str(exc_or_code)}
    return {"type": MSG_ERROR, "code": exc_or_code, "detail": detail or ""}


def frame(payload: bytes) -> bytes:
    """Length-delimited framing: decimal byte count, newline, payload."""
    return str(len(payload)).encode("ascii") + b"\n" + payload
