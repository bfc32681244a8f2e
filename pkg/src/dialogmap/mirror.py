"""Reference client-side state mirror.

Applies the server->client message stream to a local MapState using the
same engine code as the server, so a mirror that has seen every mutation
message up to seq S has snapshot bytes identical to the server's at S.
Mutation messages must arrive in seq order; a gap raises StaleTarget.
"""

from __future__ import annotations

from typing import Any, Optional

from . import protocol
from .canonical import node_from_plain, op_from_plain, topic_from_plain
from .engine import MapEngine, MapState, snapshot
from .errors import CorruptSnapshot
from .types import AI_ACTOR, MapOp, OpKind


class ClientMirror:
    def __init__(self) -> None:
        self.engine: Optional[MapEngine] = None
        self.agenda = ""
        self.participants: list[dict[str, str]] = []
        self.turn_texts: dict[str, str] = {}
        self.errors: list[dict[str, Any]] = []

    @property
    def state(self) -> MapState:
        if self.engine is None:
            raise CorruptSnapshot("mirror has no snapshot yet")
        return self.engine.state

    @property
    def server_seq(self) -> int:
        return self.state.next_server_seq - 1

    def snapshot_bytes(self) -> bytes:
        return snapshot(self.state)

    def apply_message(self, msg: dict[str, Any]) -> None:
        mtype = msg["type"]
        if mtype == protocol.MSG_SNAPSHOT:
            self.engine = MapEngine(state=MapState.from_plain(msg["map"]))
            self.agenda = msg["agenda"]
            self.participants = list(msg["participants"])
            return
        if mtype == protocol.MSG_ERROR:
            self.errors.append(msg)
            return
        if mtype == protocol.MSG_TURN_TRANSCRIPT:
            self.turn_texts[msg["turn_id"]] = msg["text"]
            return
        if self.engine is None:
            raise CorruptSnapshot("mutation before snapshot")
        if mtype == protocol.MSG_OP_APPLIED:
            self.engine.apply_replicated_op(op_from_plain(msg["op"]))
        elif mtype == protocol.MSG_NODES_GENERATED:
            nodes = [node_from_plain(n) for n in msg["nodes"]]
            self.engine.apply_generated_nodes(msg["server_seq"], nodes)
        elif mtype == protocol.MSG_TOPIC_UPDATED:
            self.engine.apply_topic_updated(msg["server_seq"], topic_from_plain(msg["topic"]))
        elif mtype == protocol.MSG_MAP_GENERATED:
            op = MapOp(
                op_id=f"ai-merge-{msg['topic_id']}",
                actor=AI_ACTOR,
                kind=OpKind.MERGE_GENERATED_MAP,
                payload={
                    "topic_id": msg["topic_id"],
                    "moved": msg["moved"],
                    "links": msg["links"],
                    "rejected": msg["rejected"],
                    "reason": msg["reason"],
                },
                server_seq=msg["server_seq"],
            )
            self.engine.apply_replicated_op(op)
        else:
            raise ValueError(f"unknown message type {mtype!r}")
