"""The per-session map state machine: palette, canvas, topics, ops.

All mutations flow through MapEngine, which validates ops against the
current state, assigns the map mutation sequence, and applies them. The
same application code drives the server, client mirrors, and replay, so a
given op sequence always produces identical state (and identical snapshot
bytes).

Id counters are derived from the collections rather than stored: node
tombstones are kept and removed link ids are remembered, so replicas that
copy the collections automatically agree on the next id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .canonical import (
    canonical_dumps,
    canonical_loads,
    link_from_plain,
    link_to_plain,
    node_from_plain,
    node_to_plain,
    topic_from_plain,
    topic_to_plain,
)
from .errors import (
    BatchRejected,
    CorruptSnapshot,
    InvalidPayload,
    LinkBatchError,
    StaleTarget,
    UnknownEntity,
    WrongMode,
)
from .pipeline import DecisionKind, LinkDraft, NodeDraft, TopicDecision, validate_link_batch
from .types import (
    AI_ACTOR,
    DEFAULT_SUMMARY_WORD_LIMIT,
    IbisTag,
    Link,
    MapMode,
    MapOp,
    Node,
    NodeLocation,
    NodeOrigin,
    OpKind,
    Topic,
    TopicStatus,
    Turn,
    count_words,
    normalize_ws,
    quantize_coord,
)

COL_SPACING = 180.0
ROW_SPACING = 80.0
SUBMAP_MARGIN = 120.0


@dataclass
class MapState:
    mode: MapMode = MapMode.HUMAN_MAP
    nodes: dict[str, Node] = field(default_factory=dict)
    links: dict[str, Link] = field(default_factory=dict)
    palette_order: list[str] = field(default_factory=list)
    topics: list[Topic] = field(default_factory=list)
    removed_link_ids: set[str] = field(default_factory=set)
    next_server_seq: int = 1

    def to_plain(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "nodes": {nid: node_to_plain(n) for nid, n in self.nodes.items()},
            "links": {lid: link_to_plain(l) for lid, l in self.links.items()},
            "palette_order": list(self.palette_order),
            "topics": [topic_to_plain(t) for t in self.topics],
            "removed_link_ids": sorted(self.removed_link_ids),
            "next_server_seq": self.next_server_seq,
        }

    @staticmethod
    def from_plain(d: dict[str, Any]) -> "MapState":
        return MapState(
            mode=MapMode(d["mode"]),
            nodes={nid: node_from_plain(nd) for nid, nd in d["nodes"].items()},
            links={lid: link_from_plain(ld) for lid, ld in d["links"].items()},
            palette_order=list(d["palette_order"]),
            topics=[topic_from_plain(td) for td in d["topics"]],
            removed_link_ids=set(d["removed_link_ids"]),
            next_server_seq=d["next_server_seq"],
        )

    def open_topic(self) -> Optional[Topic]:
        for t in reversed(self.topics):
            if t.status == TopicStatus.OPEN:
                return t
        return None

    def live_canvas_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.location.kind == "canvas"]


def snapshot(state: MapState) -> bytes:
    """Canonical bytes of the full map state."""
    return canonical_dumps(state.to_plain())


def restore(data: bytes) -> MapState:
    try:
        plain = canonical_loads(data)
        state = MapState.from_plain(plain)
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise CorruptSnapshot(str(exc)) from exc
    return state


def auto_layout(
    node_ids: Sequence[str],
    edges: Iterable[tuple[str, str]],
    anchor: Optional[tuple[float, float, float, float]] = None,
) -> dict[str, tuple[float, float]]:
    """Deterministic layered layout for a forest of nodes.

    node_ids must be in creation order; edges point child -> parent, so
    roots (no outgoing edge) form the left column and each deeper level
    moves one column right. Leaves take consecutive rows, parents center
    on their children. The block is placed below the anchor bounding box.
    """
    ids = list(node_ids)
    idset = set(ids)
    parent: dict[str, str] = {}
    children: dict[str, list[str]] = {nid: [] for nid in ids}
    for frm, to in edges:
        if frm in idset and to in idset:
            parent[frm] = to
    for nid in ids:  # creation order fixes sibling order
        if nid in parent:
            children[parent[nid]].append(nid)

    if anchor is None:
        origin_x, origin_y = 0.0, 0.0
    else:
        min_x, _min_y, _max_x, max_y = anchor
        origin_x, origin_y = min_x, max_y + SUBMAP_MARGIN

    rows: dict[str, float] = {}
    next_row = 0

    def place(nid: str) -> float:
        nonlocal next_row
        kids = children[nid]
        if not kids:
            rows[nid] = float(next_row)
            next_row += 1
        else:
            rows[nid] = sum(place(k) for k in kids) / len(kids)
        return rows[nid]

    depths: dict[str, int] = {}

    def depth(nid: str) -> int:
        if nid not in depths:
            depths[nid] = 0 if nid not in parent else depth(parent[nid]) + 1
        return depths[nid]

    for nid in ids:
        if nid not in parent:
            place(nid)
    positions = {}
    for nid in ids:
        positions[nid] = (
            quantize_coord(origin_x + depth(nid) * COL_SPACING),
            quantize_coord(origin_y + rows[nid] * ROW_SPACING),
        )
    return positions


class MapEngine:
    """Owns a MapState and applies every kind of mutation to it."""

    def __init__(
        self,
        mode: MapMode = MapMode.HUMAN_MAP,
        summary_word_limit: int = DEFAULT_SUMMARY_WORD_LIMIT,
        state: Optional[MapState] = None,
    ):
        self.state = state if state is not None else MapState(mode=mode)
        self.summary_word_limit = summary_word_limit

    # -- id assignment (derived, see module docstring) --

    def _next_node_id(self) -> str:
        return f"n{len(self.state.nodes) + 1}"

    def _next_link_id(self) -> str:
        return f"l{len(self.state.links) + len(self.state.removed_link_ids) + 1}"

    def _next_topic_id(self) -> str:
        return f"t{len(self.state.topics) + 1}"

    def _take_seq(self) -> int:
        seq = self.state.next_server_seq
        self.state.next_server_seq += 1
        return seq

    # -- user ops --

    def apply_user_op(self, op: MapOp) -> MapOp:
        """Validate, assign server_seq, and apply a submitted op.

        Returns the applied op with its payload enriched with any
        server-assigned ids, ready for logging and broadcast.
        """
        if op.kind == OpKind.MERGE_GENERATED_MAP:
            raise InvalidPayload("MergeGeneratedMap cannot be submitted directly")
        payload = self._validate(op)
        applied = MapOp(
            op_id=op.op_id,
            actor=op.actor,
            kind=op.kind,
            payload=payload,
            server_seq=self._take_seq(),
        )
        self._execute(applied)
        return applied

    def apply_replicated_op(self, op: MapOp) -> None:
        """Apply an already-accepted op (mirror and replay path)."""
        if op.server_seq != self.state.next_server_seq:
            raise StaleTarget(
                f"op seq {op.server_seq} does not follow {self.state.next_server_seq - 1}"
            )
        self.state.next_server_seq += 1
        self._execute(op)

    def _validate(self, op: MapOp) -> dict[str, Any]:
        p = op.payload
        kind = op.kind
        if kind == OpKind.CREATE_NODE:
            if op.actor.kind != "user":
                raise InvalidPayload("CreateNode ops come from users")
            tag = self._tag(p)
            summary = normalize_ws(self._str(p, "summary"))
            if not summary:
                raise InvalidPayload("summary must not be empty")
            if count_words(summary) > self.summary_word_limit:
                raise InvalidPayload(
                    f"summary exceeds {self.summary_word_limit} words"
                )
            x, y = self._coords(p)
            open_topic = self.state.open_topic()
            return {
                "node_id": self._next_node_id(),
                "tag": tag.value,
                "summary": summary,
                "x": x,
                "y": y,
                "topic_id": open_topic.topic_id if open_topic else None,
            }
        if kind == OpKind.EDIT_NODE:
            node = self._live_node(self._str(p, "node_id"))
            out: dict[str, Any] = {"node_id": node.node_id}
            if "summary" in p:
                summary = normalize_ws(self._str(p, "summary"))
                if not summary:
                    raise InvalidPayload("summary must not be empty")
                if count_words(summary) > self.summary_word_limit:
                    raise InvalidPayload(
                        f"summary exceeds {self.summary_word_limit} words"
                    )
                out["summary"] = summary
            if "tag" in p:
                out["tag"] = self._tag(p).value
            if len(out) == 1:
                raise InvalidPayload("EditNode changes nothing")
            return out
        if kind == OpKind.DELETE_NODE:
            node = self._live_node(self._str(p, "node_id"))
            return {"node_id": node.node_id}
        if kind == OpKind.MOVE_NODE:
            node = self._live_node(self._str(p, "node_id"))
            x, y = self._coords(p)
            return {"node_id": node.node_id, "x": x, "y": y}
        if kind == OpKind.CREATE_LINK:
            if op.actor.kind == "ai" and self.state.mode == MapMode.HUMAN_MAP:
                raise WrongMode("AI links are not allowed in Human-Map mode")
            from_id = self._str(p, "from")
            to_id = self._str(p, "to")
            label = p.get("label", "")
            if not isinstance(label, str):
                raise InvalidPayload("label must be a string")
            self._live_node(from_id)
            self._live_node(to_id)
            if from_id == to_id:
                raise InvalidPayload("self-links are not allowed")
            for l in self.state.links.values():
                if l.from_id == from_id and l.to_id == to_id:
                    raise InvalidPayload(f"duplicate link {from_id}->{to_id}")
            return {
                "link_id": self._next_link_id(),
                "from": from_id,
                "to": to_id,
                "label": label,
            }
        if kind == OpKind.EDIT_LINK:
            link = self._live_link(self._str(p, "link_id"))
            label = p.get("label")
            if not isinstance(label, str):
                raise InvalidPayload("label must be a string")
            return {"link_id": link.link_id, "label": label}
        if kind == OpKind.DELETE_LINK:
            link = self._live_link(self._str(p, "link_id"))
            return {"link_id": link.link_id}
        raise InvalidPayload(f"unknown op kind {kind!r}")

    def _execute(self, op: MapOp) -> None:
        p = op.payload
        kind = op.kind
        if kind == OpKind.CREATE_NODE:
            node = Node(
                node_id=p["node_id"],
                tag=IbisTag(p["tag"]),
                summary=p["summary"],
                origin=NodeOrigin.user(op.actor.user_id),
                speaker_id=op.actor.user_id,
                location=NodeLocation.canvas(p["x"], p["y"]),
                topic_id=p.get("topic_id"),
            )
            self.state.nodes[node.node_id] = node
        elif kind == OpKind.EDIT_NODE:
            node = self.state.nodes[p["node_id"]]
            if "summary" in p:
                node.summary = p["summary"]
            if "tag" in p:
                node.tag = IbisTag(p["tag"])
        elif kind == OpKind.DELETE_NODE:
            self._delete_node(p["node_id"])
        elif kind == OpKind.MOVE_NODE:
            node = self.state.nodes[p["node_id"]]
            if node.location.kind == "palette":
                self.state.palette_order.remove(node.node_id)
            node.location = NodeLocation.canvas(p["x"], p["y"])
        elif kind == OpKind.CREATE_LINK:
            link = Link(p["link_id"], p["from"], p["to"], p["label"])
            self.state.links[link.link_id] = link
        elif kind == OpKind.EDIT_LINK:
            self.state.links[p["link_id"]].label = p["label"]
        elif kind == OpKind.DELETE_LINK:
            self._remove_link(p["link_id"])
        elif kind == OpKind.MERGE_GENERATED_MAP:
            for placement in p["moved"]:
                node = self.state.nodes[placement["node_id"]]
                if node.location.kind == "palette":
                    self.state.palette_order.remove(node.node_id)
                node.location = NodeLocation.canvas(placement["x"], placement["y"])
            for draft in p["links"]:
                link = Link(self._next_link_id(), draft["from"], draft["to"], draft["label"])
                self.state.links[link.link_id] = link

    def _delete_node(self, node_id: str) -> None:
        node = self.state.nodes[node_id]
        if node.location.kind == "palette":
            self.state.palette_order.remove(node_id)
        node.location = NodeLocation.deleted()
        incident = [
            lid
            for lid, l in self.state.links.items()
            if l.from_id == node_id or l.to_id == node_id
        ]
        for lid in incident:
            self._remove_link(lid)

    def _remove_link(self, link_id: str) -> None:
        del self.state.links[link_id]
        self.state.removed_link_ids.add(link_id)

    # -- AI-driven mutations --

    def add_ai_nodes(self, turn: Turn, drafts: Sequence[NodeDraft]) -> tuple[int, list[Node]]:
        """Materialize validated drafts as palette nodes for this turn.

        Consumes one mutation seq even for an empty draft list, so every
        annotation outcome is observable as exactly one ordered message.
        """
        seq = self._take_seq()
        open_topic = self.state.open_topic()
        nodes: list[Node] = []
        for draft in drafts:
            ord_ = len(self.state.nodes) + 1
            node = Node(
                node_id=f"n{ord_}",
                tag=draft.tag,
                summary=normalize_ws(draft.summary),
                origin=NodeOrigin.ai(turn.turn_id, draft.quote),
                speaker_id=turn.speaker_id,
                location=NodeLocation.palette(ord_),
                topic_id=open_topic.topic_id if open_topic else None,
            )
            self.state.nodes[node.node_id] = node
            self.state.palette_order.append(node.node_id)
            nodes.append(node)
        return seq, nodes

    def apply_generated_nodes(self, seq: int, nodes: Sequence[Node]) -> None:
        """Mirror path: insert already-materialized AI nodes."""
        if seq != self.state.next_server_seq:
            raise StaleTarget(f"nodes seq {seq} does not follow {self.state.next_server_seq - 1}")
        self.state.next_server_seq += 1
        for node in nodes:
            self.state.nodes[node.node_id] = node
            self.state.palette_order.append(node.node_id)

    def apply_topic_decision(self, decision: TopicDecision, turn_ordinal: int) -> tuple[int, Topic]:
        """Advance the topic timeline for the turn at the given ordinal.

        NewTopic closes the open topic at the previous turn and opens a new
        one; Continuation revises the open topic's label and extends it.
        Returns the mutation seq and the topic to broadcast.
        """
        seq = self._take_seq()
        open_topic = self.state.open_topic()
        if decision.kind == DecisionKind.CONTINUATION and open_topic is not None:
            open_topic.label = decision.label
            open_topic.last_turn_seq = turn_ordinal
            return seq, open_topic
        if open_topic is not None:
            open_topic.status = TopicStatus.CLOSED
            open_topic.last_turn_seq = turn_ordinal - 1
        topic = Topic(
            topic_id=self._next_topic_id(),
            label=decision.label,
            first_turn_seq=turn_ordinal,
            last_turn_seq=turn_ordinal,
            status=TopicStatus.OPEN,
        )
        self.state.topics.append(topic)
        return seq, topic

    def apply_topic_updated(self, seq: int, topic: Topic) -> None:
        """Mirror path: TopicUpdated(t) closes a differing open topic first."""
        if seq != self.state.next_server_seq:
            raise StaleTarget(f"topic seq {seq} does not follow {self.state.next_server_seq - 1}")
        self.state.next_server_seq += 1
        open_topic = self.state.open_topic()
        if open_topic is not None and open_topic.topic_id == topic.topic_id:
            open_topic.label = topic.label
            open_topic.first_turn_seq = topic.first_turn_seq
            open_topic.last_turn_seq = topic.last_turn_seq
            open_topic.status = topic.status
            return
        if open_topic is not None:
            open_topic.status = TopicStatus.CLOSED
            open_topic.last_turn_seq = topic.first_turn_seq - 1
        self.state.topics.append(
            Topic(topic.topic_id, topic.label, topic.first_turn_seq, topic.last_turn_seq, topic.status)
        )

    def close_topic_and_merge(
        self,
        topic_id: str,
        links: Sequence[LinkDraft],
        rejected_reason: Optional[str] = None,
    ) -> tuple[MapOp, Optional[BatchRejected]]:
        """Move the closed topic's palette nodes onto the canvas as a sub-map.

        The link batch is re-validated against live state; on any failure the
        nodes still move (unlinked) and the merge op is flagged rejected so
        users see the content promptly even when link generation failed.
        Callers that already know the batch is unusable pass rejected_reason.
        """
        if self.state.mode != MapMode.AI_MAP:
            raise WrongMode("map generation only runs in AI-Map mode")
        topic = next((t for t in self.state.topics if t.topic_id == topic_id), None)
        if topic is None:
            raise UnknownEntity(f"unknown topic {topic_id!r}")

        rejection: Optional[BatchRejected] = None
        accepted: list[LinkDraft] = list(links)
        if rejected_reason is not None:
            rejection = BatchRejected(rejected_reason)
            accepted = []
        topic_node_ids = [
            nid
            for nid, n in self.state.nodes.items()
            if n.topic_id == topic_id and n.location.kind != "deleted"
        ]
        try:
            validate_link_batch(accepted, topic_node_ids)
            existing = {(l.from_id, l.to_id) for l in self.state.links.values()}
            for d in accepted:
                if (d.from_key, d.to_key) in existing:
                    raise BatchRejected(f"link {d.from_key}->{d.to_key} already exists")
        except (LinkBatchError, BatchRejected) as exc:
            rejection = exc if isinstance(exc, BatchRejected) else BatchRejected(str(exc))
            accepted = []

        palette_ids = [
            nid for nid in self.state.palette_order
            if self.state.nodes[nid].topic_id == topic_id
        ]
        positions = auto_layout(
            palette_ids,
            [(d.from_key, d.to_key) for d in accepted],
            self._canvas_bbox(),
        )
        payload: dict[str, Any] = {
            "topic_id": topic_id,
            "moved": [
                {"node_id": nid, "x": positions[nid][0], "y": positions[nid][1]}
                for nid in palette_ids
            ],
            "links": [
                {"from": d.from_key, "to": d.to_key, "label": d.label} for d in accepted
            ],
            "rejected": rejection is not None,
            "reason": str(rejection) if rejection is not None else "",
        }
        op = MapOp(
            op_id=f"ai-merge-{topic_id}",
            actor=AI_ACTOR,
            kind=OpKind.MERGE_GENERATED_MAP,
            payload=payload,
            server_seq=self._take_seq(),
        )
        self._execute(op)
        return op, rejection

    def nodes_for_topic(self, topic_id: str) -> set[str]:
        """Non-deleted nodes tagged with the topic, wherever they live now."""
        if not any(t.topic_id == topic_id for t in self.state.topics):
            raise UnknownEntity(f"unknown topic {topic_id!r}")
        return {
            nid
            for nid, n in self.state.nodes.items()
            if n.topic_id == topic_id and n.location.kind != "deleted"
        }

    def _canvas_bbox(self) -> Optional[tuple[float, float, float, float]]:
        xs, ys = [], []
        for n in self.state.live_canvas_nodes():
            xs.append(n.location.x)
            ys.append(n.location.y)
        if not xs:
            return None
        return min(xs), min(ys), max(xs), max(ys)

    # -- validation helpers --

    def _live_node(self, node_id: str) -> Node:
        node = self.state.nodes.get(node_id)
        if node is None:
            raise UnknownEntity(f"unknown node {node_id!r}")
        if node.location.kind == "deleted":
            raise StaleTarget(f"node {node_id!r} was deleted")
        return node

    def _live_link(self, link_id: str) -> Link:
        link = self.state.links.get(link_id)
        if link is None:
            if link_id in self.state.removed_link_ids:
                raise StaleTarget(f"link {link_id!r} was deleted")
            raise UnknownEntity(f"unknown link {link_id!r}")
        return link

    @staticmethod
    def _str(p: dict[str, Any], key: str) -> str:
        v = p.get(key)
        if not isinstance(v, str) or not v:
            raise InvalidPayload(f"payload field {key!r} must be a non-empty string")
        return v

    @staticmethod
    def _tag(p: dict[str, Any]) -> IbisTag:
        v = p.get("tag")
        try:
            return IbisTag(v)
        except ValueError:
            raise InvalidPayload(f"unknown tag {v!r}") from None

    @staticmethod
    def _coords(p: dict[str, Any]) -> tuple[float, float]:
        out = []
        for key in ("x", "y"):
            v = p.get(key)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InvalidPayload(f"payload field {key!r} must be a number")
            try:
                out.append(quantize_coord(float(v)))
            except ValueError as exc:
                raise InvalidPayload(str(exc)) from None
        return out[0], out[1]


INVARIANT_PALETTE_ORDER = "palette_chronological_order"
INVARIANT_LINKS = "link_endpoints_valid"
INVARIANT_DUPLICATE_LINKS = "no_duplicate_links"
INVARIANT_TOPIC_REFS = "node_topic_refs_valid"
INVARIANT_OPEN_TOPIC = "single_open_topic"
INVARIANT_TOPIC_RANGES = "topic_ranges_contiguous"
INVARIANT_AI_QUOTES = "ai_nodes_carry_quotes"
INVARIANT_SUMMARY_LIMIT = "summary_word_limit"


def check_invariants(state: MapState, summary_word_limit: int = DEFAULT_SUMMARY_WORD_LIMIT) -> list[str]:
    """Re-check every structural invariant; returns the names that fail."""
    failures: list[str] = []

    palette_ok = True
    last_index = -1
    for nid in state.palette_order:
        node = state.nodes.get(nid)
        if node is None or node.location.kind != "palette":
            palette_ok = False
            break
        if node.location.chrono_index <= last_index:
            palette_ok = False
            break
        last_index = node.location.chrono_index
    in_list = set(state.palette_order)
    for nid, node in state.nodes.items():
        if node.location.kind == "palette" and nid not in in_list:
            palette_ok = False
    if len(in_list) != len(state.palette_order):
        palette_ok = False
    if not palette_ok:
        failures.append(INVARIANT_PALETTE_ORDER)

    links_ok = True
    seen_pairs = set()
    dup = False
    for link in state.links.values():
        frm, to = state.nodes.get(link.from_id), state.nodes.get(link.to_id)
        if (
            frm is None
            or to is None
            or frm.location.kind == "deleted"
            or to.location.kind == "deleted"
            or link.from_id == link.to_id
        ):
            links_ok = False
        if (link.from_id, link.to_id) in seen_pairs:
            dup = True
        seen_pairs.add((link.from_id, link.to_id))
    if not links_ok:
        failures.append(INVARIANT_LINKS)
    if dup:
        failures.append(INVARIANT_DUPLICATE_LINKS)

    topic_ids = {t.topic_id for t in state.topics}
    if any(
        n.topic_id is not None and n.topic_id not in topic_ids
        for n in state.nodes.values()
    ):
        failures.append(INVARIANT_TOPIC_REFS)

    open_topics = [t for t in state.topics if t.status == TopicStatus.OPEN]
    if len(open_topics) > 1 or (open_topics and state.topics[-1].status != TopicStatus.OPEN):
        failures.append(INVARIANT_OPEN_TOPIC)

    ranges_ok = True
    for i, t in enumerate(state.topics):
        if t.first_turn_seq > t.last_turn_seq:
            ranges_ok = False
        if i and t.first_turn_seq != state.topics[i - 1].last_turn_seq + 1:
            ranges_ok = False
    if not ranges_ok:
        failures.append(INVARIANT_TOPIC_RANGES)

    if any(
        n.origin.kind == "ai" and not n.origin.quote.strip()
        for n in state.nodes.values()
        if n.location.kind != "deleted"
    ):
        failures.append(INVARIANT_AI_QUOTES)

    if any(
        count_words(normalize_ws(n.summary)) > summary_word_limit
        for n in state.nodes.values()
        if n.location.kind != "deleted"
    ):
        failures.append(INVARIANT_SUMMARY_LIMIT)

    return failures
