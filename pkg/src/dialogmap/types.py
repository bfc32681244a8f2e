"""Domain types shared by every module.

All values here are plain data: safe to copy between threads, compared
structurally, and round-trippable through the canonical serialization
(see canonical.py). Identifier fields are opaque strings; nothing in the
engine may depend on their internal structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .errors import BadConfig, InvalidEvent


def count_words(text: str) -> int:
    """Whitespace-token count. Punctuation stays attached to tokens."""
    return len(text.split())


def normalize_ws(text: str) -> str:
    """Collapse runs of whitespace and trim the ends."""
    return " ".join(text.split())


def quantize_coord(value: float) -> float:
    """Fix canvas coordinates to 6 decimal places.

    Canonical serialization renders floats at this precision; quantizing at
    entry keeps parse(serialize(v)) == v exact.
    """
    v = float(value)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("coordinate must be finite")
    return round(v, 6)


class IbisTag(str, Enum):
    """The four node categories of the dialogue-mapping notation."""

    QUESTION = "Question"
    IDEA = "Idea"
    PRO = "Pro"
    CON = "Con"


class SplitReason(str, Enum):
    SPEAKER_CHANGE = "SpeakerChange"
    LENGTH_CHECKPOINT = "LengthCheckpoint"
    STREAM_END = "StreamEnd"


class TopicStatus(str, Enum):
    OPEN = "Open"
    CLOSED = "Closed"


@dataclass(frozen=True)
class TranscriptEvent:
    """One ASR fragment.

    Empty text is only allowed on sentence-final events (pure punctuation
    events emitted by speech services).
    """

    session_id: str
    seq: int
    speaker_id: str
    text: str
    is_sentence_final: bool
    timestamp_ms: int

    def validate(self) -> None:
        if not self.text.strip() and not self.is_sentence_final:
            raise InvalidEvent(
                f"event seq={self.seq}: empty text requires is_sentence_final"
            )


@dataclass(frozen=True)
class Turn:
    """A finalized utterance unit; the atom the provider pipeline consumes."""

    turn_id: str
    speaker_id: str
    text: str
    word_count: int
    start_ms: int
    end_ms: int
    split_reason: SplitReason


@dataclass(frozen=True)
class NodeOrigin:
    """Provenance of a node: AI-generated from a turn, or user-created.

    AI origins carry the source quote so the original transcript stays
    reachable from the node. User origins may leave quote empty.
    """

    kind: str  # "ai" | "user"
    turn_id: str = ""
    quote: str = ""
    user_id: str = ""

    @staticmethod
    def ai(turn_id: str, quote: str) -> "NodeOrigin":
        return NodeOrigin(kind="ai", turn_id=turn_id, quote=quote)

    @staticmethod
    def user(user_id: str) -> "NodeOrigin":
        return NodeOrigin(kind="user", user_id=user_id)


@dataclass(frozen=True)
class NodeLocation:
    """Where a node lives: palette slot, canvas position, or deleted."""

    kind: str  # "palette" | "canvas" | "deleted"
    chrono_index: int = 0
    x: float = 0.0
    y: float = 0.0

    @staticmethod
    def palette(chrono_index: int) -> "NodeLocation":
        return NodeLocation(kind="palette", chrono_index=chrono_index)

    @staticmethod
    def canvas(x: float, y: float) -> "NodeLocation":
        return NodeLocation(kind="canvas", x=quantize_coord(x), y=quantize_coord(y))

    @staticmethod
    def deleted() -> "NodeLocation":
        return NodeLocation(kind="deleted")


@dataclass
class Node:
    node_id: str
    tag: IbisTag
    summary: str
    origin: NodeOrigin
    speaker_id: str
    location: NodeLocation
    topic_id: Optional[str] = None


@dataclass
class Link:
    link_id: str
    from_id: str
    to_id: str
    label: str


@dataclass
class Topic:
    topic_id: str
    label: str
    first_turn_seq: int
    last_turn_seq: int
    status: TopicStatus


class OpKind(str, Enum):
    CREATE_NODE = "CreateNode"
    EDIT_NODE = "EditNode"
    DELETE_NODE = "DeleteNode"
    MOVE_NODE = "MoveNode"
    CREATE_LINK = "CreateLink"
    EDIT_LINK = "EditLink"
    DELETE_LINK = "DeleteLink"
    MERGE_GENERATED_MAP = "MergeGeneratedMap"


USER_OP_KINDS = frozenset(OpKind) - {OpKind.MERGE_GENERATED_MAP}


@dataclass(frozen=True)
class Actor:
    kind: str  # "user" | "ai"
    user_id: str = ""

    @staticmethod
    def user(user_id: str) -> "Actor":
        return Actor(kind="user", user_id=user_id)

    @staticmethod
    def ai() -> "Actor":
        return Actor(kind="ai")


AI_ACTOR = Actor.ai()


@dataclass
class MapOp:
    """A single map mutation. server_seq is assigned by the engine on
    acceptance; submitted ops carry server_seq = 0."""

    op_id: str
    actor: Actor
    kind: OpKind
    payload: dict[str, Any] = field(default_factory=dict)
    server_seq: int = 0


class MapMode(str, Enum):
    HUMAN_MAP = "HumanMap"
    AI_MAP = "AiMap"


DEFAULT_CHECKPOINT_WORDS = 50
DEFAULT_SUMMARY_WORD_LIMIT = 6
DEFAULT_TOPIC_WORD_LIMIT = 6
DEFAULT_MAX_PARTICIPANTS = 16


@dataclass(frozen=True)
class ProviderConfig:
    """Which analysis backend a session uses.

    kind "mock" is the deterministic test double (seeded); kind "http" is a
    generic chat-completion endpoint adapter.
    """

    kind: str = "mock"  # "mock" | "http"
    seed: int = 0
    endpoint: str = ""
    model: str = ""
    timeout_ms: int = 30_000
    max_retries: int = 1


@dataclass(frozen=True)
class SessionConfig:
    mode: MapMode = MapMode.HUMAN_MAP
    checkpoint_words: int = DEFAULT_CHECKPOINT_WORDS
    summary_word_limit: int = DEFAULT_SUMMARY_WORD_LIMIT
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    max_participants: int = DEFAULT_MAX_PARTICIPANTS

    def validate(self) -> None:
        if self.checkpoint_words < 1:
            raise BadConfig("checkpoint_words must be >= 1")
        if self.summary_word_limit < 1:
            raise BadConfig("summary_word_limit must be >= 1")
        if self.max_participants < 1:
            raise BadConfig("max_participants must be >= 1")
        if self.provider.kind not in ("mock", "http"):
            raise BadConfig(f"unknown provider kind {self.provider.kind!r}")
        if self.provider.kind == "http" and not self.provider.endpoint:
            raise BadConfig("http provider requires an endpoint")
