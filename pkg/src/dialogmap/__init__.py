"""Real-time collaborative dialogue-mapping engine.

Turns a streaming meeting transcript into tagged summary nodes and
incrementally generated dialogue maps that participants co-edit through a
shared, replayable session protocol. Two assistance modes exist: Human-Map
(AI produces only nodes) and AI-Map (AI also links each finished topic
into a small sub-map on the canvas).
"""

from .canonical import canonical_dumps, canonical_loads, canonical_serialize
from .engine import MapEngine, MapState, auto_layout, check_invariants, restore, snapshot
from .errors import DialogmapError
from .mirror import ClientMirror
from .pipeline import (
    LinkDraft,
    NodeDraft,
    Task,
    TopicDecision,
    annotate_turn,
    classify_topic,
    identify_links,
    parse_provider_output,
)
from .providers import HttpProvider, MockProvider, build_provider, mock_output
from .segmenter import TurnSegmenter, load_transcript, segment_events
from .session import (
    SessionCore,
    SessionLog,
    read_log,
    replay_records,
    run_transcript,
    validate_records,
)
from .types import (
    IbisTag,
    Link,
    MapMode,
    MapOp,
    Node,
    OpKind,
    ProviderConfig,
    SessionConfig,
    SplitReason,
    Topic,
    TranscriptEvent,
    Turn,
)

__version__ = "0.1.0"
