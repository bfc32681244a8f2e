"""Typed errors shared across the engine.

Every failure mode callers are expected to handle has its own class so
tests and protocol error codes can match on type rather than message text.
"""

from __future__ import annotations


class DialogmapError(Exception):
    """Base class for all engine errors."""

    code = "internal"


# --- transcript / segmentation ---

class InvalidEvent(DialogmapError):
    """Transcript event violates its shape invariants."""

    code = "invalid_event"


class OutOfOrderEvent(DialogmapError):
    """Event seq did not strictly increase within the session."""

    code = "out_of_order_event"


class SessionMismatch(DialogmapError):
    """Event belongs to a different session than the segmenter."""

    code = "session_mismatch"


# --- provider pipeline ---

class ProviderError(DialogmapError):
    code = "provider"


class ProviderTimeout(ProviderError):
    code = "provider_timeout"


class MalformedProviderOutput(ProviderError):
    """Provider output could not be parsed into the expected structure.

    Carries a diagnostic naming what was missing or malformed.
    """

    code = "malformed_provider_output"


class UnknownTag(ProviderError):
    """Tag outside the alias table (Question/Position/Pro/Con)."""

    code = "unknown_tag"


class LabelTooLong(ProviderError):
    """Topic label exceeded the word limit."""

    code = "label_too_long"


class LinkBatchError(ProviderError):
    """Base for link-batch validation failures; rejects the whole batch."""

    code = "link_batch"


class DanglingKey(LinkBatchError):
    code = "dangling_key"


class DuplicateFromKey(LinkBatchError):
    code = "duplicate_from_key"


class CycleDetected(LinkBatchError):
    code = "cycle_detected"


# --- map engine ---

class UnknownEntity(DialogmapError):
    """Referenced node/link/topic/turn does not exist."""

    code = "unknown_entity"


class StaleTarget(DialogmapError):
    """Op references an entity deleted at a lower server_seq."""

    code = "stale_target"


class InvalidPayload(DialogmapError):
    """Op payload is structurally or semantically invalid."""

    code = "invalid_payload"


class WrongMode(DialogmapError):
    """Operation not permitted under the session's assistance mode."""

    code = "wrong_mode"


class BatchRejected(DialogmapError):
    """AI link batch failed validation against live state."""

    code = "batch_rejected"


class CorruptSnapshot(DialogmapError):
    code = "corrupt_snapshot"


# --- session / server ---

class CorruptLog(DialogmapError):
    code = "corrupt_log"


class SessionFull(DialogmapError):
    code = "session_full"


class BadConfig(DialogmapError):
    code = "bad_config"
