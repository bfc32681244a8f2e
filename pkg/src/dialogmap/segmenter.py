"""Streaming turn segmentation.

Folds the ordered transcript-event stream into finalized turns using two
rules: split when the speaker changes, and split at the first natural
sentence end once the accumulated word count reaches the checkpoint
(default 50). There is no minimum turn length; one-word responses become
one-word turns. Splitting never uses wall-clock time, so segmentation is a
pure function of the event sequence.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional

from .canonical import canonical_loads, event_from_plain
from .errors import CorruptLog, OutOfOrderEvent, SessionMismatch
from .types import (
    DEFAULT_CHECKPOINT_WORDS,
    SplitReason,
    TranscriptEvent,
    Turn,
    count_words,
)


class TurnSegmenter:
    """Per-session state machine. Callers must serialize ingest calls."""

    def __init__(
        self,
        session_id: str,
        checkpoint_words: int = DEFAULT_CHECKPOINT_WORDS,
        turn_id_prefix: str = "u",
    ):
        self.session_id = session_id
        self.checkpoint_words = checkpoint_words
        self.turn_id_prefix = turn_id_prefix
        self._last_seq = -1
        self._turn_count = 0
        self._reset_pending()

    def _reset_pending(self) -> None:
        self._has_pending = False
        self._speaker = ""
        self._texts: list[str] = []
        self._word_count = 0
        self._start_ms = 0
        self._end_ms = 0

    @property
    def pending_word_count(self) -> int:
        return self._word_count

    @property
    def pending_speaker(self) -> Optional[str]:
        return self._speaker if self._has_pending else None

    def ingest(self, ev: TranscriptEvent) -> list[Turn]:
        """Process one event; returns 0, 1, or 2 finalized turns.

        Two turns only happen when a speaker change flushes the pending turn
        and the new event alone already satisfies the checkpoint rule.
        """
        if ev.session_id != self.session_id:
            raise SessionMismatch(
                f"event for session {ev.session_id!r}, segmenter bound to {self.session_id!r}"
            )
        if ev.seq <= self._last_seq:
            raise OutOfOrderEvent(f"seq {ev.seq} after {self._last_seq}")
        ev.validate()
        self._last_seq = ev.seq

        emitted: list[Turn] = []
        if self._has_pending and ev.speaker_id != self._speaker:
            emitted.append(self._emit(SplitReason.SPEAKER_CHANGE))

        self._append(ev)
        if ev.is_sentence_final and self._word_count >= self.checkpoint_words:
            emitted.append(self._emit(SplitReason.LENGTH_CHECKPOINT))
        return emitted

    def flush(self) -> Optional[Turn]:
        """Finalize whatever is pending at stream end. Idempotent on empty."""
        if not self._has_pending:
            return None
        return self._emit(SplitReason.STREAM_END)

    def _append(self, ev: TranscriptEvent) -> None:
        if not self._has_pending:
            self._has_pending = True
            self._speaker = ev.speaker_id
            self._start_ms = ev.timestamp_ms
        trimmed = ev.text.strip()
        if trimmed:
            self._texts.append(trimmed)
            self._word_count += count_words(trimmed)
        self._end_ms = ev.timestamp_ms

    def _emit(self, reason: SplitReason) -> Turn:
        self._turn_count += 1
        turn = Turn(
            turn_id=f"{self.turn_id_prefix}{self._turn_count}",
            speaker_id=self._speaker,
            text=" ".join(self._texts),
            word_count=self._word_count,
            start_ms=self._start_ms,
            end_ms=self._end_ms,
            split_reason=reason,
        )
        self._reset_pending()
        return turn


def segment_events(
    events: Iterable[TranscriptEvent],
    session_id: str,
    checkpoint_words: int = DEFAULT_CHECKPOINT_WORDS,
) -> list[Turn]:
    """Run a whole event sequence through a fresh segmenter, flushing at the end."""
    seg = TurnSegmenter(session_id, checkpoint_words)
    turns: list[Turn] = []
    for ev in events:
        turns.extend(seg.ingest(ev))
    tail = seg.flush()
    if tail is not None:
        turns.append(tail)
    return turns


def load_transcript(path: str | Path) -> list[TranscriptEvent]:
    """Read a transcript file: one canonical TranscriptEvent per line.

    Raises CorruptLog with a line-numbered diagnostic on any bad line or
    seq regression, so CLI callers can surface the exact failure point.
    """
    events: list[TranscriptEvent] = []
    last_seq = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ev = event_from_plain(canonical_loads(line))
            except (ValueError, KeyError) as exc:
                raise CorruptLog(f"{path}:{lineno}: {exc}") from exc
            if ev.seq <= last_seq:
                raise CorruptLog(
                    f"{path}:{lineno}: seq {ev.seq} does not increase (previous {last_seq})"
                )
            last_seq = ev.seq
            events.append(ev)
    return events
