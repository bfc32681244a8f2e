"""Turn segmentation: split rules, flush, and stream-level properties."""

from __future__ import annotations

import random

import pytest

from dialogmap.errors import CorruptLog, OutOfOrderEvent, SessionMismatch
from dialogmap.segmenter import TurnSegmenter, load_transcript, segment_events
from dialogmap.types import SplitReason, TranscriptEvent


def ev(seq, speaker, text, final=True, ts=None, session="s1"):
    return TranscriptEvent(
        session_id=session,
        seq=seq,
        speaker_id=speaker,
        text=text,
        is_sentence_final=final,
        timestamp_ms=ts if ts is not None else seq * 100,
    )


def words(n, prefix="w"):
    return " ".join(f"{prefix}{i}" for i in range(n))


# --- independent oracle: simulate the stated rules event-by-event ---

def oracle_turns(events, checkpoint=50):
    """Accumulate per-speaker fragments; split on speaker change and on a
    sentence-final event once the running count reaches the checkpoint."""
    turns = []
    speaker, texts, count = None, [], 0

    def close(reason):
        nonlocal speaker, texts, count
        turns.append((speaker, " ".join(texts), count, reason))
        speaker, texts, count = None, [], 0

    for e in events:
        if speaker is not None and e.speaker_id != speaker:
            close("SpeakerChange")
        if speaker is None:
            speaker = e.speaker_id
        t = e.text.strip()
        if t:
            texts.append(t)
            count += len(t.split())
        if e.is_sentence_final and count >= checkpoint:
            close("LengthCheckpoint")
    if speaker is not None:
        close("StreamEnd")
    return turns


def engine_turns(events, checkpoint=50):
    return [
        (t.speaker_id, t.text, t.word_count, t.split_reason.value)
        for t in segment_events(events, "s1", checkpoint)
    ]


def test_short_response_finalized_by_speaker_change():
    seg = TurnSegmenter("s1")
    assert seg.ingest(ev(1, "a", "Agreed.")) == []
    out = seg.ingest(ev(2, "b", "Shall we start with budgets?"))
    assert len(out) == 1
    turn = out[0]
    assert turn.text == "Agreed."
    assert turn.word_count == 1
    assert turn.split_reason == SplitReason.SPEAKER_CHANGE
    assert turn.speaker_id == "a"


def test_sixty_word_monologue_single_checkpoint_turn():
    events = [
        ev(1, "a", words(30), final=False),
        ev(2, "a", words(30, "x"), final=True),
    ]
    turns = segment_events(events, "s1")
    assert len(turns) == 1
    assert turns[0].word_count == 60
    assert turns[0].split_reason == SplitReason.LENGTH_CHECKPOINT


def test_120_word_stream_matches_oracle():
    # sentence-final flags at cumulative words 30, 60, 95, 120
    events = [
        ev(1, "a", words(30, "a")),
        ev(2, "a", words(30, "b")),
        ev(3, "a", words(35, "c")),
        ev(4, "a", words(25, "d")),
    ]
    expected = oracle_turns(events)
    got = engine_turns(events)
    assert got == expected
    # the stated outcome: turns end at 60 and 120, both of size 60
    assert [t[2] for t in got] == [60, 60]
    assert [t[3] for t in got] == ["LengthCheckpoint", "LengthCheckpoint"]


def test_exactly_checkpoint_words_splits():
    turns = segment_events([ev(1, "a", words(50))], "s1")
    assert len(turns) == 1
    assert turns[0].word_count == 50
    assert turns[0].split_reason == SplitReason.LENGTH_CHECKPOINT


def test_speaker_change_plus_immediate_checkpoint_emits_two():
    seg = TurnSegmenter("s1")
    seg.ingest(ev(1, "a", "Short remark.", final=False))
    out = seg.ingest(ev(2, "b", words(55), final=True))
    assert [t.split_reason for t in out] == [
        SplitReason.SPEAKER_CHANGE,
        SplitReason.LENGTH_CHECKPOINT,
    ]
    assert out[0].speaker_id == "a"
    assert out[1].speaker_id == "b"
    assert out[1].word_count == 55


def test_non_final_events_never_split():
    events = [ev(i, "a", words(20, f"p{i}"), final=False) for i in range(1, 6)]
    assert segment_events(events, "s1", checkpoint_words=50) == segment_events(
        events, "s1", checkpoint_words=50
    )
    turns = segment_events(events, "s1")
    assert len(turns) == 1
    assert turns[0].split_reason == SplitReason.STREAM_END
    assert turns[0].word_count == 100


def test_flush_empty_returns_none_and_is_idempotent():
    seg = TurnSegmenter("s1")
    assert seg.flush() is None
    seg.ingest(ev(1, "a", words(12), final=False))
    turn = seg.flush()
    assert turn is not None
    assert turn.word_count == 12
    assert turn.split_reason == SplitReason.STREAM_END
    assert seg.flush() is None


def test_punctuation_only_final_event_contributes_no_words():
    seg = TurnSegmenter("s1")
    seg.ingest(ev(1, "a", words(49), final=False))
    out = seg.ingest(ev(2, "a", "", final=True))
    assert out == []  # 49 < 50, final alone does not split
    out = seg.ingest(ev(3, "a", "almost done now.", final=True))
    assert len(out) == 1
    assert out[0].word_count == 52


def test_out_of_order_and_session_mismatch():
    seg = TurnSegmenter("s1")
    seg.ingest(ev(5, "a", "hi."))
    with pytest.raises(OutOfOrderEvent):
        seg.ingest(ev(5, "a", "again."))
    with pytest.raises(OutOfOrderEvent):
        seg.ingest(ev(3, "a", "earlier."))
    with pytest.raises(SessionMismatch):
        seg.ingest(ev(9, "a", "other.", session="s2"))


def random_stream(rng, n_events):
    events = []
    for i in range(1, n_events + 1):
        n_words = rng.randint(1, 40)
        events.append(
            ev(
                i,
                rng.choice(["a", "b", "c"]),
                words(n_words, f"e{i}w"),
                final=rng.random() < 0.5,
                ts=i * 37,
            )
        )
    return events


def test_random_streams_match_oracle_and_preserve_text():
    rng = random.Random(1234)
    for _ in range(200):
        events = random_stream(rng, rng.randint(1, 30))
        turns = segment_events(events, "s1")
        assert engine_turns(events) == oracle_turns(events)
        # concatenation per speaker run reproduces the input text
        assert " ".join(t.text for t in turns if t.text).split() == [
            w for e in events for w in e.text.split()
        ]
        for t in turns:
            assert t.word_count == len(t.text.split())
            if t.split_reason == SplitReason.LENGTH_CHECKPOINT:
                assert t.word_count >= 50


def test_load_transcript_diagnostics(tmp_path):
    good = tmp_path / "ok.jsonl"
    good.write_text(
        '{"is_sentence_final":true,"seq":1,"session_id":"s1","speaker_id":"a","text":"Hi.","timestamp_ms":0}\n'
        '{"is_sentence_final":true,"seq":2,"session_id":"s1","speaker_id":"b","text":"Hello.","timestamp_ms":50}\n'
    )
    events = load_transcript(good)
    assert [e.seq for e in events] == [1, 2]

    bad = tmp_path / "bad.jsonl"
    bad.write_text(
        '{"is_sentence_final":true,"seq":2,"session_id":"s1","speaker_id":"a","text":"Hi.","timestamp_ms":0}\n'
        '{"is_sentence_final":true,"seq":1,"session_id":"s1","speaker_id":"b","text":"Oops.","timestamp_ms":50}\n'
    )
    with pytest.raises(CorruptLog) as exc:
        load_transcript(bad)
    assert ":2:" in str(exc.value)
