"""Regenerate the frontend test fixtures from the bundled sample session.

Writes, under frontend/tests/fixtures/:
  stream.jsonl    - the recorded server->client message stream (canonical,
                    one message per line): initial snapshot, then every
                    broadcast of the AI-Map sample run (mock seed 1)
  expected.jsonl  - after each mutation message, the canonical state the
                    client mirror must hold: {"server_seq": n, "state": "..."}
  meta.json       - final nodes_for_topic sets, turn texts, speaker join
                    order (for color assignment checks)

Run from the repo root: python3 tools/make_frontend_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from dialogmap import protocol
from dialogmap.canonical import canonical_dumps
from dialogmap.mirror import ClientMirror
from dialogmap.providers import MockProvider
from dialogmap.segmenter import load_transcript
from dialogmap.session import SessionCore, run_transcript
from dialogmap.types import MapMode, ProviderConfig, SessionConfig

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "frontend" / "tests" / "fixtures"


def build_fixtures() -> dict[str, bytes]:
    """Compute fixture file contents; main() writes them to disk."""
    events = load_transcript(ROOT / "src" / "dialogmap" / "data" / "sample_transcript.jsonl")
    config = SessionConfig(mode=MapMode.AI_MAP, provider=ProviderConfig(kind="mock", seed=1))
    core = SessionCore(events[0].session_id, config)
    messages = [core.join("observer")[0].message]
    outs = run_transcript(core, events, MockProvider(1))
    messages.extend(o.message for o in outs if o.target == "all")

    mirror = ClientMirror()
    stream_lines = []
    expected_lines = []
    for msg in messages:
        stream_lines.append(canonical_dumps(msg))
        mirror.apply_message(msg)
        if msg["type"] == protocol.MSG_SNAPSHOT or msg["type"] in protocol.MUTATION_MESSAGES:
            expected_lines.append(
                canonical_dumps(
                    {
                        "server_seq": mirror.server_seq,
                        "state": mirror.snapshot_bytes().decode("utf-8"),
                    }
                )
            )

    engine = core.engine
    meta = {
        "session_id": core.session_id,
        "final_seq": core.mutation_seq,
        "topics": {
            t.topic_id: sorted(engine.nodes_for_topic(t.topic_id))
            for t in core.state.topics
        },
        "turns": {tid: turn.text for tid, turn in core.turns.items()},
        "speakers_in_order": list(
            dict.fromkeys(turn.speaker_id for _, turn in sorted(
                core.turns.items(), key=lambda kv: core.turn_ordinals[kv[0]]
            ))
        ),
    }
    return {
        "stream.jsonl": b"\n".join(stream_lines) + b"\n",
        "expected.jsonl": b"\n".join(expected_lines) + b"\n",
        "meta.json": json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"),
    }


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    files = build_fixtures()
    for name, data in files.items():
        (FIXTURES / name).write_bytes(data)
    print(f"wrote {', '.join(files)}")


if __name__ == "__main__":
    main()
