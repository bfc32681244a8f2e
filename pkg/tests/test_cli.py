"""CLI: replay/export/validate flows, exit codes, output stability."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from dialogmap.canonical import canonical_loads
from dialogmap.cli import main
from dialogmap.session import read_log

SAMPLE = resources.files("dialogmap.data").joinpath("sample_transcript.jsonl")


@pytest.fixture
def sample_path(tmp_path):
    p = tmp_path / "sample_transcript.jsonl"
    p.write_bytes(SAMPLE.read_bytes())
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_replay_ai_map_deterministic(tmp_path, sample_path, capsys):
    outputs = []
    for i in range(2):
        out = tmp_path / f"map{i}.json"
        log = tmp_path / f"map{i}.log"
        code, stdout, _ = run(
            capsys, "replay", "--transcript", sample_path, "--mode", "ai",
            "--provider", "mock", "--seed", 1, "--out", out, "--log-out", log,
        )
        assert code == 0
        outputs.append((out.read_bytes(), log.read_bytes(), stdout))
    assert outputs[0] == outputs[1]
    code, stdout, _ = run(
        capsys, "replay", "--transcript", sample_path, "--mode", "ai",
        "--provider", "mock", "--seed", 1, "--out", tmp_path / "map3.json",
    )
    assert stdout == outputs[0][2]
    assert stdout == "nodes 13\nlinks 10\ntopics 3\n"


def test_replay_human_map_has_zero_links(tmp_path, sample_path, capsys):
    out = tmp_path / "human.json"
    code, stdout, _ = run(
        capsys, "replay", "--transcript", sample_path, "--mode", "human",
        "--provider", "mock", "--seed", 1, "--out", out,
    )
    assert code == 0
    lines = dict(l.split() for l in stdout.strip().splitlines())
    assert lines["links"] == "0"
    export = canonical_loads(out.read_bytes())
    assert export["links"] == {}
    assert len(export["nodes"]) == 13
    # same node multiset as AI-Map mode
    ai_out = tmp_path / "ai.json"
    run(capsys, "replay", "--transcript", sample_path, "--mode", "ai",
        "--provider", "mock", "--seed", 1, "--out", ai_out)
    ai_export = canonical_loads(ai_out.read_bytes())
    def multiset(exp):
        return sorted((n["tag"], n["summary"], n["origin"].get("quote", ""))
                      for n in exp["nodes"].values())
    assert multiset(export) == multiset(ai_export)


def test_replay_rejects_out_of_order_transcript(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    lines = SAMPLE.read_bytes().splitlines()
    bad.write_bytes(b"\n".join([lines[1], lines[0]] + list(lines[2:])) + b"\n")
    code, stdout, stderr = run(
        capsys, "replay", "--transcript", bad, "--out", tmp_path / "x.json"
    )
    assert code == 2
    assert ":2:" in stderr  # line-numbered diagnostic
    assert stdout == ""


def test_replay_missing_transcript(tmp_path, capsys):
    code, _, stderr = run(
        capsys, "replay", "--transcript", tmp_path / "nope.jsonl", "--out", tmp_path / "x"
    )
    assert code == 2
    assert "cannot read transcript" in stderr


def test_validate_ok_and_corrupted(tmp_path, sample_path, capsys):
    out = tmp_path / "map.json"
    log = tmp_path / "map.log"
    run(capsys, "replay", "--transcript", sample_path, "--mode", "ai",
        "--provider", "mock", "--seed", 1, "--out", out, "--log-out", log)

    code, stdout, _ = run(capsys, "validate", "--log", log)
    assert code == 0
    assert stdout == "ok\n"

    # duplicate a record seq
    lines = log.read_bytes().splitlines()
    corrupted = tmp_path / "dup.log"
    corrupted.write_bytes(b"\n".join(lines + [lines[-1]]) + b"\n")
    code, stdout, _ = run(capsys, "validate", "--log", corrupted)
    assert code == 4
    assert stdout.startswith("violated corrupt_log")


def test_validate_flags_merge_in_human_map_log(tmp_path, sample_path, capsys):
    human_log = tmp_path / "human.log"
    ai_log = tmp_path / "ai.log"
    run(capsys, "replay", "--transcript", sample_path, "--mode", "human",
        "--provider", "mock", "--seed", 1, "--out", tmp_path / "h.json", "--log-out", human_log)
    run(capsys, "replay", "--transcript", sample_path, "--mode", "ai",
        "--provider", "mock", "--seed", 1, "--out", tmp_path / "a.json", "--log-out", ai_log)

    _, _, ai_records = read_log(ai_log)
    merge = next(
        r for r in ai_records
        if r.payload["kind"] == "accepted_op"
        and r.payload["op"]["kind"] == "MergeGeneratedMap"
    )
    # splice the merge record into the human log with a valid next seq
    from dialogmap.canonical import canonical_dumps
    lines = human_log.read_bytes().splitlines()
    n_records = len(lines) - 1  # header line
    injected = dict(merge.to_plain())
    injected["server_seq"] = n_records + 1
    tampered = tmp_path / "tampered.log"
    tampered.write_bytes(b"\n".join(lines + [canonical_dumps(injected)]) + b"\n")

    code, stdout, stderr = run(capsys, "validate", "--log", tampered)
    assert code == 4
    assert "human_map" in stdout or "corrupt_log" in stdout


def test_export_canonical_and_graph(tmp_path, sample_path, capsys):
    log = tmp_path / "s.log"
    run(capsys, "replay", "--transcript", sample_path, "--mode", "ai",
        "--provider", "mock", "--seed", 1, "--out", tmp_path / "m.json", "--log-out", log)

    code, stdout, _ = run(capsys, "export", "--log", log, "--format", "canonical")
    assert code == 0
    parsed = canonical_loads(stdout.strip())
    assert set(parsed) == {"nodes", "links", "topics"}
    assert parsed["topics"][0]["label"]

    code, stdout, _ = run(capsys, "export", "--log", log, "--format", "graph")
    assert code == 0
    assert stdout.startswith("digraph dialogue_map {")
    assert '"n2" -> "n1" [label="Answers"];' in stdout
    assert '"n1" [label="Question: Should every first year student visit"];' in stdout
    # node statements for all 13 live nodes, edges for all 10 links
    assert stdout.count("->") == 10


def test_export_bad_log(tmp_path, capsys):
    code, _, stderr = run(capsys, "export", "--log", tmp_path / "missing.log")
    assert code == 2
    garbled = tmp_path / "garbled.log"
    garbled.write_text("not a log\n")
    code, _, _ = run(capsys, "export", "--log", garbled)
    assert code == 2


def test_unknown_flag_is_an_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["replay", "--transcript", "x", "--out", "y", "--frobnicate"])
    assert exc.value.code == 2
