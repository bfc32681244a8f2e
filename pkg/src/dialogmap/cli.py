"""Command-line front door: serve, replay, export, validate.

Machine-readable results go to stdout (stable, line-oriented); diagnostics
and decoration go to stderr. Exit codes: 0 success, 2 bad input file or
config, 3 provider failure exhaustion (HTTP provider only), 4 validation
failure (first violated invariant named on stdout).
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Optional

from .config import load_server_config
from .engine import MapState
from .errors import BadConfig, CorruptLog
from .export import export_map_canonical, export_map_graph
from .providers import build_provider
from .segmenter import load_transcript
from .session import SessionCore, read_log, replay_records, run_transcript, validate_records
from .types import MapMode, ProviderConfig, SessionConfig

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_PROVIDER_EXHAUSTED = 3
EXIT_INVARIANT_VIOLATED = 4

_MODES = {"human": MapMode.HUMAN_MAP, "ai": MapMode.AI_MAP}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialogmap",
        description="Collaborative dialogue-mapping engine: serve sessions, "
        "replay transcripts, export and validate session logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the session server")
    serve.add_argument("--config", help="path to a JSON config file")

    replay = sub.add_parser("replay", help="run a transcript through the full pipeline")
    replay.add_argument("--transcript", required=True, help="transcript JSONL file")
    replay.add_argument("--mode", choices=sorted(_MODES), default="human")
    replay.add_argument("--provider", choices=["mock", "http"], default="mock")
    replay.add_argument("--seed", type=int, default=0, help="mock provider seed")
    replay.add_argument("--out", required=True, help="map export output path")
    replay.add_argument("--log-out", help="session log output path (default: <out>.log)")
    replay.add_argument("--endpoint", default="", help="http provider endpoint")
    replay.add_argument("--model", default="", help="http provider model name")
    replay.add_argument("--checkpoint-words", type=int, default=50)
    replay.add_argument("--summary-word-limit", type=int, default=6)

    export = sub.add_parser("export", help="export the final map from a session log")
    export.add_argument("--log", required=True, help="session log path")
    export.add_argument("--format", choices=["canonical", "graph"], default="canonical")
    export.add_argument("--out", help="output path (default: stdout)")

    validate = sub.add_parser("validate", help="replay a log and re-check every invariant")
    validate.add_argument("--log", required=True, help="session log path")
    return parser


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import DialogmapServer

    try:
        config = load_server_config(args.config)
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    server = DialogmapServer(config)

    async def run() -> None:
        await server.start()
        print(f"listening on {config.listen_host}:{server.port}", file=sys.stderr)
        await server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        print("shutting down", file=sys.stderr)
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        events = load_transcript(args.transcript)
    except OSError as exc:
        print(f"cannot read transcript: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CorruptLog as exc:
        print(f"bad transcript: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    if args.provider == "http":
        if not args.endpoint:
            print("--endpoint is required with --provider http", file=sys.stderr)
            return EXIT_BAD_INPUT
        provider_config = ProviderConfig(kind="http", endpoint=args.endpoint, model=args.model)
    else:
        provider_config = ProviderConfig(kind="mock", seed=args.seed)
    try:
        config = SessionConfig(
            mode=_MODES[args.mode],
            checkpoint_words=args.checkpoint_words,
            summary_word_limit=args.summary_word_limit,
            provider=provider_config,
        )
        config.validate()
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    session_id = events[0].session_id if events else "replay"
    log_out = Path(args.log_out) if args.log_out else Path(str(args.out) + ".log")
    core = SessionCore(session_id, config, log_path=log_out)
    provider = build_provider(config.provider)
    run_transcript(core, events, provider)
    core.log.close()

    if config.provider.kind == "http":
        faults = sum(1 for r in core.log.records if r.payload["kind"] == "provider_fault")
        successes = sum(1 for r in core.log.records if r.payload["kind"] == "provider_result")
        if faults and successes == 0:
            print("provider failed on every call", file=sys.stderr)
            return EXIT_PROVIDER_EXHAUSTED

    Path(args.out).write_bytes(export_map_canonical(core.state))
    _print_counts(core.state)
    print(f"export written to {args.out}; log written to {log_out}", file=sys.stderr)
    return EXIT_OK


def _print_counts(state: MapState) -> None:
    live_nodes = sum(1 for n in state.nodes.values() if n.location.kind != "deleted")
    print(f"nodes {live_nodes}")
    print(f"links {len(state.links)}")
    print(f"topics {len(state.topics)}")


def _load_and_replay(log_path: str):
    session_id, config, records = read_log(log_path)
    return session_id, config, records, replay_records(session_id, config, records)


def _cmd_export(args: argparse.Namespace) -> int:
    try:
        _sid, _config, _records, result = _load_and_replay(args.log)
    except OSError as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CorruptLog as exc:
        print(f"bad log: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if args.format == "graph":
        data = export_map_graph(result.state).encode("utf-8")
    else:
        data = export_map_canonical(result.state)
    if args.out:
        Path(args.out).write_bytes(data)
        print(f"export written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.write(b"\n")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        session_id, config, records = read_log(args.log)
    except OSError as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CorruptLog as exc:
        print("violated corrupt_log")
        print(str(exc), file=sys.stderr)
        return EXIT_INVARIANT_VIOLATED
    violations = validate_records(session_id, config, records)
    if violations:
        print(f"violated {violations[0].split(':')[0]}")
        for v in violations:
            print(v, file=sys.stderr)
        return EXIT_INVARIANT_VIOLATED
    print("ok")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "replay":
        return _cmd_replay(args)
    if args.command == "export":
        return _cmd_export(args)
    return _cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
