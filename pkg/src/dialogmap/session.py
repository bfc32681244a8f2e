"""Session orchestration: events in, ordered mutations and broadcasts out.

SessionCore is a sans-IO state machine. Drivers feed it client inputs and
provider-job completions; it returns outbound messages and new provider
jobs. Provider calls may complete out of order, but results are applied in
issue order (FIFO), which pins palette ordering and replay determinism.

Two sequence spaces exist on purpose:
  - log record seq: gap-free over every SessionLogRecord (events, provider
    results, faults, accepted ops);
  - map mutation seq: gap-free over state mutations, carried by mutation
    messages so client mirrors can detect missed updates.

Every state change is appended to the log before its broadcast message is
emitted. Replay consumes the log without any provider calls and reproduces
the live snapshot byte-exactly.
"""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from . import protocol
from .canonical import (
    canonical_dumps,
    canonical_loads,
    config_from_plain,
    config_to_plain,
    event_from_plain,
    event_to_plain,
    op_from_plain,
    op_to_plain,
)
from .engine import MapEngine, MapState, check_invariants
from .errors import (
    CorruptLog,
    DialogmapError,
    InvalidEvent,
    InvalidPayload,
    OutOfOrderEvent,
    SessionFull,
    SessionMismatch,
    UnknownEntity,
)
from .pipeline import (
    DecisionKind,
    LinkDraft,
    NodeDraft,
    Provider,
    Task,
    TopicDecision,
    annotate_turn,
    classify_topic,
    decision_from_plain,
    decision_to_plain,
    draft_from_plain,
    draft_to_plain,
    identify_links,
    link_draft_to_plain,
)
from .segmenter import TurnSegmenter
from .types import (
    Actor,
    MapMode,
    MapOp,
    Node,
    OpKind,
    SessionConfig,
    Topic,
    TranscriptEvent,
    Turn,
)

LOG_VERSION = 1


@dataclass(frozen=True)
class SessionLogRecord:
    server_seq: int
    wall_ms: int
    payload: dict[str, Any]

    def to_plain(self) -> dict[str, Any]:
        return {
            "server_seq": self.server_seq,
            "wall_ms": self.wall_ms,
            "payload": self.payload,
        }


class SessionLog:
    """Append-only session log, optionally persisted one record per line.

    The first line of a persisted log is a header carrying the session id
    and config; every following line is one canonical SessionLogRecord.
    """

    def __init__(
        self,
        session_id: str,
        config: SessionConfig,
        path: Optional[str | Path] = None,
    ):
        self.session_id = session_id
        self.config = config
        self.records: list[SessionLogRecord] = []
        self._fh = None
        if path is not None:
            self._fh = open(path, "w+b")
            header = {
                "log_version": LOG_VERSION,
                "session_id": session_id,
                "config": config_to_plain(config),
            }
            self._fh.write(canonical_dumps(header) + b"\n")

    def append(self, payload: dict[str, Any], wall_ms: int) -> SessionLogRecord:
        record = SessionLogRecord(len(self.records) + 1, wall_ms, payload)
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(canonical_dumps(record.to_plain()) + b"\n")
        return record

    def sync(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self.sync()
            self._fh.close()
            self._fh = None


def read_log(path: str | Path) -> tuple[str, SessionConfig, list[SessionLogRecord]]:
    """Load a persisted session log; CorruptLog names the offending line."""
    with open(path, "rb") as fh:
        lines = [ln for ln in fh.read().split(b"\n") if ln.strip()]
    if not lines:
        raise CorruptLog(f"{path}: empty log")
    try:
        header = canonical_loads(lines[0])
        if header.get("log_version") != LOG_VERSION:
            raise ValueError(f"unsupported log_version {header.get('log_version')!r}")
        session_id = header["session_id"]
        config = config_from_plain(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptLog(f"{path}:1: bad header: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            plain = canonical_loads(line)
            record = SessionLogRecord(
                server_seq=plain["server_seq"],
                wall_ms=plain["wall_ms"],
                payload=plain["payload"],
            )
            if not isinstance(record.server_seq, int) or not isinstance(
                record.payload, dict
            ):
                raise ValueError("bad record shape")
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptLog(f"{path}:{lineno}: {exc}") from exc
        records.append(record)
    return session_id, config, records


@dataclass(frozen=True)
class Outbound:
    """A message the driver must deliver: to everyone or just the issuer."""

    target: str  # "all" | "issuer"
    message: dict[str, Any]


@dataclass
class ProviderJob:
    """One provider call the driver must execute and feed back.

    Results apply strictly in job_id order regardless of completion order.
    """

    job_id: int
    task: Task
    turn_id: str = ""
    topic_id: str = ""
    prev_turn: Optional[Turn] = None
    turn: Optional[Turn] = None
    topics: list[Topic] = field(default_factory=list)
    link_nodes: list[tuple[str, Node]] = field(default_factory=list)
    done: bool = False
    result: Any = None
    error: Optional[DialogmapError] = None


def execute_job(job: ProviderJob, provider: Provider, config: SessionConfig):
    """Run the pipeline call for a job. Returns the result or raises."""
    timeout_ms = config.provider.timeout_ms
    if job.task == Task.TOPIC_SEGMENT:
        return classify_topic(
            job.prev_turn, job.turn, job.topics, provider, timeout_ms=timeout_ms
        )
    if job.task == Task.ANNOTATE_TURN:
        return annotate_turn(
            job.turn, provider, config.summary_word_limit, timeout_ms=timeout_ms
        )
    return identify_links(job.link_nodes, provider, timeout_ms=timeout_ms)


class SessionCore:
    """Authoritative per-session orchestrator (single logical executor)."""

    def __init__(
        self,
        session_id: str,
        config: SessionConfig,
        log_path: Optional[str | Path] = None,
        clock: Optional[Callable[[], int]] = None,
    ):
        config.validate()
        self.session_id = session_id
        self.config = config
        self.engine = MapEngine(config.mode, config.summary_word_limit)
        self.segmenter = TurnSegmenter(session_id, config.checkpoint_words)
        self.log = SessionLog(session_id, config, log_path)
        self.turns: dict[str, Turn] = {}
        self.turn_ordinals: dict[str, int] = {}
        self.unannotated_turns: set[str] = set()
        self.participants: list[dict[str, str]] = []
        self.agenda = ""
        self._jobs: deque[ProviderJob] = deque()
        self._by_id: dict[int, ProviderJob] = {}
        self._next_job_id = 1
        self._next_ordinal = 1
        self._prev_turn: Optional[Turn] = None
        self._clock = clock
        self._virtual_ms = 0
        self._stream_ended = False
        self._finalized = False

    # -- helpers --

    @property
    def state(self) -> MapState:
        return self.engine.state

    @property
    def mutation_seq(self) -> int:
        return self.state.next_server_seq - 1

    def _now(self) -> int:
        return self._clock() if self._clock is not None else self._virtual_ms

    def _snapshot_out(self) -> Outbound:
        return Outbound(
            "all", protocol.snapshot_msg(self.state, self.agenda, self.participants)
        )

    # -- client inputs --

    def join(self, user_id: str, display_name: str = "") -> list[Outbound]:
        existing = next((p for p in self.participants if p["user_id"] == user_id), None)
        if existing is None:
            if len(self.participants) >= self.config.max_participants:
                return [
                    Outbound("issuer", protocol.error_msg(SessionFull("session is full")))
                ]
            self.participants.append(
                {"user_id": user_id, "display_name": display_name or user_id}
            )
        elif display_name:
            existing["display_name"] = display_name
        return [self._snapshot_out()]

    def submit_op(
        self, user_id: str, op_id: str, kind: OpKind, payload: dict[str, Any]
    ) -> list[Outbound]:
        op = MapOp(op_id=op_id, actor=Actor.user(user_id), kind=kind, payload=payload)
        try:
            applied = self.engine.apply_user_op(op)
        except DialogmapError as exc:
            return [Outbound("issuer", protocol.error_msg(exc))]
        self.log.append({"kind": "accepted_op", "op": op_to_plain(applied)}, self._now())
        return [Outbound("all", protocol.op_applied_msg(applied))]

    def set_agenda(self, text: str) -> list[Outbound]:
        self.agenda = text
        return [self._snapshot_out()]

    def get_turn_transcript(self, turn_id: str) -> list[Outbound]:
        turn = self.turns.get(turn_id)
        if turn is None:
            return [
                Outbound(
                    "issuer", protocol.error_msg(UnknownEntity(f"unknown turn {turn_id!r}"))
                )
            ]
        return [Outbound("issuer", protocol.turn_transcript_msg(turn_id, turn.text))]

    def ingest_event(
        self, ev: TranscriptEvent
    ) -> tuple[list[Outbound], list[ProviderJob]]:
        if self._stream_ended:
            # events after a stream flush would make the log unreplayable
            exc = InvalidEvent("transcript stream already ended for this session")
            return [Outbound("issuer", protocol.error_msg(exc))], []
        try:
            turns = self.segmenter.ingest(ev)
        except (OutOfOrderEvent, SessionMismatch, InvalidEvent) as exc:
            return [Outbound("issuer", protocol.error_msg(exc))], []
        self._virtual_ms = max(self._virtual_ms, ev.timestamp_ms)
        self.log.append(
            {"kind": "transcript_event", "event": event_to_plain(ev)}, self._now()
        )
        jobs: list[ProviderJob] = []
        for turn in turns:
            jobs.extend(self._register_turn(turn))
        return [], jobs

    def end_stream(self) -> tuple[list[Outbound], list[ProviderJob]]:
        """Flush the segmenter at transcript end. Idempotent."""
        self._stream_ended = True
        turn = self.segmenter.flush()
        if turn is None:
            return [], []
        return [], self._register_turn(turn)

    def finalize(self) -> tuple[list[Outbound], list[ProviderJob]]:
        """After quiescence in AI-Map mode, merge the still-open final topic.

        The topic stays Open (the meeting simply ended); only the merge op
        is produced, so replay needs no extra record kinds. Runs once.
        """
        if self._finalized or self.config.mode != MapMode.AI_MAP:
            return [], []
        self._finalized = True
        open_topic = self.state.open_topic()
        if open_topic is None:
            return [], []
        nodes = self._topic_nodes(open_topic.topic_id)
        if not nodes:
            return [], []
        return [], [self._enqueue_links(open_topic.topic_id, nodes)]

    # -- turn pipeline --

    def _register_turn(self, turn: Turn) -> list[ProviderJob]:
        self.turns[turn.turn_id] = turn
        self.turn_ordinals[turn.turn_id] = self._next_ordinal
        self._next_ordinal += 1
        topics_snapshot = [
            Topic(t.topic_id, t.label, t.first_turn_seq, t.last_turn_seq, t.status)
            for t in self.state.topics
        ]
        classify = ProviderJob(
            job_id=self._next_job_id,
            task=Task.TOPIC_SEGMENT,
            turn_id=turn.turn_id,
            prev_turn=self._prev_turn,
            turn=turn,
            topics=topics_snapshot,
        )
        annotate = ProviderJob(
            job_id=self._next_job_id + 1,
            task=Task.ANNOTATE_TURN,
            turn_id=turn.turn_id,
            turn=turn,
        )
        self._next_job_id += 2
        self._prev_turn = turn
        for job in (classify, annotate):
            self._jobs.append(job)
            self._by_id[job.job_id] = job
        return [classify, annotate]

    def _enqueue_links(self, topic_id: str, nodes: list[tuple[str, Node]]) -> ProviderJob:
        job = ProviderJob(
            job_id=self._next_job_id,
            task=Task.IDENTIFY_LINKS,
            topic_id=topic_id,
            link_nodes=nodes,
        )
        self._next_job_id += 1
        self._jobs.append(job)
        self._by_id[job.job_id] = job
        return job

    def _topic_nodes(self, topic_id: str) -> list[tuple[str, Node]]:
        # nodes dict preserves creation order
        return [
            (nid, n)
            for nid, n in self.state.nodes.items()
            if n.topic_id == topic_id and n.location.kind != "deleted"
        ]

    def complete_job(
        self,
        job_id: int,
        result: Any = None,
        error: Optional[DialogmapError] = None,
    ) -> tuple[list[Outbound], list[ProviderJob]]:
        """Record a job outcome, then apply every contiguously-done job."""
        job = self._by_id[job_id]
        job.done = True
        job.result = result
        job.error = error
        outs: list[Outbound] = []
        new_jobs: list[ProviderJob] = []
        while self._jobs and self._jobs[0].done:
            head = self._jobs.popleft()
            del self._by_id[head.job_id]
            o, nj = self._apply_job(head)
            outs.extend(o)
            new_jobs.extend(nj)
        return outs, new_jobs

    @property
    def pending_jobs(self) -> int:
        return len(self._jobs)

    def _apply_job(self, job: ProviderJob) -> tuple[list[Outbound], list[ProviderJob]]:
        if job.task == Task.TOPIC_SEGMENT:
            return self._apply_classify(job)
        if job.task == Task.ANNOTATE_TURN:
            return self._apply_annotate(job)
        return self._apply_links(job)

    def _fault(self, job: ProviderJob) -> list[Outbound]:
        ref = {"turn_id": job.turn_id} if job.turn_id else {"topic_id": job.topic_id}
        self.log.append(
            {
                "kind": "provider_fault",
                "task": job.task.value,
                **ref,
                "error": {"code": job.error.code, "detail": str(job.error)},
            },
            self._now(),
        )
        return [Outbound("all", protocol.error_msg(job.error))]

    def _apply_classify(self, job: ProviderJob) -> tuple[list[Outbound], list[ProviderJob]]:
        if job.error is not None:
            return self._fault(job), []
        decision: TopicDecision = job.result
        prev_open = self.state.open_topic()
        ordinal = self.turn_ordinals[job.turn_id]
        self.log.append(
            {
                "kind": "provider_result",
                "task": Task.TOPIC_SEGMENT.value,
                "turn_id": job.turn_id,
                "result": decision_to_plain(decision),
            },
            self._now(),
        )
        seq, topic = self.engine.apply_topic_decision(decision, ordinal)
        outs = [Outbound("all", protocol.topic_updated_msg(seq, topic))]
        new_jobs: list[ProviderJob] = []
        if (
            decision.kind == DecisionKind.NEW_TOPIC
            and self.config.mode == MapMode.AI_MAP
            and prev_open is not None
            and prev_open.topic_id != topic.topic_id
        ):
            nodes = self._topic_nodes(prev_open.topic_id)
            if nodes:
                new_jobs.append(self._enqueue_links(prev_open.topic_id, nodes))
        return outs, new_jobs

    def _apply_annotate(self, job: ProviderJob) -> tuple[list[Outbound], list[ProviderJob]]:
        if job.error is not None:
            self.unannotated_turns.add(job.turn_id)
            return self._fault(job), []
        drafts: list[NodeDraft] = job.result
        self.log.append(
            {
                "kind": "provider_result",
                "task": Task.ANNOTATE_TURN.value,
                "turn_id": job.turn_id,
                "result": {"drafts": [draft_to_plain(d) for d in drafts]},
            },
            self._now(),
        )
        seq, nodes = self.engine.add_ai_nodes(self.turns[job.turn_id], drafts)
        return [
            Outbound(
                "all", protocol.nodes_generated_msg(seq, self.turns[job.turn_id], nodes)
            )
        ], []

    def _apply_links(self, job: ProviderJob) -> tuple[list[Outbound], list[ProviderJob]]:
        outs: list[Outbound] = []
        if job.error is not None:
            outs.extend(self._fault(job))
            op, rejection = self.engine.close_topic_and_merge(
                job.topic_id, [], rejected_reason=str(job.error)
            )
        else:
            drafts: list[LinkDraft] = job.result
            self.log.append(
                {
                    "kind": "provider_result",
                    "task": Task.IDENTIFY_LINKS.value,
                    "topic_id": job.topic_id,
                    "result": {"links": [link_draft_to_plain(d) for d in drafts]},
                },
                self._now(),
            )
            op, rejection = self.engine.close_topic_and_merge(job.topic_id, drafts)
        self.log.append({"kind": "accepted_op", "op": op_to_plain(op)}, self._now())
        if rejection is not None and job.error is None:
            outs.append(Outbound("all", protocol.error_msg(rejection)))
        outs.append(Outbound("all", protocol.map_generated_msg(op)))
        return outs, []


def run_transcript(
    core: SessionCore,
    events: list[TranscriptEvent],
    provider: Provider,
    end: bool = True,
) -> list[Outbound]:
    """Synchronous driver: jobs complete immediately, in issue order."""
    outs: list[Outbound] = []

    def drain(jobs: list[ProviderJob]) -> None:
        queue = deque(jobs)
        while queue:
            job = queue.popleft()
            try:
                result = execute_job(job, provider, core.config)
                o, nj = core.complete_job(job.job_id, result=result)
            except DialogmapError as exc:
                o, nj = core.complete_job(job.job_id, error=exc)
            outs.extend(o)
            queue.extend(nj)

    for ev in events:
        o, jobs = core.ingest_event(ev)
        outs.extend(o)
        drain(jobs)
    if end:
        o, jobs = core.end_stream()
        outs.extend(o)
        drain(jobs)
        o, jobs = core.finalize()
        outs.extend(o)
        drain(jobs)
    core.log.sync()
    return outs


# --- replay and validation ---

@dataclass
class ReplayResult:
    session_id: str
    config: SessionConfig
    state: MapState
    turns: dict[str, Turn]


def replay_records(
    session_id: str, config: SessionConfig, records: list[SessionLogRecord]
) -> ReplayResult:
    """Rebuild the final state from the log. Never calls a provider."""
    segmenter = TurnSegmenter(session_id, config.checkpoint_words)
    engine = MapEngine(config.mode, config.summary_word_limit)
    turns: dict[str, Turn] = {}
    ordinals: dict[str, int] = {}
    next_ordinal = 1
    flushed = False

    def register(turn: Turn) -> None:
        nonlocal next_ordinal
        turns[turn.turn_id] = turn
        ordinals[turn.turn_id] = next_ordinal
        next_ordinal += 1

    def ensure_turn(turn_id: str, where: str) -> Turn:
        nonlocal flushed
        if turn_id not in turns and not flushed:
            flushed = True
            tail = segmenter.flush()
            if tail is not None:
                register(tail)
        if turn_id not in turns:
            raise CorruptLog(f"{where}: unknown turn {turn_id!r}")
        return turns[turn_id]

    expected_seq = 1
    for record in records:
        where = f"record {record.server_seq}"
        if record.server_seq != expected_seq:
            raise CorruptLog(
                f"log record seq gap: expected {expected_seq}, found {record.server_seq}"
            )
        expected_seq += 1
        payload = record.payload
        kind = payload.get("kind")
        try:
            if kind == "transcript_event":
                if flushed:
                    raise CorruptLog(f"{where}: transcript event after stream flush")
                for turn in segmenter.ingest(event_from_plain(payload["event"])):
                    register(turn)
            elif kind == "accepted_op":
                engine.apply_replicated_op(op_from_plain(payload["op"]))
            elif kind == "provider_result":
                task = payload.get("task")
                if task == Task.TOPIC_SEGMENT.value:
                    turn = ensure_turn(payload["turn_id"], where)
                    decision = decision_from_plain(payload["result"])
                    engine.apply_topic_decision(decision, ordinals[turn.turn_id])
                elif task == Task.ANNOTATE_TURN.value:
                    turn = ensure_turn(payload["turn_id"], where)
                    drafts = [draft_from_plain(d) for d in payload["result"]["drafts"]]
                    engine.add_ai_nodes(turn, drafts)
                elif task == Task.IDENTIFY_LINKS.value:
                    pass  # the MergeGeneratedMap op that follows carries the effect
                else:
                    raise CorruptLog(f"{where}: unknown provider task {task!r}")
            elif kind == "provider_fault":
                pass
            else:
                raise CorruptLog(f"{where}: unknown record kind {kind!r}")
        except CorruptLog:
            raise
        except (DialogmapError, ValueError, KeyError, TypeError) as exc:
            raise CorruptLog(f"{where}: {exc}") from exc
    return ReplayResult(session_id=session_id, config=config, state=engine.state, turns=turns)


MODE_INVARIANT = "human_map_has_no_ai_link_records"
AI_FOREST_INVARIANT = "ai_link_batches_form_a_forest"


def validate_records(
    session_id: str, config: SessionConfig, records: list[SessionLogRecord]
) -> list[str]:
    """Replay the log and re-check every invariant; returns violation names."""
    from .pipeline import validate_link_batch
    from .errors import LinkBatchError

    violations: list[str] = []
    try:
        result = replay_records(session_id, config, records)
    except CorruptLog as exc:
        return [f"corrupt_log: {exc}"]

    for record in records:
        payload = record.payload
        kind = payload.get("kind")
        if config.mode == MapMode.HUMAN_MAP:
            if kind == "accepted_op":
                op = payload["op"]
                if op["kind"] == OpKind.MERGE_GENERATED_MAP.value or (
                    op["kind"] == OpKind.CREATE_LINK.value
                    and op["actor"]["kind"] == "ai"
                ):
                    violations.append(MODE_INVARIANT)
                    break
            if kind == "provider_result" and payload.get("task") == Task.IDENTIFY_LINKS.value:
                violations.append(MODE_INVARIANT)
                break
    for record in records:
        payload = record.payload
        if (
            payload.get("kind") == "accepted_op"
            and payload["op"]["kind"] == OpKind.MERGE_GENERATED_MAP.value
        ):
            links = [
                LinkDraft(l["from"], l["to"], l["label"])
                for l in payload["op"]["payload"]["links"]
            ]
            keys = {l.from_key for l in links} | {l.to_key for l in links}
            try:
                validate_link_batch(links, sorted(keys))
            except LinkBatchError:
                violations.append(AI_FOREST_INVARIANT)
                break

    violations.extend(
        check_invariants(result.state, config.summary_word_limit)
    )
    return violations
