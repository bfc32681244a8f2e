"""TCP session server: length-delimited canonical messages over asyncio.

Each session runs as one ordered processing loop (single logical executor):
client messages and provider-job completions enter a per-session inbox and
are applied one at a time. Provider calls run in worker threads and re-enter
the inbox, so a slow provider never blocks user ops. Broadcasts fan out
through per-connection queues.

A session's log file lives at {log_dir}/{session_id}.log and is synced after
every processed inbox item. When the last connection leaves, the session is
flushed (stream end + final merge in AI-Map), drained, and closed.
"""

from __future__ import annotations

import asyncio
import re
import time
from pathlib import Path
from typing import Any, Optional

from . import protocol
from .canonical import canonical_dumps, canonical_loads, event_from_plain, op_from_plain
from .config import ServerConfig
from .errors import DialogmapError, InvalidPayload
from .pipeline import Provider
from .providers import build_provider
from .session import Outbound, ProviderJob, SessionCore, execute_job

_MAX_FRAME = 16 * 1024 * 1024
_SESSION_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,128}$")
MAX_INFLIGHT_PROVIDER_CALLS = 4


async def read_message(reader: asyncio.StreamReader) -> Optional[dict[str, Any]]:
    """Read one length-delimited canonical message; None at EOF."""
    try:
        header = await reader.readline()
    except (ConnectionError, asyncio.IncompleteReadError):
        return None
    if not header:
        return None
    try:
        length = int(header.strip())
    except ValueError:
        raise InvalidPayload(f"bad frame header {header!r}") from None
    if length < 0 or length > _MAX_FRAME:
        raise InvalidPayload(f"frame length {length} out of range")
    try:
        payload = await reader.readexactly(length)
    except (ConnectionError, asyncio.IncompleteReadError):
        return None
    msg = canonical_loads(payload)
    if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
        raise InvalidPayload("message must be an object with a string 'type'")
    return msg


async def write_message(writer: asyncio.StreamWriter, msg: dict[str, Any]) -> None:
    writer.write(protocol.frame(canonical_dumps(msg)))
    await writer.drain()


class _Connection:
    def __init__(self, conn_id: int, writer: asyncio.StreamWriter):
        self.conn_id = conn_id
        self.writer = writer
        self.user_id = ""
        self.outbox: asyncio.Queue[Optional[dict[str, Any]]] = asyncio.Queue()
        self.sender: Optional[asyncio.Task] = None

    async def run_sender(self) -> None:
        while True:
            msg = await self.outbox.get()
            if msg is None:
                break
            try:
                await write_message(self.writer, msg)
            except (ConnectionError, OSError):
                break


class SessionRuntime:
    def __init__(self, session_id: str, server_config: ServerConfig, log_dir: Path):
        config = server_config.session
        self.core = SessionCore(
            session_id,
            config,
            log_path=log_dir / f"{session_id}.log",
            clock=self._elapsed_ms,
        )
        self.provider: Provider = build_provider(config.provider)
        self.inbox: asyncio.Queue[tuple] = asyncio.Queue()
        self.connections: dict[int, _Connection] = {}
        self.task: Optional[asyncio.Task] = None
        self.closed = asyncio.Event()
        self._started = time.monotonic()
        self._shutting_down = False
        self._inflight = asyncio.Semaphore(MAX_INFLIGHT_PROVIDER_CALLS)

    def _elapsed_ms(self) -> int:
        return int((time.monotonic() - self._started) * 1000)

    def start(self) -> None:
        self.task = asyncio.create_task(self._run())

    async def _run(self) -> None:
        try:
            while True:
                item = await self.inbox.get()
                kind = item[0]
                if kind == "client":
                    _, conn, msg = item
                    self._route(conn, self._handle_client(conn, msg))
                elif kind == "job":
                    _, job_id, result, error = item
                    outs, jobs = self.core.complete_job(job_id, result=result, error=error)
                    self._route(None, outs)
                    self._spawn(jobs)
                elif kind == "shutdown":
                    self._shutting_down = True
                self.core.log.sync()
                if self._shutting_down and self.core.pending_jobs == 0 and self.inbox.empty():
                    if not self.connections:
                        outs, jobs = self.core.end_stream()
                        self._route(None, outs)
                        self._spawn(jobs)
                        if jobs:
                            continue
                        outs, jobs = self.core.finalize()
                        self._route(None, outs)
                        self._spawn(jobs)
                        if jobs:
                            continue
                        break
                    self._shutting_down = False
        finally:
            self.core.log.close()
            self.closed.set()

    def _handle_client(self, conn: _Connection, msg: dict[str, Any]) -> list[Outbound]:
        mtype = msg.get("type")
        try:
            if mtype == protocol.MSG_JOIN:
                conn.user_id = str(msg["user_id"])
                return self.core.join(conn.user_id, str(msg.get("display_name", "")))
            if mtype == protocol.MSG_SUBMIT_OP:
                op = op_from_plain(msg["op"])
                return self.core.submit_op(conn.user_id, op.op_id, op.kind, op.payload)
            if mtype == protocol.MSG_SUBMIT_TRANSCRIPT_EVENT:
                ev = event_from_plain(msg["event"])
                outs, jobs = self.core.ingest_event(ev)
                self._spawn(jobs)
                return outs
            if mtype == protocol.MSG_SET_AGENDA:
                return self.core.set_agenda(str(msg.get("text", "")))
            if mtype == protocol.MSG_GET_TURN_TRANSCRIPT:
                return self.core.get_turn_transcript(str(msg.get("turn_id", "")))
            return [Outbound("issuer", protocol.error_msg("bad_message", f"unknown type {mtype!r}"))]
        except DialogmapError as exc:
            return [Outbound("issuer", protocol.error_msg(exc))]
        except (KeyError, ValueError, TypeError) as exc:
            return [Outbound("issuer", protocol.error_msg("bad_message", str(exc)))]

    def _spawn(self, jobs: list[ProviderJob]) -> None:
        for job in jobs:
            asyncio.create_task(self._run_job(job))

    async def _run_job(self, job: ProviderJob) -> None:
        async with self._inflight:
            try:
                result = await asyncio.to_thread(
                    execute_job, job, self.provider, self.core.config
                )
                await self.inbox.put(("job", job.job_id, result, None))
            except DialogmapError as exc:
                await self.inbox.put(("job", job.job_id, None, exc))

    def _route(self, issuer: Optional[_Connection], outs: list[Outbound]) -> None:
        for out in outs:
            if out.target == "issuer":
                if issuer is not None:
                    issuer.outbox.put_nowait(out.message)
            else:
                for conn in self.connections.values():
                    conn.outbox.put_nowait(out.message)

    async def attach(self, conn: _Connection) -> None:
        self.connections[conn.conn_id] = conn

    async def detach(self, conn: _Connection) -> None:
        self.connections.pop(conn.conn_id, None)
        if not self.connections:
            await self.inbox.put(("shutdown",))


class DialogmapServer:
    """Hosts many sessions; sessions are created on first join."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.sessions: dict[str, SessionRuntime] = {}
        self._next_conn_id = 1
        self._server: Optional[asyncio.base_events.Server] = None
        Path(config.log_dir).mkdir(parents=True, exist_ok=True)

    @property
    def port(self) -> int:
        assert self._server is not None and self._server.sockets
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle_connection, self.config.listen_host, self.config.listen_port
        )

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for runtime in list(self.sessions.values()):
            for conn in list(runtime.connections.values()):
                conn.outbox.put_nowait(None)
            runtime.connections.clear()
            await runtime.inbox.put(("shutdown",))
            try:
                await asyncio.wait_for(runtime.closed.wait(), timeout=30)
            except asyncio.TimeoutError:
                if runtime.task is not None:
                    runtime.task.cancel()

    def _get_session(self, session_id: str) -> SessionRuntime:
        if session_id not in self.sessions:
            runtime = SessionRuntime(session_id, self.config, Path(self.config.log_dir))
            runtime.start()
            self.sessions[session_id] = runtime
        return self.sessions[session_id]

    async def _handle_connection(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        conn = _Connection(self._next_conn_id, writer)
        self._next_conn_id += 1
        runtime: Optional[SessionRuntime] = None
        try:
            first = await read_message(reader)
            if first is None:
                return
            if first.get("type") != protocol.MSG_JOIN:
                await write_message(
                    writer, protocol.error_msg("bad_message", "first message must be join")
                )
                return
            session_id = str(first.get("session_id", ""))
            if not _SESSION_ID_RE.match(session_id):
                await write_message(
                    writer, protocol.error_msg("bad_message", f"bad session id {session_id!r}")
                )
                return
            runtime = self._get_session(session_id)
            if runtime.closed.is_set():
                await write_message(
                    writer,
                    protocol.error_msg("session_closed", f"session {session_id!r} has ended"),
                )
                return
            await runtime.attach(conn)
            conn.sender = asyncio.create_task(conn.run_sender())
            await runtime.inbox.put(("client", conn, first))
            while True:
                msg = await read_message(reader)
                if msg is None:
                    break
                await runtime.inbox.put(("client", conn, msg))
        except DialogmapError as exc:
            try:
                await write_message(writer, protocol.error_msg(exc))
            except (ConnectionError, OSError):
                pass
        finally:
            if runtime is not None:
                await runtime.detach(conn)
            if conn.sender is not None:
                conn.outbox.put_nowait(None)
                await conn.sender
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass
