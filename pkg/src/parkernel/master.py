"""Master-side orchestration.

The :class:`Master` keeps the registry of launched workers in launch order,
performs the Hello/HelloAck handshake, exports bindings, and dispatches
named tasks.  Every call is synchronous; each worker connection carries at
most one outstanding request (calls aimed at the same worker queue up on a
per-connection lock), while calls to different workers run in parallel.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from . import PROTOCOL_VERSION
from .protocol import (
    OUTCOME_OK,
    OUTCOME_UNKNOWN_TASK,
    EnvAck,
    EnvExport,
    Hello,
    HelloAck,
    ProtocolError,
    ProtoError,
    TaskResult,
    TaskSubmit,
)
from .transport import Channel, Endpoint, SpawnFailed, TransportError, exited_not_found, spawn

log = logging.getLogger(__name__)

HANDSHAKE_TIMEOUT = 30.0


class HandshakeFailed(TransportError):
    pass


class RemoteError(Exception):
    """A task ran but did not produce a value."""


class UnknownTask(RemoteError):
    pass


class TaskFailed(RemoteError):
    """The task handler failed.  ``kind`` is the failure class named by the
    worker (e.g. ``IoFailure``) and ``text`` the full message."""

    def __init__(self, text: str):
        super().__init__(text)
        self.text = text
        head, sep, _ = text.partition(":")
        self.kind = head if sep and head.isidentifier() else "TaskFailed"


@dataclass(frozen=True)
class SlaveInfo:
    id: int
    host: str
    os: str
    process: int
    version: str

    def row(self) -> tuple[str, ...]:
        return (str(self.id), self.host, self.os, str(self.process), self.version)


@dataclass(frozen=True)
class SlaveHandle:
    id: int
    _conn: Any = field(default=None, compare=False, repr=False, hash=False)


@dataclass(frozen=True)
class Bindings:
    scope: str
    entries: tuple[tuple[str, Any], ...]

    def __post_init__(self):
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("binding names must be unique within one export")

    @classmethod
    def of(cls, scope: str = "Global", **values) -> "Bindings":
        return cls(scope, tuple(values.items()))


class _Connection:
    def __init__(self, channel: Channel, endpoint: Endpoint):
        self.channel = channel
        self.endpoint = endpoint
        self.info: SlaveInfo | None = None
        self.alive = True
        self.exit_status: int | None = None
        self.lock = threading.Lock()
        self._next_task = 1

    def next_task_id(self) -> int:
        n = self._next_task
        self._next_task += 1
        return n


class _Watchdog:
    """Kills the worker if a request outlives its deadline."""

    def __init__(self, conn: _Connection, timeout: float):
        self.fired = False
        self._conn = conn
        self._timer = threading.Timer(timeout, self._fire)
        self._timer.daemon = True
        self._timer.start()

    def _fire(self) -> None:
        self.fired = True
        self._conn.channel.kill()

    def cancel(self) -> None:
        self._timer.cancel()


def _watchdog(conn: _Connection, timeout: float | None) -> _Watchdog | None:
    return None if timeout is None else _Watchdog(conn, timeout)


class Master:
    """Registry of workers plus the dispatch API.  Usable as a context
    manager; leaving the block closes every worker."""

    def __init__(self, grace: float = 5.0):
        self.grace = grace
        self._lock = threading.Lock()
        self._entries: list[_Connection] = []
        self._next_id = 1
        self.exit_statuses: dict[int, int | None] = {}

    def __enter__(self) -> "Master":
        return self

    def __exit__(self, *exc) -> None:
        self.close_slaves()

    # -- launching ------------------------------------------------------------

    def launch_slave(self, endpoint: Endpoint, timeout: float = HANDSHAKE_TIMEOUT) -> SlaveHandle:
        """Spawn a worker, handshake, and register it.

        Raises:
            SpawnFailed: the command could not be started or was not found.
            HandshakeFailed: the process did not answer Hello with a valid
                HelloAck; it is killed and not registered.
        """
        channel = spawn(endpoint)
        conn = _Connection(channel, endpoint)
        timer = _watchdog(conn, timeout)
        try:
            channel.send(Hello(PROTOCOL_VERSION))
            reply = channel.recv()
        except (OSError, ValueError, ProtocolError) as exc:
            status = channel.close(grace=0.5)
            stderr = channel.stderr_text()
            if exited_not_found(status):
                raise SpawnFailed(f"{channel.command!r} exited with status {status}", stderr, status) from None
            raise HandshakeFailed(
                f"no HelloAck from {channel.command!r} ({exc}; exit status {status})"
                + (f"\n{stderr.strip()}" if stderr.strip() else "")
            ) from None
        finally:
            if timer is not None:
                timer.cancel()
        if not isinstance(reply, HelloAck):
            channel.close(grace=0.5)
            why = reply.text if isinstance(reply, ProtoError) else f"unexpected {type(reply).__name__}"
            raise HandshakeFailed(f"handshake with {channel.command!r} failed: {why}")
        if not (reply.host and reply.os and reply.version):
            channel.close(grace=0.5)
            raise HandshakeFailed(f"HelloAck from {channel.command!r} has empty fields: {reply}")
        with self._lock:
            conn.info = SlaveInfo(self._next_id, reply.host, reply.os, reply.process, reply.version)
            self._next_id += 1
            self._entries.append(conn)
        log.info("launched slave %d on %s (pid %d)", conn.info.id, conn.info.host, conn.info.process)
        return SlaveHandle(conn.info.id, conn)

    # -- registry -------------------------------------------------------------

    def slaves(self) -> list[SlaveHandle]:
        with self._lock:
            return [SlaveHandle(c.info.id, c) for c in self._entries if c.alive]

    def info(self, handle: SlaveHandle) -> SlaveInfo:
        return self._conn(handle).info

    def is_alive(self, handle: SlaveHandle) -> bool:
        return self._conn(handle).alive

    def channel(self, handle: SlaveHandle) -> Channel:
        return self._conn(handle).channel

    def _conn(self, handle: SlaveHandle) -> _Connection:
        with self._lock:
            for c in self._entries:
                if c.info.id == handle.id:
                    return c
        raise TransportError(f"slave {handle.id} is not registered (closed or never launched)")

    def slave_table(self, handles: Iterable[SlaveHandle] | None = None) -> str:
        if handles is None:
            handles = self.slaves()
        infos = sorted((self.info(h) for h in handles), key=lambda i: i.id)
        return format_table(infos)

    # -- dispatch -------------------------------------------------------------

    def _mark_dead(self, conn: _Connection, why: str) -> None:
        if conn.alive:
            log.warning("slave %d marked dead: %s", conn.info.id, why)
        conn.alive = False
        conn.channel.kill()

    def _request(self, conn: _Connection, message, timeout: float | None):
        """Send one message and wait for its reply under the connection lock."""
        with conn.lock:
            if not conn.alive:
                raise TransportError(f"slave {conn.info.id} is dead")
            timer = _watchdog(conn, timeout)
            try:
                conn.channel.send(message)
                return conn.channel.recv()
            except (OSError, ValueError, ProtocolError) as exc:
                expired = timer is not None and timer.fired
                why = f"deadline of {timeout}s exceeded" if expired else f"connection lost: {exc}"
                self._mark_dead(conn, why)
                raise TransportError(f"slave {conn.info.id}: {why}") from None
            finally:
                if timer is not None:
                    timer.cancel()

    def export_environment(
        self,
        bindings: Bindings,
        targets: Sequence[SlaveHandle] | None = None,
        timeout: float | None = None,
    ) -> list[tuple[int, Exception | None]]:
        """Send ``bindings`` to each target (default: every live worker).

        Returns ``(id, error)`` per target in id order; ``error`` is None
        when the worker acknowledged.
        """
        msg = EnvExport(bindings.scope, tuple(bindings.entries))
        conns = self._targets(targets)

        def one(conn: _Connection) -> Exception | None:
            try:
                reply = self._request(conn, msg, timeout)
            except TransportError as exc:
                return exc
            if not isinstance(reply, EnvAck) or reply.count != len(msg.bindings):
                self._mark_dead(conn, f"bad reply to EnvExport: {reply!r}")
                return TransportError(f"slave {conn.info.id}: bad reply to EnvExport")
            return None

        return self._fan_out(conns, one)

    def remote_evaluate(
        self,
        target: SlaveHandle,
        task_name: str,
        args: Sequence = (),
        timeout: float | None = None,
    ):
        """Run ``task_name(*args)`` on ``target`` and return its value.

        Raises:
            UnknownTask: the worker has no such task.
            TaskFailed: the handler failed.
            TransportError: the worker is dead, the connection broke, or the
                deadline passed; the worker is marked dead.
        """
        conn = self._conn(target)
        task_id = conn.next_task_id()
        reply = self._request(conn, TaskSubmit(task_id, task_name, tuple(args)), timeout)
        if not isinstance(reply, TaskResult) or reply.task_id != task_id:
            self._mark_dead(conn, f"unexpected reply {reply!r}")
            raise TransportError(f"slave {conn.info.id}: protocol violation in reply to task {task_id}")
        if reply.outcome == OUTCOME_OK:
            return reply.value
        if reply.outcome == OUTCOME_UNKNOWN_TASK:
            raise UnknownTask(reply.error)
        raise TaskFailed(reply.error)

    def remote_evaluate_all(
        self, task_name: str, args: Sequence = (), timeout: float | None = None
    ) -> list[tuple[int, Any]]:
        """Broadcast one task to every live worker concurrently.

        Returns ``(id, outcome)`` in id order, where ``outcome`` is the
        value or the exception raised for that worker.
        """
        conns = self._targets(None)
        if not conns:
            raise TransportError("no live slaves")

        def one(conn: _Connection):
            try:
                return self.remote_evaluate(SlaveHandle(conn.info.id, conn), task_name, args, timeout)
            except (RemoteError, TransportError) as exc:
                return exc

        return self._fan_out(conns, one)

    def _targets(self, targets: Sequence[SlaveHandle] | None) -> list[_Connection]:
        if targets is None:
            with self._lock:
                return [c for c in self._entries if c.alive]
        return [self._conn(h) for h in targets]

    @staticmethod
    def _fan_out(conns: list[_Connection], fn) -> list[tuple[int, Any]]:
        if len(conns) <= 1:
            return [(c.info.id, fn(c)) for c in conns]
        with ThreadPoolExecutor(max_workers=len(conns)) as pool:
            futures = [(c.info.id, pool.submit(fn, c)) for c in conns]
            return sorted(((i, f.result()) for i, f in futures), key=lambda r: r[0])

    # -- teardown -------------------------------------------------------------

    def close_slaves(self) -> dict[int, int | None]:
        """Shut down every worker, reap the processes and empty the registry.

        Returns the exit status per id for the workers closed by this call.
        """
        with self._lock:
            conns = list(self._entries)
            self._entries.clear()
        if not conns:
            return {}

        def one(conn: _Connection) -> int | None:
            # the lock is held while a task is in flight; don't wait on it
            conn.alive = False
            return conn.channel.close(self.grace)

        statuses = dict(self._fan_out(conns, one))
        for conn in conns:
            conn.exit_status = statuses[conn.info.id]
        self.exit_statuses.update(statuses)
        return statuses


HEADINGS = ("ID", "host", "OS", "process", "Version")


def format_table(infos: Iterable[SlaveInfo]) -> str:
    rows = [HEADINGS] + [i.row() for i in infos]
    widths = [max(len(r[c]) for r in rows) for c in range(len(HEADINGS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"
