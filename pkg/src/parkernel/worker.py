"""Worker runtime.

A worker answers the master's Hello with a HelloAck describing itself,
then serves requests strictly one at a time: EnvExport updates the binding
store, TaskSubmit runs a registered handler, Shutdown ends the loop.

Handlers are called as ``handler(args, bindings)`` where ``args`` is the
tuple of argument values and ``bindings`` a read-only mapping of the
exported names.  Raising :class:`TaskError` (or any exception) turns into
a failed TaskResult; the loop keeps running.

Run as an executable (``parkernel-worker`` or ``python -m
parkernel.worker``) it serves the standard task pack over stdin/stdout and
logs to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import socket
import sys
from types import MappingProxyType
from typing import Any, BinaryIO, Callable, Mapping

from . import PROTOCOL_VERSION, __version__
from . import linalg, records
from .protocol import (
    EnvAck,
    EnvExport,
    Hello,
    HelloAck,
    Matrix,
    ProtocolError,
    ProtoError,
    Shutdown,
    TaskResult,
    TaskSubmit,
    TruncatedFrame,
    decode_message,
    encode_message,
)

log = logging.getLogger(__name__)

Handler = Callable[[tuple, Mapping[str, Any]], Any]

EXIT_SHUTDOWN = "shutdown"
EXIT_EOF = "eof"
EXIT_PROTOCOL_ERROR = "protocol-error"


class TaskError(Exception):
    """Raised by handlers to report a failure; ``kind`` prefixes the text
    sent back to the master."""

    kind = "TaskError"

    def __init__(self, text: str, kind: str | None = None):
        super().__init__(text)
        if kind is not None:
            self.kind = kind


class UnknownBinding(TaskError):
    kind = "UnknownBinding"


class DuplicateName(ValueError):
    pass


class RegistrationClosed(RuntimeError):
    pass


class Worker:
    def __init__(self, host: str | None = None):
        self.host = host or socket.gethostname() or "localhost"
        self.os = platform.system() or "unknown"
        self.process = os.getpid()
        self.version = __version__
        self.scope = ""
        self._tasks: dict[str, Handler] = {}
        self._store: dict[str, Any] = {}
        self._serving = False

    @property
    def bindings(self) -> Mapping[str, Any]:
        return MappingProxyType(self._store)

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(self._tasks)

    def info(self) -> HelloAck:
        return HelloAck(self.host, self.os, self.process, self.version)

    def register_task(self, name: str, handler: Handler) -> None:
        if self._serving:
            raise RegistrationClosed(f"cannot register {name!r}: serve loop already started")
        if name in self._tasks:
            raise DuplicateName(f"task {name!r} already registered")
        self._tasks[name] = handler

    def run_task(self, msg: TaskSubmit) -> TaskResult:
        handler = self._tasks.get(msg.name)
        if handler is None:
            return TaskResult.unknown_task(msg.task_id, f"no task named {msg.name!r}")
        try:
            value = handler(tuple(msg.args), self.bindings)
        except TaskError as exc:
            return TaskResult.failed(msg.task_id, f"{exc.kind}: {exc}")
        except records.RecordError as exc:
            return TaskResult.failed(msg.task_id, f"{exc.kind}: {exc}")
        except Exception as exc:
            log.exception("task %s raised", msg.name)
            return TaskResult.failed(msg.task_id, f"{type(exc).__name__}: {exc}")
        return TaskResult.ok(msg.task_id, value)

    def serve(self, reader: BinaryIO, writer: BinaryIO) -> str:
        """Run the request loop until Shutdown, end of input or a protocol
        violation.  Returns the exit reason."""
        self._serving = True

        def send(m) -> None:
            writer.write(encode_message(m))
            writer.flush()

        greeted = False
        while True:
            try:
                msg = decode_message(reader)
            except TruncatedFrame as exc:
                if exc.at_boundary:
                    log.info("input closed, exiting")
                    return EXIT_EOF
                log.error("truncated frame: %s", exc)
                return EXIT_PROTOCOL_ERROR
            except ProtocolError as exc:
                log.error("bad frame: %s", exc)
                send(ProtoError(str(exc)))
                return EXIT_PROTOCOL_ERROR

            if not greeted:
                if not isinstance(msg, Hello):
                    send(ProtoError(f"expected Hello, got {type(msg).__name__}"))
                    return EXIT_PROTOCOL_ERROR
                if msg.version != PROTOCOL_VERSION:
                    send(ProtoError(
                        f"protocol version mismatch: master {msg.version}, worker {PROTOCOL_VERSION}"
                    ))
                    return EXIT_PROTOCOL_ERROR
                send(self.info())
                greeted = True
            elif isinstance(msg, TaskSubmit):
                result = self.run_task(msg)
                try:
                    frame = encode_message(result)
                except (TypeError, ValueError, ProtocolError) as exc:
                    frame = encode_message(
                        TaskResult.failed(msg.task_id, f"unencodable result: {exc}")
                    )
                writer.write(frame)
                writer.flush()
            elif isinstance(msg, EnvExport):
                self.scope = msg.scope
                for name, value in msg.bindings:
                    self._store[name] = value
                send(EnvAck(len(msg.bindings)))
            elif isinstance(msg, Shutdown):
                log.info("shutdown requested")
                return EXIT_SHUTDOWN
            else:
                send(ProtoError(f"unexpected {type(msg).__name__} after handshake"))
                return EXIT_PROTOCOL_ERROR


# -- standard task pack -------------------------------------------------------


def _real(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TaskError(f"{what} must be a number, got {type(v).__name__}", kind="BadArgument")
    return float(v)


def _int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise TaskError(f"{what} must be an integer, got {type(v).__name__}", kind="BadArgument")
    return v


def _str(v, what: str) -> str:
    if not isinstance(v, str):
        raise TaskError(f"{what} must be a string, got {type(v).__name__}", kind="BadArgument")
    return v


def _arity(args: tuple, *counts: int) -> None:
    if len(args) not in counts:
        want = " or ".join(str(c) for c in counts)
        raise TaskError(f"expected {want} arguments, got {len(args)}", kind="BadArgument")


def task_echo(args, bindings):
    return args[0] if len(args) == 1 else args


def task_build_tridiagonal(args, bindings):
    _arity(args, 4)
    n = _int(args[0], "n")
    spec = linalg.TridiagonalSpec(n, _real(args[1], "diag"), _real(args[2], "sup"), _real(args[3], "sub"))
    return Matrix.from_array(linalg.build_tridiagonal(spec))


def task_export_file(args, bindings):
    _arity(args, 2)
    path = _str(args[0], "path")
    m = args[1]
    if not isinstance(m, Matrix):
        raise TaskError(f"matrix argument must be a Matrix, got {type(m).__name__}", kind="BadArgument")
    records.export_file(path, m)
    return None


def task_export_tridiagonal(args, bindings):
    """(path, diag, sup, sub[, n]): build a tridiagonal matrix on this worker
    and write it to ``path``.  The order defaults to the exported ``ns``."""
    _arity(args, 4, 5)
    path = _str(args[0], "path")
    if len(args) == 5:
        n = _int(args[4], "n")
    else:
        if "ns" not in bindings:
            raise UnknownBinding("'ns' has not been exported")
        n = _int(bindings["ns"], "ns")
    m = task_build_tridiagonal((n, args[1], args[2], args[3]), bindings)
    records.export_file(path, m)
    return None


def task_read_records(args, bindings):
    _arity(args, 1)
    return records.read_records(_str(args[0], "path"))


def task_get_binding(args, bindings):
    _arity(args, 1)
    name = _str(args[0], "name")
    try:
        return bindings[name]
    except KeyError:
        raise UnknownBinding(f"no binding named {name!r}") from None


def standard_tasks(worker: Worker) -> dict[str, Handler]:
    def task_worker_info(args, bindings):
        # trailing working directory is diagnostic only
        return (worker.host, worker.os, worker.process, worker.version, os.getcwd())

    return {
        "echo": task_echo,
        "build_tridiagonal": task_build_tridiagonal,
        "export_file": task_export_file,
        "export_tridiagonal": task_export_tridiagonal,
        "read_records": task_read_records,
        "get_binding": task_get_binding,
        "worker_info": task_worker_info,
    }


def make_worker(host: str | None = None) -> Worker:
    worker = Worker(host)
    for name, handler in standard_tasks(worker).items():
        worker.register_task(name, handler)
    return worker


def serve_stdio(worker: Worker) -> str:
    reader = sys.stdin.buffer
    writer = sys.stdout.buffer
    # stray prints must not corrupt the frame stream
    sys.stdout = sys.stderr
    return worker.serve(reader, writer)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="parkernel-worker",
        description="Serve parkernel tasks over standard input/output.",
    )
    parser.add_argument(
        "--host-name",
        help="host name to report instead of this machine's (for remote-shell stand-ins)",
    )
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=args.log_level.upper(),
        format=f"worker[{os.getpid()}] %(levelname)s %(message)s",
    )
    reason = serve_stdio(make_worker(args.host_name))
    return 0 if reason in (EXIT_SHUTDOWN, EXIT_EOF) else 3


if __name__ == "__main__":
    sys.exit(main())
