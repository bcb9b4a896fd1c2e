"""Launching worker processes and talking to them over their stdio.

A launch template is a shell command in which every occurrence of the
placeholder ```1``` is replaced by a connection token (for remote endpoints
the host name, which is where the placeholder sits in an ssh command line
such as ``ssh -e none `1` parkernel-worker``).  The rendered command runs
under ``/bin/sh`` in its own process group; its stdin/stdout carry protocol
frames and its stderr goes to a diagnostic log.
"""

from __future__ import annotations

import logging
import os
import shlex
import shutil
import signal
import subprocess
import tempfile
import threading
from dataclasses import dataclass

from .protocol import Shutdown, decode_message, encode_message

log = logging.getLogger(__name__)

PLACEHOLDER = "`1`"
SHUTDOWN_GRACE = 5.0
LOG_ENV = "PARKERNEL_WORKER_LOG"

# exit codes the shell uses for "not found" / "not executable"
_SHELL_NOT_FOUND = (126, 127)

_SHELL_BUILTINS = frozenset(
    ". : [ alias bg break cd command continue echo eval exec exit export false "
    "fg getopts hash jobs kill printf pwd read readonly return set shift test "
    "times trap true type ulimit umask unalias unset wait".split()
)
_SHELL_SYNTAX = set("$`;&|<>(){}*?~=!\"'\\")


class TransportError(Exception):
    pass


class SpawnFailed(TransportError):
    def __init__(self, message: str, stderr: str = "", exit_status: int | None = None):
        detail = f"{message}\n{stderr.strip()}" if stderr.strip() else message
        super().__init__(detail)
        self.stderr = stderr
        self.exit_status = exit_status


@dataclass(frozen=True)
class LaunchSpec:
    template: str

    def render(self, token: str) -> str:
        return render_launch_command(self, token)


@dataclass(frozen=True)
class Endpoint:
    """Where and how to start a worker.  ``host`` is None for a local
    endpoint and the remote machine name otherwise."""

    spec: LaunchSpec
    host: str | None = None

    def __post_init__(self):
        if self.host is not None and not self.host.strip():
            raise ValueError("remote endpoint needs a non-empty host")
        if not self.spec.template.strip():
            raise ValueError("launch template is empty")

    @classmethod
    def local(cls, template: str) -> "Endpoint":
        return cls(LaunchSpec(template))

    @classmethod
    def remote(cls, host: str, template: str) -> "Endpoint":
        return cls(LaunchSpec(template), host)

    @property
    def is_remote(self) -> bool:
        return self.host is not None

    @property
    def token(self) -> str:
        return self.host if self.host is not None else "localhost"


def render_launch_command(spec: LaunchSpec, connection_token: str) -> str:
    if not connection_token or any(c.isspace() for c in connection_token):
        raise ValueError(f"bad connection token {connection_token!r}")
    return spec.template.replace(PLACEHOLDER, connection_token)


def _missing_program(command: str) -> str | None:
    """Name of the command's program if it plainly cannot be found.

    Only simple commands are checked; anything using shell syntax in the
    first word is left for the shell to resolve.
    """
    try:
        words = shlex.split(command)
    except ValueError:
        return None
    if not words:
        return None
    prog = words[0]
    if _SHELL_SYNTAX & set(prog) or prog in _SHELL_BUILTINS:
        return None
    return None if shutil.which(prog) else prog


class Channel:
    """Duplex frame channel to one spawned process.

    Owned by a single connection handler; ``send``/``recv`` must not be
    called concurrently from several threads.
    """

    def __init__(self, process: subprocess.Popen, command: str, log_file, log_offset: int):
        self.process = process
        self.command = command
        self._log = log_file
        self._log_offset = log_offset
        self._closed = False
        self._close_lock = threading.Lock()

    @property
    def pid(self) -> int:
        return self.process.pid

    @property
    def returncode(self) -> int | None:
        return self.process.poll()

    def send(self, message) -> None:
        self.process.stdin.write(encode_message(message))
        self.process.stdin.flush()

    def recv(self):
        return decode_message(self.process.stdout)

    def stderr_text(self) -> str:
        """Everything the process has written to stderr so far."""
        if self._log is None or self._log.closed:
            return ""
        try:
            self._log.flush()
            self._log.seek(self._log_offset)
            return self._log.read().decode("utf-8", "replace")
        except (OSError, ValueError):
            return ""

    def kill(self) -> None:
        """Forcibly terminate the process and everything in its group."""
        try:
            os.killpg(self.process.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
        except OSError:
            self.process.kill()

    def close(self, grace: float = SHUTDOWN_GRACE) -> int:
        """Ask the process to shut down, reap it, and return its exit status.

        A process still running after ``grace`` seconds is killed.
        Calling close again returns the recorded status.
        """
        with self._close_lock:
            if self._closed:
                return self.process.returncode
            self._closed = True
            if self.process.poll() is None:
                # a worker that stopped reading must not block us on a full pipe
                sender = threading.Thread(target=self._send_shutdown, daemon=True)
                sender.start()
                sender.join(grace)
            try:
                self.process.wait(grace)
            except subprocess.TimeoutExpired:
                log.warning("worker %d ignored shutdown for %.1fs, killing", self.pid, grace)
                self.kill()
                self.process.wait()
            # sweep up anything the launch shell left behind in the group
            try:
                os.killpg(self.process.pid, signal.SIGKILL)
            except OSError:
                pass
            for stream in (self.process.stdin, self.process.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            if self._log is not None:
                self._log.close()
            return self.process.returncode

    def _send_shutdown(self) -> None:
        try:
            self.send(Shutdown())
            self.process.stdin.close()
        except (OSError, ValueError):
            pass


def _open_log():
    path = os.environ.get(LOG_ENV)
    if path:
        fh = open(path, "a+b")
        fh.seek(0, os.SEEK_END)
        return fh, fh.tell()
    return tempfile.TemporaryFile(prefix="parkernel-worker-"), 0


def spawn(endpoint: Endpoint, connection_token: str | None = None) -> Channel:
    """Start the endpoint's worker process and return a channel to it.

    Raises:
        SpawnFailed: if the command's program cannot be found or the
            process cannot be started.
    """
    token = connection_token or endpoint.token
    command = render_launch_command(endpoint.spec, token)
    missing = _missing_program(command)
    if missing is not None:
        raise SpawnFailed(f"command not found: {missing!r} (from {command!r})")
    log_file, offset = _open_log()
    try:
        process = subprocess.Popen(
            command,
            shell=True,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=log_file,
            start_new_session=True,
        )
    except OSError as exc:
        log_file.close()
        raise SpawnFailed(f"cannot start {command!r}: {exc}") from None
    log.debug("spawned %r as pid %d", command, process.pid)
    return Channel(process, command, log_file, offset)


def close_channel(channel: Channel, grace: float = SHUTDOWN_GRACE) -> int:
    return channel.close(grace)


def exited_not_found(status: int | None) -> bool:
    return status in _SHELL_NOT_FOUND
