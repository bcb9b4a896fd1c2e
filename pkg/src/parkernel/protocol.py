"""Framed binary wire protocol shared by master and workers.

Wire format (see protocol.md for the byte-level layout)::

    [4 bytes big-endian uint32: payload length][payload]

The payload is one tagged message.  Values inside messages are tagged too;
reals travel as big-endian binary64 so they round-trip bit-exactly.

Python values map onto protocol values as follows:

    None -> Unit, bool -> Bool, int -> Int (signed 64-bit), float -> Real,
    str -> Str, list/tuple -> List, Matrix -> Matrix

Decoded lists come back as tuples.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Any, BinaryIO, Union

MAX_FRAME_SIZE = 64 * 1024 * 1024
MAX_LIST_DEPTH = 32

_LEN = struct.Struct(">I")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")

# value tags
V_UNIT = 0x00
V_BOOL = 0x01
V_INT = 0x02
V_REAL = 0x03
V_STR = 0x04
V_LIST = 0x05
V_MATRIX = 0x06

# message tags
M_HELLO = 0x01
M_HELLO_ACK = 0x02
M_ENV_EXPORT = 0x03
M_ENV_ACK = 0x04
M_TASK_SUBMIT = 0x05
M_TASK_RESULT = 0x06
M_SHUTDOWN = 0x07
M_PROTO_ERROR = 0x08

# TaskResult outcome codes
OUTCOME_OK = 0x00
OUTCOME_FAILED = 0x01
OUTCOME_UNKNOWN_TASK = 0x02


class ProtocolError(Exception):
    """Base class for wire-level failures."""


class TruncatedFrame(ProtocolError):
    """The byte source ended before a whole frame was read."""

    def __init__(self, message: str, received: int = 0):
        super().__init__(message)
        self.received = received

    @property
    def at_boundary(self) -> bool:
        """True when the source ended cleanly before any byte of the frame."""
        return self.received == 0


class OversizeFrame(ProtocolError):
    pass


class MalformedPayload(ProtocolError):
    pass


@dataclass(frozen=True)
class Matrix:
    """Dense real matrix in row-major order, as carried on the wire."""

    rows: int
    cols: int
    entries: tuple[float, ...]

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(
                f"matrix of shape {self.rows}x{self.cols} needs "
                f"{self.rows * self.cols} entries, got {len(self.entries)}"
            )

    @classmethod
    def from_rows(cls, rows) -> "Matrix":
        rows = [list(r) for r in rows]
        ncols = len(rows[0]) if rows else 0
        if any(len(r) != ncols for r in rows):
            raise ValueError("ragged rows")
        return cls(len(rows), ncols, tuple(float(x) for r in rows for x in r))

    @classmethod
    def from_array(cls, a) -> "Matrix":
        import numpy as np

        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-d array, got {a.ndim}-d")
        return cls(a.shape[0], a.shape[1], tuple(a.ravel(order="C").tolist()))

    def to_array(self):
        import numpy as np

        return np.array(self.entries, dtype=np.float64).reshape(self.rows, self.cols)

    def to_rows(self) -> list[list[float]]:
        c = self.cols
        return [list(self.entries[i * c:(i + 1) * c]) for i in range(self.rows)]


Value = Union[None, bool, int, float, str, tuple, list, Matrix]


@dataclass(frozen=True)
class Hello:
    version: int


@dataclass(frozen=True)
class HelloAck:
    host: str
    os: str
    process: int
    version: str


@dataclass(frozen=True)
class EnvExport:
    scope: str
    bindings: tuple[tuple[str, Any], ...]


@dataclass(frozen=True)
class EnvAck:
    count: int


@dataclass(frozen=True)
class TaskSubmit:
    task_id: int
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class TaskResult:
    """Outcome of one task.  ``outcome`` is one of the OUTCOME_* codes;
    ``value`` is meaningful for OUTCOME_OK, ``error`` otherwise."""

    task_id: int
    outcome: int = OUTCOME_OK
    value: Any = None
    error: str = ""

    @classmethod
    def ok(cls, task_id: int, value) -> "TaskResult":
        return cls(task_id, OUTCOME_OK, value, "")

    @classmethod
    def failed(cls, task_id: int, text: str) -> "TaskResult":
        return cls(task_id, OUTCOME_FAILED, None, text)

    @classmethod
    def unknown_task(cls, task_id: int, text: str) -> "TaskResult":
        return cls(task_id, OUTCOME_UNKNOWN_TASK, None, text)


@dataclass(frozen=True)
class Shutdown:
    pass


@dataclass(frozen=True)
class ProtoError:
    text: str


Message = Union[Hello, HelloAck, EnvExport, EnvAck, TaskSubmit, TaskResult, Shutdown, ProtoError]


# -- encoding -----------------------------------------------------------------


def _put_str(out: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    out += _LEN.pack(len(raw))
    out += raw


def _put_int(out: bytearray, n: int) -> None:
    try:
        out += _I64.pack(n)
    except struct.error:
        raise ValueError(f"integer {n} does not fit in signed 64 bits") from None


def _put_value(out: bytearray, v, depth: int) -> None:
    if v is None:
        out.append(V_UNIT)
    elif isinstance(v, bool):
        out.append(V_BOOL)
        out.append(1 if v else 0)
    elif isinstance(v, int):
        out.append(V_INT)
        _put_int(out, v)
    elif isinstance(v, float):
        out.append(V_REAL)
        out += _F64.pack(v)
    elif isinstance(v, str):
        out.append(V_STR)
        _put_str(out, v)
    elif isinstance(v, (list, tuple)):
        if depth >= MAX_LIST_DEPTH:
            raise ValueError(f"list nesting deeper than {MAX_LIST_DEPTH}")
        out.append(V_LIST)
        out += _LEN.pack(len(v))
        for item in v:
            _put_value(out, item, depth + 1)
    elif isinstance(v, Matrix):
        out.append(V_MATRIX)
        out += _LEN.pack(v.rows)
        out += _LEN.pack(v.cols)
        out += struct.pack(f">{len(v.entries)}d", *v.entries)
    else:
        raise TypeError(f"cannot encode value of type {type(v).__name__}")


def encode_value(v) -> bytes:
    out = bytearray()
    _put_value(out, v, 0)
    return bytes(out)


def _payload(m) -> bytes:
    out = bytearray()
    if isinstance(m, Hello):
        out.append(M_HELLO)
        _put_int(out, m.version)
    elif isinstance(m, HelloAck):
        out.append(M_HELLO_ACK)
        _put_str(out, m.host)
        _put_str(out, m.os)
        _put_int(out, m.process)
        _put_str(out, m.version)
    elif isinstance(m, EnvExport):
        out.append(M_ENV_EXPORT)
        _put_str(out, m.scope)
        out += _LEN.pack(len(m.bindings))
        for name, value in m.bindings:
            _put_str(out, name)
            _put_value(out, value, 0)
    elif isinstance(m, EnvAck):
        out.append(M_ENV_ACK)
        out += _LEN.pack(m.count)
    elif isinstance(m, TaskSubmit):
        out.append(M_TASK_SUBMIT)
        _put_int(out, m.task_id)
        _put_str(out, m.name)
        out += _LEN.pack(len(m.args))
        for a in m.args:
            _put_value(out, a, 0)
    elif isinstance(m, TaskResult):
        out.append(M_TASK_RESULT)
        _put_int(out, m.task_id)
        out.append(m.outcome)
        if m.outcome == OUTCOME_OK:
            _put_value(out, m.value, 0)
        elif m.outcome in (OUTCOME_FAILED, OUTCOME_UNKNOWN_TASK):
            _put_str(out, m.error)
        else:
            raise ValueError(f"unknown task outcome code {m.outcome}")
    elif isinstance(m, Shutdown):
        out.append(M_SHUTDOWN)
    elif isinstance(m, ProtoError):
        out.append(M_PROTO_ERROR)
        _put_str(out, m.text)
    else:
        raise TypeError(f"not a protocol message: {m!r}")
    return bytes(out)


def encode_message(m) -> bytes:
    """Serialize ``m`` into one length-prefixed frame.

    Raises:
        OversizeFrame: if the payload would exceed MAX_FRAME_SIZE.
    """
    payload = _payload(m)
    if len(payload) > MAX_FRAME_SIZE:
        raise OversizeFrame(f"payload of {len(payload)} bytes exceeds {MAX_FRAME_SIZE}")
    return _LEN.pack(len(payload)) + payload


# -- decoding -----------------------------------------------------------------


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise MalformedPayload("payload ends mid-field")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _LEN.unpack(self.take(4))[0]

    def i64(self) -> int:
        return _I64.unpack(self.take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def string(self) -> str:
        n = self.u32()
        try:
            return str(self.take(n), "utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload(f"invalid UTF-8 in string: {exc}") from None

    def value(self, depth: int = 0):
        tag = self.byte()
        if tag == V_UNIT:
            return None
        if tag == V_BOOL:
            b = self.byte()
            if b > 1:
                raise MalformedPayload(f"bad boolean byte {b}")
            return bool(b)
        if tag == V_INT:
            return self.i64()
        if tag == V_REAL:
            return self.f64()
        if tag == V_STR:
            return self.string()
        if tag == V_LIST:
            if depth >= MAX_LIST_DEPTH:
                raise MalformedPayload(f"list nesting deeper than {MAX_LIST_DEPTH}")
            n = self.u32()
            # every element takes at least one byte
            if n > len(self.buf) - self.pos:
                raise MalformedPayload("list length exceeds payload")
            return tuple(self.value(depth + 1) for _ in range(n))
        if tag == V_MATRIX:
            rows = self.u32()
            cols = self.u32()
            count = rows * cols
            if count * 8 > len(self.buf) - self.pos:
                raise MalformedPayload(f"matrix {rows}x{cols} exceeds payload")
            entries = struct.unpack(f">{count}d", self.take(count * 8))
            return Matrix(rows, cols, entries)
        raise MalformedPayload(f"unknown value tag 0x{tag:02x}")

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise MalformedPayload(f"{len(self.buf) - self.pos} trailing bytes after message")


def decode_value(data: bytes):
    r = _Reader(data)
    v = r.value()
    r.done()
    return v


def decode_payload(payload: bytes):
    r = _Reader(payload)
    if not payload:
        raise MalformedPayload("empty payload")
    tag = r.byte()
    if tag == M_HELLO:
        m = Hello(r.i64())
    elif tag == M_HELLO_ACK:
        m = HelloAck(r.string(), r.string(), r.i64(), r.string())
    elif tag == M_ENV_EXPORT:
        scope = r.string()
        n = r.u32()
        if n > len(payload):
            raise MalformedPayload("binding count exceeds payload")
        m = EnvExport(scope, tuple((r.string(), r.value()) for _ in range(n)))
    elif tag == M_ENV_ACK:
        m = EnvAck(r.u32())
    elif tag == M_TASK_SUBMIT:
        task_id = r.i64()
        name = r.string()
        n = r.u32()
        if n > len(payload):
            raise MalformedPayload("argument count exceeds payload")
        m = TaskSubmit(task_id, name, tuple(r.value() for _ in range(n)))
    elif tag == M_TASK_RESULT:
        task_id = r.i64()
        outcome = r.byte()
        if outcome == OUTCOME_OK:
            m = TaskResult(task_id, outcome, r.value(), "")
        elif outcome in (OUTCOME_FAILED, OUTCOME_UNKNOWN_TASK):
            m = TaskResult(task_id, outcome, None, r.string())
        else:
            raise MalformedPayload(f"unknown task outcome 0x{outcome:02x}")
    elif tag == M_SHUTDOWN:
        m = Shutdown()
    elif tag == M_PROTO_ERROR:
        m = ProtoError(r.string())
    else:
        raise MalformedPayload(f"unknown message tag 0x{tag:02x}")
    r.done()
    return m


def _read_exact(stream: BinaryIO, n: int, already: int = 0) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            raise TruncatedFrame(
                f"source ended after {already + got} bytes of frame", received=already + got
            )
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def decode_message(stream):
    """Read exactly one frame from ``stream`` and return its message.

    ``stream`` is either a readable binary file object (consumed up to the
    end of the frame) or a bytes-like object holding exactly one frame.
    """
    if isinstance(stream, (bytes, bytearray, memoryview)):
        src = io.BytesIO(bytes(stream))
        m = decode_message(src)
        if src.read(1):
            raise MalformedPayload("trailing bytes after frame")
        return m
    header = _read_exact(stream, _LEN.size)
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME_SIZE:
        raise OversizeFrame(f"frame claims {length} bytes, limit is {MAX_FRAME_SIZE}")
    return decode_payload(_read_exact(stream, length, already=_LEN.size))


def iter_messages(data: bytes):
    """Decode a concatenation of frames, yielding messages in order."""
    src = io.BytesIO(data)
    while True:
        try:
            yield decode_message(src)
        except TruncatedFrame as exc:
            if exc.at_boundary:
                return
            raise


def write_message(stream: BinaryIO, m) -> None:
    stream.write(encode_message(m))
    stream.flush()


def same_value(a, b) -> bool:
    """Structural equality that also distinguishes Int/Real/Bool and
    compares reals by their binary64 bits."""
    if type(a) is not type(b):
        if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
            pass
        else:
            return False
    if isinstance(a, float):
        return _F64.pack(a) == _F64.pack(b)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(same_value(x, y) for x, y in zip(a, b))
    if isinstance(a, Matrix):
        return (
            a.rows == b.rows
            and a.cols == b.cols
            and struct.pack(f">{len(a.entries)}d", *a.entries)
            == struct.pack(f">{len(b.entries)}d", *b.entries)
        )
    return a == b
