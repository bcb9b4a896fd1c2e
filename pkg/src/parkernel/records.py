"""Whitespace-separated numeric record files.

One matrix row per line, entries separated by a single space, newline
after every line, no header.  Each number is written as the shortest
decimal text that reads back to the same binary64 value, with a trailing
``.0`` dropped (so ``0.0`` is written ``0``).
"""

from __future__ import annotations

import math
import os

from .protocol import Matrix


class RecordError(Exception):
    """Base for record-file failures; ``kind`` names the failure class."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class IoFailure(RecordError):
    pass


class RaggedRows(RecordError):
    pass


class ParseError(RecordError):
    pass


def format_number(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot write non-finite value {x!r}")
    s = repr(float(x))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def format_records(m: Matrix) -> str:
    return "".join(" ".join(format_number(x) for x in row) + "\n" for row in m.to_rows())


def parse_records(text: str) -> Matrix:
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        row = []
        for tok in fields:
            try:
                x = float(tok)
            except ValueError:
                raise ParseError(f"line {lineno}: {tok!r} is not a number") from None
            if not math.isfinite(x):
                raise ParseError(f"line {lineno}: {tok!r} is not finite")
            row.append(x)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise RaggedRows(f"line {lineno} has {len(row)} fields, expected {width}")
        rows.append(row)
    return Matrix(len(rows), width or 0, tuple(x for r in rows for x in r))


def export_file(path: str | os.PathLike, m: Matrix) -> None:
    """Write ``m`` to ``path``, replacing any existing file."""
    try:
        text = format_records(m)
    except ValueError as exc:
        raise IoFailure(str(exc)) from None
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {os.fspath(path)!r}: {exc.strerror or exc}") from None


def read_records(path: str | os.PathLike) -> Matrix:
    try:
        with open(path, encoding="ascii") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read {os.fspath(path)!r}: {exc}") from None
    return parse_records(text)
