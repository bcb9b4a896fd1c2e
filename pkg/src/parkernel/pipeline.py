"""Demo workflow: three tridiagonal matrices, one built locally and two on
workers, multiplied on the master and reduced to eigenvalues.

Config file format, one endpoint per line::

    # comment
    local  <launch template>
    remote <host> <launch template>

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .master import Bindings, Master, SlaveHandle
from .protocol import Matrix
from .records import format_number, format_records
from .transport import Endpoint

log = logging.getLogger(__name__)

DEFAULT_SPECS = ((0.0, 1.2, 2.1), (0.0, 2.6, 1.8), (0.0, 2.0, 3.0))


class ConfigError(Exception):
    pass


class BadLine(ConfigError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class WorkflowError(Exception):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ClusterConfig:
    endpoints: tuple[Endpoint, ...]

    def __post_init__(self):
        if not self.endpoints:
            raise ConfigError("config defines no endpoints")


def parse_config(text: str) -> ClusterConfig:
    endpoints = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        role, _, rest = line.partition(" ")
        rest = rest.strip()
        if role == "local":
            if not rest:
                raise BadLine(lineno, "missing launch template")
            endpoints.append(Endpoint.local(rest))
        elif role == "remote":
            host, _, template = rest.partition(" ")
            if not host:
                raise BadLine(lineno, "missing host")
            template = template.strip()
            if not template:
                raise BadLine(lineno, "missing launch template")
            endpoints.append(Endpoint.remote(host, template))
        else:
            raise BadLine(lineno, f"unknown role {role!r} (expected 'local' or 'remote')")
    return ClusterConfig(tuple(endpoints))


def load_config(path) -> ClusterConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)


@dataclass(frozen=True)
class WorkflowSpec:
    ns: int = 4
    specs: tuple[tuple[float, float, float], ...] = DEFAULT_SPECS
    chop_eps: float = linalg.CHOP_EPS
    files: tuple[str, str] = ("data1.dat", "data2.dat")

    def __post_init__(self):
        if self.ns < 1:
            raise ValueError(f"ns must be >= 1, got {self.ns}")
        if len(self.specs) != 3:
            raise ValueError(f"exactly three matrix specs required, got {len(self.specs)}")

    def tridiagonal(self, k: int) -> linalg.TridiagonalSpec:
        diag, sup, sub = self.specs[k]
        return linalg.TridiagonalSpec(self.ns, diag, sup, sub)


@dataclass
class Report:
    ns: int
    eigenvalues: tuple[complex, ...]
    product: np.ndarray
    table: str
    timings: dict[str, float] = field(default_factory=dict)

    def format(self) -> str:
        out = ["slaves:", self.table.rstrip("\n"), "", f"ns = {self.ns}", "eigenvalues:"]
        cells = [(format_number(z.real), format_number(z.imag)) for z in self.eigenvalues]
        wr = max([2] + [len(r) for r, _ in cells])
        out.append(f"  {'re'.rjust(wr)}  im")
        out += [f"  {r.rjust(wr)}  {i}" for r, i in cells]
        out += ["", "timing (s):"]
        width = max(len(k) for k in self.timings) if self.timings else 0
        out += [f"  {k.ljust(width)}  {v:.4f}" for k, v in self.timings.items()]
        return "\n".join(out) + "\n"


def reference_workflow(w: WorkflowSpec) -> tuple[np.ndarray, tuple[complex, ...]]:
    """Same computation in one process, straight through linalg."""
    mats = [linalg.build_tridiagonal(w.tridiagonal(k)) for k in range(3)]
    product = linalg.mat_mul(linalg.mat_mul(mats[0], mats[1]), mats[2])
    return product, linalg.chop(linalg.eig_qr(product), w.chop_eps)


class _Stages:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, name: str, fn, *args):
        t0 = time.perf_counter()
        try:
            return fn(*args)
        except WorkflowError:
            raise
        except Exception as exc:
            raise WorkflowError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def run_workflow(cfg: ClusterConfig, w: WorkflowSpec, master: Master | None = None) -> Report:
    """Launch the configured workers and run the three-matrix workflow.

    Matrix 1 is built on the master; matrices 2 and 3 are built and written
    to files on workers 1 and 2, then read back there and returned.  The
    workers are always closed before returning or raising.

    Raises:
        WorkflowError: naming the stage that failed.
    """
    if len(cfg.endpoints) < 2:
        raise WorkflowError("precondition", f"need at least 2 endpoints, config has {len(cfg.endpoints)}")
    master = master or Master()
    stages = _Stages()
    try:
        handles = stages.run("launch", lambda: [master.launch_slave(e) for e in cfg.endpoints])
        table = master.slave_table(handles)

        def export():
            for slave_id, err in master.export_environment(Bindings.of("Global", ns=w.ns)):
                if err is not None:
                    raise err

        stages.run("export_environment", export)
        w1, w2 = handles[0], handles[1]
        with ThreadPoolExecutor(max_workers=3) as pool:
            t0 = time.perf_counter()
            jobs = [
                pool.submit(_remote_build, master, w1, w.files[0], w.specs[1]),
                pool.submit(_remote_build, master, w2, w.files[1], w.specs[2]),
            ]
            mat1 = stages.run("local_build", linalg.build_tridiagonal, w.tridiagonal(0))
            stages.run("remote_build", lambda: [j.result() for j in jobs])
            stages.timings["remote_build"] = time.perf_counter() - t0

            reads = [
                pool.submit(master.remote_evaluate, w1, "read_records", (w.files[0],)),
                pool.submit(master.remote_evaluate, w2, "read_records", (w.files[1],)),
            ]
            mat2, mat3 = stages.run("remote_read", lambda: [_as_array(r.result()) for r in reads])

        product = stages.run(
            "multiply", lambda: linalg.mat_mul(linalg.mat_mul(mat1, mat2), mat3)
        )
        eigs = stages.run("eigenvalues", lambda: linalg.chop(linalg.eig_qr(product), w.chop_eps))
    finally:
        t0 = time.perf_counter()
        master.close_slaves()
        stages.timings["close"] = time.perf_counter() - t0
    return Report(w.ns, eigs, product, table, stages.timings)


def _remote_build(master: Master, handle: SlaveHandle, path: str, spec) -> None:
    diag, sup, sub = spec
    master.remote_evaluate(handle, "export_tridiagonal", (path, float(diag), float(sup), float(sub)))


def _as_array(value) -> np.ndarray:
    if not isinstance(value, Matrix):
        raise TypeError(f"expected a Matrix from read_records, got {type(value).__name__}")
    return value.to_array()


def cmd_table(cfg: ClusterConfig, master: Master | None = None) -> str:
    """Launch every endpoint, render the slave table, close everything.

    Endpoints that fail to launch are listed after the table.
    """
    master = master or Master()
    failures = []
    try:
        for n, endpoint in enumerate(cfg.endpoints, 1):
            try:
                master.launch_slave(endpoint)
            except Exception as exc:
                where = f"remote {endpoint.host}" if endpoint.is_remote else "local"
                first = str(exc).splitlines()[0] if str(exc) else ""
                failures.append(f"endpoint {n} ({where}): {type(exc).__name__}: {first}")
        text = master.slave_table()
    finally:
        master.close_slaves()
    if failures:
        text += "".join(f"! {f}\n" for f in failures)
    return text


def emit_matrix(path, product: np.ndarray) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_records(Matrix.from_array(product)))
