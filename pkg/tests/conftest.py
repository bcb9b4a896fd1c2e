import shlex
import sys
import time
from pathlib import Path

import psutil
import pytest

from parkernel.master import Master
from parkernel.transport import Endpoint

HERE = Path(__file__).resolve().parent
PY = shlex.quote(sys.executable)

WORKER_CMD = f"{PY} -m parkernel.worker"
# stands in for "ssh -e none `1` worker": the placeholder becomes the host
# name, which the worker then reports as its own
REMOTE_STANDIN = f"sh -c 'exec {WORKER_CMD} --host-name \"$0\"' `1`"


def fault_cmd(mode: str) -> str:
    return f"{PY} {shlex.quote(str(HERE / 'fault_worker.py'))} {mode}"


@pytest.fixture
def local_endpoint():
    return Endpoint.local(WORKER_CMD)


@pytest.fixture
def remote_endpoint():
    def make(host: str) -> Endpoint:
        return Endpoint.remote(host, REMOTE_STANDIN)

    return make


@pytest.fixture
def master():
    m = Master()
    yield m
    m.close_slaves()


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    # workers inherit the cwd, so data files land in the test's tmp dir
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture(autouse=True)
def no_leftover_processes():
    yield
    me = psutil.Process()
    deadline = time.monotonic() + 2.0
    while True:
        left = [p for p in me.children(recursive=True) if p.is_running()]
        if not left or time.monotonic() > deadline:
            break
        time.sleep(0.05)
    assert not left, f"child processes left behind: {[(p.pid, p.status()) for p in left]}"


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")

