"""Misbehaving workers for fault-injection tests.

    python fault_worker.py MODE

MODE is one of:
    slow      standard worker plus ``sleep(seconds)`` and ``crash(code)`` tasks
    deaf      handshakes, then ignores everything (never exits on Shutdown)
    garbage   answers Hello with bytes that are not a frame
    silent    exits with status 3 without reading anything
    version   speaks a different protocol version
    anon      HelloAck with an empty host field
"""

import os
import signal
import sys
import time

from parkernel import worker as worker_mod
from parkernel.protocol import HelloAck, decode_message, encode_message


def main(mode: str) -> int:
    out = sys.stdout.buffer
    sys.stdout = sys.stderr
    if mode == "silent":
        print("silent worker exiting", file=sys.stderr)
        return 3
    if mode == "garbage":
        decode_message(sys.stdin.buffer)
        out.write(b"\x00\x00\x00\x05\xffjunk")
        out.flush()
        time.sleep(0.2)
        return 0
    if mode == "anon":
        decode_message(sys.stdin.buffer)
        out.write(encode_message(HelloAck("", "Linux", os.getpid(), "x")))
        out.flush()
        return 0
    if mode == "deaf":
        signal.signal(signal.SIGTERM, signal.SIG_IGN)
        decode_message(sys.stdin.buffer)
        out.write(encode_message(worker_mod.make_worker().info()))
        out.flush()
        while True:
            time.sleep(60)
    if mode == "version":
        worker_mod.PROTOCOL_VERSION = 99
        return 0 if worker_mod.make_worker().serve(sys.stdin.buffer, out) == "shutdown" else 3

    w = worker_mod.make_worker()

    def sleep(args, bindings):
        time.sleep(float(args[0]))
        return None

    def crash(args, bindings):
        os._exit(int(args[0]) if args else 9)

    w.register_task("sleep", sleep)
    w.register_task("crash", crash)
    return 0 if w.serve(sys.stdin.buffer, out) in ("shutdown", "eof") else 3


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
