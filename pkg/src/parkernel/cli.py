"""Command line entry point: ``parkernel run`` and ``parkernel table``.

Exit codes: 0 success, 1 workflow error, 2 config error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .pipeline import (
    ConfigError,
    WorkflowError,
    WorkflowSpec,
    cmd_table,
    emit_matrix,
    load_config,
    run_workflow,
)

EXIT_OK = 0
EXIT_WORKFLOW = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parkernel",
        description="Launch workers from a host config and run the distributed matrix workflow.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the three-matrix product/eigenvalue workflow")
    run.add_argument("--config", required=True, help="host config file")
    run.add_argument("--ns", type=int, default=4, help="matrix order (default 4)")
    run.add_argument("--chop", type=float, default=1e-10, metavar="EPS",
                     help="zero out eigenvalue parts smaller than EPS (default 1e-10)")
    run.add_argument("--emit-matrix", metavar="PATH",
                     help="also write the product matrix in record format")

    table = sub.add_parser("table", help="launch every endpoint and print the slave table")
    table.add_argument("--config", required=True, help="host config file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "table":
        sys.stdout.write(cmd_table(cfg))
        return EXIT_OK

    try:
        spec = WorkflowSpec(ns=args.ns, chop_eps=args.chop)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_workflow(cfg, spec)
    except WorkflowError as exc:
        print(f"workflow error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if exc.stage == "precondition" else EXIT_WORKFLOW
    sys.stdout.write(report.format())
    if args.emit_matrix:
        try:
            emit_matrix(args.emit_matrix, report.product)
        except OSError as exc:
            print(f"cannot write {args.emit_matrix}: {exc}", file=sys.stderr)
            return EXIT_WORKFLOW
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
