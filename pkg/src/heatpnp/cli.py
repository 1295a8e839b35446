"""Command-line driver: run a configuration, sweep voltages, or validate.

Failures print exactly one machine-parsable line to stderr of the form
``CATEGORY: message`` with CATEGORY one of CONFIG_ERROR, IO_ERROR,
SOLVER_ERROR, INVARIANT, USAGE, and exit nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import load_config
from .config import with_voltage as _with_voltage
from .errors import (
    AssemblyError,
    ConfigurationError,
    EvaluationError,
    InvariantViolation,
    SolveFailure,
    TimeStepError,
)
from .io import CsvWriter
from .solver import build_problem, run_simulation


def _fail(category, exc):
    message = str(exc).replace("\n", " | ")
    print(f"{category}: {message}", file=sys.stderr)
    return 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="heatpnp",
        description="Finite element simulator for heated ion channels",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configuration to t_end")
    p_run.add_argument("config")
    p_run.add_argument("--csv", default=None, help="override output.csv_path")

    p_sweep = sub.add_parser(
        "sweep", help="steady current at several applied voltages"
    )
    p_sweep.add_argument("config")
    p_sweep.add_argument(
        "--voltages", required=True, help="comma-separated voltage list"
    )
    p_sweep.add_argument(
        "--output", default="iv.csv", help="where to write the voltage/current table"
    )

    p_check = sub.add_parser("check", help="validate a configuration and exit")
    p_check.add_argument("config")
    return parser


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.csv is not None:
        cfg = dataclasses.replace(
            cfg, output=dataclasses.replace(cfg.output, csv_path=args.csv)
        )
    result = run_simulation(cfg)
    steps = len(result.records) - 1
    print(f"run complete: t = {result.state.time!r} after {steps} steps")
    if cfg.output.csv_path:
        print(f"diagnostics: {cfg.output.csv_path}")
    return 0


def _cmd_sweep(args):
    cfg = load_config(args.config)
    try:
        voltages = [float(tok) for tok in args.voltages.split(",") if tok.strip()]
    except ValueError:
        print("USAGE: --voltages expects comma-separated numbers", file=sys.stderr)
        return 2
    if not voltages:
        print("USAGE: --voltages list is empty", file=sys.stderr)
        return 2

    quiet_output = dataclasses.replace(
        cfg.output, csv_path="", vtk_every_n_steps=0, snapshot_dir=""
    )
    rows = []
    for v in voltages:
        cfg_v = dataclasses.replace(_with_voltage(cfg, v), output=quiet_output)
        result = run_simulation(cfg_v)
        current = result.records[-1].current
        rows.append((v, current))
        print(f"V = {v:g}: I = {current!r}")
    with CsvWriter(args.output, ["voltage", "current"]) as w:
        for v, current in rows:
            w.write([repr(float(v)), repr(float(current))])
    print(f"sweep written: {args.output}")
    return 0


def _cmd_check(args):
    cfg = load_config(args.config)
    build_problem(cfg)
    print(
        f"ok: {cfg.n_species} species on a "
        f"{cfg.mesh.nx}x{cfg.mesh.ny} mesh of "
        f"[0,{cfg.mesh.Lx:g}]x[0,{cfg.mesh.Ly:g}], t_end = {cfg.solver.t_end:g}"
    )
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            print("USAGE: invalid command line", file=sys.stderr)
            return 2
        return 0

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "check": _cmd_check}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        return _fail("CONFIG_ERROR", exc)
    except EvaluationError as exc:
        return _fail("CONFIG_ERROR", exc)
    except OSError as exc:
        return _fail("IO_ERROR", exc)
    except InvariantViolation as exc:
        return _fail("INVARIANT", exc)
    except (SolveFailure, TimeStepError, AssemblyError) as exc:
        return _fail("SOLVER_ERROR", exc)


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
