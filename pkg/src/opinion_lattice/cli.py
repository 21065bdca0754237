"""Command-line interface.

Exit status: 0 on success, 1 when a modelling assumption fails (validation,
contraction, sub-stochasticity), 2 on I/O or schema errors. Diagnostics go to
stderr; data go to ``--out`` or stdout.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import design, fixedpoint, io as mio
from .calibration import calibrate, load_wave_data
from .dynamics import DEFAULT_MAX_ITER, DEFAULT_TOL, simulate
from .model import AssumptionError, ModelError, check_state, validate

EXIT_OK, EXIT_ASSUMPTION, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, status: int = EXIT_IO):
        super().__init__(message)
        self.status = status


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit(args, payload: dict):
    with _output(args.out) as fh:
        mio.dump_result(payload, fh)


def _load(args):
    if not args.model:
        raise CliError("--model is required")
    if not Path(args.model).is_file():
        raise CliError(f"model file not found: {args.model}")
    return mio.load_model(args.model)


def _state_arg(text, model):
    """Initial state from a JSON file or an inline JSON list (q x n or stacked)."""
    p = Path(text)
    raw = p.read_text() if p.is_file() else text
    try:
        x = np.asarray(json.loads(raw), dtype=float).reshape(-1)
    except (json.JSONDecodeError, ValueError) as exc:
        raise CliError(f"cannot parse --x0: {exc}")
    return check_state(model, x)


def _rows(model, columns):
    """CSV rows ``layer, agent, col...`` from stacked vectors."""
    out = []
    for l in range(model.q):
        for i in range(model.n):
            out.append([l, i] + [f"{c[l * model.n + i]:.10g}" for c in columns])
    return out


def _write_csv(args, header, rows):
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    model = _load(args)
    report = validate(model)
    _emit(args, report.to_dict())
    problems = report.problems()
    for p in problems:
        print(f"validation: {p}", file=sys.stderr)
    return EXIT_ASSUMPTION if problems else EXIT_OK


def cmd_simulate(args) -> int:
    model = _load(args)
    x0 = _state_arg(args.x0, model) if args.x0 else None
    traj = simulate(model, x0, tol=args.tol, max_iter=args.max_iter,
                    keep_history=args.format == "csv" or args.trajectory is not None,
                    enforce_substochastic=not args.allow_substochastic_violation)
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            mio.write_trajectory_csv(traj.states, model.n, model.q, fh)
    if args.format == "csv":
        with _output(args.out) as fh:
            mio.write_trajectory_csv(traj.states, model.n, model.q, fh)
    else:
        _emit(args, traj.summary())
    print(f"simulate: {traj.status} after {traj.iterations} steps", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load(args)
    result = fixedpoint.solve_affine_exact(model)
    if args.format == "csv":
        _write_csv(args, ["layer", "agent", "value", "lower", "upper"],
                   _rows(model, [result.fixed_point, result.bounds.x_lower, result.bounds.x_upper]))
    else:
        _emit(args, result.to_dict())
    return EXIT_OK


def cmd_bounds(args) -> int:
    model = _load(args)
    b = fixedpoint.bounds(model)
    if args.format == "csv":
        _write_csv(args, ["layer", "agent", "lower", "upper"], _rows(model, [b.x_lower, b.x_upper]))
    else:
        _emit(args, {"x_lower": b.x_lower, "x_upper": b.x_upper})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    for p in list(args.waves) + [args.edges] + ([args.manifest] if args.manifest else []):
        if not Path(p).is_file():
            raise CliError(f"input file not found: {p}")
    data = load_wave_data(args.waves, args.edges, args.manifest, undirected=args.undirected)
    model = calibrate(data)
    if args.out is None or args.out == "-":
        json.dump(mio.model_to_dict(model), sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        mio.save_model(model, args.out)
    report = validate(model)
    print(f"calibrate: {data.n} agents, {data.q} layers, {data.P} waves; kappa = {report.kappa:.6g}",
          file=sys.stderr)
    return EXIT_OK


def _scenario(path, model, seed):
    if not Path(path).is_file():
        raise CliError(f"scenario file not found: {path}")
    sc = design.load_scenario(path, model.n)
    if seed is not None:
        sc.seed = seed
    return sc


def cmd_optimize(args) -> int:
    model = _load(args)
    if not args.scenario:
        raise CliError("--scenario is required")
    sc = _scenario(args.scenario[0], model, args.seed)
    result = design.run_scenario(model, sc)
    _emit(args, result.to_dict(include_trace=args.trace))
    return EXIT_OK


def cmd_scenario_table(args) -> int:
    model = _load(args)
    if not args.scenario:
        raise CliError("--scenario needs at least one file")
    scenarios = [_scenario(p, model, args.seed) for p in args.scenario]
    results = [design.run_scenario(model, sc) for sc in scenarios]
    if args.format == "json":
        _emit(args, [r.to_dict(include_trace=args.trace) for r in results])
    else:
        table = design.scenario_table(results)
        _write_csv(args, table[0], table[1:])
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON file")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--tol", type=_positive(float), default=DEFAULT_TOL)
    common.add_argument("--max-iter", type=_positive(int), default=DEFAULT_MAX_ITER)
    common.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    common.add_argument("--format", choices=["json", "csv"], default=None)
    common.add_argument("--trace", action="store_true", help="include every objective evaluation")
    common.add_argument("--scenario", nargs="+", help="scenario JSON file(s)")

    ap = argparse.ArgumentParser(prog="opinion-lattice", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check assumptions and contraction factors")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common], help="iterate the update map")
    p.add_argument("--x0", help="initial state: JSON file or inline list (default: innate opinions)")
    p.add_argument("--trajectory", help="also write the full trajectory CSV here")
    p.add_argument("--allow-substochastic-violation", action="store_true",
                   help="iterate even when innate-opinion weights turn negative")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", parents=[common], help="exact fixed point for affine source rules")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bounds", parents=[common], help="componentwise fixed-point envelopes")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("calibrate", parents=[common], help="build a model from wave and edge CSVs")
    p.add_argument("--waves", nargs="+", required=True, help="one CSV per wave, in time order")
    p.add_argument("--edges", required=True, help="edge-list CSV (source influences target)")
    p.add_argument("--manifest", help="JSON mapping raw codes onto [0, 1]")
    p.add_argument("--undirected", action="store_true", help="treat every edge as reciprocal")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("optimize", parents=[common], help="optimize the source opinion for a scenario")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("scenario-table", parents=[common], help="summary table over several scenarios")
    p.set_defaults(func=cmd_scenario_table)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = "json"
        if args.command == "scenario-table":
            args.format = "csv"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _warn_to_stderr
            return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except fixedpoint.NoConsistentPatternError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ModelError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
