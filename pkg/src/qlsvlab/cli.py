"""Command-line front end for the solver laboratory.

Subcommands:

* ``price-call``  -- transformed vanilla-call surface at the probe point,
* ``price-dnt``   -- transformed double-no-touch surface at the probe point,
* ``quadrant``    -- correlated quadrant survival vs the wedge eigenseries,
* ``rectangle``   -- correlated rectangle survival vs the correlation series,
* ``bench``       -- run a registry experiment (or a config file), write its
  delimited tables and rendered figure, and optionally gate on its checks.

``bench --list`` enumerates the experiment registry.  With ``--check`` the
exit code is nonzero whenever any tolerance check of the experiment fails.
Pricing subcommands accept ``--config`` with a key=value or JSON model
block (dimensional parameters are normalized on load).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from qlsvlab import harness
from qlsvlab.harness import (
    CALIBRATED_MODEL,
    Experiment,
    evaluate_checks,
    list_experiments,
    run_experiment,
)

_PRICING_GRID_FLAGS = (
    ("--i1", "I1", "direction-1 grid points"),
    ("--i2", "I2", "variance grid points"),
    ("--steps", "N", "time steps"),
    ("--modes", "M", "sine modes (mode-reduction and series methods)"),
)


def _add_grid_flags(parser: argparse.ArgumentParser,
                    defaults: dict) -> None:
    for flag, key, help_text in _PRICING_GRID_FLAGS:
        if key in defaults:
            parser.add_argument(flag, dest=key, type=int,
                                default=defaults[key], help=help_text)


def _model_block(config: Optional[str]) -> dict:
    if config is None:
        return dict(CALIBRATED_MODEL)
    values = harness._parse_config_text(Path(config).read_text())
    block = harness._model_from_config(values)
    return block or dict(CALIBRATED_MODEL)


def _print_rows(table: harness.ResultTable) -> None:
    for row in table.rows:
        parts = [f"method={row.method}", f"value={row.value:.10f}"]
        if row.stderr is not None:
            parts.append(f"stderr={row.stderr:.2e}")
        if row.error is not None:
            parts.append(f"max_line_gap_vs_reference={row.error:.3e}")
        parts.append(f"seconds={row.seconds:.2f}")
        print("  ".join(parts))


def _write_outputs(args, exp: Experiment) -> harness.ResultTable:
    table = run_experiment(exp, out_dir=args.out)
    if args.out:
        print(f"wrote {args.out}/{exp.id}.csv, {exp.id}_timings.csv, "
              f"{exp.id}.png")
    return table


# --------------------------------------------------------------------------- #
# Subcommand handlers
# --------------------------------------------------------------------------- #

def _cmd_price_call(args) -> int:
    exp = Experiment(
        id="price-call",
        description="vanilla call, transformed surface on the probe line",
        problem="call", methods=(args.method,),
        base={"I1": args.I1, "I2": args.I2, "N": args.N},
        reference="method:fourier" if args.method != "fourier" else "none",
        model=_model_block(args.config),
        extras={"strike": args.strike, "years": args.years})
    table = _write_outputs(args, exp)
    print(f"call value at (x1=0, x2={harness.PROBE_X2}):")
    _print_rows(table)
    return 0


def _cmd_price_dnt(args) -> int:
    extras = {"x_lower": args.x_lower, "x_upper": args.x_upper,
              "years": args.years, "seed": args.seed, "paths": args.paths,
              "steps_per_day": args.steps_per_day}
    exp = Experiment(
        id="price-dnt",
        description="double-no-touch, transformed surface on the "
                    "barrier interval",
        problem="dnt", methods=(args.method,),
        base={"I1": args.I1, "I2": args.I2, "N": args.N, "M": args.M},
        reference="none",
        model=_model_block(args.config),
        extras=extras)
    table = _write_outputs(args, exp)
    print("double-no-touch value at the barrier midpoint "
          f"(x2={harness.PROBE_X2}):")
    _print_rows(table)
    return 0


def _cmd_quadrant(args) -> int:
    exp = Experiment(
        id="quadrant",
        description="quadrant survival vs wedge eigenseries on the "
                    "probe row",
        problem="quadrant", methods=(args.method,),
        base={"I1": args.I1, "I2": args.I2, "N": args.N},
        reference="closed-form",
        extras={"rho": args.rho, "tau": args.tau,
                "box1": args.box1, "box2": args.box2})
    table = _write_outputs(args, exp)
    print(f"quadrant survival at (2, 1), rho={args.rho}, tau={args.tau}:")
    _print_rows(table)
    return 0


def _cmd_rectangle(args) -> int:
    methods = ("cs", f"series{args.order}") if args.method == "cs" \
        else (args.method, f"series{args.order}")
    exp = Experiment(
        id="rectangle",
        description="rectangle survival: splitting scheme vs "
                    "correlation series on the probe row",
        problem="rectangle", methods=methods,
        base={"I1": args.I1, "I2": args.I2, "N": args.N},
        reference=f"method:{methods[0]}",
        extras={"rho": args.rho, "tau": args.tau, "box1": args.box1,
                "box2": args.box2, "modes": args.modes})
    table = _write_outputs(args, exp)
    print(f"rectangle survival at (2, 1), rho={args.rho}, tau={args.tau}:")
    _print_rows(table)
    return 0


def _cmd_bench(args) -> int:
    if args.list:
        for exp_id, description in list_experiments():
            print(f"{exp_id}: {description}")
        return 0
    spec = args.experiment or args.config
    if spec is None:
        print("bench needs --experiment <id>, --config <file>, or --list",
              file=sys.stderr)
        return 2
    table = run_experiment(spec, out_dir=args.out)
    print(table.summary())
    if args.out:
        exp_id = table.experiment.id
        print(f"wrote {args.out}/{exp_id}.csv, {exp_id}_timings.csv, "
              f"{exp_id}.png")
    if args.check:
        results = evaluate_checks(table)
        return 0 if all(res.passed for res in results) else 1
    return 0


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlsvlab",
        description="price barrier and vanilla contracts under a quadratic "
                    "local stochastic volatility model with five "
                    "independently built solvers, and cross-check them")
    sub = parser.add_subparsers(dest="command")

    pc = sub.add_parser("price-call", help="vanilla call (transformed "
                                           "surface at the probe)")
    pc.add_argument("--method", default="cs",
                    choices=["do", "cs", "hw", "hv", "fourier"])
    pc.add_argument("--strike", type=float, default=1.0)
    pc.add_argument("--years", type=float, default=1.0)
    pc.add_argument("--config", help="model config file (key=value or JSON)")
    pc.add_argument("--out", help="directory for CSV/PNG artifacts")
    _add_grid_flags(pc, {"I1": 201, "I2": 101, "N": 1024})
    pc.set_defaults(handler=_cmd_price_call)

    pd = sub.add_parser("price-dnt", help="double-no-touch (transformed "
                                          "surface at the probe)")
    pd.add_argument("--method", default="cs",
                    choices=["do", "cs", "hw", "hv", "galerkin", "eigen",
                             "mc", "series1", "series2", "series3"])
    pd.add_argument("--x-lower", type=float, default=0.0,
                    help="lower barrier, map coordinate")
    pd.add_argument("--x-upper", type=float, default=1.0,
                    help="upper barrier, map coordinate")
    pd.add_argument("--years", type=float, default=1.0)
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--paths", type=int, default=200_000)
    pd.add_argument("--steps-per-day", type=int, default=3)
    pd.add_argument("--config", help="model config file (key=value or JSON)")
    pd.add_argument("--out", help="directory for CSV/PNG artifacts")
    _add_grid_flags(pd, {"I1": 201, "I2": 101, "N": 1024, "M": 30})
    pd.set_defaults(handler=_cmd_price_dnt)

    qd = sub.add_parser("quadrant", help="correlated quadrant survival vs "
                                         "its eigenseries")
    qd.add_argument("--method", default="cs",
                    choices=["do", "cs", "hw", "hv"])
    qd.add_argument("--rho", type=float, default=-0.90)
    qd.add_argument("--tau", type=float, default=1.0)
    qd.add_argument("--box1", type=float, default=5.0)
    qd.add_argument("--box2", type=float, default=4.0)
    qd.add_argument("--out", help="directory for CSV/PNG artifacts")
    _add_grid_flags(qd, {"I1": 201, "I2": 101, "N": 1000})
    qd.set_defaults(handler=_cmd_quadrant)

    rc = sub.add_parser("rectangle", help="correlated rectangle survival "
                                          "vs its correlation series")
    rc.add_argument("--method", default="cs",
                    choices=["do", "cs", "hw", "hv"])
    rc.add_argument("--order", type=int, default=3, choices=[0, 1, 2, 3])
    rc.add_argument("--rho", type=float, default=-0.900)
    rc.add_argument("--tau", type=float, default=1.0)
    rc.add_argument("--box1", type=float, default=5.0)
    rc.add_argument("--box2", type=float, default=4.0)
    rc.add_argument("--modes", type=int, default=10,
                    help="sine modes per axis in the series")
    rc.add_argument("--out", help="directory for CSV/PNG artifacts")
    _add_grid_flags(rc, {"I1": 201, "I2": 101, "N": 1000})
    rc.set_defaults(handler=_cmd_rectangle)

    bench = sub.add_parser("bench", help="run a benchmark experiment")
    bench.add_argument("--experiment", help="registry experiment id")
    bench.add_argument("--config", help="experiment config file")
    bench.add_argument("--out", help="directory for CSV/PNG artifacts")
    bench.add_argument("--check", action="store_true",
                       help="exit nonzero if any tolerance check fails")
    bench.add_argument("--list", action="store_true",
                       help="list experiment ids and what they run")
    bench.set_defaults(handler=_cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "handler", None):
        parser.print_help()
        return 2
    try:
        return args.handler(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
