"""Command line entry point: ``invdemand run|validate|oracle <config>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from invdemand.dynamics import make_grid
from invdemand.experiment import (
    BUNDLED_CONFIG,
    ParseError,
    ValidationError,
    emit_csv,
    load_config,
    run_experiment,
)
from invdemand.oracles import qp_oracles, scheme_oracles


def _resolve(path: str) -> Path:
    # "bundled" names the bundled 1-2 network configuration
    return BUNDLED_CONFIG if path == "bundled" else Path(path)


def _cmd_run(args) -> int:
    cfg = load_config(_resolve(args.config))
    out = Path(args.out or cfg.output_dir or "out")
    report = run_experiment(cfg, tol=args.tol, seed=args.seed, max_iter=args.max_iter)
    files = emit_csv(report, out)
    if not args.no_figures:
        from invdemand.plotting import render_report

        files += render_report(report, out)
    for r in report.results:
        flag = "" if r.converged else "  (not converged)"
        line = f"{r.name:>10}  objective {r.objective:.6g}  KKT {r.kkt_residual:.1e}{flag}"
        if r.reference_max_deviation is not None:
            line += f"  max |beta - reference| {r.reference_max_deviation:.4f}"
        print(line)
    print(f"wrote {len(files)} files to {out}")
    return 0 if all(r.converged for r in report.results) else 3


def _cmd_validate(args) -> int:
    cfg = load_config(_resolve(args.config))
    net = cfg.network()
    grid = make_grid(net, cfg.dt, cfg.T)
    print(f"ok: {net.n_arcs} arcs, J = {grid.J}, {len(cfg.settings)} settings")
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_config(_resolve(args.config))
    net = cfg.network()
    grid = make_grid(net, cfg.dt, cfg.T)
    seed = cfg.seed if args.seed is None else args.seed
    results = scheme_oracles(net, grid, seed=seed) + qp_oracles(seed=seed, tol=args.tol)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invdemand",
        description="Reconstruct demand weights on tree transport networks.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON config file, or 'bundled' for the bundled experiment")
    common.add_argument("--tol", type=float, default=1e-8, help="relative KKT tolerance of the QP solver")
    common.add_argument("--seed", type=int, default=None, help="override the noise seed")

    run = sub.add_parser("run", parents=[common], help="run the experiment and write CSV and figures")
    run.add_argument("--out", default=None, help="output directory (default: config output_dir or ./out)")
    run.add_argument("--max-iter", type=int, default=200000, help="iteration cap per QP solve")
    run.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", parents=[common], help="check a config file")
    val.set_defaults(func=_cmd_validate)

    ora = sub.add_parser("oracle", parents=[common], help="run the scheme and QP oracle suites")
    ora.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        for path, msg in exc.errors:
            print(f"error: {path}: {msg}", file=sys.stderr)
        return 2
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
