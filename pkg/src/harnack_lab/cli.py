"""Command-line entry point: ``run``, ``verify``, ``sweep`` and ``report``.

Exit codes: 0 when every requested check passes, 1 when any check fails,
2 for configuration or usage errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment
from .config import ConfigError, load_config
from .dynamics import PositivityError, RatioBoundError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
DEFAULT_OUT = Path("harnack_out")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, default=None, help="artifact directory")
    p.add_argument("--tol-c", type=float, default=None, help="override check.tol_C")
    p.add_argument("--t-min", type=float, default=None, help="override time.t_min")
    p.add_argument("--paper-variant-oracle", action="store_true",
                   help="also report the PDE residual of the printed log-Gaussian family")
    p.add_argument("--inject-fault", action="store_true",
                   help="test mode: corrupt one node of the middle snapshot before checking")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harnack-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="simulate and write margin CSVs"))
    _common(sub.add_parser("verify", help="simulate and print per-kind pass/fail"))
    sw = sub.add_parser("sweep", help="run the Cartesian product of the sweep lists")
    sw.add_argument("config", type=Path)
    sw.add_argument("--out", type=Path, default=None)
    sw.add_argument("--tol-c", type=float, default=None)
    sw.add_argument("--t-min", type=float, default=None)
    rp = sub.add_parser("report", help="summarise an artifact directory")
    rp.add_argument("dir", type=Path)
    return parser


def _error(message: str) -> int:
    print(f"harnack-lab: error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _load(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(tol_C=args.tol_c, t_min=args.t_min)


def cmd_run(args, verbose: bool) -> int:
    cfg = _load(args)
    if cfg.sweep is not None:
        raise ConfigError("sweep", "use the sweep command for configs with a sweep section")
    try:
        result = experiment.run_experiment(cfg, args.inject_fault, args.paper_variant_oracle)
    except (PositivityError, RatioBoundError) as exc:
        print(f"run failed: {exc}")
        return EXIT_FAIL
    out = args.out
    if out is None and args.command == "run":
        out = DEFAULT_OUT / args.config.stem
    if out is not None:
        paths = experiment.write_artifacts(result, out)
        if not verbose:
            for p in paths:
                print(p)
    if verbose:
        for line in experiment.summary_lines(result):
            print(line)
    elif result.oracle_demo is not None:
        print(experiment.summary_lines(result)[-2])
    return EXIT_PASS if result.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = args.out if args.out is not None else DEFAULT_OUT / f"{args.config.stem}_sweep"
    passed, lines = experiment.run_sweep(cfg, out)
    for line in lines[1:]:
        print(line)
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_report(args) -> int:
    root = args.dir
    if not root.is_dir():
        raise ConfigError(str(root), "artifact directory not found")
    docs = experiment.collect_status(root)
    if not docs:
        raise ConfigError(str(root), "no artifacts (status.json) found")
    lines, ok = experiment.report_table(docs)
    text = "\n".join(lines)
    print(text)
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    try:
        if args.command == "run":
            return cmd_run(args, verbose=False)
        if args.command == "verify":
            return cmd_run(args, verbose=True)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_report(args)
    except ConfigError as exc:
        return _error(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
