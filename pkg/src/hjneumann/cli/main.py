"""Command line entry point.

Exit codes: 0 when every claimed check passes, 2 when at least one check
fails, 1 for usage and config errors (including ObliquenessViolated and
CflViolation diagnostics raised while setting a scenario up).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from ..errors import HJNError
from .config import build_scenario, load_config_text
from .pipeline import run_scenario
from .scenarios import BUILTINS, resolve

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjneumann",
        description="Weak KAM toolkit runner: critical values, Mane distances, "
                    "Aubry sets and long-time asymptotics on grids.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("config",
                       help="built-in scenario name or path to a config file")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: $HJN_OUT/<name> or ./runs/<name>)")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker count for the distance sweep")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_run.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering; tables and verdicts only")

    p_list = sub.add_parser("list", help="list built-in scenarios")
    p_list.add_argument("filter", nargs="?", default=None,
                        help="substring filter on scenario names")
    return parser


def _load_scenario(spec: str):
    if spec in BUILTINS:
        return resolve(spec)
    if os.path.exists(spec):
        return build_scenario(load_config_text(spec), source=spec)
    from ..errors import ConfigError
    raise ConfigError(
        f"{spec!r} is neither a built-in scenario nor a readable config file; "
        f"built-ins: {', '.join(BUILTINS)}")


def _with_seed(sc, seed: int):
    echo = tuple((k, str(seed) if k == "seed" else v) for k, v in sc.echo)
    if all(k != "seed" for k, _v in echo):
        echo = echo + (("seed", str(seed)),)
    return dataclasses.replace(sc, seed=seed, echo=echo)


def _cmd_run(args) -> int:
    sc = _load_scenario(args.config)
    if args.seed is not None:
        sc = _with_seed(sc, args.seed)
    if args.out is not None:
        out_dir = Path(args.out)
    else:
        root = os.environ.get("HJN_OUT", "runs")
        out_dir = Path(root) / sc.name
    result = run_scenario(sc, out_dir, jobs=args.jobs,
                          render_figures=not args.no_figures)
    for claim in result.claims:
        print(claim.line())
    for note in result.notes:
        print(note)
    if result.ok:
        print(f"ALL CHECKS PASSED  ({out_dir})")
        return 0
    print(f"{result.n_failed} CHECK(S) FAILED  ({out_dir})")
    return 2


def _cmd_list(args) -> int:
    rows = []
    for name in BUILTINS:
        if args.filter and args.filter not in name:
            continue
        rows.append((name, resolve(name).description))
    width = max((len(n) for n, _d in rows), default=8)
    print(f"{'name':<{width}}  description")
    for name, desc in rows:
        print(f"{name:<{width}}  {desc}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_list(args)
    except HJNError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
