"""Command line entry point: ``bsdelab run <config>`` and ``bsdelab validate <config>``.

Exit codes: 0 success, 1 a validation check failed, 2 invalid configuration,
3 numerical failure (unstable step, singular regression, divergence).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .bsde import ConditioningError, ConvergenceError, StabilityError
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import Row, run_experiment
from .market import DegenerateMarketError
from .pricing import ClaimDataError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (StabilityError, ConvergenceError, ConditioningError, DegenerateMarketError, ClaimDataError,
                    FloatingPointError, np.linalg.LinAlgError)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def results_csv(rows: List[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "value", "stderr", "method"])
    for r in rows:
        w.writerow([r.name, _fmt(r.value), _fmt(r.stderr), r.method])
    return buf.getvalue()


def summary_text(cfg: ExperimentConfig, rows: List[Row], diag: dict, wall: float, caught: List[str]) -> str:
    width = max([len(r.name) for r in rows] + [4])
    lines = [
        f"bsdelab {__version__}",
        f"kind: {cfg.kind}",
        f"seed: {cfg.numerics.seed}",
        f"paths x steps: {cfg.numerics.paths} x {cfg.numerics.steps}",
        f"wall time: {wall:.2f} s",
        "",
        f"{'name':<{width}}  {'value':>14}  {'stderr':>12}  method",
    ]
    for r in rows:
        se = "" if r.stderr is None else f"{r.stderr:.6g}"
        lines.append(f"{r.name:<{width}}  {r.value:>14.8g}  {se:>12}  {r.method}")
    lines.append("")
    lines.append("diagnostics:")
    for k, v in diag.items():
        lines.append(f"  {k}: {v}")
    for w in list(cfg.warnings) + caught:
        lines.append(f"warning: {w}")
    lines += ["", "config (re-run with this text):", cfg.echo()]
    return "\n".join(lines)


def execute(cfg: ExperimentConfig, out_dir: Path) -> int:
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows, diag = run_experiment(cfg)
    wall = time.perf_counter() - start
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(results_csv(rows))
    (out_dir / "summary.txt").write_text(summary_text(cfg, rows, diag, wall, [str(w.message) for w in caught]))
    failed = [r.name for r in rows if r.method == "fail"]
    for r in rows:
        print(f"{r.name},{_fmt(r.value)},{_fmt(r.stderr)},{r.method}")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsdelab", description="BSDE pricing and log-utility experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the experiment described by a config file"),
                       ("validate", "run the invariant suite at the configured scale")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="INI configuration file")
        s.add_argument("--seed", type=int, help="override numerics.seed")
        s.add_argument("--paths", type=int, help="override numerics.paths")
        s.add_argument("--steps", type=int, help="override numerics.steps")
        s.add_argument("--out", help="output directory (overrides experiment.out)")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "paths": args.paths, "steps": args.steps, "out": args.out}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "validate" and cfg.kind != "validate":
            cfg = replace(cfg, kind="validate")
        return execute(cfg, Path(cfg.out))
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
