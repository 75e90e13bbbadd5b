"""Command-line entry point: ``ptt <scenario> [options]``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration
problem, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SCENARIOS, ConfigError, build_config
from .scenarios import run_scenario


def _parser():
    parser = argparse.ArgumentParser(
        prog="ptt",
        description=(
            "Pseudo-spectral runs and verification checks for a viscoelastic "
            "flow model on the periodic box: stress-trace breakdown, "
            "small-data decay, the closed-form linear propagator, and the "
            "exact-formula oracle suite."
        ),
    )
    parser.add_argument("scenario", choices=SCENARIOS, help="which scenario to run")
    parser.add_argument("--config", metavar="PATH", help="key=value config file")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="random seed override")
    parser.add_argument("--n", type=int, help="grid points per axis override")
    parser.add_argument("--dt", type=float, help="nominal time step override")
    parser.add_argument("--t-max", type=float, dest="t_max", help="time horizon override")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        text = ""
        if args.config is not None:
            text = Path(args.config).read_text(encoding="utf-8")
        cfg = build_config(
            text,
            overrides={
                "scenario": args.scenario,
                "output_dir": args.out,
                "seed": args.seed,
                "n": args.n,
                "dt": args.dt,
                "t_max": args.t_max,
            },
        )
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code = run_scenario(cfg)
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    summary = Path(cfg.output_dir) / "summary.txt"
    verdict = "all checks passed" if code == 0 else "checks FAILED"
    print(f"{cfg.scenario}: {verdict} (details in {summary})")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
