"""Command-line entry points: run, validate, and sweep scenarios."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenario import ScenarioError, load_scenario
from .simulate import emit_summary, run_scenario, write_outputs


def _parse_param(spec: str) -> tuple[str, list[str]]:
    if "=" not in spec:
        raise argparse.ArgumentTypeError("--param expects path=value[,value...]")
    path, values = spec.split("=", 1)
    return path.strip(), [v.strip() for v in values.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario file path or shipped fixture name")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--quiet", action="store_true", help="suppress the summary printout")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="platoonsim",
        description="Deterministic platooning simulator with a map-based "
        "gap-approximation fallback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario, write trace and summary")
    _add_common(p_run)
    p_run.add_argument("--out", type=Path, default=None, help="output directory")

    p_val = sub.add_parser("validate", help="parse and validate a scenario")
    _add_common(p_val)

    p_sweep = sub.add_parser("sweep", help="run a scenario once per parameter value")
    _add_common(p_sweep)
    p_sweep.add_argument("--out", type=Path, default=None, help="output directory")
    p_sweep.add_argument(
        "--param",
        required=True,
        type=_parse_param,
        help="override path and values, e.g. 'leader_profile.constant=0.3,0.5,0.7'",
    )

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            sc = load_scenario(args.scenario, seed=args.seed)
            if not args.quiet:
                print(f"ok: scenario {sc.name!r}, {len(sc.vehicles)} vehicles, "
                      f"{sc.duration} s at {1 / sc.dt:g} Hz")
            return 0

        if args.command == "run":
            sc = load_scenario(args.scenario, seed=args.seed)
            v2v: list[str] = []
            trace, summary = run_scenario(sc, v2v_log=v2v)
            out_dir = args.out or Path("out") / sc.name
            write_outputs(out_dir, trace, summary, v2v)
            if not args.quiet:
                print(emit_summary(summary), end="")
                print(f"outputs: {out_dir}")
            return 0

        # sweep
        path, values = args.param
        base_out = args.out or Path("out")
        for value in values:
            sc = load_scenario(args.scenario, overrides={path: value}, seed=args.seed)
            trace, summary = run_scenario(sc)
            out_dir = base_out / f"{sc.name}_{path.replace(' ', '_')}={value}"
            write_outputs(out_dir, trace, summary)
            if not args.quiet:
                fol = next(iter(summary.followers.values()), None)
                mean = "n/a" if fol is None or fol.time_gap_mean is None else f"{fol.time_gap_mean:.4f}"
                std = "n/a" if fol is None or fol.time_gap_std is None else f"{fol.time_gap_std:.4f}"
                print(f"{path}={value}: time_gap mean={mean} std={std} -> {out_dir}")
        return 0
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
