"""Command-line front end.

    mblsim run        --config plan.cfg [--output-dir DIR] [--threads K] [--resume]
    mblsim analyze    --config plan.cfg [--output-dir DIR] [--request NAME]
    mblsim emit FIG   --config plan.cfg [--output-dir DIR]
    mblsim validate   --config plan.cfg
    mblsim seed-split --config plan.cfg

Exit codes: 0 success, 1 runtime failure (failed cells, missing results),
2 invalid configuration or usage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .pipeline import (
    FIGURES,
    MANIFEST_NAME,
    AnalysisError,
    ResultManifest,
    cell_config_hash,
    emit_plot_data,
    plan_cells,
    run_analysis,
    run_plan,
)
from .planfile import ConfigError, ExperimentPlan, load_plan, plan_summary
from .storage import canonical_json
from .trajectory import disorder_seed, trajectory_seed

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mblsim",
        description="Monitored disordered-Heisenberg trajectory sweeps",
    )
    parser.add_argument("--version", action="version", version=f"mblsim {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", required=True, metavar="FILE", help="plan file (key = value lines)"
    )
    common.add_argument(
        "--output-dir",
        metavar="DIR",
        default=None,
        help="override the plan's output.dir",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="execute all plan cells")
    run.add_argument(
        "--threads",
        type=int,
        default=None,
        metavar="K",
        help="worker processes per cell (default: available cores)",
    )
    run.add_argument(
        "--resume",
        action="store_true",
        help="skip cells whose output already matches the plan",
    )
    run.set_defaults(func=cmd_run)

    analyze = sub.add_parser(
        "analyze", parents=[common], help="run the plan's analysis requests"
    )
    analyze.add_argument(
        "--request",
        default=None,
        metavar="NAME",
        help="run a single named request instead of all of them",
    )
    analyze.set_defaults(func=cmd_analyze)

    emit = sub.add_parser(
        "emit", parents=[common], help="write plot-ready data tables"
    )
    emit.add_argument(
        "figure",
        choices=FIGURES,
        help="which figure's data to emit",
    )
    emit.set_defaults(func=cmd_emit)

    validate = sub.add_parser("validate", parents=[common], help="check a plan file")
    validate.set_defaults(func=cmd_validate)

    seeds = sub.add_parser(
        "seed-split",
        parents=[common],
        help="print every derived seed for audit",
    )
    seeds.set_defaults(func=cmd_seed_split)
    return parser


def _load_manifest(plan: ExperimentPlan, args) -> ResultManifest:
    out_dir = Path(args.output_dir) if args.output_dir else Path(plan.output_dir)
    path = out_dir / MANIFEST_NAME
    if not path.exists():
        raise AnalysisError(f"no manifest at {path}; run `mblsim run` first")
    return ResultManifest.load(path)


def cmd_run(args) -> int:
    plan = load_plan(args.config)
    manifest = run_plan(
        plan,
        output_dir=args.output_dir,
        workers=args.threads,
        resume=args.resume,
    )
    failed = manifest.failed_cells()
    done = sum(1 for rec in manifest.cells.values() if rec["status"] == "complete")
    print(f"{done} cells complete, {len(failed)} failed -> {manifest.path}")
    if failed:
        for name in failed:
            print(f"failed: {name}: {manifest.cells[name].get('error')}", file=sys.stderr)
        return 1
    return 0


def cmd_analyze(args) -> int:
    plan = load_plan(args.config)
    manifest = _load_manifest(plan, args)
    paths = run_analysis(plan, manifest, request_name=args.request)
    for path in paths:
        print(path)
    return 0


def cmd_emit(args) -> int:
    plan = load_plan(args.config)
    manifest = _load_manifest(plan, args)
    for path in emit_plot_data(plan, manifest, args.figure):
        print(path)
    return 0


def cmd_validate(args) -> int:
    plan = load_plan(args.config)
    print(f"{args.config}: OK")
    print(plan_summary(plan))
    return 0


def cmd_seed_split(args) -> int:
    plan = load_plan(args.config)
    for spec in plan_cells(plan):
        config = plan.cell_config(spec.n_sites, spec.measure_prob)
        print(
            canonical_json(
                {
                    "kind": "cell_seed",
                    "name": spec.name,
                    "protocol": spec.protocol,
                    "cell_seed": config.master_seed,
                    "config_hash": cell_config_hash(plan, spec),
                }
            )
        )
        for d in range(config.n_disorder):
            print(
                canonical_json(
                    {
                        "kind": "disorder_seed",
                        "cell": spec.name,
                        "disorder_index": d,
                        "seed": disorder_seed(config.master_seed, d),
                        "trajectory_seeds": [
                            trajectory_seed(config.master_seed, d, t)
                            for t in range(config.n_traj_per_disorder)
                        ],
                    }
                )
            )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except AnalysisError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
