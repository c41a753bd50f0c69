#!/usr/bin/env python3
"""
Command-line experiment runner.

    python cli.py run --config data/experiment.yaml --policy casa --seed 7 \
        --out outputs/metrics/casa.csv --summary outputs/metrics/casa.json
    python cli.py sweep --config data/experiment.yaml --param cstr \
        --values 0.05,0.1 --policies casa,score --out outputs/metrics/sweep.csv
"""
import argparse
import logging
import sys
from typing import List, Optional

from config import ConfigError, parse_config, settings
from models.schemas import PolicyKind
from services.experiment_service import SWEEP_PARAMETERS, run_experiment, run_sweep
from utils import setup_logging

logger = logging.getLogger(__name__)


def _policy(value: str) -> PolicyKind:
    try:
        return PolicyKind.parse(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown policy {value!r}")


def _policies(value: str) -> List[PolicyKind]:
    return [_policy(v) for v in value.split(",") if v.strip()]


def _floats(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Carbon- and SLO-aware FaaS scheduling experiments")
    parser.add_argument("--log-level", default=settings.log_level)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one policy over the trace horizon")
    run.add_argument("--config", required=True)
    run.add_argument("--policy", type=_policy)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--summary")
    run.add_argument("--step-log")
    run.add_argument("--intensity", type=float)
    run.add_argument("--laxity", type=float)
    run.add_argument("--cstr", type=float)
    run.add_argument("--nodes", type=int)

    sweep = commands.add_parser("sweep", help="rerun policies across one parameter")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument("--values", required=True, type=_floats)
    sweep.add_argument("--policies", type=_policies, default=[PolicyKind.CASA, PolicyKind.SCORE])
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--scale-intensity", action="store_true",
                       help="scale intensity with the node count in a nodes sweep")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command == "run":
            overrides = {
                "policy": args.policy,
                "seed": args.seed,
                "out": args.out,
                "summary": args.summary,
                "step_log": args.step_log,
                "intensity": args.intensity,
                "laxity": args.laxity,
                "cstr": args.cstr,
                "nodes": args.nodes,
            }
            config = parse_config(args.config, overrides)
            result = run_experiment(config)
            logger.info("CA_cum %.2f g, CO %.4f, SL_ave %.4f over %d epochs",
                        result.summary["ca_cum_g"], result.summary["co_total"],
                        result.summary["sl_ave"], result.summary["epochs"])
        else:
            config = parse_config(args.config, {"seed": args.seed})
            run_sweep(config, args.param, args.values, args.policies, out=args.out,
                      scale_intensity_with_nodes=args.scale_intensity)
    except ConfigError as e:
        logger.error("%s", e)
        return 2
    except Exception as e:
        logger.error("%s", e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
