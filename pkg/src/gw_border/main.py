#!/usr/bin/env python
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

from gw_border.errors import GWBorderError
from gw_border.family import BUILTIN_FAMILIES
from gw_border.settings import get_settings
from gw_border.tools import (
    ApexTool,
    BorderDistributionTool,
    CoefficientTableTool,
    ConditionedSimulationTool,
    GeneralizedLimitTool,
    LimitConstantTool,
    MeanProtectedTool,
    OracleCheckTool,
)
from gw_border.tools.base import BorderTool
from gw_border.utils import write_text

logger = logging.getLogger(__name__)

TOOLS = {
    "apex": ApexTool,
    "coeffs": CoefficientTableTool,
    "limit": LimitConstantTool,
    "generalized": GeneralizedLimitTool,
    "distribution": BorderDistributionTool,
    "simulate": ConditionedSimulationTool,
    "mean-protected": MeanProtectedTool,
    "oracle": OracleCheckTool,
}

MONTE_CARLO_COMMANDS = ("simulate", "mean-protected")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _index_set(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    cli = get_settings().cli
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group(required=True)
    source.add_argument("--family", choices=BUILTIN_FAMILIES, help="built-in offspring family")
    source.add_argument("--psi-file", help="JSON custom family, e.g. {\"coeffs\": [\"1\", \"0\", \"1\"]}")
    common.add_argument("--trunc", type=_positive_int, default=cli.trunc, help="truncation order for exact series")
    common.add_argument("--format", choices=("csv", "json"), default=cli.format, help="output format")
    common.add_argument("--output", help="write the result to this file instead of stdout")
    common.add_argument("--log-level", default=cli.log_level, help="logging level for stderr diagnostics")
    common.add_argument("--threads", type=_positive_int, default=cli.threads,
                        help="cap on worker processes; exact commands run in one process")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--n", type=_positive_int, required=True, help="target tree size")
    mc.add_argument("--k", type=_nonnegative_int, required=True, help="border depth")
    mc.add_argument("--samples", type=_positive_int, default=10000, help="accepted trees to collect")
    mc.add_argument("--seed", type=_nonnegative_int, default=cli.seed, help="random seed")
    mc.add_argument("--t", type=float, default=None, help="tilt parameter (default: the apex)")
    mc.add_argument("--max-attempts", type=_positive_int, default=None, help="attempt budget")
    mc.add_argument("--node-cap", type=_positive_int, default=None, help="node cap per realisation")

    parser = argparse.ArgumentParser(
        prog="gw_border",
        description="Distance to the border in size-conditioned Galton-Watson trees",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("apex", parents=[common], help="apex τ, ρ, ψ(τ), σ(τ) and Q")

    coeffs = sub.add_parser("coeffs", parents=[common], help="exact A_n, A_n^(k) and their ratio")
    coeffs.add_argument("--k", type=_nonnegative_int, required=True)
    coeffs.add_argument("--n-max", type=_positive_int, required=True)

    limit = sub.add_parser("limit", parents=[common], help="limit constant c_k")
    limit.add_argument("--k", type=_nonnegative_int, required=True)

    generalized = sub.add_parser("generalized", parents=[common], help="generalised scheme for an index set")
    generalized.add_argument("--index-set", type=_index_set, required=True, help="e.g. 0,1")
    generalized.add_argument("--m", type=_nonnegative_int, required=True)
    generalized.add_argument("--n-max", type=_positive_int, default=20)

    distribution = sub.add_parser("distribution", parents=[common], help="exact law of ∂ given the size")
    distribution.add_argument("--n", type=_positive_int, required=True)

    sub.add_parser("simulate", parents=[common, mc], help="Monte Carlo estimate of P(∂ ≥ k | size n)")
    sub.add_parser("mean-protected", parents=[common, mc], help="Monte Carlo mean proportion of protected nodes")

    oracle = sub.add_parser("oracle", parents=[common], help="brute-force cross-check of the series")
    oracle.add_argument("--n-max", type=_positive_int, required=True)
    oracle.add_argument("--k", type=_nonnegative_int, required=True)
    oracle.add_argument("--dump-trees", action="store_true", help="write the size-n_max trees as JSON lines")
    oracle.add_argument("--output-dir", default=None, help="base directory for the dump")
    return parser


def _tool_arguments(args: argparse.Namespace) -> Dict[str, Any]:
    params: Dict[str, Any] = {"family": args.family, "psi_file": args.psi_file, "trunc": args.trunc}
    if args.command in ("coeffs", "limit", "oracle"):
        params["k"] = args.k
    if args.command in ("coeffs", "generalized", "oracle"):
        params["n_max"] = args.n_max
    if args.command == "generalized":
        params.update(index_set=args.index_set, m=args.m)
    if args.command == "distribution":
        params["n"] = args.n
    if args.command == "oracle":
        params.update(dump=args.dump_trees, output_dir=args.output_dir)
    if args.command in MONTE_CARLO_COMMANDS:
        params.update(n=args.n, k=args.k, samples=args.samples, seed=args.seed, threads=args.threads, t=args.t,
                      max_attempts=args.max_attempts, node_cap=args.node_cap)
    return params


def main(argv: Optional[List[str]] = None) -> int:
    try:
        parser = build_parser()
    except GWBorderError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    tool: BorderTool = TOOLS[args.command]()
    if args.threads > 1 and args.command not in MONTE_CARLO_COMMANDS:
        logger.debug("[CLI] %s is exact and runs in one process (--threads %d)", args.command, args.threads)
    try:
        result = tool.compute(**_tool_arguments(args))
        text = tool.render(result, args.format)
    except GWBorderError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    if args.output:
        write_text(args.output, text)
        logger.info("[CLI] Wrote %s output to %s", args.command, args.output)
    else:
        sys.stdout.write(text)
    if result.message:
        print(result.message, file=sys.stderr)
    return result.exit_code


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
