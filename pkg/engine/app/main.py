"""
Path: engine/app/main.py
Purpose: Command-line entry point
Logic:
  - Parses flags, merges parameter overrides into the config before validation
  - Resolves seed / output directory / worker count precedence
  - Configures logging once and hands off to routers.experiments.run
  - Returns the exit status: 0 success, 1 validation error, 2 numeric error
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from .config import get_settings, resolve_threads
from .errors import BranchingError, exit_code_for
from .logging_setup import configure_logging
from .models.experiment import ExperimentKind
from .routers import experiments
from .services.config_loader import parse_config

logger = logging.getLogger(__name__)


def _pair(text: str) -> List[float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"Invalid pair: {text}. Expected two comma-separated numbers.")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid pair: {text}") from exc


def _floats(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid number list: {text}") from exc


def _ints(text: str) -> List[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Invalid integer list: {text}") from exc


def _state(text: str) -> List[Any]:
    y1, y2 = _pair(text)
    if y2 != int(y2):
        raise argparse.ArgumentTypeError(f"Invalid state: {text}. Second coordinate must be an integer.")
    return [y1, int(y2)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msb",
        description="Mixed-state branching processes: Laplace flows, simulation, GW limits, ergodicity.",
    )
    kinds = [k.value for k in ExperimentKind]
    parser.add_argument("kind", nargs="?", choices=kinds, help="Experiment kind (overrides the config)")
    parser.add_argument("--config", required=True, help="Experiment config JSON")
    parser.add_argument("--kind", dest="kind_flag", choices=kinds, help="Experiment kind (same as positional)")
    parser.add_argument("--out", default=None, help="Output directory (default: config output_dir or ./out)")
    parser.add_argument("--seed", type=int, default=None, help="Base seed, overrides the config")
    parser.add_argument("--threads", type=int, default=None, help="Worker processes, 0 = auto (env MSB_THREADS)")
    parser.add_argument("--log-level", default=None, help="Log level (env MSB_LOG_LEVEL, default INFO)")

    params = parser.add_argument_group("parameter overrides")
    params.add_argument("--lambda", dest="lambda_", type=_pair, help="Laplace argument, e.g. 1,1")
    params.add_argument("--x", type=_state, help="Initial state, e.g. 2,3")
    params.add_argument("--y", type=_state, help="Second initial state")
    params.add_argument("--t", type=float, help="Horizon")
    params.add_argument("--t-grid", dest="t_grid", type=_floats, help="Comma-separated times")
    params.add_argument("--r", type=_pair, help="Large-jump threshold")
    params.add_argument("--k-list", dest="k_list", type=_ints, help="Comma-separated GW scales")
    params.add_argument("--replicas", type=int, help="Monte Carlo replicas")
    params.add_argument("--dt", type=float, help="Simulation step")
    params.add_argument("--path", action="store_true", default=None, help="simulate: also write path.csv for stream 0")
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    """Config entries given on the command line."""
    overrides: Dict[str, Any] = {}
    kind = args.kind_flag or args.kind
    if kind:
        overrides["kind"] = kind
    if args.lambda_ is not None:
        overrides["lambda"] = args.lambda_
    for name in ("x", "y", "t", "t_grid", "r", "k_list", "replicas", "dt", "seed", "path"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
        configure_logging(args.log_level or settings.log_level)
        config = parse_config(args.config, overrides_from(args))
        workers = resolve_threads(args.threads, settings)
        out_dir = args.out or config.output_dir or settings.output_dir
    except (BranchingError, ValueError) as exc:
        if not logging.getLogger().handlers:
            configure_logging("INFO")
        logger.error("%s", exc)
        return exit_code_for(exc)
    return experiments.run(config, out_dir, workers)


if __name__ == "__main__":
    sys.exit(main())
