# main.py
"""
Command-line entry point.

    python src/main.py --config configs/arctic_8.yaml [--stage irf] [--seed 7] [--out out/]

Exit codes: 0 success, 1 stage failure, 2 configuration or input error,
3 numerical failure.
"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from common.config import load_config
from common.exceptions import ConfigError, NumericalError, PanelError, StageError
from common.logging_utils import configure_logging
from pipeline.stages import STAGES, run, run_stage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Bayesian structural VAR analysis of monthly Arctic sea-ice data")
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--stage", default="run", choices=["run", *STAGES], help="Stage to execute (default: all)")
    parser.add_argument("--seed", type=int, default=None, help="Override the configured master seed")
    parser.add_argument("--out", default=None, help="Override the output directory")
    parser.add_argument("--log-level", default="INFO", help="Logging level (DEBUG, INFO, WARNING, ...)")
    return parser.parse_args(argv)


def exit_code(error: BaseException) -> int:
    """Map a failure (or the cause of a stage failure) to the process exit code."""
    cause = error.cause if isinstance(error, StageError) and error.cause is not None else error
    if isinstance(cause, (ConfigError, PanelError)):
        return EXIT_CONFIG
    if isinstance(cause, (NumericalError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    return EXIT_STAGE


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out)
        if args.stage == "run":
            out = run(config)
        else:
            run_stage(args.stage, config)
            out = config.out_dir
    except (ConfigError, StageError) as exc:
        logger.error("%s", exc)
        return exit_code(exc)
    logger.info("Done; artifacts in %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
