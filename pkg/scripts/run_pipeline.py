"""
Script to generate the synthetic dataset (if needed) and run every stage on it.

    python scripts/run_pipeline.py [--config configs/synthetic.yaml] [--seed 7]
"""

import argparse
import sys
from pathlib import Path

# Add both project root and src directories to the Python path
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT / "scripts"))
sys.path.insert(0, str(PROJECT_ROOT / "src"))

from main import main as run_main
from make_synthetic_dataset import main as make_dataset

SYNTHETIC_PANEL = PROJECT_ROOT / "data" / "synthetic" / "arctic_monthly.csv"


def main():
    parser = argparse.ArgumentParser(description="Run the full analysis pipeline")
    parser.add_argument("--config", default=str(PROJECT_ROOT / "configs" / "synthetic.yaml"))
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    if Path(args.config).name == "synthetic.yaml" and not SYNTHETIC_PANEL.exists():
        sys.argv = [sys.argv[0]]
        make_dataset()

    argv = ["--config", args.config]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    return run_main(argv)


if __name__ == "__main__":
    sys.exit(main())
