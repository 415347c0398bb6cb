"""
Script to write a synthetic monthly Arctic panel and annual CO2 pathways.

The panel mimics the eight-variable model: CO2 rises steadily, temperature
and sea-surface temperature follow it, sea-ice extent, thickness and albedo
decline, and every series except CO2 carries a fixed seasonal cycle. The
files let the pipeline run end to end without the observational archives.

    python scripts/make_synthetic_dataset.py [--seed 20190101] [--out data/synthetic]
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

# Add the src directory to the Python path
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT / "src"))

from common.logging_utils import configure_logging
from common.rng import STREAM_SIMULATION, task_rng
from data_ingestion.panel import format_year_month, month_range

logger = logging.getLogger(__name__)

START = (1980, 1)
N_MONTHS = 39 * 12
VARIABLES = ["CO2", "TCC", "PR", "AT", "SST", "SIE", "SIT", "Albedo"]

# Mean level, seasonal amplitude, month of the seasonal peak, response per ppm CO2, noise scale
SERIES = {
    "CO2": (338.0, 0.0, 1, 1.0, 0.15),
    "TCC": (0.62, 0.12, 9, 0.0004, 0.02),
    "PR": (1.1, 0.45, 8, 0.002, 0.08),
    "AT": (258.0, 14.0, 7, 0.035, 0.9),
    "SST": (-0.1, 0.15, 8, 0.009, 0.05),
    "SIE": (11.6, 4.4, 3, -0.035, 0.18),
    "SIT": (2.1, 0.55, 4, -0.011, 0.06),
    "Albedo": (0.46, 0.22, 4, -0.0009, 0.01),
}

# Month-to-month persistence and cross effects of the standardized anomalies (row responds to column)
PERSISTENCE = np.diag([0.95, 0.35, 0.2, 0.55, 0.85, 0.8, 0.92, 0.6])
FEEDBACKS = {
    ("AT", "TCC"): 0.2,
    ("SST", "AT"): 0.1,
    ("SIE", "AT"): -0.15,
    ("SIE", "SST"): -0.1,
    ("SIT", "SIE"): 0.05,
    ("Albedo", "SIE"): 0.25,
    ("AT", "Albedo"): -0.15,
}

# Annual CO2 (ppm) anchors per pathway, linearly interpolated between anchor years
PATHWAYS = {
    "rcp26": {2018: 408.0, 2030: 430.0, 2050: 443.0, 2075: 432.0, 2100: 421.0},
    "rcp60": {2018: 408.0, 2030: 432.0, 2050: 478.0, 2075: 565.0, 2100: 670.0},
    "rcp85": {2018: 408.0, 2030: 449.0, 2050: 541.0, 2075: 705.0, 2100: 936.0},
}


def simulate_panel(seed: int) -> pd.DataFrame:
    """Monthly panel with seasonal cycles, a CO2 trend and VAR(1) anomalies."""
    rng = task_rng(seed, STREAM_SIMULATION)
    names = VARIABLES
    index = {n: i for i, n in enumerate(names)}
    transition = PERSISTENCE.copy()
    for (row, col), value in FEEDBACKS.items():
        transition[index[row], index[col]] = value * SERIES[row][4] / SERIES[col][4]
    noise = np.array([SERIES[n][4] for n in names])

    dates = month_range(START, N_MONTHS)
    months = np.array([m for _, m in dates])
    co2_trend = 0.165 * np.arange(N_MONTHS) + 0.00012 * np.arange(N_MONTHS) ** 2

    anomalies = np.zeros((N_MONTHS, len(names)))
    for t in range(1, N_MONTHS):
        anomalies[t] = transition @ anomalies[t - 1] + noise * rng.standard_normal(len(names))

    columns = {"date": [format_year_month(d) for d in dates]}
    for j, name in enumerate(names):
        level, amplitude, peak, per_ppm, _ = SERIES[name]
        seasonal = amplitude * np.cos(2.0 * np.pi * (months - peak) / 12.0)
        columns[name] = level + seasonal + per_ppm * co2_trend + anomalies[:, j]
    frame = pd.DataFrame(columns)
    frame["TCC"] = frame["TCC"].clip(0.0, 1.0)
    frame["Albedo"] = frame["Albedo"].clip(0.05, 0.9)
    return frame


def pathway_frame(anchors: dict) -> pd.DataFrame:
    years = np.arange(min(anchors), max(anchors) + 1)
    values = np.interp(years, list(anchors), list(anchors.values()))
    return pd.DataFrame({"year": years, "value": values})


def parse_args():
    parser = argparse.ArgumentParser(description="Write a synthetic Arctic panel and CO2 pathways")
    parser.add_argument("--seed", type=int, default=20190101, help="Master seed")
    parser.add_argument("--out", default=str(PROJECT_ROOT / "data" / "synthetic"), help="Output directory")
    return parser.parse_args()


def main():
    """Write the synthetic panel and the three pathway files."""
    args = parse_args()
    configure_logging()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    panel = simulate_panel(args.seed)
    panel.to_csv(out / "arctic_monthly.csv", index=False, float_format="%.6f")
    logger.info("Wrote %d months x %d variables to %s", len(panel), len(VARIABLES), out / "arctic_monthly.csv")

    for name, anchors in PATHWAYS.items():
        path = out / f"{name}.csv"
        pathway_frame(anchors).to_csv(path, index=False, float_format="%.3f")
        logger.info("Wrote pathway %s", path)


if __name__ == "__main__":
    main()
