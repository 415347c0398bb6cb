"""
Emission pathway files.

Scenario files are delimited text with a ``value`` column and either a
``date`` column (YYYY-MM, monthly) or a ``year`` column (annual). Annual
values are placed at July of their year and interpolated linearly to the
monthly grid; a path may be extended flat by at most twelve months beyond
its first or last anchor.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from common.exceptions import ScenarioError
from data_ingestion.panel import (
    MonthLike,
    format_year_month,
    month_ordinal,
    parse_year_month,
)
from scenarios.forecast import ConditionPath

logger = logging.getLogger(__name__)

ANCHOR_MONTH = 7
MAX_EXTRAPOLATION = 12


def annual_to_monthly(years, values, start: MonthLike, count: int, anchor_month: int = ANCHOR_MONTH) -> np.ndarray:
    """Linear interpolation of annual values anchored at ``anchor_month``."""
    years = np.asarray(years, dtype=int)
    values = np.asarray(values, dtype=float)
    order = np.argsort(years)
    years, values = years[order], values[order]
    if years.size == 0 or np.unique(years).size != years.size:
        raise ScenarioError("annual pathway needs distinct years")
    anchors = years * 12 + (anchor_month - 1)
    first = month_ordinal(parse_year_month(start))
    grid = np.arange(first, first + count)
    if grid[0] < anchors[0] - MAX_EXTRAPOLATION or grid[-1] > anchors[-1] + MAX_EXTRAPOLATION:
        raise ScenarioError(
            f"annual pathway {years[0]}-{years[-1]} does not cover "
            f"{format_year_month(parse_year_month(start))} + {count} months"
        )
    return np.interp(grid, anchors, values)


def _monthly_slice(frame: pd.DataFrame, start: MonthLike, count: int) -> np.ndarray:
    ordinals = frame["date"].map(lambda d: month_ordinal(parse_year_month(d))).to_numpy()
    series = pd.Series(frame["value"].astype(float).to_numpy(), index=ordinals)
    if series.index.duplicated().any():
        raise ScenarioError("pathway file repeats a month")
    first = month_ordinal(parse_year_month(start))
    wanted = np.arange(first, first + count)
    missing = np.setdiff1d(wanted, series.index.to_numpy())
    if missing.size:
        raise ScenarioError(f"pathway file lacks {missing.size} of the {count} requested months")
    return series.loc[wanted].to_numpy()


def load_pathway(source: Union[str, Path], start: MonthLike, count: int) -> np.ndarray:
    """Monthly values for ``count`` months from ``start``."""
    frame = pd.read_csv(source)
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if "value" not in frame.columns:
        raise ScenarioError(f"{source}: pathway file needs a 'value' column")
    if "date" in frame.columns:
        return _monthly_slice(frame, start, count)
    if "year" in frame.columns:
        logger.debug("Interpolating annual pathway %s to monthly", source)
        return annual_to_monthly(frame["year"].to_numpy(), frame["value"].to_numpy(), start, count)
    raise ScenarioError(f"{source}: pathway file needs a 'date' or 'year' column")


def load_condition_path(source: Union[str, Path], variable: str, start: MonthLike, count: int) -> ConditionPath:
    return ConditionPath(variable, load_pathway(source, start, count), start)
