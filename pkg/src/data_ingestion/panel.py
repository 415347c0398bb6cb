"""
Monthly Panel Ingestion and Deterministic Deseasonalization

This module owns the aligned monthly multivariate series used by every
downstream model: loading from delimited text, trimming ragged edges,
restricting the estimation window, ordering variables causally and
removing deterministic monthly seasonality with month dummies.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from common.exceptions import PanelError

logger = logging.getLogger(__name__)

YearMonth = Tuple[int, int]
MonthLike = Union[YearMonth, str]

MISSING_TOKENS = {"", "na", "nan", "null", "none"}
_DATE_PATTERN = re.compile(r"^\s*(\d{4})-(\d{1,2})\s*$")


# --- Date helpers ---

def parse_year_month(value: MonthLike) -> YearMonth:
    """Parse ``"YYYY-MM"`` (or pass through a ``(year, month)`` pair)."""
    if isinstance(value, tuple):
        year, month = int(value[0]), int(value[1])
    else:
        match = _DATE_PATTERN.match(str(value))
        if match is None:
            raise PanelError(f"unparsable date {value!r}, expected YYYY-MM")
        year, month = int(match.group(1)), int(match.group(2))
    if not 1 <= month <= 12:
        raise PanelError(f"month out of range in {value!r}")
    return year, month


def format_year_month(value: YearMonth) -> str:
    return f"{value[0]:04d}-{value[1]:02d}"


def month_ordinal(value: YearMonth) -> int:
    """Months since year 0; consecutive months differ by exactly one."""
    return value[0] * 12 + (value[1] - 1)


def from_ordinal(ordinal: int) -> YearMonth:
    return ordinal // 12, ordinal % 12 + 1


def shift_month(value: YearMonth, months: int) -> YearMonth:
    return from_ordinal(month_ordinal(value) + months)


def month_range(start: YearMonth, count: int) -> List[YearMonth]:
    base = month_ordinal(start)
    return [from_ordinal(base + k) for k in range(count)]


# --- Domain types ---

@dataclass(frozen=True)
class VariableSpec:
    """One series of the panel and its position in the causal ordering."""
    name: str
    units: str = ""
    ordering_index: int = 0


def _validate_specs(specs: Sequence[VariableSpec]) -> Tuple[VariableSpec, ...]:
    specs = tuple(specs)
    if not specs:
        raise PanelError("at least one variable is required")
    names = [s.name for s in specs]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise PanelError(f"duplicate variable names: {duplicates}")
    indices = sorted(s.ordering_index for s in specs)
    if indices != list(range(len(specs))):
        raise PanelError(
            f"ordering_index values must be a permutation of 0..{len(specs) - 1}, got {indices}"
        )
    return tuple(sorted(specs, key=lambda s: s.ordering_index))


def specs_from_names(names: Sequence[str], units: Optional[Dict[str, str]] = None) -> Tuple[VariableSpec, ...]:
    """Build specs whose ordering follows the sequence order."""
    units = units or {}
    return tuple(VariableSpec(n, units.get(n, ""), i) for i, n in enumerate(names))


@dataclass(frozen=True, eq=False)
class TimeSeriesPanel:
    """Aligned T x M monthly observations with column order = causal order."""
    start: YearMonth
    values: np.ndarray
    variables: Tuple[VariableSpec, ...]

    def __post_init__(self):
        specs = _validate_specs(self.variables)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] != len(specs):
            raise PanelError(
                f"values shape {values.shape} does not match {len(specs)} variables"
            )
        if values.shape[0] == 0:
            raise PanelError("panel has no observations")
        if not np.all(np.isfinite(values)):
            raise PanelError("panel contains missing or non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variables", specs)
        object.__setattr__(self, "start", parse_year_month(self.start))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    @property
    def end(self) -> YearMonth:
        return shift_month(self.start, self.n_obs - 1)

    @property
    def dates(self) -> List[YearMonth]:
        return month_range(self.start, self.n_obs)

    @property
    def months(self) -> np.ndarray:
        """Calendar month (1..12) of every observation."""
        first = self.start[1] - 1
        return (first + np.arange(self.n_obs)) % 12 + 1

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise PanelError(f"unknown variable {name!r}; panel has {self.names}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def with_values(self, values: np.ndarray) -> "TimeSeriesPanel":
        return TimeSeriesPanel(self.start, values, self.variables)

    def reorder(self, names: Sequence[str]) -> "TimeSeriesPanel":
        """Permute columns so that ``names`` becomes the causal ordering."""
        names = list(names)
        if sorted(names) != sorted(self.names) or len(set(names)) != len(names):
            raise PanelError(f"invalid permutation {names} of {self.names}")
        columns = [self.index_of(n) for n in names]
        by_name = {v.name: v for v in self.variables}
        specs = tuple(
            VariableSpec(n, by_name[n].units, i) for i, n in enumerate(names)
        )
        return TimeSeriesPanel(self.start, self.values[:, columns], specs)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.names)
        frame.insert(0, "date", [format_year_month(d) for d in self.dates])
        return frame


class SeasonalMethod(Enum):
    """How seasonality was removed from the panel."""
    DUMMY = "dummy"
    BSM_STATIC = "bsm-static"
    BSM_EVOLVING = "bsm-evolving"

    @classmethod
    def parse(cls, value: Union[str, "SeasonalMethod"]) -> "SeasonalMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise PanelError(
                f"unknown deseasonalization method {value!r}; choose from {[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True, eq=False)
class SeasonalFit:
    """Per-month seasonal levels removed from (or kept in) each variable.

    ``monthly_means[m - 1, j]`` is the seasonal level of variable ``j`` in
    calendar month ``m``. ``adjusted_month`` names the month whose seasonal
    level is already contained in the panel (synthetic-month panels).
    """
    monthly_means: np.ndarray
    method: SeasonalMethod
    variables: Tuple[str, ...]
    skipped: Tuple[str, ...] = ()
    adjusted_month: Optional[int] = None

    def level_offset(self, variable: str, month: int) -> float:
        """Seasonal level to add back before comparing with raw-scale thresholds."""
        if not 1 <= month <= 12:
            raise PanelError(f"month must be in 1..12, got {month}")
        if variable not in self.variables:
            raise PanelError(f"unknown variable {variable!r}")
        j = self.variables.index(variable)
        offset = self.monthly_means[month - 1, j]
        if self.adjusted_month is not None:
            offset -= self.monthly_means[self.adjusted_month - 1, j]
        return float(offset)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.monthly_means, columns=list(self.variables))
        frame.insert(0, "month", np.arange(1, 13))
        return frame


# --- Operations ---

def load_panel(
    source: Union[str, Path, IO[str]],
    specs: Sequence[VariableSpec],
    delimiter: str = ",",
) -> TimeSeriesPanel:
    """Load a monthly panel from delimited text.

    The first column must be ``date`` (YYYY-MM). Leading and trailing months
    with any missing requested variable are trimmed; interior gaps and
    non-contiguous dates are errors.
    """
    specs = _validate_specs(specs)
    frame = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False)
    frame.columns = [str(c).strip() for c in frame.columns]
    if "date" not in frame.columns:
        raise PanelError("source has no 'date' column")
    requested = [s.name for s in specs]
    unknown = [n for n in requested if n not in frame.columns]
    if unknown:
        raise PanelError(f"unknown variable(s) {unknown}; available columns: {list(frame.columns)}")

    dates = [parse_year_month(d) for d in frame["date"]]
    if not dates:
        raise PanelError("source has no rows")
    ordinals = np.array([month_ordinal(d) for d in dates])
    gaps = np.flatnonzero(np.diff(ordinals) != 1)
    if gaps.size:
        k = gaps[0]
        raise PanelError(
            f"non-contiguous months between {format_year_month(dates[k])} "
            f"and {format_year_month(dates[k + 1])}"
        )

    values = np.empty((len(dates), len(requested)))
    for j, name in enumerate(requested):
        for t, raw in enumerate(frame[name]):
            cell = str(raw).strip()
            if cell.lower() in MISSING_TOKENS:
                values[t, j] = np.nan
                continue
            try:
                number = float(cell)
            except ValueError:
                raise PanelError(
                    f"unparsable cell {raw!r} in column {name!r} at {format_year_month(dates[t])}"
                ) from None
            if not np.isfinite(number):
                raise PanelError(
                    f"non-finite cell {raw!r} in column {name!r} at {format_year_month(dates[t])}"
                )
            values[t, j] = number

    complete = ~np.isnan(values).any(axis=1)
    if not complete.any():
        raise PanelError("no month has all requested variables")
    first = int(np.argmax(complete))
    last = len(complete) - 1 - int(np.argmax(complete[::-1]))
    window = complete[first:last + 1]
    if not window.all():
        t = first + int(np.argmin(window))
        raise PanelError(f"missing value inside estimation window at {format_year_month(dates[t])}")
    if first > 0 or last < len(dates) - 1:
        logger.info(
            "Trimmed ragged edges to %s..%s (%d of %d rows kept)",
            format_year_month(dates[first]), format_year_month(dates[last]),
            last - first + 1, len(dates),
        )
    return TimeSeriesPanel(dates[first], values[first:last + 1], specs)


def write_panel(panel: TimeSeriesPanel, dest: Union[str, Path, IO[str]]) -> None:
    """Write a panel in the format read by :func:`load_panel`.

    Floats use 17 significant digits so a reload is bit-identical.
    """
    panel.to_frame().to_csv(dest, index=False, float_format="%.17g")


def deseason_dummies(
    panel: TimeSeriesPanel, skip: Iterable[str] = ()
) -> Tuple[TimeSeriesPanel, SeasonalFit]:
    """Remove per-calendar-month means (OLS on twelve month dummies).

    Variables in ``skip`` pass through unchanged and get zero seasonal means.
    """
    skip = tuple(skip)
    for name in skip:
        panel.index_of(name)
    months = panel.months
    means = np.zeros((12, panel.n_vars))
    adjusted = np.array(panel.values, copy=True)
    for j, name in enumerate(panel.names):
        if name in skip:
            continue
        for m in range(1, 13):
            mask = months == m
            if mask.any():
                means[m - 1, j] = panel.values[mask, j].mean()
        adjusted[:, j] = panel.values[:, j] - means[months - 1, j]
    if panel.n_obs < 24:
        logger.warning("Only %d observations; monthly means rest on fewer than two years", panel.n_obs)
    fit = SeasonalFit(means, SeasonalMethod.DUMMY, tuple(panel.names), skip)
    return panel.with_values(adjusted), fit


def restrict_window(
    panel: TimeSeriesPanel, start: MonthLike, end: Optional[MonthLike] = None
) -> TimeSeriesPanel:
    """Contiguous sub-panel covering ``start..end`` (inclusive)."""
    start = parse_year_month(start)
    end = panel.end if end is None else parse_year_month(end)
    lo = month_ordinal(start) - month_ordinal(panel.start)
    hi = month_ordinal(end) - month_ordinal(panel.start)
    if hi < lo:
        raise PanelError(
            f"empty window: end {format_year_month(end)} before start {format_year_month(start)}"
        )
    if lo < 0 or hi >= panel.n_obs:
        raise PanelError(
            f"window {format_year_month(start)}..{format_year_month(end)} outside panel range "
            f"{format_year_month(panel.start)}..{format_year_month(panel.end)}"
        )
    return TimeSeriesPanel(start, panel.values[lo:hi + 1], panel.variables)
