"""
Forecast Engine

Iterated forecasts from posterior coefficient draws: unconditional paths,
hard-conditioned paths that follow externally supplied trajectories,
frozen-channel paths that hold selected variables at fixed levels, the
in-sample deterministic component and first-crossing dates of a threshold.

Conditioning back-solves the conditioned variables' own structural shocks
at every step (exactly identified case), so every draw reproduces the
target paths exactly.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from common.exceptions import ScenarioError
from common.rng import STREAM_FORECAST, task_rng
from data_ingestion.panel import (
    MonthLike,
    TimeSeriesPanel,
    YearMonth,
    format_year_month,
    month_ordinal,
    month_range,
    parse_year_month,
    shift_month,
)

logger = logging.getLogger(__name__)

FAN_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
CROSSING_QUANTILES = (0.05, 0.5, 0.95)


class ShockMode(Enum):
    """Whether forecasts add sampled structural shocks or follow the mean path."""
    ZERO = "zero"
    SAMPLED = "sampled"

    @classmethod
    def parse(cls, value: Union[str, "ShockMode"]) -> "ShockMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown shock mode {value!r}; choose 'zero' or 'sampled'") from None


@dataclass(frozen=True, eq=False)
class ForecastOrigin:
    """The P observations a forecast starts from (oldest first)."""
    values: np.ndarray
    next_date: YearMonth
    next_index: int
    names: Tuple[str, ...]

    @property
    def n_lags(self) -> int:
        return self.values.shape[0]


def forecast_origin(panel: TimeSeriesPanel, lags: int, at_start: bool = False) -> ForecastOrigin:
    """Last P rows of ``panel`` (or its first P rows when ``at_start``)."""
    if panel.n_obs < lags:
        raise ScenarioError(f"panel has {panel.n_obs} observations, need {lags} initial values")
    if at_start:
        values, next_index = panel.values[:lags], lags
    else:
        values, next_index = panel.values[-lags:], panel.n_obs
    return ForecastOrigin(np.array(values), shift_month(panel.start, next_index), next_index, tuple(panel.names))


@dataclass(frozen=True, eq=False)
class ConditionPath:
    """A target trajectory for one variable starting at the first forecast month."""
    variable: str
    values: np.ndarray
    start: MonthLike
    mode: str = "hard"

    def __post_init__(self):
        if self.mode != "hard":
            raise ValueError(f"only hard conditioning is supported, got {self.mode!r}")
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise ValueError(f"condition path for {self.variable!r} must be non-empty and finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start", parse_year_month(self.start))

    @property
    def end(self) -> YearMonth:
        return shift_month(self.start, self.values.size - 1)


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    """Simulated paths (N, H, M) with the structural shocks that produced them."""
    paths: np.ndarray
    start: YearMonth
    names: Tuple[str, ...]
    shocks: np.ndarray
    conditioned: Tuple[str, ...] = ()
    label: str = "unconditional"

    @property
    def horizon(self) -> int:
        return self.paths.shape[1]

    @property
    def n_draws(self) -> int:
        return self.paths.shape[0]

    @property
    def dates(self) -> List[YearMonth]:
        return month_range(self.start, self.horizon)

    @property
    def months(self) -> np.ndarray:
        return (self.start[1] - 1 + np.arange(self.horizon)) % 12 + 1

    def variable(self, name: str) -> np.ndarray:
        if name not in self.names:
            raise ScenarioError(f"unknown variable {name!r}")
        return self.paths[:, :, self.names.index(name)]

    def quantiles(self, levels: Sequence[float] = FAN_QUANTILES) -> np.ndarray:
        """(Q, H, M) pointwise quantiles across draws."""
        return np.quantile(self.paths, levels, axis=0, method="linear")

    def fan_frame(self, levels: Sequence[float] = FAN_QUANTILES) -> pd.DataFrame:
        """Long table: date, variable, one column per quantile, mean."""
        bands = self.quantiles(levels)
        mean = self.paths.mean(axis=0)
        H, M = mean.shape
        frame = pd.DataFrame({
            "scenario": self.label,
            "date": np.tile([format_year_month(d) for d in self.dates], M),
            "variable": np.repeat(list(self.names), H),
        })
        for q, band in zip(levels, bands):
            frame[f"q{int(round(q * 100)):02d}"] = band.T.ravel()
        frame["mean"] = mean.T.ravel()
        return frame


# --- Simulation core ---

def _draw_shocks(n_draws: int, horizon: int, n_vars: int, seed: int) -> np.ndarray:
    shocks = np.empty((n_draws, horizon, n_vars))
    for d in range(n_draws):
        shocks[d] = task_rng(seed, STREAM_FORECAST, d).standard_normal((horizon, n_vars))
    return shocks


def _simulate(
    draws,
    origin: ForecastOrigin,
    horizon: int,
    impact: Optional[np.ndarray],
    shock_mode: ShockMode,
    seed: Optional[int],
    targets: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Forward iteration; ``targets`` is (H, M) with NaN where unconstrained."""
    if horizon < 1:
        raise ValueError(f"forecast horizon must be >= 1, got {horizon}")
    M, P, N = draws.n_vars, draws.n_lags, draws.n_draws
    if origin.values.shape != (P, M):
        raise ScenarioError(f"origin has shape {origin.values.shape}, model needs ({P}, {M})")
    if impact is None:
        if shock_mode is ShockMode.SAMPLED or targets is not None:
            raise ScenarioError("an impact matrix is required for sampled or conditioned forecasts")
        impact = np.eye(M)

    lags = draws.lag_matrices
    intercepts = draws.intercepts
    trend = draws.trend_coefficients
    if shock_mode is ShockMode.SAMPLED:
        shocks = _draw_shocks(N, horizon, M, seed)
    else:
        shocks = np.zeros((N, horizon, M))

    history = np.broadcast_to(origin.values[::-1], (N, P, M)).copy()
    paths = np.empty((N, horizon, M))
    for h in range(horizon):
        mean = intercepts.copy()
        for p in range(P):
            mean += np.einsum("nij,nj->ni", lags[:, p], history[:, p])
        if trend is not None:
            mean += trend * float(origin.next_index + h)

        step_targets = None if targets is None else targets[h]
        if step_targets is not None and np.isfinite(step_targets).any():
            Z = np.flatnonzero(np.isfinite(step_targets))
            free = np.flatnonzero(~np.isfinite(step_targets))
            gap = step_targets[Z][None, :] - mean[:, Z]
            if free.size:
                gap -= shocks[:, h, free] @ impact[np.ix_(Z, free)].T
            shocks[:, h, Z] = linalg.solve_triangular(impact[np.ix_(Z, Z)], gap.T, lower=True).T
            y = mean + shocks[:, h] @ impact.T
            y[:, Z] = step_targets[Z]
        else:
            y = mean + shocks[:, h] @ impact.T
        paths[:, h] = y
        history[:, 1:] = history[:, :-1]
        history[:, 0] = y
    return paths, shocks


def _check_impact(impact: np.ndarray, conditioned: Sequence[int]) -> None:
    diag = np.abs(np.diag(impact))[list(conditioned)]
    if np.any(diag <= np.finfo(float).eps * np.abs(impact).max()):
        raise ScenarioError("restricted impact sub-matrix is singular")


# --- Operations ---

def unconditional_forecast(
    draws,
    origin: ForecastOrigin,
    horizon: int,
    impact: Optional[np.ndarray] = None,
    shock_mode: Union[str, ShockMode] = ShockMode.ZERO,
    seed: Optional[int] = None,
) -> ScenarioResult:
    """Iterate every draw forward ``horizon`` months from ``origin``."""
    mode = ShockMode.parse(shock_mode)
    paths, shocks = _simulate(draws, origin, horizon, impact, mode, seed)
    logger.info("Unconditional forecast: %d draws x %d months (%s shocks)", draws.n_draws, horizon, mode.value)
    return ScenarioResult(paths, origin.next_date, tuple(origin.names), shocks)


def _condition_targets(
    conditions: Sequence[ConditionPath], origin: ForecastOrigin, horizon: int
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    names = list(origin.names)
    variables = [c.variable for c in conditions]
    if len(set(variables)) != len(variables):
        raise ScenarioError(f"conditioned variables must be distinct, got {variables}")
    if len(variables) > len(names):
        raise ScenarioError("more conditions than variables")
    targets = np.full((horizon, len(names)), np.nan)
    for cond in conditions:
        if cond.variable not in names:
            raise ScenarioError(f"unknown conditioned variable {cond.variable!r}")
        if cond.start != origin.next_date:
            raise ScenarioError(
                f"condition on {cond.variable} starts {format_year_month(cond.start)}, "
                f"forecast starts {format_year_month(origin.next_date)}"
            )
        if cond.values.size < horizon:
            raise ScenarioError(
                f"condition on {cond.variable} covers {cond.values.size} months, horizon is {horizon}"
            )
        targets[:, names.index(cond.variable)] = cond.values[:horizon]
    return targets, tuple(variables)


def conditional_forecast(
    draws,
    origin: ForecastOrigin,
    conditions: Sequence[ConditionPath],
    horizon: int,
    impact: np.ndarray,
    shock_mode: Union[str, ShockMode] = ShockMode.ZERO,
    seed: Optional[int] = None,
    label: str = "conditional",
) -> ScenarioResult:
    """Forecast in which every conditioned variable follows its target path exactly."""
    mode = ShockMode.parse(shock_mode)
    targets, conditioned = _condition_targets(conditions, origin, horizon)
    _check_impact(impact, [origin.names.index(v) for v in conditioned])
    paths, shocks = _simulate(draws, origin, horizon, impact, mode, seed, targets)
    logger.info("Conditional forecast %r on %s: %d draws x %d months", label, list(conditioned), draws.n_draws, horizon)
    return ScenarioResult(paths, origin.next_date, tuple(origin.names), shocks, conditioned, label)


def frozen_channel_forecast(
    draws,
    origin: ForecastOrigin,
    conditions: Sequence[ConditionPath],
    frozen: Mapping[str, float],
    horizon: int,
    impact: np.ndarray,
    shock_mode: Union[str, ShockMode] = ShockMode.ZERO,
    seed: Optional[int] = None,
    label: str = "frozen",
) -> ScenarioResult:
    """Conditional forecast with ``frozen`` variables held at constant levels."""
    overlap = set(frozen) & {c.variable for c in conditions}
    if overlap:
        raise ScenarioError(f"variables both frozen and conditioned: {sorted(overlap)}")
    stacked = list(conditions) + [
        ConditionPath(name, np.full(horizon, float(level)), origin.next_date)
        for name, level in frozen.items()
    ]
    return conditional_forecast(draws, origin, stacked, horizon, impact, shock_mode, seed, label)


def deterministic_component(draws, origin: ForecastOrigin, span: int) -> ScenarioResult:
    """Zero-shock iteration from ``origin`` over ``span`` months (the model-implied trend)."""
    paths, shocks = _simulate(draws, origin, span, None, ShockMode.ZERO, None)
    return ScenarioResult(paths, origin.next_date, tuple(origin.names), shocks, label="deterministic")


def freeze_levels(deterministic: ScenarioResult, variables: Sequence[str], at: Optional[MonthLike] = None) -> Dict[str, float]:
    """Posterior-mean deterministic component of ``variables`` at ``at`` (default: last month)."""
    if at is None:
        k = deterministic.horizon - 1
    else:
        k = month_ordinal(parse_year_month(at)) - month_ordinal(deterministic.start)
        if not 0 <= k < deterministic.horizon:
            raise ScenarioError(f"{at} lies outside the deterministic span")
    return {v: float(deterministic.variable(v)[:, k].mean()) for v in variables}


# --- Threshold crossings ---

@dataclass(frozen=True, eq=False)
class CrossingResult:
    """Per-draw index of the first month a path satisfies the threshold inequality (-1: never)."""
    variable: str
    threshold: float
    direction: str
    horizon_index: np.ndarray
    dates: Tuple[YearMonth, ...]
    month: Optional[int] = None
    label: str = "unconditional"

    @property
    def never(self) -> np.ndarray:
        return self.horizon_index < 0

    @property
    def share_never(self) -> float:
        return float(self.never.mean())

    def ordinals(self) -> np.ndarray:
        """Month ordinals of the crossings, +inf for draws that never cross."""
        base = month_ordinal(self.dates[0])
        return np.where(self.never, np.inf, base + self.horizon_index.astype(float))

    def quantile_dates(self, levels: Sequence[float] = CROSSING_QUANTILES) -> List[Optional[YearMonth]]:
        """Crossing-date quantiles; None when the quantile falls among never-crossing draws."""
        values = np.quantile(self.ordinals(), levels, method="inverted_cdf")
        base = month_ordinal(self.dates[0])
        return [None if not np.isfinite(v) else self.dates[int(v) - base] for v in values]

    def to_frame(self, levels: Sequence[float] = CROSSING_QUANTILES) -> pd.DataFrame:
        row = {
            "scenario": self.label,
            "variable": self.variable,
            "threshold": self.threshold,
            "direction": self.direction,
            "month": self.month if self.month is not None else 0,
        }
        for q, date in zip(levels, self.quantile_dates(levels)):
            row[f"q{int(round(q * 100)):02d}"] = "never" if date is None else format_year_month(date)
        row["share_never"] = self.share_never
        return pd.DataFrame([row])


def first_crossing(
    result: ScenarioResult,
    variable: str,
    threshold: float,
    direction: str = "le",
    month: Optional[int] = None,
    offset: float = 0.0,
) -> CrossingResult:
    """First horizon (optionally restricted to one calendar month) where the path crosses.

    ``offset`` is added to the paths first, e.g. the seasonal level removed
    during deseasonalization.
    """
    if direction not in ("le", "ge"):
        raise ValueError(f"direction must be 'le' or 'ge', got {direction!r}")
    if month is not None and not 1 <= month <= 12:
        raise ValueError(f"month must be in 1..12, got {month}")
    series = result.variable(variable) + offset
    columns = np.arange(result.horizon)
    if month is not None:
        columns = columns[result.months == month]
    if columns.size == 0:
        index = np.full(result.n_draws, -1)
    else:
        hit = series[:, columns] <= threshold if direction == "le" else series[:, columns] >= threshold
        index = np.where(hit.any(axis=1), columns[np.argmax(hit, axis=1)], -1)
    return CrossingResult(variable, float(threshold), direction, index.astype(int), tuple(result.dates), month, result.label)
