"""
Basic Structural Model (Stochastic Deseasonalization)

Each series is decomposed as

    y_t  = mu_t + gamma_t + eta_t
    mu_t = mu_{t-1} + beta_{t-1} + u_t          (stochastic trend)
    beta_t = beta_{t-1} + v_t                   (stochastic drift)
    gamma_t = -sum_{m=1}^{s-1} gamma_{t-m} + w_t (stochastic seasonal)

cast in state-space form with state (mu, beta, gamma_t, ..., gamma_{t-s+2}).
Variances are estimated by maximum likelihood (prediction-error
decomposition), components by a fixed-interval smoother. The diffuse
initial state is approximated by a large finite variance.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import optimize

from common.exceptions import BsmError, PanelError
from common.rng import STREAM_SIMULATION, task_rng
from data_ingestion.panel import (
    SeasonalFit,
    SeasonalMethod,
    TimeSeriesPanel,
    YearMonth,
    format_year_month,
    month_range,
)

logger = logging.getLogger(__name__)

DIFFUSE_SCALE = 1e7
VARIANCE_FLOOR = 1e-12
LOG2PI = np.log(2.0 * np.pi)

# Start values (relative to the standardized series) for the optimizer
_DEFAULT_START = np.log([0.5, 0.1, 1e-4, 1e-3])
DEFAULT_STARTS = 3
# L-BFGS-B status for a failed line search
_ABNORMAL = 2


class SyntheticMode(Enum):
    """How a month's seasonal level is added back to the trend."""
    STATIC = "static"
    EVOLVING = "evolving"


@dataclass(frozen=True)
class BsmSpec:
    """Disturbance variances of the structural model."""
    noise_var: float
    level_var: float
    drift_var: float
    seasonal_var: float
    period: int = 12

    def __post_init__(self):
        variances = self.as_array()
        if not np.all(np.isfinite(variances)) or np.any(variances < 0):
            raise ValueError(f"variances must be finite and non-negative, got {variances}")
        if not np.any(variances > 0):
            raise ValueError("at least one variance must be strictly positive")
        if int(self.period) != self.period or self.period < 2:
            raise ValueError(f"seasonal period must be an integer >= 2, got {self.period}")

    @property
    def state_dim(self) -> int:
        return 2 + (self.period - 1)

    def as_array(self) -> np.ndarray:
        return np.array([self.noise_var, self.level_var, self.drift_var, self.seasonal_var], dtype=float)

    def scaled(self, factor: float) -> "BsmSpec":
        """All variances multiplied by ``factor``."""
        return BsmSpec(*(self.as_array() * factor), period=self.period)


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """Time-invariant univariate state-space system."""
    transition: np.ndarray
    design: np.ndarray
    state_cov: np.ndarray
    obs_var: float

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True, eq=False)
class FilterResult:
    """Kalman filter output; ``gains`` are the predictive gains T P Z' / F."""
    predicted_state: np.ndarray
    predicted_cov: np.ndarray
    filtered_state: np.ndarray
    filtered_cov: np.ndarray
    innovations: np.ndarray
    innovation_var: np.ndarray
    gains: np.ndarray
    loglik: float


@dataclass(frozen=True, eq=False)
class BsmComponents:
    """Smoothed components; ``noise`` is the smoother residual."""
    trend: np.ndarray
    drift: np.ndarray
    seasonal: np.ndarray
    noise: np.ndarray
    loglik: float
    start: Optional[YearMonth] = None
    state_cov: Optional[np.ndarray] = None

    @property
    def n_obs(self) -> int:
        return len(self.trend)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "trend": self.trend,
            "drift": self.drift,
            "seasonal": self.seasonal,
            "noise": self.noise,
        })
        if self.start is not None:
            frame.insert(0, "date", [format_year_month(d) for d in month_range(self.start, self.n_obs)])
        return frame


# --- State space ---

def build_state_space(spec: BsmSpec) -> StateSpaceSystem:
    """Transition, observation vector and state covariance of the model."""
    k = spec.state_dim
    s = spec.period
    transition = np.zeros((k, k))
    transition[0, 0] = 1.0
    transition[0, 1] = 1.0
    transition[1, 1] = 1.0
    transition[2, 2:] = -1.0
    for lag in range(s - 2):
        transition[3 + lag, 2 + lag] = 1.0
    design = np.zeros(k)
    design[0] = 1.0
    design[2] = 1.0
    state_cov = np.zeros((k, k))
    state_cov[0, 0] = spec.level_var
    state_cov[1, 1] = spec.drift_var
    state_cov[2, 2] = spec.seasonal_var
    return StateSpaceSystem(transition, design, state_cov, float(spec.noise_var))


def _series_scale(series: np.ndarray) -> float:
    variance = float(np.var(series))
    if variance > 0:
        return variance
    return max(float(np.mean(series ** 2)), 1.0)


def _as_series(series) -> np.ndarray:
    y = np.asarray(series, dtype=float).ravel()
    if y.size == 0:
        raise BsmError("empty series")
    if not np.all(np.isfinite(y)):
        raise BsmError("series contains non-finite values")
    return y


def kalman_filter(
    system: StateSpaceSystem,
    series,
    diffuse_scale: float = DIFFUSE_SCALE,
) -> FilterResult:
    """Kalman filter with an approximately diffuse initial state.

    The initial covariance is ``diffuse_scale`` times the series variance on
    every state. The log-likelihood sums all prediction-error terms.
    """
    y = _as_series(series)
    n, k = y.size, system.state_dim
    T, Z, Q, H = system.transition, system.design, system.state_cov, system.obs_var

    scale = _series_scale(y)
    F_floor = VARIANCE_FLOOR * scale
    a = np.zeros(k)
    P = np.eye(k) * diffuse_scale * scale
    a_pred = np.empty((n, k))
    P_pred = np.empty((n, k, k))
    a_filt = np.empty((n, k))
    P_filt = np.empty((n, k, k))
    v = np.empty(n)
    F = np.empty(n)
    gains = np.empty((n, k))
    loglik = 0.0

    for t in range(n):
        a_pred[t] = a
        P_pred[t] = P
        v[t] = y[t] - Z @ a
        PZ = P @ Z
        F[t] = Z @ PZ + H
        if not np.isfinite(F[t]):
            raise BsmError(f"non-finite innovation variance {F[t]!r} at t={t}")
        # rounding can push a near-deterministic F below zero
        F[t] = max(F[t], F_floor)
        a_f = a + PZ * (v[t] / F[t])
        P_f = P - np.outer(PZ, PZ) / F[t]
        P_f = 0.5 * (P_f + P_f.T)
        a_filt[t] = a_f
        P_filt[t] = P_f
        gains[t] = T @ PZ / F[t]
        a = T @ a_f
        P = T @ P_f @ T.T + Q
        P = 0.5 * (P + P.T)
        loglik -= 0.5 * (LOG2PI + np.log(F[t]) + v[t] ** 2 / F[t])

    return FilterResult(a_pred, P_pred, a_filt, P_filt, v, F, gains, float(loglik))


def _filter_loglik(system: StateSpaceSystem, y: np.ndarray, diffuse_scale: float) -> float:
    # Same recursion as kalman_filter without storing the path
    T, Z, Q, H = system.transition, system.design, system.state_cov, system.obs_var
    k = system.state_dim
    scale = _series_scale(y)
    F_floor = VARIANCE_FLOOR * scale
    a = np.zeros(k)
    P = np.eye(k) * diffuse_scale * scale
    loglik = 0.0
    for obs in y:
        PZ = P @ Z
        F = Z @ PZ + H
        if not np.isfinite(F):
            raise BsmError(f"non-finite innovation variance {F!r}")
        F = max(F, F_floor)
        v = obs - Z @ a
        a = T @ (a + PZ * (v / F))
        P_f = P - np.outer(PZ, PZ) / F
        P = T @ P_f @ T.T + Q
        P = 0.5 * (P + P.T)
        loglik -= 0.5 * (LOG2PI + np.log(F) + v * v / F)
    return float(loglik)


def _clip_psd(matrix: np.ndarray) -> np.ndarray:
    sym = 0.5 * (matrix + matrix.T)
    eigval, eigvec = np.linalg.eigh(sym)
    if eigval.min() >= 0.0:
        return sym
    clipped = (eigvec * np.clip(eigval, 0.0, None)) @ eigvec.T
    return 0.5 * (clipped + clipped.T)


def kalman_smoother(
    system: StateSpaceSystem,
    series,
    start: Optional[YearMonth] = None,
    diffuse_scale: float = DIFFUSE_SCALE,
) -> BsmComponents:
    """Fixed-interval smoother (backward state-smoothing recursion).

    Smoothed covariances are symmetrized and clipped to the PSD cone.
    """
    y = _as_series(series)
    filt = kalman_filter(system, y, diffuse_scale=diffuse_scale)
    n, k = y.size, system.state_dim
    T, Z = system.transition, system.design

    r = np.zeros(k)
    N = np.zeros((k, k))
    states = np.empty((n, k))
    covs = np.empty((n, k, k))
    ZZ = np.outer(Z, Z)
    for t in range(n - 1, -1, -1):
        F_inv = 1.0 / filt.innovation_var[t]
        L = T - np.outer(filt.gains[t], Z)
        r = Z * (filt.innovations[t] * F_inv) + L.T @ r
        N = ZZ * F_inv + L.T @ N @ L
        N = 0.5 * (N + N.T)
        P = filt.predicted_cov[t]
        states[t] = filt.predicted_state[t] + P @ r
        covs[t] = _clip_psd(P - P @ N @ P)

    trend = states[:, 0].copy()
    seasonal = states[:, 2].copy()
    noise = y - trend - seasonal
    return BsmComponents(
        trend=trend,
        drift=states[:, 1].copy(),
        seasonal=seasonal,
        noise=noise,
        loglik=filt.loglik,
        start=start,
        state_cov=covs,
    )


# --- Estimation ---

def bsm_loglik(spec: BsmSpec, series, diffuse_scale: float = DIFFUSE_SCALE) -> float:
    """Gaussian log-likelihood of ``series`` under ``spec``."""
    return _filter_loglik(build_state_space(spec), _as_series(series), diffuse_scale)


def estimate_bsm(
    series,
    period: int = 12,
    start: Optional[YearMonth] = None,
    n_starts: int = DEFAULT_STARTS,
    seed: int = 0,
    max_iter: int = 500,
    diffuse_scale: float = DIFFUSE_SCALE,
) -> Tuple[BsmSpec, BsmComponents]:
    """Maximum-likelihood variances and the smoothed components at the optimum.

    The search runs in log-variance space on the standardized series with
    L-BFGS-B (numerical gradients); variances are bounded below by
    ``1e-12`` times the series variance. Extra random starts are drawn from
    the ``(seed, n)`` stream and the best optimum is kept. A start that ends
    abnormally (failed line search) is restarted once from where it stopped.
    """
    y = _as_series(series)
    n = y.size
    if n < 3 * period:
        raise BsmError(f"need at least {3 * period} observations, got {n}")

    sd = float(np.std(y))
    if sd == 0.0:
        logger.info("Constant series; variances set to the lower bound")
        floor = VARIANCE_FLOOR * max(float(np.mean(y ** 2)), 1.0)
        spec = BsmSpec(floor, floor, floor, floor, period=period)
        zeros = np.zeros(n)
        # Exact fit: past the diffuse start-up every prediction error is zero at the floor variance
        settled = max(n - spec.state_dim, 0)
        components = BsmComponents(
            trend=y.copy(), drift=zeros, seasonal=zeros.copy(), noise=zeros.copy(),
            loglik=float(-0.5 * settled * (LOG2PI + np.log(floor))), start=start,
        )
        return spec, components

    z = (y - y.mean()) / sd
    lower = np.log(VARIANCE_FLOOR)
    bounds = [(lower, np.log(100.0))] * 4

    def objective(theta: np.ndarray) -> float:
        spec = BsmSpec(*np.exp(theta), period=period)
        try:
            return -_filter_loglik(build_state_space(spec), z, diffuse_scale) / n
        except BsmError:
            return np.inf

    starts = [_DEFAULT_START]
    if n_starts > 1:
        rng = task_rng(seed, STREAM_SIMULATION, n)
        starts += [rng.uniform(np.log(1e-6), 0.0, size=4) for _ in range(n_starts - 1)]

    def search(theta0: np.ndarray) -> optimize.OptimizeResult:
        return optimize.minimize(
            objective,
            theta0,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter, "ftol": 1e-8 / n, "gtol": 1e-9},
        )

    best = None
    for k, theta0 in enumerate(starts):
        result = search(theta0)
        if result.status == _ABNORMAL and np.isfinite(result.fun):
            retry = search(result.x)
            logger.debug("BSM start %d restarted after %s: status=%s", k, result.message, retry.status)
            if np.isfinite(retry.fun) and retry.fun <= result.fun:
                result = retry
        logger.debug("BSM start %d: status=%s nit=%s loglik=%.6f", k, result.status, result.nit, -result.fun * n)
        if result.status == 1 or not np.isfinite(result.fun):
            continue
        if result.status != 0:
            logger.warning("BSM optimizer stopped early (%s); keeping the last iterate", result.message)
        if best is None or result.fun < best.fun:
            best = result
    if best is None:
        raise BsmError(f"likelihood maximization did not converge within {max_iter} iterations")

    spec = BsmSpec(*(np.exp(best.x) * sd ** 2), period=period)
    components = kalman_smoother(build_state_space(spec), y, start=start, diffuse_scale=diffuse_scale)
    logger.info(
        "BSM fit: noise=%.3g level=%.3g drift=%.3g seasonal=%.3g loglik=%.3f",
        spec.noise_var, spec.level_var, spec.drift_var, spec.seasonal_var, components.loglik,
    )
    return spec, components


def simulate_bsm(
    spec: BsmSpec,
    n_obs: int,
    rng: np.random.Generator,
    level: float = 0.0,
    drift: float = 0.0,
    seasonal: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Draw a series and its true components from the model."""
    s = spec.period
    gammas = list(np.zeros(s - 1) if seasonal is None else np.asarray(seasonal, dtype=float)[: s - 1])
    sd = np.sqrt(spec.as_array())
    y = np.empty(n_obs)
    parts = {k: np.empty(n_obs) for k in ("trend", "drift", "seasonal", "noise")}
    mu, beta = level, drift
    for t in range(n_obs):
        if t > 0:
            mu = mu + beta + sd[1] * rng.standard_normal()
            beta = beta + sd[2] * rng.standard_normal()
            gamma = -sum(gammas) + sd[3] * rng.standard_normal()
            gammas = [gamma] + gammas[:-1]
        eta = sd[0] * rng.standard_normal()
        parts["trend"][t], parts["drift"][t] = mu, beta
        parts["seasonal"][t], parts["noise"][t] = gammas[0], eta
        y[t] = mu + gammas[0] + eta
    return y, parts


# --- Synthetic months ---

def _calendar(start: YearMonth, n_obs: int) -> Tuple[np.ndarray, np.ndarray]:
    dates = month_range(start, n_obs)
    return np.array([d[0] for d in dates]), np.array([d[1] for d in dates])


def synthetic_month(
    components: BsmComponents,
    month: int,
    mode: Union[SyntheticMode, str] = SyntheticMode.STATIC,
    start: Optional[YearMonth] = None,
) -> pd.Series:
    """One value per year: the trend plus the chosen month's seasonal level.

    ``static`` adds the time-average of that month's smoothed seasonal;
    ``evolving`` adds the year-specific smoothed seasonal of that month.
    """
    if not 1 <= int(month) <= 12:
        raise ValueError(f"month must be in 1..12, got {month}")
    mode = SyntheticMode(mode)
    start = start or components.start
    if start is None:
        raise ValueError("components carry no start date; pass start=")
    years, months = _calendar(start, components.n_obs)
    mask = months == month
    if not mask.any():
        raise ValueError(f"no observations fall in month {month}")
    if mode is SyntheticMode.STATIC:
        values = components.trend[mask] + components.seasonal[mask].mean()
    else:
        values = components.trend[mask] + components.seasonal[mask]
    return pd.Series(values, index=pd.Index(years[mask], name="year"), name=f"month_{int(month):02d}")


def _evolving_offsets(components: BsmComponents, start: YearMonth, month: int) -> np.ndarray:
    # Seasonal of the target month in the same calendar year; nearest year when absent
    years, months = _calendar(start, components.n_obs)
    mask = months == month
    available = years[mask]
    seasonal_by_year = components.seasonal[mask]
    nearest = np.abs(years[:, None] - available[None, :]).argmin(axis=1)
    return seasonal_by_year[nearest]


def deseason_bsm(
    panel: TimeSeriesPanel,
    mode: Union[SeasonalMethod, str] = SeasonalMethod.BSM_STATIC,
    month: Optional[int] = None,
    skip: Iterable[str] = (),
    max_workers: Optional[int] = None,
    **estimate_kwargs,
) -> Tuple[TimeSeriesPanel, SeasonalFit, Dict[str, Tuple[BsmSpec, BsmComponents]]]:
    """Replace each series by its BSM trend, optionally shifted to a synthetic month.

    Series are fitted independently (in parallel when ``max_workers`` > 1).
    """
    mode = SeasonalMethod.parse(mode)
    if mode is SeasonalMethod.DUMMY:
        raise PanelError("deseason_bsm handles the bsm-static and bsm-evolving methods only")
    if mode is SeasonalMethod.BSM_EVOLVING and month is None:
        raise PanelError("the evolving synthetic-month method needs a target month")
    if month is not None and not 1 <= int(month) <= 12:
        raise PanelError(f"month must be in 1..12, got {month}")
    skip = tuple(skip)
    for name in skip:
        panel.index_of(name)

    names = [n for n in panel.names if n not in skip]

    def fit(name: str) -> Tuple[BsmSpec, BsmComponents]:
        logger.info("Fitting BSM for %s", name)
        return estimate_bsm(panel.column(name), start=panel.start, **estimate_kwargs)

    if max_workers and max_workers > 1:
        fits = Parallel(n_jobs=max_workers, prefer="threads")(delayed(fit)(name) for name in names)
    else:
        fits = [fit(name) for name in names]
    results = dict(zip(names, fits))

    months = panel.months
    means = np.zeros((12, panel.n_vars))
    adjusted = np.array(panel.values, copy=True)
    for name, (_, comp) in results.items():
        j = panel.index_of(name)
        for m in range(1, 13):
            mask = months == m
            if mask.any():
                means[m - 1, j] = comp.seasonal[mask].mean()
        if month is None:
            adjusted[:, j] = comp.trend
        elif mode is SeasonalMethod.BSM_STATIC:
            adjusted[:, j] = comp.trend + means[month - 1, j]
        else:
            adjusted[:, j] = comp.trend + _evolving_offsets(comp, panel.start, month)

    fit_summary = SeasonalFit(means, mode, tuple(panel.names), skip, adjusted_month=month)
    return panel.with_values(adjusted), fit_summary, results


def components_frame(results: Dict[str, Tuple[BsmSpec, BsmComponents]]) -> pd.DataFrame:
    """Long table (variable, date, trend, drift, seasonal, noise) for all fitted series."""
    frames = []
    for name, (_, comp) in results.items():
        frame = comp.to_frame()
        frame.insert(0, "variable", name)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["variable", "date", "trend", "drift", "seasonal", "noise"])
    return pd.concat(frames, ignore_index=True)
