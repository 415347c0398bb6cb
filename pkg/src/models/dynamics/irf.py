"""
Companion form and impulse responses.

Responses are produced by iterating the VAR recursion
r_h = sum_p Phi_p r_{h-p} from the impact column r_0 = C e_j, vectorized
over posterior draws. Bands are pointwise quantiles across draws with
linear interpolation between order statistics.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.identification.svar import StructuralModel, cholesky_identify

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 60
DEFAULT_QUANTILES = (0.05, 0.5, 0.95)

ShockRef = Union[int, str]


@dataclass(frozen=True, eq=False)
class CompanionForm:
    """VAR(1) representation Y_t = kappa + F Y_{t-1} of a VAR(P)."""
    F: np.ndarray
    kappa: np.ndarray
    n_vars: int

    @property
    def selector(self) -> np.ndarray:
        """Rows picking y_t out of the stacked state."""
        return np.eye(self.n_vars, self.F.shape[0])

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.F)).max())


def _companion_stack(lags: np.ndarray) -> np.ndarray:
    """Companion matrices for lag arrays shaped (..., P, M, M)."""
    lags = np.asarray(lags, dtype=float)
    *batch, P, M, _ = lags.shape
    F = np.zeros((*batch, M * P, M * P))
    F[..., :M, :] = np.concatenate([lags[..., p, :, :] for p in range(P)], axis=-1)
    if P > 1:
        F[..., M:, : M * (P - 1)] = np.eye(M * (P - 1))
    return F


def companion(lags: np.ndarray, intercept: Optional[np.ndarray] = None) -> CompanionForm:
    """[Phi_1 ... Phi_P; I 0] with the intercept stacked on top of zeros."""
    lags = np.asarray(lags, dtype=float)
    if lags.ndim == 2:
        lags = lags[None]
    P, M, M2 = lags.shape
    if M != M2:
        raise ValueError(f"lag matrices must be square, got {lags.shape}")
    kappa = np.zeros(M * P)
    if intercept is not None:
        kappa[:M] = np.asarray(intercept, dtype=float).reshape(M)
    return CompanionForm(_companion_stack(lags), kappa, M)


def spectral_radius(lags: np.ndarray) -> np.ndarray:
    """Largest companion eigenvalue modulus; batched over leading axes of (..., P, M, M)."""
    F = _companion_stack(lags)
    return np.abs(np.linalg.eigvals(F)).max(axis=-1)


def _shock_index(shock: ShockRef, names: Sequence[str], n_vars: int) -> int:
    if isinstance(shock, str):
        if shock not in names:
            raise ValueError(f"unknown shock variable {shock!r}")
        return list(names).index(shock)
    index = int(shock)
    if not 0 <= index < n_vars:
        raise ValueError(f"shock index {index} out of range for {n_vars} variables")
    return index


def propagate(lags: np.ndarray, impulse: np.ndarray, horizon: int) -> np.ndarray:
    """Iterate r_h = sum_p Phi_p r_{h-p} from r_0 = impulse.

    ``lags`` is (N, P, M, M) and ``impulse`` (N, M); returns (N, H+1, M).
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    N, P, M, _ = lags.shape
    responses = np.zeros((N, horizon + 1, M))
    responses[:, 0] = impulse
    for h in range(1, horizon + 1):
        for p in range(1, min(h, P) + 1):
            responses[:, h] += np.einsum("nij,nj->ni", lags[:, p - 1], responses[:, h - p])
    return responses


def irf(model: StructuralModel, shock: ShockRef, horizon: int = DEFAULT_HORIZON, scale: float = 1.0) -> np.ndarray:
    """(H+1, M) responses to a ``scale``-standard-deviation structural shock."""
    j = _shock_index(shock, model.ordering, model.n_vars)
    impulse = scale * model.impact[:, j]
    return propagate(model.lags[None], impulse[None], horizon)[0]


def _quantile_label(q: float) -> str:
    return f"q{int(round(q * 100)):02d}"


@dataclass(frozen=True, eq=False)
class IrfResult:
    """Per-draw responses to one shock and their pointwise posterior summary."""
    responses: np.ndarray
    shock: str
    names: Tuple[str, ...]
    shock_size: float
    quantile_levels: Tuple[float, ...] = DEFAULT_QUANTILES
    is_cumulative: bool = False

    @property
    def horizon(self) -> int:
        return self.responses.shape[1] - 1

    @property
    def quantiles(self) -> np.ndarray:
        """(Q, H+1, M) pointwise quantiles across draws."""
        return np.quantile(self.responses, self.quantile_levels, axis=0, method="linear")

    @property
    def mean(self) -> np.ndarray:
        return self.responses.mean(axis=0)

    def cumulative(self) -> "IrfResult":
        """Running sums along the horizon, bands recomputed on the sums."""
        if self.is_cumulative:
            return self
        return replace(self, responses=np.cumsum(self.responses, axis=1), is_cumulative=True)

    def response(self, variable: str) -> np.ndarray:
        return self.responses[:, :, self.names.index(variable)]

    def to_frame(self) -> pd.DataFrame:
        """Long table: shock, response_var, horizon, quantile columns, mean."""
        bands = self.quantiles
        mean = self.mean
        H1, M = mean.shape
        frame = pd.DataFrame({
            "shock": self.shock,
            "response_var": np.repeat(list(self.names), H1),
            "horizon": np.tile(np.arange(H1), M),
        })
        for q, band in zip(self.quantile_levels, bands):
            frame[_quantile_label(q)] = band.T.ravel()
        frame["mean"] = mean.T.ravel()
        return frame


def irf_bands(
    draws,
    sigma_u: np.ndarray,
    shock: ShockRef,
    horizon: int = DEFAULT_HORIZON,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    scale: float = 1.0,
) -> IrfResult:
    """Responses for every draw with one common C (Sigma_u fixed)."""
    if draws.n_draws < 100:
        logger.warning("Only %d draws; 5/95%% bands will be unstable", draws.n_draws)
    impact = cholesky_identify(sigma_u)
    names = tuple(draws.names) or tuple(f"y{j}" for j in range(draws.n_vars))
    j = _shock_index(shock, names, draws.n_vars)
    impulse = np.broadcast_to(scale * impact[:, j], (draws.n_draws, draws.n_vars))
    responses = propagate(draws.lag_matrices, impulse, horizon)
    return IrfResult(
        responses=responses,
        shock=names[j],
        names=names,
        shock_size=float(scale * impact[j, j]),
        quantile_levels=tuple(float(q) for q in quantiles),
    )


def cumulative(result: IrfResult) -> IrfResult:
    return result.cumulative()
