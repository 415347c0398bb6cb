"""
Recursive (Cholesky) identification of the structural VAR.

Reduced-form residuals and structural shocks are linked by u_t = C eps_t,
so Sigma_u = C C' with C lower triangular and a positive diagonal. The
column order of the panel is the causal ordering.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from common.exceptions import IdentificationError
from data_ingestion.panel import TimeSeriesPanel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StructuralModel:
    """One coefficient set (c, Phi_1..Phi_P, optional trend) with its impact matrix C."""
    intercept: np.ndarray
    lags: np.ndarray
    impact: np.ndarray
    ordering: Tuple[str, ...] = ()
    trend: Optional[np.ndarray] = None

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        if lags.ndim == 2:
            lags = lags[None]
        impact = np.asarray(self.impact, dtype=float)
        M = impact.shape[0]
        if impact.shape != (M, M) or lags.shape[1:] != (M, M):
            raise ValueError(f"impact {impact.shape} and lag matrices {lags.shape} are not conformable")
        if not np.allclose(impact, np.tril(impact), rtol=0.0, atol=0.0):
            raise IdentificationError("impact matrix must be lower triangular")
        if np.any(np.diag(impact) <= 0):
            raise IdentificationError("impact matrix must have a strictly positive diagonal")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "impact", impact)
        object.__setattr__(self, "intercept", np.asarray(self.intercept, dtype=float).reshape(M))
        if self.trend is not None:
            object.__setattr__(self, "trend", np.asarray(self.trend, dtype=float).reshape(M))
        object.__setattr__(self, "ordering", tuple(self.ordering))

    @property
    def n_vars(self) -> int:
        return self.impact.shape[0]

    @property
    def n_lags(self) -> int:
        return self.lags.shape[0]

    @property
    def sigma_u(self) -> np.ndarray:
        return self.impact @ self.impact.T


def cholesky_identify(sigma_u: np.ndarray) -> np.ndarray:
    """Lower-triangular C with C C' = Sigma_u and a positive diagonal."""
    sigma_u = np.asarray(sigma_u, dtype=float)
    if sigma_u.ndim != 2 or sigma_u.shape[0] != sigma_u.shape[1]:
        raise IdentificationError(f"covariance must be square, got shape {sigma_u.shape}")
    scale = max(np.abs(sigma_u).max(), np.finfo(float).tiny)
    if np.abs(sigma_u - sigma_u.T).max() > 1e-10 * scale:
        raise IdentificationError("covariance matrix is not symmetric")
    try:
        chol = linalg.cholesky(0.5 * (sigma_u + sigma_u.T), lower=True)
    except linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(0.5 * (sigma_u + sigma_u.T)).min())
        raise IdentificationError(
            f"covariance matrix is not positive definite (smallest eigenvalue {smallest:.6e})"
        ) from None
    return chol * np.sign(np.diag(chol))[None, :]


def structural_model(draws, impact: np.ndarray, index: int = 0) -> StructuralModel:
    """Pair draw ``index`` of a coefficient set with the impact matrix."""
    trend = draws.trend_coefficients
    return StructuralModel(
        intercept=draws.intercepts[index],
        lags=draws.lag_matrices[index],
        impact=impact,
        ordering=tuple(draws.names),
        trend=None if trend is None else trend[index],
    )


def structural_models(draws, sigma_u: np.ndarray) -> List[StructuralModel]:
    """One structural model per posterior draw, sharing C because Sigma_u is fixed."""
    impact = cholesky_identify(sigma_u)
    return [structural_model(draws, impact, n) for n in range(draws.n_draws)]


def recover_shocks(model: StructuralModel, residuals: np.ndarray) -> np.ndarray:
    """Structural shocks eps_t = C^{-1} u_t for a (T, M) residual array."""
    residuals = np.atleast_2d(np.asarray(residuals, dtype=float))
    return linalg.solve_triangular(model.impact, residuals.T, lower=True).T


def reduced_form_residuals(model: StructuralModel, panel: TimeSeriesPanel) -> np.ndarray:
    """In-sample residuals u_t, t = P..T-1, of the model's coefficients on ``panel``."""
    y = panel.values
    P = model.n_lags
    fitted = np.tile(model.intercept, (panel.n_obs - P, 1))
    for p in range(1, P + 1):
        fitted += y[P - p: panel.n_obs - p] @ model.lags[p - 1].T
    if model.trend is not None:
        fitted += np.arange(P, panel.n_obs, dtype=float)[:, None] * model.trend[None, :]
    return y[P:] - fitted


def apply_ordering(panel: TimeSeriesPanel, ordering: Sequence[str]) -> TimeSeriesPanel:
    """Panel with columns permuted into ``ordering``; callers re-identify afterwards."""
    return panel.reorder(ordering)


def ordering_permutation(names: Sequence[str], ordering: Sequence[str]) -> np.ndarray:
    """Index array ``perm`` with ``ordering[i] == names[perm[i]]``."""
    names = list(names)
    ordering = list(ordering)
    if sorted(names) != sorted(ordering) or len(set(ordering)) != len(ordering):
        raise IdentificationError(f"{ordering} is not a permutation of {names}")
    return np.array([names.index(n) for n in ordering])


def permute_covariance(sigma_u: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    perm = np.asarray(perm)
    return np.asarray(sigma_u)[np.ix_(perm, perm)]


def permute_draws(draws, ordering: Sequence[str]):
    """Coefficient draws expressed in a new variable ordering.

    Equivalent to re-estimating on the permuted panel: the Minnesota prior
    and the OLS covariance are both permutation-equivariant.
    """
    perm = ordering_permutation(draws.names, ordering)
    lags = draws.lag_matrices[:, :, perm][:, :, :, perm]
    intercepts = draws.intercepts[:, perm]
    trend = draws.trend_coefficients
    permuted = type(draws).from_matrices(
        intercepts, lags, None if trend is None else trend[:, perm], names=tuple(ordering)
    )
    logger.debug("Permuted %d draws into ordering %s", draws.n_draws, list(ordering))
    return permuted
