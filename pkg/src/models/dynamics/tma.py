"""
Transmission-mechanism analysis.

A counterfactual impulse response in which the variables of a shut set Z do
not respond to a shock: at every horizon, artificial structural shocks to
the members of Z offset whatever response the system would otherwise carry
into them. The offsets solve a |Z| x |Z| lower-triangular system in the
impact sub-matrix C[Z, Z], jointly for all shut channels.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from common.exceptions import IdentificationError
from models.dynamics.irf import (
    DEFAULT_HORIZON,
    IrfResult,
    ShockRef,
    _shock_index,
    irf_bands,
)
from models.identification.svar import StructuralModel, cholesky_identify

logger = logging.getLogger(__name__)

AMPLIFICATION_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ShockSchedule:
    """Artificial shocks (…, H+1, |Z|) applied to each shut channel."""
    shock: int
    shut: Tuple[int, ...]
    artificial: np.ndarray


@dataclass(frozen=True, eq=False)
class TmaResult:
    """Baseline bands plus per-draw counterfactual responses for one shut set."""
    baseline: IrfResult
    counterfactual: np.ndarray
    schedule: ShockSchedule
    shut_names: Tuple[str, ...]

    @property
    def shut_label(self) -> str:
        return "+".join(self.shut_names)

    def to_frame(self) -> pd.DataFrame:
        """Posterior-mean baseline and counterfactual paths, levels and cumulative."""
        base = self.baseline.mean
        counter = self.counterfactual.mean(axis=0)
        H1, M = base.shape
        names = list(self.baseline.names)
        return pd.DataFrame({
            "shock": self.baseline.shock,
            "shut_set": self.shut_label,
            "response_var": np.repeat(names, H1),
            "horizon": np.tile(np.arange(H1), M),
            "baseline": base.T.ravel(),
            "counterfactual": counter.T.ravel(),
            "cumulative_baseline": np.cumsum(base, axis=0).T.ravel(),
            "cumulative_counterfactual": np.cumsum(counter, axis=0).T.ravel(),
        })


def _shut_indices(shut: Sequence[ShockRef], names: Sequence[str], n_vars: int, shock: int) -> Tuple[int, ...]:
    indices = sorted({_shock_index(z, names, n_vars) for z in shut})
    if not indices:
        raise ValueError("shut set is empty")
    if shock in indices:
        raise ValueError("the shocked variable cannot be in its own shut set")
    return tuple(indices)


def _shutdown(
    lags: np.ndarray, impact: np.ndarray, shock: int, shut: Tuple[int, ...], horizon: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Counterfactual responses (N, H+1, M) and artificial shocks (N, H+1, |Z|)."""
    N, P, M, _ = lags.shape
    Z = list(shut)
    c_zz = impact[np.ix_(Z, Z)]
    if np.any(np.abs(np.diag(c_zz)) <= np.finfo(float).eps * np.abs(impact).max()):
        raise IdentificationError(f"impact sub-matrix for shut set {Z} is singular")
    c_z = impact[:, Z]
    responses = np.zeros((N, horizon + 1, M))
    artificial = np.zeros((N, horizon + 1, len(Z)))
    for h in range(horizon + 1):
        if h == 0:
            carried = np.broadcast_to(impact[:, shock], (N, M)).copy()
        else:
            carried = np.zeros((N, M))
            for p in range(1, min(h, P) + 1):
                carried += np.einsum("nij,nj->ni", lags[:, p - 1], responses[:, h - p])
        offset = linalg.solve_triangular(c_zz, -carried[:, Z].T, lower=True).T
        responses[:, h] = carried + offset @ c_z.T
        responses[:, h, Z] = 0.0
        artificial[:, h] = offset
    return responses, artificial


def shutdown_irf(
    model: StructuralModel,
    shock: ShockRef,
    shut: Sequence[ShockRef],
    horizon: int = DEFAULT_HORIZON,
) -> Tuple[np.ndarray, ShockSchedule]:
    """(H+1, M) counterfactual responses with the shut channels held at zero."""
    j = _shock_index(shock, model.ordering, model.n_vars)
    Z = _shut_indices(shut, model.ordering, model.n_vars, j)
    responses, artificial = _shutdown(model.lags[None], model.impact, j, Z, horizon)
    return responses[0], ShockSchedule(j, Z, artificial[0])


def shutdown_bands(
    draws,
    sigma_u: np.ndarray,
    shock: ShockRef,
    shut: Sequence[ShockRef],
    horizon: int = DEFAULT_HORIZON,
) -> TmaResult:
    """Baseline IRF bands and per-draw counterfactuals for one shock and shut set."""
    baseline = irf_bands(draws, sigma_u, shock, horizon)
    impact = cholesky_identify(sigma_u)
    names = baseline.names
    j = names.index(baseline.shock)
    Z = _shut_indices(shut, names, draws.n_vars, j)
    responses, artificial = _shutdown(draws.lag_matrices, impact, j, Z, horizon)
    return TmaResult(baseline, responses, ShockSchedule(j, Z, artificial), tuple(names[z] for z in Z))


def amplification_share(baseline, counterfactual, horizon: Optional[int] = None, eps: float = AMPLIFICATION_EPS) -> float:
    """(baseline - counterfactual) / baseline, NaN when the baseline is ~0."""
    baseline = np.asarray(baseline, dtype=float)
    counterfactual = np.asarray(counterfactual, dtype=float)
    if horizon is not None:
        baseline = baseline[horizon]
        counterfactual = counterfactual[horizon]
    b, c = float(baseline), float(counterfactual)
    if abs(b) < eps:
        logger.warning("Amplification share undefined: baseline %.3e is numerically zero", b)
        return float("nan")
    return (b - c) / b


def amplification_table(results: Sequence[TmaResult], response: str, horizon: int) -> pd.DataFrame:
    """Cumulative posterior-mean responses of ``response`` at ``horizon`` and the share."""
    rows = []
    for result in results:
        k = result.baseline.names.index(response)
        base = np.cumsum(result.baseline.mean[:, k])
        counter = np.cumsum(result.counterfactual.mean(axis=0)[:, k])
        h = min(horizon, result.baseline.horizon)
        rows.append({
            "shock": result.baseline.shock,
            "shut_set": result.shut_label,
            "response_var": response,
            "horizon": h,
            "cumulative_baseline": base[h],
            "cumulative_counterfactual": counter[h],
            "share": amplification_share(base, counter, h),
        })
    return pd.DataFrame(rows)
