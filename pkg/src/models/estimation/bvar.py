"""
Bayesian VAR with a Minnesota Prior and Fixed Residual Covariance

The reduced form is y_t = c + sum_p Phi_p y_{t-p} (+ g t) + u_t with
u_t ~ N(0, Sigma_u). Sigma_u is fixed at its OLS estimate, so the
coefficient posterior is Gaussian in closed form and so is the marginal
likelihood used to choose the prior tightness on a grid.

Coefficients are stacked as beta = vec([Phi_1 ... Phi_P c (g)]'), i.e.
equation by equation, each equation listing lag-1 regressors first and the
deterministic terms last.
"""
import itertools
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg

from common.exceptions import BvarError
from common.rng import STREAM_POSTERIOR, task_rng
from data_ingestion.panel import TimeSeriesPanel
from models.dynamics.irf import spectral_radius

logger = logging.getLogger(__name__)

LOG2PI = np.log(2.0 * np.pi)
# Residual scales at or below this fraction of the series level count as zero
SCALE_TOLERANCE = np.sqrt(np.finfo(float).eps)

# Default search grid; lambda1 spans [0.05, 1]
DEFAULT_GRID = {
    "b_ar": (0.5, 0.7, 0.9, 1.0),
    "lambda1": (0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0),
    "lambda2": (0.25, 0.5, 1.0),
    "lambda3": (1.0, 1.5, 2.0, 3.0),
    "lambda4": (100.0,),
}


# --- Domain types ---

@dataclass(frozen=True)
class MinnesotaHyper:
    """Prior hyperparameters and lag order."""
    b_ar: float = 0.9
    lambda1: float = 0.3
    lambda2: float = 0.5
    lambda3: float = 1.5
    lambda4: float = 100.0
    lags: int = 12

    def __post_init__(self):
        if not 0.0 <= self.b_ar <= 1.0:
            raise ValueError(f"b_ar must lie in [0, 1], got {self.b_ar}")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if int(self.lags) != self.lags or self.lags < 1:
            raise ValueError(f"lag order must be an integer >= 1, got {self.lags}")

    def as_dict(self) -> Dict[str, float]:
        return {
            "b_ar": self.b_ar, "lambda1": self.lambda1, "lambda2": self.lambda2,
            "lambda3": self.lambda3, "lambda4": self.lambda4, "lags": int(self.lags),
        }


@dataclass(frozen=True, eq=False)
class VarDesign:
    """Regression matrices Y (n x M) and X (n x K) of a VAR(P)."""
    Y: np.ndarray
    X: np.ndarray
    lags: int
    trend: bool
    first_row: int

    @property
    def n_obs(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True, eq=False)
class MinnesotaPrior:
    """Gaussian prior N(mean, diag(variance)) on the stacked coefficients."""
    mean: np.ndarray
    variance: np.ndarray
    scales: np.ndarray
    hyper: MinnesotaHyper
    n_vars: int
    trend: bool = False

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass(frozen=True, eq=False)
class BvarPosterior:
    """Closed-form Gaussian posterior of the stacked coefficients."""
    beta_mean: np.ndarray
    beta_cov: np.ndarray
    sigma_u: np.ndarray
    hyper: MinnesotaHyper
    xtx: np.ndarray
    xty: np.ndarray
    yty: np.ndarray
    n_obs: int
    log_marginal: float
    precision_chol: np.ndarray
    n_vars: int
    trend: bool = False
    names: Tuple[str, ...] = ()

    @property
    def n_lags(self) -> int:
        return int(self.hyper.lags)

    @property
    def dim(self) -> int:
        return self.beta_mean.size

    def mean_draws(self) -> "CoefficientDraws":
        """The posterior mean as a single-draw set."""
        return CoefficientDraws(self.beta_mean[None, :], self.n_vars, self.n_lags, self.trend, names=self.names)


@dataclass(frozen=True, eq=False)
class CoefficientDraws:
    """N coefficient vectors with reshaping helpers and stability flags."""
    beta: np.ndarray
    n_vars: int
    n_lags: int
    trend: bool = False
    seed: Optional[int] = None
    names: Tuple[str, ...] = ()
    spectral_radius: Optional[np.ndarray] = None

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        expected = self.n_vars * self.n_regressors
        if beta.shape[1] != expected:
            raise BvarError(f"draw length {beta.shape[1]} does not match M*(M*P+{self.n_regressors - self.n_vars * self.n_lags}) = {expected}")
        object.__setattr__(self, "beta", beta)
        if self.spectral_radius is None:
            object.__setattr__(self, "spectral_radius", spectral_radius(self.lag_matrices))

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    @property
    def n_regressors(self) -> int:
        return self.n_vars * self.n_lags + 1 + int(self.trend)

    @property
    def coefficient_matrices(self) -> np.ndarray:
        """B with shape (N, K, M); column i holds equation i."""
        return self.beta.reshape(self.n_draws, self.n_vars, self.n_regressors).transpose(0, 2, 1)

    @property
    def lag_matrices(self) -> np.ndarray:
        """Phi with shape (N, P, M, M); Phi[n, p - 1][i, j] is the lag-p effect of j on i."""
        M, P = self.n_vars, self.n_lags
        B = self.coefficient_matrices[:, : M * P, :]
        return B.reshape(self.n_draws, P, M, M).transpose(0, 1, 3, 2)

    @property
    def intercepts(self) -> np.ndarray:
        return self.coefficient_matrices[:, self.n_vars * self.n_lags, :]

    @property
    def trend_coefficients(self) -> Optional[np.ndarray]:
        if not self.trend:
            return None
        return self.coefficient_matrices[:, self.n_vars * self.n_lags + 1, :]

    @property
    def explosive(self) -> np.ndarray:
        return self.spectral_radius >= 1.0

    def mean(self) -> "CoefficientDraws":
        return CoefficientDraws(self.beta.mean(axis=0, keepdims=True), self.n_vars, self.n_lags, self.trend, self.seed, self.names)

    def subset(self, index) -> "CoefficientDraws":
        return CoefficientDraws(self.beta[index], self.n_vars, self.n_lags, self.trend, self.seed, self.names)

    @classmethod
    def from_matrices(
        cls,
        intercepts: np.ndarray,
        lags: np.ndarray,
        trend: Optional[np.ndarray] = None,
        names: Sequence[str] = (),
    ) -> "CoefficientDraws":
        """Stack (N, M) intercepts and (N, P, M, M) lag matrices (leading axis optional)."""
        lags = np.asarray(lags, dtype=float)
        if lags.ndim == 3:
            lags = lags[None]
        intercepts = np.atleast_2d(np.asarray(intercepts, dtype=float))
        N, P, M, _ = lags.shape
        blocks = [lags.transpose(0, 1, 3, 2).reshape(N, P * M, M), intercepts[:, None, :]]
        if trend is not None:
            blocks.append(np.atleast_2d(np.asarray(trend, dtype=float))[:, None, :])
        B = np.concatenate(blocks, axis=1)
        beta = B.transpose(0, 2, 1).reshape(N, -1)
        return cls(beta, M, P, trend is not None, names=tuple(names))

    def regressor_labels(self) -> List[str]:
        names = list(self.names) or [f"y{j}" for j in range(self.n_vars)]
        labels = [f"{n}(-{p})" for p in range(1, self.n_lags + 1) for n in names]
        labels.append("const")
        if self.trend:
            labels.append("trend")
        return labels

    def to_frame(self) -> pd.DataFrame:
        """One row per draw; columns ``equation:regressor``."""
        names = list(self.names) or [f"y{j}" for j in range(self.n_vars)]
        columns = [f"{eq}:{reg}" for eq in names for reg in self.regressor_labels()]
        frame = pd.DataFrame(self.beta, columns=columns)
        frame.insert(0, "draw", np.arange(self.n_draws))
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, names: Sequence[str], n_lags: int, trend: bool = False) -> "CoefficientDraws":
        beta = frame.drop(columns=["draw"], errors="ignore").to_numpy(dtype=float)
        return cls(beta, len(names), n_lags, trend, names=tuple(names))


# --- Design and scales ---

def var_design(values: np.ndarray, lags: int, trend: bool = False, first_row: Optional[int] = None) -> VarDesign:
    """Regressors [y_{t-1}' ... y_{t-P}' 1 (t)] for rows t >= max(P, first_row)."""
    values = np.asarray(values, dtype=float)
    T, M = values.shape
    start = lags if first_row is None else max(int(first_row), lags)
    if start >= T:
        raise BvarError(f"no observations left after {start} initial rows (T={T})")
    blocks = [values[start - p: T - p] for p in range(1, lags + 1)]
    blocks.append(np.ones((T - start, 1)))
    if trend:
        blocks.append(np.arange(start, T, dtype=float)[:, None])
    return VarDesign(values[start:], np.hstack(blocks), lags, trend, start)


def _ensure_pd(matrix: np.ndarray, label: str) -> np.ndarray:
    sym = 0.5 * (matrix + matrix.T)
    eigval = np.linalg.eigvalsh(sym)
    floor = 1e-10 * max(np.trace(sym) / sym.shape[0], 1e-2)
    if eigval.min() > floor:
        return sym
    jitter = floor - min(eigval.min(), 0.0)
    logger.warning("%s not positive definite (min eigenvalue %.3e); adding jitter %.3e", label, eigval.min(), jitter)
    return sym + jitter * np.eye(sym.shape[0])


def estimate_sigma(
    panel: TimeSeriesPanel,
    lags: int,
    trend: bool = False,
    first_row: Optional[int] = None,
) -> np.ndarray:
    """OLS residual covariance of the VAR(P), divisor T - P."""
    design = var_design(panel.values, lags, trend, first_row)
    n, K = design.X.shape
    if n <= K:
        raise BvarError(f"OLS infeasible: {n} observations for {K} regressors per equation")
    if np.linalg.matrix_rank(design.X) < K:
        raise BvarError("rank-deficient design matrix")
    B, *_ = np.linalg.lstsq(design.X, design.Y, rcond=None)
    resid = design.Y - design.X @ B
    return _ensure_pd(resid.T @ resid / n, "residual covariance")


def ar_scales(values: np.ndarray, lags: int, first_row: Optional[int] = None) -> np.ndarray:
    """Residual standard deviations of univariate AR(P) fits with a constant."""
    values = np.asarray(values, dtype=float)
    M = values.shape[1]
    scales = np.empty(M)
    for i in range(M):
        design = var_design(values[:, [i]], lags, False, first_row)
        coef, *_ = np.linalg.lstsq(design.X, design.Y[:, 0], rcond=None)
        resid = design.Y[:, 0] - design.X @ coef
        dof = max(design.n_obs - design.X.shape[1], 1)
        scales[i] = np.sqrt(resid @ resid / dof)
    return scales


# --- Prior and posterior ---

def build_minnesota_prior(
    hyper: MinnesotaHyper,
    panel: TimeSeriesPanel,
    trend: bool = False,
    scales: Optional[np.ndarray] = None,
) -> MinnesotaPrior:
    """Minnesota prior mean and (diagonal) variance.

    Own lag p: std lambda1 / p**lambda3; cross lag p: lambda1 * lambda2 *
    (sigma_i / sigma_j) / p**lambda3; deterministic terms: lambda1 * lambda4
    * sigma_i. The prior mean is b_ar on each own first lag, zero elsewhere.
    """
    M, P = panel.n_vars, int(hyper.lags)
    if scales is None:
        scales = ar_scales(panel.values, P)
    scales = np.asarray(scales, dtype=float)
    # AR residuals of a constant column are rounding noise, not zero
    tol = SCALE_TOLERANCE * np.maximum(1.0, np.abs(panel.values.mean(axis=0)))
    invalid = ~np.isfinite(scales) | (scales <= tol)
    if invalid.any():
        zero = [panel.names[j] for j in np.flatnonzero(invalid)]
        raise BvarError(f"zero or invalid residual scale for {zero}")

    K = M * P + 1 + int(trend)
    mean = np.zeros((M, K))
    std = np.empty((M, K))
    decay = np.arange(1, P + 1, dtype=float) ** hyper.lambda3
    for i in range(M):
        mean[i, i] = hyper.b_ar
        for p in range(P):
            for j in range(M):
                if i == j:
                    std[i, p * M + j] = hyper.lambda1 / decay[p]
                else:
                    std[i, p * M + j] = hyper.lambda1 * hyper.lambda2 * scales[i] / (scales[j] * decay[p])
        std[i, M * P:] = hyper.lambda1 * hyper.lambda4 * scales[i]
    return MinnesotaPrior(mean.ravel(), std.ravel() ** 2, scales, hyper, M, trend)


def posterior(
    prior: MinnesotaPrior,
    panel: TimeSeriesPanel,
    sigma_u: np.ndarray,
    first_row: Optional[int] = None,
) -> BvarPosterior:
    """Gaussian coefficient posterior and log marginal likelihood (Sigma_u known)."""
    M = panel.n_vars
    sigma_u = np.asarray(sigma_u, dtype=float)
    if sigma_u.shape != (M, M) or prior.n_vars != M:
        raise BvarError(f"prior/covariance not conformable with {M} variables")
    design = var_design(panel.values, int(prior.hyper.lags), prior.trend, first_row)
    X, Y, n = design.X, design.Y, design.n_obs
    xtx, xty, yty = X.T @ X, X.T @ Y, Y.T @ Y
    if prior.mean.size != M * X.shape[1]:
        raise BvarError("prior dimension does not match the design")

    try:
        sigma_chol = linalg.cholesky(sigma_u, lower=True)
    except linalg.LinAlgError:
        raise BvarError("residual covariance is not positive definite") from None
    sigma_inv = linalg.cho_solve((sigma_chol, True), np.eye(M))

    prior_prec = 1.0 / prior.variance
    precision = np.kron(sigma_inv, xtx) + np.diag(prior_prec)
    precision = 0.5 * (precision + precision.T)
    rhs = prior_prec * prior.mean + (xty @ sigma_inv).ravel(order="F")
    try:
        prec_chol = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError:
        raise BvarError("posterior precision is not positive definite") from None
    beta_mean = linalg.cho_solve((prec_chol, True), rhs)
    beta_cov = linalg.cho_solve((prec_chol, True), np.eye(rhs.size))
    beta_cov = 0.5 * (beta_cov + beta_cov.T)

    logdet_sigma = 2.0 * np.log(np.diag(sigma_chol)).sum()
    logdet_prec = 2.0 * np.log(np.diag(prec_chol)).sum()
    logdet_prior = np.log(prior.variance).sum()
    quad = (
        np.trace(sigma_inv @ yty)
        + prior.mean @ (prior_prec * prior.mean)
        - beta_mean @ rhs
    )
    log_marginal = (
        -0.5 * n * M * LOG2PI
        - 0.5 * n * logdet_sigma
        - 0.5 * logdet_prior
        - 0.5 * logdet_prec
        - 0.5 * quad
    )
    return BvarPosterior(
        beta_mean=beta_mean,
        beta_cov=beta_cov,
        sigma_u=sigma_u,
        hyper=prior.hyper,
        xtx=xtx,
        xty=xty,
        yty=yty,
        n_obs=n,
        log_marginal=float(log_marginal),
        precision_chol=prec_chol,
        n_vars=M,
        trend=prior.trend,
        names=tuple(panel.names),
    )


def draw_posterior(post: BvarPosterior, n_draws: int, seed: int) -> CoefficientDraws:
    """``n_draws`` iid draws; bitwise reproducible for a given seed."""
    if n_draws < 1:
        raise ValueError(f"need at least one draw, got {n_draws}")
    rng = task_rng(seed, STREAM_POSTERIOR)
    z = rng.standard_normal((n_draws, post.dim))
    # precision = L L'  =>  L'^{-1} z ~ N(0, precision^{-1})
    beta = post.beta_mean + linalg.solve_triangular(post.precision_chol, z.T, lower=True, trans="T").T
    draws = CoefficientDraws(beta, post.n_vars, post.n_lags, post.trend, seed, post.names)
    logger.info(
        "Drew %d posterior draws; %.1f%% explosive (spectral radius >= 1)",
        n_draws, 100.0 * draws.explosive.mean(),
    )
    return draws


def fit_posterior(
    panel: TimeSeriesPanel,
    hyper: MinnesotaHyper,
    trend: bool = False,
    sigma_u: Optional[np.ndarray] = None,
    first_row: Optional[int] = None,
) -> BvarPosterior:
    """Sigma_u (OLS unless given), Minnesota prior and posterior in one call."""
    if sigma_u is None:
        sigma_u = estimate_sigma(panel, int(hyper.lags), trend, first_row)
    prior = build_minnesota_prior(hyper, panel, trend)
    return posterior(prior, panel, sigma_u, first_row)


# --- Hyperparameter search ---

def hyper_grid(
    b_ar: Sequence[float] = DEFAULT_GRID["b_ar"],
    lambda1: Sequence[float] = DEFAULT_GRID["lambda1"],
    lambda2: Sequence[float] = DEFAULT_GRID["lambda2"],
    lambda3: Sequence[float] = DEFAULT_GRID["lambda3"],
    lambda4: Sequence[float] = DEFAULT_GRID["lambda4"],
    lags: Sequence[int] = (12,),
) -> List[MinnesotaHyper]:
    """Cartesian product of hyperparameter values."""
    return [
        MinnesotaHyper(b, l1, l2, l3, l4, int(p))
        for p, b, l1, l2, l3, l4 in itertools.product(lags, b_ar, lambda1, lambda2, lambda3, lambda4)
    ]


def grid_search_hyper(
    grid: Sequence[MinnesotaHyper],
    panel: TimeSeriesPanel,
    trend: bool = False,
    max_workers: Optional[int] = None,
) -> Tuple[MinnesotaHyper, pd.DataFrame]:
    """Grid point with the largest log marginal likelihood, plus the full table."""
    grid = list(grid)
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    sigmas: Dict[int, object] = {}
    for lags in sorted({int(h.lags) for h in grid}):
        try:
            sigmas[lags] = estimate_sigma(panel, lags, trend)
        except BvarError as exc:
            logger.warning("Residual covariance for P=%d failed: %s", lags, exc)
            sigmas[lags] = exc

    def evaluate(hyper: MinnesotaHyper) -> float:
        sigma = sigmas[int(hyper.lags)]
        if isinstance(sigma, Exception):
            return np.nan
        try:
            return fit_posterior(panel, hyper, trend, sigma).log_marginal
        except (BvarError, linalg.LinAlgError) as exc:
            logger.warning("Grid point %s failed: %s", hyper, exc)
            return np.nan

    if max_workers and max_workers > 1:
        scores = Parallel(n_jobs=max_workers, prefer="threads")(delayed(evaluate)(h) for h in grid)
    else:
        scores = [evaluate(h) for h in grid]

    table = pd.DataFrame([h.as_dict() for h in grid])
    table["log_marginal"] = scores
    if table["log_marginal"].isna().all():
        raise BvarError("estimation failed at every grid point")
    best_index = int(np.nanargmax(table["log_marginal"].to_numpy()))
    best = grid[best_index]
    logger.info("Best grid point %s (log marginal %.3f) out of %d", best, scores[best_index], len(grid))
    return best, table


# --- Model comparison ---

def _deviance(
    B: np.ndarray, design: VarDesign, sigma_u: np.ndarray
) -> np.ndarray:
    """-2 log-likelihood at each coefficient matrix in B (N, K, M)."""
    X, Y = design.X, design.Y
    n, M = Y.shape
    xtx, xty, yty = X.T @ X, X.T @ Y, Y.T @ Y
    sigma_inv = np.linalg.inv(sigma_u)
    _, logdet = np.linalg.slogdet(sigma_u)
    cross = np.einsum("nkm,kl->nml", B, xty)
    quad = np.einsum("nkm,nkj->nmj", B, np.einsum("kl,nlj->nkj", xtx, B))
    rss = yty[None] - cross - cross.transpose(0, 2, 1) + quad
    return n * M * LOG2PI + n * logdet + np.einsum("ij,nji->n", sigma_inv, rss)


def dic_components(
    draws: CoefficientDraws,
    panel: TimeSeriesPanel,
    sigma_u: np.ndarray,
    first_row: Optional[int] = None,
) -> Dict[str, float]:
    """Mean deviance, deviance at the draw mean, effective parameters and DIC."""
    design = var_design(panel.values, draws.n_lags, draws.trend, first_row)
    deviances = _deviance(draws.coefficient_matrices, design, sigma_u)
    mean_deviance = float(deviances.mean())
    at_mean = float(_deviance(draws.mean().coefficient_matrices, design, sigma_u)[0])
    p_d = mean_deviance - at_mean
    return {"mean_deviance": mean_deviance, "deviance_at_mean": at_mean, "p_d": p_d, "dic": mean_deviance + p_d}


def dic(
    draws: CoefficientDraws,
    panel: TimeSeriesPanel,
    sigma_u: np.ndarray,
    first_row: Optional[int] = None,
) -> float:
    """Deviance information criterion (lower is better)."""
    if draws.n_draws < 1:
        raise ValueError("no draws")
    return dic_components(draws, panel, sigma_u, first_row)["dic"]


def compare_lags(
    panel: TimeSeriesPanel,
    candidates: Sequence[Tuple[int, bool]],
    hyper: MinnesotaHyper,
    n_draws: int,
    seed: int,
    sigma_u: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """DIC of several (lags, trend) specifications on one common sample.

    All candidates use rows t >= max lag and the same Sigma_u (by default
    the OLS estimate of the largest candidate with trend if any candidate has one).
    """
    candidates = [(int(p), bool(tr)) for p, tr in candidates]
    if not candidates:
        raise ValueError("no candidate specifications")
    first_row = max(p for p, _ in candidates)
    if sigma_u is None:
        widest = max(candidates, key=lambda c: (c[0], c[1]))
        sigma_u = estimate_sigma(panel, widest[0], any(tr for _, tr in candidates), first_row)
    rows = []
    for lags, trend in candidates:
        hyp = replace(hyper, lags=lags)
        post = fit_posterior(panel, hyp, trend, sigma_u, first_row)
        draws = draw_posterior(post, n_draws, seed)
        parts = dic_components(draws, panel, sigma_u, first_row)
        rows.append({"lags": lags, "trend": trend, **parts})
        logger.info("DIC P=%d trend=%s: %.2f", lags, trend, parts["dic"])
    return pd.DataFrame(rows)
