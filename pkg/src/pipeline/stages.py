"""
Pipeline stages.

Each stage reads the tables written by its upstream stages from the output
directory and writes its own, so stages can be invoked one at a time or in
sequence through :func:`run`. Any failure is re-raised as a
:class:`StageError` tagged with the stage name.
"""
import json
import logging
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from common.config import RunConfig
from common.exceptions import ArcticBvarError, StageError
from data_ingestion.artifacts import (
    hash_directory,
    missing_artifacts,
    read_table,
    sha256_file,
    write_table,
)
from data_ingestion.panel import (
    SeasonalFit,
    SeasonalMethod,
    TimeSeriesPanel,
    deseason_dummies,
    load_panel,
    month_ordinal,
    restrict_window,
    write_panel,
)
from models.dynamics.irf import irf_bands
from models.dynamics.tma import amplification_table, shutdown_bands
from models.estimation.bvar import (
    CoefficientDraws,
    MinnesotaHyper,
    compare_lags,
    draw_posterior,
    estimate_sigma,
    fit_posterior,
    grid_search_hyper,
    hyper_grid,
)
from models.identification.svar import cholesky_identify, ordering_permutation, permute_covariance, permute_draws
from models.seasonal.bsm import components_frame, deseason_bsm
from scenarios.forecast import (
    ScenarioResult,
    conditional_forecast,
    deterministic_component,
    first_crossing,
    forecast_origin,
    freeze_levels,
    frozen_channel_forecast,
    unconditional_forecast,
)
from scenarios.pathways import load_condition_path
from visualization.plot_utils import plot_channel_comparison, plot_components, plot_fan_chart, plot_irf_grid
from visualization.report_generator import build_report

logger = logging.getLogger(__name__)

PANEL = "panel.csv"
SEASONAL_FIT = "seasonal_fit.csv"
BSM_COMPONENTS = "bsm_components.csv"
SIGMA = "sigma_u.csv"
HYPER = "hyper.csv"
HYPER_GRID = "hyper_grid.csv"
DRAWS = "draws.csv"
SUMMARY = "estimate_summary.csv"
DIC = "dic.csv"
IRF = "irf.csv"
IRF_CUMULATIVE = "irf_cumulative.csv"
TMA = "tma.csv"
AMPLIFICATION = "amplification.csv"
DETERMINISTIC = "deterministic.csv"
FORECAST_FAN = "forecast_fan.csv"
CROSSINGS = "crossings.csv"
CONDITIONAL_FAN = "conditional_fan.csv"
CONDITIONAL_CROSSINGS = "conditional_crossings.csv"
REPORT = "report.html"
MANIFEST = "manifest.json"

ESTIMATE_ARTIFACTS = (PANEL, SIGMA, HYPER, DRAWS)
REPORT_INPUTS = (PANEL, SIGMA, HYPER, DRAWS, SUMMARY, IRF, TMA, AMPLIFICATION, FORECAST_FAN, CROSSINGS)
MANIFEST_PACKAGES = ("numpy", "pandas", "scipy", "matplotlib", "seaborn", "plotly", "jinja2", "PyYAML", "joblib")
CROSSING_COLUMNS = ["scenario", "variable", "threshold", "direction", "month", "q05", "q50", "q95", "share_never"]


@dataclass(frozen=True, eq=False)
class EstimateArtifacts:
    panel: TimeSeriesPanel
    sigma_u: np.ndarray
    hyper: MinnesotaHyper
    trend: bool
    draws: CoefficientDraws


# --- Artifact helpers ---

def _require(config: RunConfig, stage: str, names: Sequence[str]) -> Path:
    out = Path(config.out_dir)
    missing = missing_artifacts(out, names)
    if missing:
        raise StageError(stage, "missing upstream artifacts", missing)
    return out


def _load_panel(out: Path, config: RunConfig) -> TimeSeriesPanel:
    return load_panel(out / PANEL, config.variables)


def _load_estimate(config: RunConfig, stage: str) -> EstimateArtifacts:
    out = _require(config, stage, ESTIMATE_ARTIFACTS)
    panel = _load_panel(out, config)
    sigma_u = read_table(out / SIGMA).set_index("variable").loc[panel.names, panel.names].to_numpy()
    hyper_row = read_table(out / HYPER).iloc[0]
    hyper = MinnesotaHyper(
        b_ar=float(hyper_row["b_ar"]), lambda1=float(hyper_row["lambda1"]), lambda2=float(hyper_row["lambda2"]),
        lambda3=float(hyper_row["lambda3"]), lambda4=float(hyper_row["lambda4"]), lags=int(hyper_row["lags"]),
    )
    trend = bool(hyper_row["trend"])
    draws = CoefficientDraws.from_frame(read_table(out / DRAWS), panel.names, hyper.lags, trend)
    return EstimateArtifacts(panel, sigma_u, hyper, trend, draws)


def _load_seasonal_fit(out: Path, config: RunConfig) -> SeasonalFit:
    frame = read_table(out / SEASONAL_FIT).sort_values("month")
    adjusted = None if config.deseason_method is SeasonalMethod.DUMMY else config.deseason_month
    return SeasonalFit(
        frame[config.names].to_numpy(), config.deseason_method, tuple(config.names),
        tuple(config.deseason_skip), adjusted,
    )


def _forecast_horizon(config: RunConfig, panel: TimeSeriesPanel) -> int:
    if config.forecast_end is None:
        return max(config.horizon, 1)
    horizon = month_ordinal(config.forecast_end) - month_ordinal(panel.end)
    if horizon < 1:
        raise StageError("forecast", "forecast.end must lie after the end of the sample")
    return horizon


def _crossing_frames(config: RunConfig, fit: SeasonalFit, results: Sequence[ScenarioResult]) -> pd.DataFrame:
    target = config.target
    if target is None:
        return pd.DataFrame(columns=CROSSING_COLUMNS)
    offset = fit.level_offset(target.variable, target.month) if target.month else 0.0
    frames = [
        first_crossing(result, target.variable, threshold, "le", target.month, offset).to_frame()
        for result in results
        for threshold in target.thresholds
    ]
    return pd.concat(frames, ignore_index=True)


# --- Stages ---

def stage_deseason(config: RunConfig) -> List[Path]:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel = load_panel(config.dataset, config.variables)
    if config.window_start is not None or config.window_end is not None:
        panel = restrict_window(panel, config.window_start or panel.start, config.window_end)
    logger.info("Panel %d months x %d variables (%s..)", panel.n_obs, panel.n_vars, panel.start)

    written = []
    if config.deseason_method is SeasonalMethod.DUMMY:
        adjusted, fit = deseason_dummies(panel, config.deseason_skip)
    else:
        adjusted, fit, results = deseason_bsm(
            panel, config.deseason_method, config.deseason_month, config.deseason_skip, config.workers
        )
        components = components_frame(results)
        written.append(write_table(components, out / BSM_COMPONENTS))
        for name in results:
            plot_components(components, name, output_file=f"bsm_{name}.svg", output_dir=out)
    write_panel(adjusted, out / PANEL)
    written += [out / PANEL, write_table(fit.to_frame(), out / SEASONAL_FIT)]
    return written


def stage_estimate(config: RunConfig) -> List[Path]:
    out = _require(config, "estimate", [PANEL])
    panel = _load_panel(out, config)
    written = []
    if config.prior is not None:
        hyper = config.prior
    else:
        grid = hyper_grid(lags=(config.lags,), **config.grid)
        hyper, table = grid_search_hyper(grid, panel, config.trend, config.workers)
        written.append(write_table(table, out / HYPER_GRID))

    sigma_u = estimate_sigma(panel, hyper.lags, config.trend)
    post = fit_posterior(panel, hyper, config.trend, sigma_u)
    draws = draw_posterior(post, config.draws, config.seed)

    sigma_frame = pd.DataFrame(sigma_u, columns=panel.names)
    sigma_frame.insert(0, "variable", panel.names)
    hyper_frame = pd.DataFrame([{**hyper.as_dict(), "trend": config.trend}])
    summary = pd.DataFrame([{
        "n_obs": post.n_obs,
        "n_coefficients": post.dim,
        "log_marginal": post.log_marginal,
        "draws": draws.n_draws,
        "seed": config.seed,
        "explosive_share": float(draws.explosive.mean()),
        "median_spectral_radius": float(np.median(draws.spectral_radius)),
    }])
    written += [
        write_table(sigma_frame, out / SIGMA),
        write_table(hyper_frame, out / HYPER),
        write_table(draws.to_frame(), out / DRAWS),
        write_table(summary, out / SUMMARY),
    ]
    if config.dic_lags:
        written.append(write_table(compare_lags(panel, config.dic_lags, hyper, config.draws, config.seed), out / DIC))
    return written


def _shocks(config: RunConfig, names: Sequence[str]) -> Sequence[str]:
    return config.shocks or tuple(names)


def stage_irf(config: RunConfig) -> List[Path]:
    est = _load_estimate(config, "irf")
    out = Path(config.out_dir)
    levels, cumulative = [], []
    for shock in _shocks(config, est.panel.names):
        result = irf_bands(est.draws, est.sigma_u, shock, config.horizon)
        levels.append(result.to_frame())
        cumulative.append(result.cumulative().to_frame())
    irf_table = pd.concat(levels, ignore_index=True)
    written = [
        write_table(irf_table, out / IRF),
        write_table(pd.concat(cumulative, ignore_index=True), out / IRF_CUMULATIVE),
    ]
    for shock in _shocks(config, est.panel.names):
        plot_irf_grid(irf_table, shock, output_file=f"irf_{shock}.svg", output_dir=out)
        written.append(out / f"irf_{shock}.svg")

    for label, ordering in config.orderings.items():
        perm = ordering_permutation(est.panel.names, ordering)
        draws = permute_draws(est.draws, ordering)
        sigma_u = permute_covariance(est.sigma_u, perm)
        frames = [irf_bands(draws, sigma_u, shock, config.horizon).to_frame() for shock in _shocks(config, ordering)]
        written.append(write_table(pd.concat(frames, ignore_index=True), out / f"irf_{label}.csv"))
    return written


def stage_decompose(config: RunConfig) -> List[Path]:
    est = _load_estimate(config, "decompose")
    out = Path(config.out_dir)
    response = config.target.variable if config.target else est.panel.names[-1]
    results, cumulative_irf = [], []
    for shock in _shocks(config, est.panel.names):
        for shut in config.shut_sets:
            if shock in shut:
                logger.warning("Skipping shut set %s for its own shock %s", list(shut), shock)
                continue
            results.append(shutdown_bands(est.draws, est.sigma_u, shock, shut, config.horizon))
    if not results:
        logger.warning("No shut sets configured; transmission tables are empty")
        tma_table = pd.DataFrame(columns=[
            "shock", "shut_set", "response_var", "horizon", "baseline", "counterfactual",
            "cumulative_baseline", "cumulative_counterfactual",
        ])
        amp = pd.DataFrame(columns=[
            "shock", "shut_set", "response_var", "horizon", "cumulative_baseline", "cumulative_counterfactual", "share",
        ])
    else:
        tma_table = pd.concat([r.to_frame() for r in results], ignore_index=True)
        amp = amplification_table(results, response, config.amplification_horizon)
    written = [write_table(tma_table, out / TMA), write_table(amp, out / AMPLIFICATION)]

    seen = {}
    for result in results:
        seen.setdefault(result.baseline.shock, result.baseline.cumulative().to_frame())
    for shock, band in seen.items():
        plot_channel_comparison(tma_table, band, shock, response, output_file=f"tma_{shock}.svg", output_dir=out)
        written.append(out / f"tma_{shock}.svg")
    return written


def stage_forecast(config: RunConfig) -> List[Path]:
    est = _load_estimate(config, "forecast")
    out = _require(config, "forecast", [SEASONAL_FIT])
    fit = _load_seasonal_fit(out, config)
    panel, draws = est.panel, est.draws
    horizon = _forecast_horizon(config, panel)
    impact = cholesky_identify(est.sigma_u)

    start = forecast_origin(panel, draws.n_lags, at_start=True)
    deterministic = deterministic_component(draws, start, panel.n_obs - draws.n_lags + horizon)
    result = unconditional_forecast(
        draws, forecast_origin(panel, draws.n_lags), horizon, impact, config.shock_mode, config.seed,
    )
    fan = result.fan_frame()
    written = [
        write_table(deterministic.fan_frame(), out / DETERMINISTIC),
        write_table(fan, out / FORECAST_FAN),
        write_table(_crossing_frames(config, fit, [result]), out / CROSSINGS),
    ]
    history = panel.to_frame()
    thresholds = config.target.thresholds if config.target else ()
    for name in panel.names:
        levels = thresholds if config.target and name == config.target.variable else ()
        plot_fan_chart(fan, name, history, levels, output_file=f"fan_{name}.svg", output_dir=out)
        written.append(out / f"fan_{name}.svg")
    return written


def stage_condition(config: RunConfig) -> List[Path]:
    if not config.scenarios and not config.frozen:
        raise StageError("condition", "no scenarios or frozen channel sets configured")
    est = _load_estimate(config, "condition")
    out = _require(config, "condition", [SEASONAL_FIT])
    fit = _load_seasonal_fit(out, config)
    panel, draws = est.panel, est.draws
    horizon = _forecast_horizon(config, panel)
    impact = cholesky_identify(est.sigma_u)
    origin = forecast_origin(panel, draws.n_lags)

    scenarios = {
        s.name: load_condition_path(s.file, s.variable, origin.next_date, horizon) for s in config.scenarios
    }
    results = [
        conditional_forecast(draws, origin, [path], horizon, impact, config.shock_mode, config.seed, label=name)
        for name, path in scenarios.items()
    ]
    if config.frozen:
        sample = forecast_origin(panel, draws.n_lags, at_start=True)
        deterministic = deterministic_component(draws, sample, panel.n_obs - draws.n_lags)
        for frozen_set in config.frozen:
            levels = freeze_levels(deterministic, frozen_set)
            tag = "frozen:" + "+".join(frozen_set)
            for name, path in (scenarios.items() or [(None, None)]):
                conditions = [] if path is None else [path]
                label = tag if name is None else f"{name}|{tag}"
                results.append(frozen_channel_forecast(
                    draws, origin, conditions, levels, horizon, impact, config.shock_mode, config.seed, label,
                ))

    fan = pd.concat([r.fan_frame() for r in results], ignore_index=True)
    written = [
        write_table(fan, out / CONDITIONAL_FAN),
        write_table(_crossing_frames(config, fit, results), out / CONDITIONAL_CROSSINGS),
    ]
    plotted = dict.fromkeys([config.target.variable] if config.target else [])
    plotted.update(dict.fromkeys(s.variable for s in config.scenarios))
    history = panel.to_frame()
    for name in plotted:
        levels = config.target.thresholds if config.target and name == config.target.variable else ()
        plot_fan_chart(fan, name, history, levels, output_file=f"conditional_{name}.svg", output_dir=out)
        written.append(out / f"conditional_{name}.svg")
    return written


def stage_report(config: RunConfig) -> List[Path]:
    out = _require(config, "report", REPORT_INPUTS)
    target = config.target.variable if config.target else None
    thresholds = config.target.thresholds if config.target else ()
    return [build_report(out, out / REPORT, target=target, thresholds=thresholds)]


STAGES: Dict[str, Callable[[RunConfig], List[Path]]] = {
    "deseason": stage_deseason,
    "estimate": stage_estimate,
    "irf": stage_irf,
    "decompose": stage_decompose,
    "forecast": stage_forecast,
    "condition": stage_condition,
    "report": stage_report,
}


def run_stage(name: str, config: RunConfig) -> List[Path]:
    """Run one stage; failures come back as StageError carrying the cause."""
    if name not in STAGES:
        raise StageError(name, f"unknown stage; choose from {list(STAGES)} or 'run'")
    logger.info("Stage %s starting", name)
    try:
        written = STAGES[name](config)
    except StageError:
        raise
    except (ArcticBvarError, ValueError, np.linalg.LinAlgError, OSError) as exc:
        raise StageError(name, str(exc), cause=exc) from exc
    logger.info("Stage %s wrote %d artifacts", name, len(written))
    return written


def _package_versions() -> Dict[str, str]:
    versions = {}
    for package in MANIFEST_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_manifest(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    manifest = {
        "config": str(config.source) if config.source else None,
        "config_sha256": config.sha256,
        "dataset_sha256": sha256_file(config.dataset),
        "seed": config.seed,
        "versions": _package_versions(),
        "outputs": hash_directory(out, exclude=[MANIFEST]),
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run(config: RunConfig, stages: Optional[Sequence[str]] = None) -> Path:
    """All stages in order, then the manifest; returns the output directory."""
    order = list(stages or STAGES)
    for name in order:
        if name == "condition" and not config.scenarios and not config.frozen:
            logger.info("No scenarios configured; skipping condition stage")
            continue
        run_stage(name, config)
    try:
        write_manifest(config)
    except OSError as exc:
        raise StageError("run", f"cannot write manifest: {exc}", cause=exc) from exc
    return Path(config.out_dir)
