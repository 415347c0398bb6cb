"""
Plotting Utilities for Structural VAR Output

This module provides the static figures written by the pipeline stages:
impulse-response small multiples, transmission-channel comparisons,
forecast fan charts and structural-model components. Figures are saved as
SVG with a fixed hash salt and no date metadata so reruns are byte-stable.
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

# Set the default style
sns.set_theme(style="whitegrid")
plt.rcParams['figure.figsize'] = (12, 6)
plt.rcParams['font.size'] = 11
plt.rcParams['axes.labelsize'] = 11
plt.rcParams['axes.titlesize'] = 12
plt.rcParams['xtick.labelsize'] = 9
plt.rcParams['ytick.labelsize'] = 9
plt.rcParams['svg.hashsalt'] = "arctic-structural-bvar"
plt.rcParams['svg.fonttype'] = "none"

# Color palettes
PALETTE = sns.color_palette("husl", 6)
BAND_COLOR = "0.6"
LINE_COLOR = "#1f4e79"


def save_figure(fig: plt.Figure, filename: Union[str, Path], output_dir: Union[str, Path] = "output") -> Path:
    """Save a matplotlib figure as deterministic SVG.

    Args:
        fig: Matplotlib figure to save
        filename: Name of the output file (``.svg`` is appended when missing)
        output_dir: Directory to save the figure in

    Returns:
        Path to the saved figure
    """
    output_path = Path(output_dir)
    filepath = Path(filename)
    if filepath.suffix.lower() != ".svg":
        filepath = filepath.with_suffix(".svg")
    if not filepath.is_absolute():
        filepath = output_path / filepath
    filepath.parent.mkdir(parents=True, exist_ok=True)

    fig.savefig(str(filepath), format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return filepath


def _grid_shape(n_panels: int, n_cols: int = 4) -> tuple:
    n_cols = min(n_cols, n_panels)
    return int(np.ceil(n_panels / n_cols)), n_cols


def plot_irf_grid(
    irf_table: pd.DataFrame,
    shock: str,
    title: str = "",
    output_file: Optional[str] = None,
    output_dir: Union[str, Path] = "output",
) -> plt.Figure:
    """Small multiples of every variable's response to one shock.

    Args:
        irf_table: Long IRF table (shock, response_var, horizon, q05, q50, q95, mean)
        shock: Shock whose responses are drawn
        title: Figure title
        output_file: If provided, save the plot to this file
        output_dir: Directory to save the plot in

    Returns:
        Matplotlib figure object
    """
    data = irf_table[irf_table["shock"] == shock]
    variables = list(dict.fromkeys(data["response_var"]))
    rows, cols = _grid_shape(len(variables))
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False, sharex=True)

    for ax, variable in zip(axes.flat, variables):
        sub = data[data["response_var"] == variable]
        ax.fill_between(sub["horizon"], sub["q05"], sub["q95"], color=BAND_COLOR, alpha=0.4, linewidth=0)
        ax.plot(sub["horizon"], sub["q50"], color=LINE_COLOR, linewidth=1.5)
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.set_title(variable)
    for ax in list(axes.flat)[len(variables):]:
        ax.set_visible(False)
    for ax in axes[-1]:
        ax.set_xlabel("months after impact")

    fig.suptitle(title or f"Responses to a {shock} shock")
    fig.tight_layout()
    if output_file:
        save_figure(fig, output_file, output_dir)
    return fig


def plot_channel_comparison(
    tma_table: pd.DataFrame,
    irf_table: pd.DataFrame,
    shock: str,
    response: str,
    cumulative: bool = True,
    output_file: Optional[str] = None,
    output_dir: Union[str, Path] = "output",
) -> plt.Figure:
    """Baseline response band with one counterfactual line per shut channel set.

    Args:
        tma_table: Transmission table (shock, shut_set, response_var, horizon, ...)
        irf_table: IRF table for the band of the original response
        shock: Shock of interest
        response: Responding variable
        cumulative: Plot cumulative responses (the band must then come from the cumulative IRF table)
        output_file: If provided, save the plot to this file
        output_dir: Directory to save the plot in

    Returns:
        Matplotlib figure object
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    band = irf_table[(irf_table["shock"] == shock) & (irf_table["response_var"] == response)]
    ax.fill_between(band["horizon"], band["q05"], band["q95"], color=BAND_COLOR, alpha=0.35, linewidth=0,
                    label="90% band, original")

    prefix = "cumulative_" if cumulative else ""
    data = tma_table[(tma_table["shock"] == shock) & (tma_table["response_var"] == response)]
    first = True
    for color, (shut_set, sub) in zip(PALETTE, data.groupby("shut_set", sort=False)):
        if first:
            ax.plot(sub["horizon"], sub[f"{prefix}baseline"], color="black", linewidth=1.8, label="original")
            first = False
        ax.plot(sub["horizon"], sub[f"{prefix}counterfactual"], color=color, linewidth=1.5,
                linestyle="--", label=f"without {shut_set}")

    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_title(f"{'Cumulative r' if cumulative else 'R'}esponse of {response} to a {shock} shock")
    ax.set_xlabel("months after impact")
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    if output_file:
        save_figure(fig, output_file, output_dir)
    return fig


def plot_fan_chart(
    fan_table: pd.DataFrame,
    variable: str,
    history: Optional[pd.DataFrame] = None,
    thresholds: Sequence[float] = (),
    output_file: Optional[str] = None,
    output_dir: Union[str, Path] = "output",
) -> plt.Figure:
    """Forecast fan for one variable, one median line and band per scenario.

    Args:
        fan_table: Fan table (scenario, date, variable, q05, q25, q50, q75, q95, mean)
        variable: Variable to draw
        history: Optional frame with ``date`` and the variable's observed values
        thresholds: Horizontal reference levels
        output_file: If provided, save the plot to this file
        output_dir: Directory to save the plot in

    Returns:
        Matplotlib figure object
    """
    fig, ax = plt.subplots(figsize=(10, 5))
    data = fan_table[fan_table["variable"] == variable]

    if history is not None:
        x_hist = _decimal_years(history["date"])
        ax.plot(x_hist, history[variable], color="black", linewidth=1.0, label="observed")
    for color, (scenario, sub) in zip(PALETTE, data.groupby("scenario", sort=False)):
        x = _decimal_years(sub["date"])
        ax.fill_between(x, sub["q05"], sub["q95"], color=color, alpha=0.18, linewidth=0)
        if "q25" in sub:
            ax.fill_between(x, sub["q25"], sub["q75"], color=color, alpha=0.3, linewidth=0)
        ax.plot(x, sub["q50"], color=color, linewidth=1.6, label=scenario)
    for level in thresholds:
        ax.axhline(level, color="firebrick", linewidth=0.8, linestyle=":")

    ax.set_title(f"{variable}: forecast paths")
    ax.set_xlabel("year")
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    if output_file:
        save_figure(fig, output_file, output_dir)
    return fig


def plot_components(
    components: pd.DataFrame,
    variable: str,
    output_file: Optional[str] = None,
    output_dir: Union[str, Path] = "output",
) -> plt.Figure:
    """Stacked panels of trend, drift, seasonal and noise for one series."""
    data = components[components["variable"] == variable]
    x = _decimal_years(data["date"])
    parts: List[str] = ["trend", "drift", "seasonal", "noise"]
    fig, axes = plt.subplots(len(parts), 1, figsize=(10, 8), sharex=True)
    for ax, part in zip(axes, parts):
        ax.plot(x, data[part], color=LINE_COLOR, linewidth=1.0)
        ax.set_ylabel(part)
    axes[0].set_title(f"{variable}: structural components")
    axes[-1].set_xlabel("year")
    fig.tight_layout()
    if output_file:
        save_figure(fig, output_file, output_dir)
    return fig


def _decimal_years(dates: pd.Series) -> np.ndarray:
    parts = dates.astype(str).str.split("-", expand=True).astype(int)
    return (parts[0] + (parts[1] - 1) / 12.0).to_numpy()
