"""
Report Generator Module

This module renders the HTML summary of a pipeline run from the tables the
stages have written: interactive Plotly figures plus data tables, laid out
with a Jinja2 template. The page carries no timestamps so it is
reproducible from the same artifacts.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
import plotly.graph_objects as go
from jinja2 import DictLoader, Environment, select_autoescape

logger = logging.getLogger(__name__)

REPORT_TEMPLATE = """<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <meta name="viewport" content="width=device-width, initial-scale=1.0">
    <title>{{ title }}</title>
    <link href="https://cdn.jsdelivr.net/npm/bootstrap@5.3.0/dist/css/bootstrap.min.css" rel="stylesheet">
    <script src="https://cdn.plot.ly/plotly-2.27.0.min.js"></script>
    <style>
        body { font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif; color: #333; padding: 20px; }
        .section { margin-bottom: 2.5rem; }
        .figure-container { margin: 1.5rem 0; padding: 1rem; border-radius: 0.5rem;
                            box-shadow: 0 0.125rem 0.25rem rgba(0, 0, 0, 0.075); }
        .figure-title { font-size: 1.15rem; font-weight: 600; color: #2c3e50; }
        .figure-caption { margin-top: 0.75rem; font-size: 0.9rem; color: #6c757d; }
        .table { font-size: 0.85rem; }
    </style>
</head>
<body>
<div class="container">
    <h1>{{ title }}</h1>
    {% for section in sections %}
    <div id="section-{{ loop.index }}" class="section">
        <h{{ section.level + 1 }}>{{ section.title }}</h{{ section.level + 1 }}>
        {{ section.content | safe }}
        {% for fig in section.figures %}
        <div class="figure-container">
            <div class="figure-title">{{ fig.title }}</div>
            <div id="{{ fig.id }}"></div>
            {% if fig.caption %}<div class="figure-caption">{{ fig.caption }}</div>{% endif %}
        </div>
        {% endfor %}
        {% for table in section.tables %}
        <div class="table-responsive">
            <div class="figure-title">{{ table.title }}</div>
            {{ table.data | safe }}
            {% if table.caption %}<div class="figure-caption">{{ table.caption }}</div>{% endif %}
        </div>
        {% endfor %}
    </div>
    {% endfor %}
</div>
<script>
    document.addEventListener('DOMContentLoaded', function() {
        {% for fig in figures %}
        var figure = {{ fig.json | safe }};
        Plotly.newPlot('{{ fig.id }}', figure.data, figure.layout);
        {% endfor %}
    });
</script>
</body>
</html>
"""


class ReportGenerator:
    """
    Collects sections, Plotly figures and tables and renders them to HTML.
    """

    def __init__(self, title: str = "Arctic Structural BVAR Report"):
        self.title = title
        self.sections: List[Dict] = []
        self.figures: List[Dict] = []

    def add_section(self, title: str, content: str = "", level: int = 1) -> Dict:
        """
        Add a section; figures and tables added afterwards belong to it.

        Args:
            title (str): Section title
            content (str): HTML content of the section
            level (int): Heading level (1 for the top level)

        Returns:
            dict: The section record
        """
        section = {"title": title, "content": content, "level": level, "figures": [], "tables": []}
        self.sections.append(section)
        return section

    def _current(self) -> Dict:
        if not self.sections:
            self.add_section("Results")
        return self.sections[-1]

    def add_figure(self, fig: go.Figure, title: str, caption: str = "") -> str:
        """
        Add a Plotly figure to the current section.

        Args:
            fig (go.Figure): Plotly figure object
            title (str): Figure title
            caption (str, optional): Figure caption/description

        Returns:
            str: The ID of the added figure
        """
        figure_id = f"figure-{len(self.figures) + 1}"
        record = {"id": figure_id, "json": fig.to_json(), "title": title, "caption": caption}
        self.figures.append(record)
        self._current()["figures"].append(record)
        return figure_id

    def add_table(self, df: pd.DataFrame, title: str, caption: str = "", float_format: str = "{:.4g}") -> None:
        """
        Add a DataFrame as a table to the current section.

        Args:
            df: Pandas DataFrame
            title (str): Table title
            caption (str, optional): Table caption/description
            float_format (str): Format applied to float cells
        """
        html = df.to_html(
            classes="table table-striped table-hover",
            index=False,
            float_format=float_format.format,
            na_rep="n/a",
        )
        self._current()["tables"].append({"data": html, "title": title, "caption": caption})

    def render(self) -> str:
        env = Environment(loader=DictLoader({"report.html": REPORT_TEMPLATE}), autoescape=select_autoescape(["html"]))
        return env.get_template("report.html").render(
            title=self.title, sections=self.sections, figures=self.figures
        )

    def generate_report(self, output_file: Union[str, Path]) -> Path:
        """
        Generate the HTML report.

        Args:
            output_file: Path where the HTML report will be saved

        Returns:
            Path of the written report
        """
        output_file = Path(output_file)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        output_file.write_text(self.render(), encoding="utf-8")
        logger.info("Report written to %s", output_file)
        return output_file


# --- Figures built from stage tables ---

def irf_figure(irf_table: pd.DataFrame, shock: str, response: str) -> go.Figure:
    data = irf_table[(irf_table["shock"] == shock) & (irf_table["response_var"] == response)]
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=data["horizon"], y=data["q95"], line=dict(width=0), showlegend=False, hoverinfo="skip"))
    fig.add_trace(go.Scatter(
        x=data["horizon"], y=data["q05"], fill="tonexty", fillcolor="rgba(128,128,128,0.3)",
        line=dict(width=0), name="90% band",
    ))
    fig.add_trace(go.Scatter(x=data["horizon"], y=data["q50"], name="median", line=dict(color="#1f4e79")))
    fig.update_layout(
        xaxis_title="months after impact", yaxis_title=response, template="plotly_white", height=360,
    )
    return fig


def fan_figure(fan_table: pd.DataFrame, variable: str, thresholds: Sequence[float] = ()) -> go.Figure:
    data = fan_table[fan_table["variable"] == variable]
    fig = go.Figure()
    for scenario, sub in data.groupby("scenario", sort=False):
        fig.add_trace(go.Scatter(x=sub["date"], y=sub["q95"], line=dict(width=0), showlegend=False, hoverinfo="skip"))
        fig.add_trace(go.Scatter(
            x=sub["date"], y=sub["q05"], fill="tonexty", line=dict(width=0), name=f"{scenario} 90%", opacity=0.3,
        ))
        fig.add_trace(go.Scatter(x=sub["date"], y=sub["q50"], name=f"{scenario} median"))
    for level in thresholds:
        fig.add_hline(y=level, line_dash="dot", line_color="firebrick")
    fig.update_layout(yaxis_title=variable, template="plotly_white", height=400)
    return fig


def _read(directory: Path, name: str) -> Optional[pd.DataFrame]:
    path = directory / name
    return pd.read_csv(path) if path.exists() else None


def build_report(
    artifact_dir: Union[str, Path],
    output_file: Union[str, Path],
    title: str = "Arctic Structural BVAR Report",
    target: Optional[str] = None,
    thresholds: Sequence[float] = (),
) -> Path:
    """Assemble the report from whatever stage tables exist in ``artifact_dir``."""
    artifact_dir = Path(artifact_dir)
    report = ReportGenerator(title)

    summary = _read(artifact_dir, "estimate_summary.csv")
    hyper = _read(artifact_dir, "hyper.csv")
    report.add_section("Estimation", "<p>Minnesota-prior BVAR with the residual covariance fixed at its OLS estimate.</p>")
    if hyper is not None:
        report.add_table(hyper, "Prior hyperparameters")
    if summary is not None:
        report.add_table(summary, "Posterior summary")
    dic = _read(artifact_dir, "dic.csv")
    if dic is not None:
        report.add_table(dic, "Deviance information criterion (lower is better)")

    irf_table = _read(artifact_dir, "irf.csv")
    if irf_table is not None:
        report.add_section("Impulse responses")
        response = target or irf_table["response_var"].iloc[-1]
        for shock in dict.fromkeys(irf_table["shock"]):
            report.add_figure(irf_figure(irf_table, shock, response), f"{response} after a {shock} shock",
                              "Posterior median and 90% pointwise band.")

    amplification = _read(artifact_dir, "amplification.csv")
    if amplification is not None:
        report.add_section("Transmission channels")
        report.add_table(amplification, "Cumulative responses with channels shut",
                         "Share = (original - counterfactual) / original.")

    fans = [t for t in (_read(artifact_dir, "forecast_fan.csv"), _read(artifact_dir, "conditional_fan.csv")) if t is not None]
    if fans:
        report.add_section("Forecasts")
        fan_table = pd.concat(fans, ignore_index=True)
        variable = target or fan_table["variable"].iloc[-1]
        report.add_figure(fan_figure(fan_table, variable, thresholds), f"{variable} forecast paths")
    for name, label in (("crossings.csv", "First crossings"), ("conditional_crossings.csv", "First crossings by scenario")):
        table = _read(artifact_dir, name)
        if table is not None:
            report.add_table(table, label)

    return report.generate_report(output_file)
