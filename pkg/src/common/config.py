"""
Run configuration.

A run is described by one YAML file (keys documented in
``configs/README.md``). ``load_config`` parses and validates it into a
frozen :class:`RunConfig`; relative paths resolve against the file's own
directory. Command-line flags may override the seed and output directory.
"""
import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
import yaml

from common.exceptions import ConfigError
from data_ingestion.panel import (
    SeasonalMethod,
    VariableSpec,
    YearMonth,
    parse_year_month,
)
from models.estimation.bvar import DEFAULT_GRID, MinnesotaHyper
from scenarios.forecast import ShockMode

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 60
DEFAULT_DRAWS = 2000
DEFAULT_AMPLIFICATION_HORIZON = 36

KNOWN_KEYS = {
    "dataset", "variables", "seed", "lags", "trend", "window", "deseason", "prior", "grid",
    "draws", "horizon", "shocks", "shut_sets", "amplification_horizon", "forecast",
    "scenarios", "frozen", "target", "orderings", "dic_lags", "workers", "out",
}


@dataclass(frozen=True)
class ScenarioSpec:
    """A pathway file that conditions one variable."""
    name: str
    variable: str
    file: Path


@dataclass(frozen=True)
class TargetSpec:
    """Variable, calendar month and thresholds used for first-crossing dates."""
    variable: str
    month: Optional[int] = 9
    thresholds: Tuple[float, ...] = (0.0, 1.0)


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    variables: Tuple[VariableSpec, ...]
    seed: int
    lags: int = 12
    trend: bool = False
    window_start: Optional[YearMonth] = None
    window_end: Optional[YearMonth] = None
    deseason_method: SeasonalMethod = SeasonalMethod.DUMMY
    deseason_skip: Tuple[str, ...] = ()
    deseason_month: Optional[int] = None
    prior: Optional[MinnesotaHyper] = None
    grid: Optional[Dict[str, Tuple[float, ...]]] = None
    draws: int = DEFAULT_DRAWS
    horizon: int = DEFAULT_HORIZON
    shocks: Tuple[str, ...] = ()
    shut_sets: Tuple[Tuple[str, ...], ...] = ()
    amplification_horizon: int = DEFAULT_AMPLIFICATION_HORIZON
    forecast_end: Optional[YearMonth] = None
    shock_mode: ShockMode = ShockMode.ZERO
    scenarios: Tuple[ScenarioSpec, ...] = ()
    frozen: Tuple[Tuple[str, ...], ...] = ()
    target: Optional[TargetSpec] = None
    orderings: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    dic_lags: Tuple[Tuple[int, bool], ...] = ()
    workers: Optional[int] = None
    out_dir: Path = Path("output")
    source: Optional[Path] = None
    sha256: str = ""

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[Union[str, Path]] = None) -> "RunConfig":
        updates: Dict[str, Any] = {}
        if seed is not None:
            if seed < 0:
                raise ConfigError(f"seed must be non-negative, got {seed}")
            updates["seed"] = int(seed)
        if out_dir is not None:
            updates["out_dir"] = Path(out_dir)
        return replace(self, **updates) if updates else self


# --- Parsing helpers ---

def _require(raw: Mapping[str, Any], key: str) -> Any:
    if key not in raw or raw[key] is None:
        raise ConfigError(f"missing required key {key!r}")
    return raw[key]


def _section(raw: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = raw.get(key)
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"'{key}' must be a mapping, got {type(value).__name__}")
    return value


def _floats(values: Any, key: str) -> Tuple[float, ...]:
    items = values if isinstance(values, (list, tuple)) else [values]
    try:
        return tuple(float(x) for x in items)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must hold numbers, got {values!r}") from None


def _month(value: Any, key: str) -> Optional[YearMonth]:
    if value is None:
        return None
    try:
        return parse_year_month(str(value))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _positive_int(value: Any, key: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {value!r}")
    return value


def _variables(raw: Any) -> Tuple[VariableSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'variables' must be a non-empty list")
    specs = []
    for i, item in enumerate(raw):
        if isinstance(item, str):
            name, units = item, ""
        elif isinstance(item, Mapping) and "name" in item:
            name, units = str(item["name"]), str(item.get("units", ""))
        else:
            raise ConfigError(f"variables[{i}] must be a name or a mapping with 'name'")
        specs.append(VariableSpec(name, units, i))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate variable names in {names}")
    return tuple(specs)


def _check_names(names: Sequence[str], known: Sequence[str], key: str) -> Tuple[str, ...]:
    unknown = [n for n in names if n not in known]
    if unknown:
        raise ConfigError(f"{key} references unknown variable(s) {unknown}")
    return tuple(names)


def _prior(raw: Mapping[str, Any], lags: int) -> Optional[MinnesotaHyper]:
    if raw.get("prior") is None:
        return None
    prior = _section(raw, "prior")
    try:
        return MinnesotaHyper(lags=lags, **{k: float(v) for k, v in prior.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"prior: {exc}") from None


def _grid(raw: Mapping[str, Any]) -> Optional[Dict[str, Tuple[float, ...]]]:
    if raw.get("grid") is None:
        return None
    grid = raw["grid"]
    if not isinstance(grid, Mapping):
        raise ConfigError("'grid' must map hyperparameter names to lists")
    unknown = set(grid) - set(DEFAULT_GRID)
    if unknown:
        raise ConfigError(f"grid has unknown keys {sorted(unknown)}")
    values = {k: tuple(float(x) for x in v) for k, v in DEFAULT_GRID.items()}
    for key, items in grid.items():
        items = items if isinstance(items, list) else [items]
        if not items:
            raise ConfigError(f"grid.{key} is empty")
        values[key] = _floats(items, f"grid.{key}")
    return values


def _dic_lags(raw: Any) -> Tuple[Tuple[int, bool], ...]:
    specs = []
    for item in raw or []:
        if isinstance(item, Mapping):
            specs.append((_positive_int(item.get("lags"), "dic_lags.lags"), bool(item.get("trend", False))))
        else:
            specs.append((_positive_int(item, "dic_lags"), False))
    return tuple(specs)


def _dataset_columns(path: Path) -> List[str]:
    try:
        return [str(c).strip() for c in pd.read_csv(path, nrows=0).columns]
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"cannot read dataset header {path}: {exc}") from None


# --- Entry point ---

def parse_config(raw: Mapping[str, Any], base_dir: Union[str, Path] = ".", check_dataset: bool = True) -> RunConfig:
    """Validate a parsed YAML mapping."""
    if not isinstance(raw, Mapping):
        raise ConfigError("configuration must be a mapping")
    base_dir = Path(base_dir)
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys {unknown}")

    seed = _require(raw, "seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    dataset = base_dir / str(_require(raw, "dataset"))
    variables = _variables(_require(raw, "variables"))
    names = [v.name for v in variables]
    if check_dataset:
        if not dataset.exists():
            raise ConfigError(f"dataset {dataset} does not exist")
        missing = [n for n in names if n not in _dataset_columns(dataset)]
        if missing:
            raise ConfigError(f"variables {missing} are not columns of {dataset}")

    lags = _positive_int(raw.get("lags", 12), "lags")
    window = _section(raw, "window")
    deseason = _section(raw, "deseason")
    forecast = _section(raw, "forecast")
    try:
        method = SeasonalMethod.parse(deseason.get("method", "dummy"))
        shock_mode = ShockMode.parse(forecast.get("shock_mode", "zero"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    month = deseason.get("month")
    if month is not None and not (isinstance(month, int) and 1 <= month <= 12):
        raise ConfigError(f"deseason.month must be in 1..12, got {month!r}")
    if method is SeasonalMethod.BSM_EVOLVING and month is None:
        raise ConfigError("deseason.method bsm-evolving needs deseason.month")

    prior = _prior(raw, lags)
    grid = _grid(raw)
    if prior is None and grid is None:
        raise ConfigError("one of 'prior' or 'grid' is required")

    shocks = _check_names([str(s) for s in raw.get("shocks") or []], names, "shocks")
    shut_sets = tuple(
        _check_names([str(v) for v in group], names, "shut_sets") for group in raw.get("shut_sets") or []
    )
    frozen = tuple(
        _check_names([str(v) for v in group], names, "frozen") for group in raw.get("frozen") or []
    )
    scenarios = []
    for name, item in _section(raw, "scenarios").items():
        if not isinstance(item, Mapping) or "variable" not in item or "file" not in item:
            raise ConfigError(f"scenario {name!r} needs 'variable' and 'file'")
        _check_names([str(item["variable"])], names, f"scenarios.{name}")
        scenarios.append(ScenarioSpec(str(name), str(item["variable"]), base_dir / str(item["file"])))
    target = None
    if raw.get("target") is not None:
        t = _section(raw, "target")
        variable = _check_names([str(_require(t, "variable"))], names, "target")[0]
        t_month = t.get("month", 9)
        if t_month is not None and not (isinstance(t_month, int) and 1 <= t_month <= 12):
            raise ConfigError(f"target.month must be in 1..12, got {t_month!r}")
        target = TargetSpec(variable, t_month, _floats(t.get("thresholds", (0.0, 1.0)), "target.thresholds"))
    orderings = {}
    for label, order in _section(raw, "orderings").items():
        order = _check_names([str(v) for v in order], names, f"orderings.{label}")
        if sorted(order) != sorted(names):
            raise ConfigError(f"orderings.{label} is not a permutation of the variables")
        orderings[str(label)] = order
    workers = raw.get("workers")
    if workers is not None:
        workers = _positive_int(workers, "workers")

    return RunConfig(
        dataset=dataset,
        variables=variables,
        seed=seed,
        lags=lags,
        trend=bool(raw.get("trend", False)),
        window_start=_month(window.get("start"), "window.start"),
        window_end=_month(window.get("end"), "window.end"),
        deseason_method=method,
        deseason_skip=_check_names([str(v) for v in deseason.get("skip") or []], names, "deseason.skip"),
        deseason_month=month,
        prior=prior,
        grid=grid,
        draws=_positive_int(raw.get("draws", DEFAULT_DRAWS), "draws"),
        horizon=_positive_int(raw.get("horizon", DEFAULT_HORIZON), "horizon", minimum=0),
        shocks=shocks,
        shut_sets=shut_sets,
        amplification_horizon=_positive_int(
            raw.get("amplification_horizon", DEFAULT_AMPLIFICATION_HORIZON), "amplification_horizon", minimum=0
        ),
        forecast_end=_month(forecast.get("end"), "forecast.end"),
        shock_mode=shock_mode,
        scenarios=tuple(scenarios),
        frozen=frozen,
        target=target,
        orderings=orderings,
        dic_lags=_dic_lags(raw.get("dic_lags")),
        workers=workers,
        out_dir=base_dir / str(raw.get("out", "output")),
    )


def load_config(path: Union[str, Path], check_dataset: bool = True) -> RunConfig:
    """Read and validate a YAML run configuration."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    config = parse_config(raw or {}, path.parent, check_dataset)
    logger.info("Loaded configuration %s (%d variables, seed %d)", path, len(config.variables), config.seed)
    return replace(config, source=path, sha256=hashlib.sha256(text).hexdigest())
