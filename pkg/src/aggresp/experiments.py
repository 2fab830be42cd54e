"""Experiment runner: model comparison and the kernel-by-window sweep.

Configs are JSON objects validated against a shipped schema (unknown keys
are rejected).  Every report row carries a status so one failing model or
grid cell never aborts a run; rows come back in a fixed order regardless of
how many worker processes computed them.
"""

from __future__ import annotations

import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .aggregation import AggregationSpec, canonical_kernel
from .arma import ArmaOrder
from .basis import SurfaceGrid
from .errors import AggrespError, ConfigError
from .evaluation import DEFAULT_DETREND_DF, DEFAULT_V, CvPlan, Score, default_plan, hv_block_cv, r_squared
from .models import ArmaSetting, CrossBasisConfig, ModelConfig, ModelFit, fit_model
from .outputs import atomic_write_json, atomic_write_text, csv_text, surface_csv
from .series import Dataset, align, load_series
from .synthdata import ScenarioSpec, default_grid, gen_dataset, truth_surface

logger = logging.getLogger(__name__)

H_MIN, H_MAX = 2, 60


def load_schema(name: str) -> dict:
    text = resources.files("aggresp").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def validate(raw, schema_name: str) -> None:
    try:
        jsonschema.validate(raw, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<top level>"
        raise ConfigError(f"invalid {schema_name} config at {where}: {exc.message}") from None


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


# -- config ------------------------------------------------------------------------

@dataclass(frozen=True)
class CvSettings:
    h: int | None = None
    v: int = DEFAULT_V
    stride: int | None = None
    detrend_df_per_year: float = DEFAULT_DETREND_DF

    def plan_for(self, cfg: ModelConfig) -> CvPlan:
        h = default_plan(cfg, self.v).h if self.h is None else self.h
        return CvPlan(h, self.v, self.stride, self.detrend_df_per_year)


@dataclass(frozen=True)
class SweepSettings:
    base_model: str | None = None
    kernels: tuple[str, ...] = ("ma", "epanechnikov", "michels")
    H: tuple[int, ...] = tuple(range(3, 31))
    mode: str = "future"


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[ModelConfig, ...]
    scenario: ScenarioSpec | None = None
    exposure_path: Path | None = None
    response_path: Path | None = None
    date_column: str = "date"
    value_column: str = "value"
    cv: CvSettings | None = field(default_factory=CvSettings)
    reference: float | None = None
    sweep: SweepSettings = field(default_factory=SweepSettings)
    output_dir: Path = Path("out")
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.models:
            raise ConfigError("at least one model is required")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError("model names must be unique")
        if (self.scenario is None) == (self.exposure_path is None or self.response_path is None):
            raise ConfigError("data needs either a scenario or both exposure and response paths")

    @property
    def seeds(self) -> list[int]:
        return [self.scenario.seed] if self.scenario is not None else []

    def model(self, name: str | None) -> ModelConfig:
        if name is None:
            return self.models[0]
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigError(f"no model named {name!r}; have {[m.name for m in self.models]}")

    def load_data(self) -> Dataset:
        if self.scenario is not None:
            return gen_dataset(self.scenario)
        x = load_series(self.exposure_path, self.date_column, self.value_column)
        y = load_series(self.response_path, self.date_column, self.value_column)
        return align(y, x, label=str(self.response_path))


def _model_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    agg = d.pop("aggregation", None)
    if agg is not None:
        agg = AggregationSpec(agg["kind"], agg["H"], agg.get("mode", "future"))
    arma = d.pop("arma", None)
    if arma is not None:
        order = arma.get("order")
        arma = ArmaSetting(arma.get("max_p", 5), arma.get("max_q", 5),
                           ArmaOrder(*order) if order is not None else None)
    cb = CrossBasisConfig(**d.pop("crossbasis", {}))
    family = d.pop("family", "gaussian" if agg is not None else "quasipoisson")
    return ModelConfig(aggregation=agg, arma=arma, crossbasis=cb, family=family, **d)


def parse_config(raw: dict, base_dir=".", data_dir=None) -> ExperimentConfig:
    """Validate and convert a raw JSON experiment config.

    Relative data paths resolve against ``base_dir`` (the config's folder).
    ``data_dir`` replaces the data section with ``exposure.csv`` and
    ``response.csv`` from that folder, the layout written by ``simulate``.
    """
    validate(raw, "experiment")
    base_dir = Path(base_dir)
    data = dict(raw["data"])
    if data_dir is not None:
        data = {"exposure": str(Path(data_dir) / "exposure.csv"),
                "response": str(Path(data_dir) / "response.csv")}
    scenario = ScenarioSpec.from_dict(data["scenario"]) if "scenario" in data else None

    def resolve(key):
        if key not in data:
            return None
        p = Path(data[key])
        return p if p.is_absolute() or data_dir is not None else base_dir / p

    cv_raw = raw.get("cv", {})
    cv = None if cv_raw is None else CvSettings(**cv_raw)
    sweep_raw = dict(raw.get("sweep", {}))
    if "kernels" in sweep_raw:
        sweep_raw["kernels"] = tuple(sweep_raw["kernels"])
    if "H" in sweep_raw:
        sweep_raw["H"] = tuple(sweep_raw["H"])
    out = Path(raw.get("output_dir", "out"))
    return ExperimentConfig(
        models=tuple(_model_from_dict(m) for m in raw["models"]),
        scenario=scenario,
        exposure_path=resolve("exposure"),
        response_path=resolve("response"),
        date_column=data.get("date_column", "date"),
        value_column=data.get("value_column", "value"),
        cv=cv,
        reference=raw.get("surface", {}).get("reference"),
        sweep=SweepSettings(**sweep_raw),
        output_dir=out,
        raw=raw,
    )


def load_config(path, data_dir=None) -> ExperimentConfig:
    path = Path(path)
    return parse_config(read_json(path), path.parent, data_dir)


def load_scenario(path) -> ScenarioSpec:
    raw = read_json(path)
    validate(raw, "scenario")
    return ScenarioSpec.from_dict(raw)


# -- single-model evaluation -------------------------------------------------------

@dataclass(frozen=True)
class ModelRow:
    model: str
    status: str
    r2: float = math.nan
    cv_error: float = math.nan
    cv_se: float = math.nan
    n_folds: int = 0
    skipped_folds: int = 0
    order: str = ""
    loglik: float = math.nan
    aic: float = math.nan
    n_params: int = 0
    dropped_rows: int = 0
    cv_h: int | None = None
    cv_v: int | None = None
    cv_stride: int | None = None
    message: str = ""


@dataclass(frozen=True, eq=False)
class ModelOutcome:
    row: ModelRow
    fit: ModelFit | None = None
    score: Score | None = None
    surface: SurfaceGrid | None = None


def evaluate_model(data: Dataset, cfg: ModelConfig, cv: CvSettings | None,
                   grid, reference: float) -> ModelOutcome:
    """Full-data fit, in-sample R^2, optional CV and the RR surface of one model."""
    try:
        fit = fit_model(data, cfg)
        r2 = r_squared(data.response, fit.fitted)
    except (AggrespError, np.linalg.LinAlgError) as exc:
        logger.warning("model %s failed: %s", cfg.name, exc)
        return ModelOutcome(ModelRow(cfg.name, "failed", message=str(exc)))
    common = dict(
        r2=r2, order=str(fit.order) if fit.order is not None else "",
        loglik=fit.loglik, aic=fit.aic, n_params=fit.n_params, dropped_rows=fit.dropped_rows,
    )
    score = None
    status, message = "ok", ""
    if cv is not None:
        plan = cv.plan_for(cfg)
        common.update(cv_h=plan.h, cv_v=plan.v, cv_stride=plan.stride)
        order = fit.order if cfg.fix_order_in_cv else None
        try:
            score = hv_block_cv(data, cfg, plan, order=order)
            common.update(cv_error=score.cv_error, cv_se=score.cv_se,
                          n_folds=score.n_folds, skipped_folds=score.skipped_folds)
        except AggrespError as exc:
            status, message = "cv_failed", str(exc)
    surface = fit.surface(grid, reference) if len(grid) else None
    return ModelOutcome(ModelRow(cfg.name, status, message=message, **common), fit, score, surface)


def _pool_map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _evaluate_task(args):
    return evaluate_model(*args)


def surface_grid(config: ExperimentConfig, data: Dataset):
    grid, median = default_grid(data.exposure)
    return grid, (median if config.reference is None else float(config.reference))


# -- comparison --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ComparisonReport:
    rows: tuple[ModelRow, ...]
    surfaces: dict[str, SurfaceGrid]
    outcomes: tuple[ModelOutcome, ...] = ()
    truth: SurfaceGrid | None = None


def run_comparison(config: ExperimentConfig, jobs: int = 1, data: Dataset | None = None) -> ComparisonReport:
    data = data or config.load_data()
    grid, ref = surface_grid(config, data)
    tasks = [(data, m, config.cv, grid, ref) for m in config.models]
    outcomes = _pool_map(_evaluate_task, tasks, jobs)
    surfaces = {o.row.model: o.surface for o in outcomes if o.surface is not None}
    truth = truth_surface(config.scenario, grid, ref) if config.scenario is not None else None
    return ComparisonReport(tuple(o.row for o in outcomes), surfaces, tuple(outcomes), truth)


# -- sweep -------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    kernel: str
    H: int
    row: ModelRow


@dataclass(frozen=True, eq=False)
class SweepReport:
    rows: tuple[SweepRow, ...]


def sweep_base(config: ExperimentConfig) -> ModelConfig:
    name = config.sweep.base_model
    if name is not None:
        base = config.model(name)
    else:
        aggregated = [m for m in config.models if m.aggregation is not None]
        if not aggregated:
            raise ConfigError("sweep needs an aggregated (Gaussian) base model")
        base = aggregated[0]
    if base.aggregation is None:
        raise ConfigError(f"sweep base model {base.name!r} has no aggregation")
    return base


def _sweep_task(args):
    data, base, kernel, H, mode, cv, grid, ref = args
    try:
        cfg = replace(base, name=f"{kernel}_H{H}", aggregation=AggregationSpec(kernel, H, mode))
    except ConfigError as exc:
        return SweepRow(kernel, H, ModelRow(f"{kernel}_H{H}", "failed", message=str(exc)))
    return SweepRow(kernel, H, evaluate_model(data, cfg, cv, [], ref).row)


def run_sweep(config: ExperimentConfig, kernels=None, H_range=None, jobs: int = 1,
              data: Dataset | None = None) -> SweepReport:
    """Every kernel x H cell: full fit, in-sample R^2 and CV, in (kernel, H) order."""
    kernels = config.sweep.kernels if kernels is None else kernels
    H_range = config.sweep.H if H_range is None else H_range
    canon = []
    for k in kernels:
        c = canonical_kernel(k)
        if c not in canon:
            canon.append(c)
    hs = sorted(set(int(h) for h in H_range))
    if not hs or not canon:
        raise ConfigError("sweep needs at least one kernel and one window size")
    if hs[0] < H_MIN or hs[-1] > H_MAX:
        raise ConfigError(f"sweep window sizes must lie in [{H_MIN}, {H_MAX}]")
    base = sweep_base(config)
    data = data or config.load_data()
    _, ref = surface_grid(config, data)
    tasks = [(data, base, k, H, config.sweep.mode, config.cv, [], ref) for k in canon for H in hs]
    return SweepReport(tuple(_pool_map(_sweep_task, tasks, jobs)))


# -- output ------------------------------------------------------------------------

ROW_FIELDS = ["model", "status", "r2", "cv_error", "cv_se", "n_folds", "skipped_folds", "order",
              "loglik", "aic", "n_params", "dropped_rows", "cv_h", "cv_v", "cv_stride", "message"]


def _row_values(row: ModelRow) -> list:
    return [getattr(row, f) for f in ROW_FIELDS]


def versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "aggresp": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def write_manifest(out_dir: Path, config: ExperimentConfig, outputs: list[str], command: str) -> None:
    manifest = {
        "command": command,
        "config": config.raw,
        "seeds": config.seeds,
        "versions": versions(),
        "outputs": sorted(outputs),
    }
    atomic_write_json(out_dir / "run_manifest.json", manifest)


def write_comparison(report: ComparisonReport, config: ExperimentConfig, out_dir=None) -> list[str]:
    out_dir = Path(out_dir or config.output_dir)
    written = ["comparison.csv"]
    atomic_write_text(out_dir / "comparison.csv",
                      csv_text(ROW_FIELDS, [_row_values(r) for r in report.rows]))
    for name, grid in report.surfaces.items():
        atomic_write_text(out_dir / "surfaces" / f"{name}.csv", surface_csv(grid))
        written.append(f"surfaces/{name}.csv")
    if report.truth is not None:
        atomic_write_text(out_dir / "surfaces" / "truth.csv", surface_csv(report.truth))
        written.append("surfaces/truth.csv")
    write_manifest(out_dir, config, written, "compare")
    return written


SWEEP_FIELDS = ["kernel", "H"] + ROW_FIELDS[1:]


def write_sweep(report: SweepReport, config: ExperimentConfig, out_dir=None) -> list[str]:
    out_dir = Path(out_dir or config.output_dir)
    rows = [[r.kernel, r.H] + _row_values(r.row)[1:] for r in report.rows]
    atomic_write_text(out_dir / "sweep.csv", csv_text(SWEEP_FIELDS, rows))
    write_manifest(out_dir, config, ["sweep.csv"], "sweep")
    return ["sweep.csv"]
