"""Command-line interface.

Exit codes: 0 success, 1 configuration or argument error, 2 data error,
3 numerical failure.  Every file is written atomically.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .aggregation import AggregationSpec, aggregate, kernel_weights
from .errors import AggrespError, ConfigError, DataError, NumericalError
from .evaluation import hv_block_cv
from .experiments import (
    load_config,
    load_scenario,
    run_comparison,
    run_sweep,
    surface_grid,
    write_comparison,
    write_sweep,
)
from .models import fit_model
from .outputs import atomic_write_json, atomic_write_text, csv_text, series_csv, surface_csv
from .series import load_series
from .synthdata import default_grid, gen_exposure, gen_response, truth_surface

logger = logging.getLogger("aggresp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _jobs(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return n


def _add_config(p, data_dir: bool = True):
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    if data_dir:
        p.add_argument("--data-dir", help="read exposure.csv and response.csv from this folder "
                                          "instead of the config's data section")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aggresp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("aggregate", help="aggregate a daily series with a kernel")
    p.add_argument("--input", required=True, help="CSV with date and value columns")
    p.add_argument("--output", required=True, help="output CSV (date, value)")
    p.add_argument("--kernel", default="ma", help="ma, epanechnikov or michels")
    p.add_argument("--window", type=int, required=True, help="window size H")
    p.add_argument("--mode", default="future", choices=["future", "centered"])
    p.add_argument("--date-column", default="date")
    p.add_argument("--value-column", default="value")

    p = sub.add_parser("fit", help="fit one model on the full data and write a JSON report")
    _add_config(p)
    p.add_argument("--model", help="model name (default: first model)")
    p.add_argument("--output", required=True, help="output JSON report")

    p = sub.add_parser("cv", help="hv-block cross-validation of one model")
    _add_config(p)
    p.add_argument("--model", help="model name (default: first model)")
    p.add_argument("--output-dir", required=True, help="folder for cv_folds.csv and cv_summary.json")
    p.add_argument("--jobs", type=_jobs, default=os.cpu_count() or 1, help="worker processes")

    p = sub.add_parser("surface", help="relative-risk surface of one fitted model")
    _add_config(p)
    p.add_argument("--model", help="model name (default: first model)")
    p.add_argument("--output", required=True, help="output CSV (temp, lag, rr)")

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--config", required=True, help="scenario config (JSON)")
    p.add_argument("--output-dir", required=True, help="folder for the generated files")
    p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("compare", help="fit, score and cross-validate every configured model")
    _add_config(p)
    p.add_argument("--output-dir", help="output folder (default: the config's output_dir)")
    p.add_argument("--jobs", type=_jobs, default=os.cpu_count() or 1, help="worker processes")
    p.add_argument("--no-cv", action="store_true", help="skip cross-validation")

    p = sub.add_parser("sweep", help="kernel x window-size sweep of the base model")
    _add_config(p)
    p.add_argument("--output-dir", help="output folder (default: the config's output_dir)")
    p.add_argument("--jobs", type=_jobs, default=os.cpu_count() or 1, help="worker processes")
    p.add_argument("--kernels", nargs="+", help="kernels to sweep (default: from config)")
    p.add_argument("--H", nargs="+", type=int, dest="H", help="window sizes (default: from config)")
    p.add_argument("--no-cv", action="store_true", help="skip cross-validation")
    return parser


# -- subcommands -------------------------------------------------------------------

def _cmd_aggregate(args) -> None:
    series = load_series(args.input, args.date_column, args.value_column)
    spec = AggregationSpec(args.kernel, args.window, args.mode)
    atomic_write_text(args.output, series_csv(aggregate(series, kernel_weights(spec))))


def _config(args, no_cv: bool = False):
    cfg = load_config(args.config, getattr(args, "data_dir", None))
    if no_cv:
        from dataclasses import replace

        cfg = replace(cfg, cv=None)
    return cfg


def _cmd_fit(args) -> None:
    config = _config(args)
    model = config.model(args.model)
    fit = fit_model(config.load_data(), model)
    report = {
        "model": model.name,
        "family": model.family,
        "beta": dict(zip(fit.names, fit.beta.tolist())),
        "loglik": fit.loglik,
        "aic": fit.aic,
        "dropped_rows": fit.dropped_rows,
    }
    if fit.reg is not None:
        reg = fit.reg
        report.update(order=[reg.order.p, reg.order.q], phi=list(reg.arma.phi),
                      theta=list(reg.arma.theta), sigma2=reg.arma.sigma2,
                      std_errors=dict(zip(fit.names, reg.std_errors.tolist())),
                      rows=list(reg.rows))
    else:
        glm = fit.glm
        report.update(order=None, phi=[], theta=[], sigma2=None, dispersion=glm.dispersion,
                      deviance=glm.deviance, converged=glm.converged)
    atomic_write_json(args.output, report)


def _cmd_cv(args) -> None:
    config = _config(args)
    model = config.model(args.model)
    if config.cv is None:
        raise ConfigError("the config disables cross-validation (cv: null)")
    data = config.load_data()
    plan = config.cv.plan_for(model)
    order = fit_model(data, model).order if model.fix_order_in_cv else None
    score = hv_block_cv(data, model, plan, order=order, jobs=args.jobs)
    out = Path(args.output_dir)
    rows = [[f.fold, f.center, f.n_valid_points, f.mse, f.status] for f in score.folds]
    atomic_write_text(out / "cv_folds.csv",
                      csv_text(["fold", "center", "n_valid_points", "mse", "status"], rows))
    atomic_write_json(out / "cv_summary.json", {
        "model": model.name, "cv_error": score.cv_error, "cv_se": score.cv_se,
        "n_folds": score.n_folds, "skipped_folds": score.skipped_folds,
        "h": plan.h, "v": plan.v, "stride": plan.stride,
        "detrend_df_per_year": plan.detrend_df_per_year,
    })


def _cmd_surface(args) -> None:
    config = _config(args)
    model = config.model(args.model)
    data = config.load_data()
    fit = fit_model(data, model)
    grid, ref = surface_grid(config, data)
    surface = fit.surface(grid, ref)
    if surface is None:
        raise ConfigError(f"model {model.name!r} has no cross-basis, so no surface")
    atomic_write_text(args.output, surface_csv(surface))


def _cmd_simulate(args) -> None:
    spec = load_scenario(args.config)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    out = Path(args.output_dir)
    x = gen_exposure(spec)
    y = gen_response(x, spec)
    grid, ref = default_grid(x)
    atomic_write_text(out / "exposure.csv", series_csv(x))
    atomic_write_text(out / "response.csv", series_csv(y))
    atomic_write_text(out / "truth_surface.csv", surface_csv(truth_surface(spec, grid, ref)))
    atomic_write_json(out / "scenario.json", spec.to_dict())


def _cmd_compare(args) -> None:
    config = _config(args, args.no_cv)
    report = run_comparison(config, jobs=args.jobs)
    write_comparison(report, config, args.output_dir)
    for row in report.rows:
        logger.info("%s: status=%s r2=%.4f", row.model, row.status, row.r2)


def _cmd_sweep(args) -> None:
    config = _config(args, args.no_cv)
    report = run_sweep(config, args.kernels, args.H, jobs=args.jobs)
    write_sweep(report, config, args.output_dir)


COMMANDS = {
    "aggregate": _cmd_aggregate,
    "fit": _cmd_fit,
    "cv": _cmd_cv,
    "surface": _cmd_surface,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(all="ignore"):
            COMMANDS[args.command](args)
    except (ConfigError, DataError, NumericalError, AggrespError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
