"""Command-line pipeline: ``ingest`` normalizes auction CSVs, ``fit``
bootstraps and calibrates per date, ``compare`` selects the better model.

Exit codes partition outcomes: 0 success, 2 input validation, 3 calibration
(no date succeeded), 4 comparison preconditions. A ``key=value`` config file
can pre-set any long flag; explicit flags win.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .bondmath import bootstrap_dataset, zero_curves_to_csv
from .calibration import (
    BatchError,
    DEConfig,
    FitResult,
    calibrate_curves,
    fits_from_jsonl,
    fits_to_csv,
    fits_to_jsonl,
)
from .errors import TermfitError
from .marketdata import (
    MarketDataError,
    MaturityGrid,
    Provenance,
    dataset_meta_dict,
    group_by_date,
    impute_forward,
    parse_auctions,
    parse_tenor,
    read_dataset,
    tenor_str,
    write_dataset,
)
from .models import Model, model_rates
from .stats import (
    StatsError,
    compare_models,
    report_to_csv,
    report_to_json,
    report_to_text,
)

EXIT_VALIDATION = 2
EXIT_CALIBRATION = 3
EXIT_COMPARISON = 4


def _diag(event: str, **fields) -> None:
    """One structured line per event on the diagnostic stream."""
    click.echo(json.dumps({"event": event, **fields}, sort_keys=True), err=True)


def _abort(code: int, event: str, **fields):
    _diag(event, **fields)
    sys.exit(code)


def _load_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    values: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.UsageError(f"config line is not key=value: {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(ctx: click.Context, config: str | None) -> None:
    """Fill parameters still at their defaults from the config file."""
    overrides = _load_config_file(config)
    if not overrides:
        return
    for param in ctx.command.params:
        name = param.name
        if name in ("config",) or name not in overrides:
            continue
        if ctx.get_parameter_source(name) is not click.core.ParameterSource.DEFAULT:
            continue
        ctx.params[name] = param.type_cast_value(ctx, overrides[name])


def _de_config(seed: int, de_pop: int | None, de_f: float, de_cr: float, de_gens: int) -> DEConfig:
    return DEConfig(
        population_size=de_pop,
        weight_f=de_f,
        crossover_cr=de_cr,
        max_generations=de_gens,
        seed=seed,
    )


@click.group()
@click.version_option(version=__version__, prog_name="termfit")
def main():
    """Treasury yield-curve bootstrapping, parametric calibration, and
    model comparison."""


@main.command()
def version():
    """Print the package version."""
    click.echo(__version__)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Auction CSV to ingest.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory.")
@click.option("--impute", is_flag=True, default=False,
              help="Complete missing tenors by carrying earlier auctions forward.")
@click.option("--grid", "grid_spec", default=None,
              help="Comma-separated tenors in years (default 0.25,0.5,1,2,3,4,5).")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="key=value file supplying defaults for these flags.")
@click.pass_context
def ingest(ctx, input_path, out_dir, impute, grid_spec, config):
    """Validate and normalize an auction CSV into a dataset directory."""
    _apply_config(ctx, config)
    impute, grid_spec = ctx.params["impute"], ctx.params["grid_spec"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        grid = (
            MaturityGrid(tuple(parse_tenor(t) for t in grid_spec.split(",")))
            if grid_spec
            else MaturityGrid()
        )
        records = parse_auctions(Path(input_path).read_bytes())
        ds, off_grid = group_by_date(records, grid)
        dropped = []
        if impute:
            ds, dropped = impute_forward(ds)
    except MarketDataError as exc:
        _abort(EXIT_VALIDATION, "validation_error", kind=type(exc).__name__, message=str(exc))

    for warning in off_grid:
        _diag("off_grid_maturity", **warning.as_dict())
    for drop in dropped:
        _diag("dropped_date", **drop.as_dict())

    write_dataset(ds, out / "dataset.csv", out / "dataset_meta.json")
    incomplete = [o.date.isoformat() for o in ds.observations if not o.covers(ds.grid)]
    report = {
        "input": str(input_path),
        "records": len(records),
        "dates": len(ds.observations),
        "provenance": ds.provenance.value,
        "off_grid": [w.as_dict() for w in off_grid],
        "dropped_dates": [d.as_dict() for d in dropped],
        "incomplete_dates": incomplete,
        "imputed": dataset_meta_dict(ds)["imputed_tenors"],
    }
    (out / "ingest_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(
        f"ingested {len(records)} records into {len(ds.observations)} dates "
        f"({ds.provenance.value}); {len(off_grid)} off-grid, {len(dropped)} dropped"
    )


def _selected_models(selector: str) -> list[Model]:
    if selector == "both":
        return [Model.NS, Model.SVENSSON]
    return [Model.NS if selector == "ns" else Model.SVENSSON]


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Dataset CSV (from ingest, or any auction CSV).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--model", "model_selector", default="both",
              type=click.Choice(["ns", "svensson", "both"]), show_default=True)
@click.option("--seed", default=0, show_default=True, type=int,
              help="Master seed; per-date seeds derive from it.")
@click.option("--impute", is_flag=True, default=False,
              help="Impute missing tenors before fitting.")
@click.option("--de-pop", default=None, type=int, help="DE population size (default 10x dim).")
@click.option("--de-f", default=0.8, show_default=True, type=float, help="DE weight F.")
@click.option("--de-cr", default=0.9, show_default=True, type=float, help="DE crossover CR.")
@click.option("--de-gens", default=1500, show_default=True, type=int, help="DE max generations.")
@click.option("--workers", default=1, show_default=True, type=int,
              help="Parallel per-date calibrations (deterministic regardless).")
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render per-date comparison figures next to the CSV outputs.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def fit(ctx, input_path, out_dir, model_selector, seed, impute, de_pop, de_f, de_cr,
        de_gens, workers, figures, config):
    """Bootstrap zero curves per date and calibrate the selected model(s)."""
    _apply_config(ctx, config)
    p = ctx.params
    model_selector, seed, impute = p["model_selector"], p["seed"], p["impute"]
    de_pop, de_f, de_cr, de_gens = p["de_pop"], p["de_f"], p["de_cr"], p["de_gens"]
    workers, figures = p["workers"], p["figures"]

    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    if figures:
        (out / "figures").mkdir(parents=True, exist_ok=True)

    try:
        meta = Path(input_path).with_name("dataset_meta.json")
        ds = read_dataset(input_path, meta if meta.exists() else None)
        dropped = []
        if impute:
            ds, dropped = impute_forward(ds)
        cfg = _de_config(seed, de_pop, de_f, de_cr, de_gens)
    except (MarketDataError, TermfitError) as exc:
        _abort(EXIT_VALIDATION, "validation_error", kind=type(exc).__name__, message=str(exc))
    for drop in dropped:
        _diag("dropped_date", **drop.as_dict())

    curves, failures = bootstrap_dataset(ds)
    models = _selected_models(model_selector)
    fits_by_model: dict[Model, list[FitResult]] = {}
    for model in models:
        fits, calibration_failures = calibrate_curves(curves, model, cfg, workers=workers)
        fits_by_model[model] = fits
        failures.extend(calibration_failures)

    for failure in failures:
        _diag("date_failed", **failure.as_dict())

    all_fits = [fit for model in models for fit in fits_by_model[model]]
    all_fits.sort(key=lambda f: (f.date, f.model.value))
    (out / "fits.csv").write_text(fits_to_csv(all_fits), encoding="utf-8")
    (out / "fits.jsonl").write_text(fits_to_jsonl(all_fits), encoding="utf-8")
    (out / "curves" / "zero_curves.csv").write_text(zero_curves_to_csv(curves), encoding="utf-8")

    fitted_dates = {}
    for model in models:
        for fit_result in fits_by_model[model]:
            fitted_dates.setdefault(fit_result.date, []).append(fit_result)
    for curve in curves:
        date_fits = fitted_dates.get(curve.date, [])
        _write_curve_csv(out / "curves" / f"curve_{curve.date.isoformat()}.csv", curve, date_fits)
        if figures and date_fits:
            from .plots import curve_comparison_figure, save_figure

            save_figure(
                curve_comparison_figure(curve, date_fits),
                out / "figures" / f"curve_{curve.date.isoformat()}.png",
            )

    fit_report = {
        "input": str(input_path),
        "models": [m.value for m in models],
        "seed": seed,
        "de": {
            "population_size": de_pop,
            "weight_f": de_f,
            "crossover_cr": de_cr,
            "max_generations": de_gens,
        },
        "dates_total": len(ds.observations),
        "dates_fitted": len(fitted_dates),
        "failures": [f.as_dict() for f in failures],
    }
    (out / "fit_report.json").write_text(
        json.dumps(fit_report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if not all_fits:
        _abort(EXIT_CALIBRATION, "calibration_failed", message="no auction date succeeded")
    click.echo(
        f"fitted {len(fitted_dates)} of {len(ds.observations)} dates "
        f"with {', '.join(m.value for m in models)} (seed {seed})"
    )


def _write_curve_csv(path: Path, curve, date_fits: list[FitResult]) -> None:
    """Per-date plot data: observed zeros plus each fitted model's rates on
    the grid tenors."""
    by_model = {f.model: f for f in date_fits}
    columns = ["tenor", "zero_rate"]
    for model in (Model.NS, Model.SVENSSON):
        if model in by_model:
            columns.append(f"{'ns' if model is Model.NS else 'sv'}_rate")
    rows = [",".join(columns)]
    tenors = curve.tenor_array()
    model_cols = {
        model: model_rates(model, by_model[model].params, tenors) for model in by_model
    }
    for i, tenor in enumerate(curve.grid):
        cells = [tenor_str(tenor), repr(curve.zero_rates_pct[tenor])]
        for model in (Model.NS, Model.SVENSSON):
            if model in by_model:
                cells.append(repr(float(model_cols[model][i])))
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="fits.jsonl produced by `termfit fit --model both`.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--alpha", default=0.05, show_default=True, type=float,
              help="Significance level for the test battery.")
@click.option("--format", "fmt", default="text", show_default=True,
              type=click.Choice(["json", "csv", "text"]), help="What to print on stdout.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def compare(ctx, input_path, out_dir, alpha, fmt, figures, config):
    """Statistically compare the two calibrated models and pick the winner."""
    _apply_config(ctx, config)
    alpha, fmt, figures = ctx.params["alpha"], ctx.params["fmt"], ctx.params["figures"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        fits = fits_from_jsonl(Path(input_path).read_text(encoding="utf-8"))
    except (TermfitError, ValueError, KeyError) as exc:
        _abort(EXIT_VALIDATION, "validation_error", kind=type(exc).__name__, message=str(exc))
    ns_fits = sorted((f for f in fits if f.model is Model.NS), key=lambda f: f.date)
    sv_fits = sorted((f for f in fits if f.model is Model.SVENSSON), key=lambda f: f.date)
    if not ns_fits or not sv_fits:
        _abort(EXIT_COMPARISON, "comparison_error",
               message="need fits for both models; rerun fit with --model both")
    if len(ns_fits) < 3 or len(sv_fits) < 3:
        _abort(EXIT_COMPARISON, "comparison_error",
               message=f"need at least 3 paired dates, got {min(len(ns_fits), len(sv_fits))}")
    try:
        report = compare_models(ns_fits, sv_fits, alpha=alpha)
    except StatsError as exc:
        _abort(EXIT_COMPARISON, "comparison_error", kind=type(exc).__name__, message=str(exc))

    (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out / "report.txt").write_text(report_to_text(report), encoding="utf-8")
    (out / "report.csv").write_text(report_to_csv(report), encoding="utf-8")
    if figures:
        (out / "figures").mkdir(parents=True, exist_ok=True)
        from .plots import rmse_comparison_figure, save_figure

        save_figure(rmse_comparison_figure(report), out / "figures" / "rmse_comparison.png")
    rendered = {"json": report_to_json, "csv": report_to_csv, "text": report_to_text}[fmt](report)
    click.echo(rendered, nl=False)


if __name__ == "__main__":
    main()
