"""Per-date calibration of the curve models by differential evolution.

The optimizer is the classic rand/1/bin scheme of Storn and Price:
uniform seeded initialization inside the box, difference-vector mutation
with three distinct partners, binomial crossover with one guaranteed mutant
coordinate, reflection of out-of-bounds coordinates, and greedy selection.
A fixed seed reproduces the trajectory bit for bit.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .bondmath import ZeroCurve, bootstrap_dataset
from .errors import DateFailure, DomainError, TermfitError
from .marketdata import Dataset
from .models import (
    CurveParams,
    Model,
    model_rates,
    ns_rates,
    params_from_array,
    params_from_dict,
    params_to_dict,
    sv_rates,
)

__all__ = [
    "ConfigError",
    "NonFinite",
    "BatchError",
    "DEConfig",
    "DEResult",
    "FitResult",
    "BatchResult",
    "default_bounds",
    "objective_rmse",
    "de_minimize",
    "calibrate",
    "calibrate_curves",
    "calibrate_all",
    "derive_date_seed",
    "fits_to_csv",
    "fits_from_csv",
    "fits_to_jsonl",
    "fits_from_jsonl",
]

# Additive penalty that prices an economically infeasible candidate
# (non-positive short rate) out of selection without making the objective
# partial on the box.
FEASIBILITY_PENALTY = 1e6

# Beta box in percent: fitted values in practice sit well inside.
_BETA_LEVEL = (1e-6, 25.0)
_BETA_OTHER = (-25.0, 25.0)
# Decay bounds in years: the floor keeps the loading away from its x -> 0
# limit; the cap ties the hump peak (~1.8 tau) to the observable grid span.
# Decay values far beyond the grid make the model quasi-linear there, which
# creates a huge flat boundary-attached region that reliably captures the
# optimizer population, so an unbounded-ish cap is counterproductive.
_TAU_FLOOR = 0.05
_TAU_SPAN_FACTOR = 0.6


class ConfigError(TermfitError):
    """DEConfig invariant breach."""


class NonFinite(TermfitError):
    """The objective returned NaN/inf inside the bounds box: a defect signal."""


class BatchError(TermfitError):
    def __init__(self, message: str, failures: list[DateFailure] | None = None):
        super().__init__(message)
        self.failures = failures or []


@dataclass(frozen=True)
class DEConfig:
    """Differential-evolution settings.

    ``population_size=None`` defaults to 10x the problem dimension;
    ``bounds=None`` lets calibrate() install the model's default box.
    """

    population_size: int | None = None
    weight_f: float = 0.8
    crossover_cr: float = 0.9
    max_generations: int = 1500
    tolerance: float = 1e-10
    stall_generations: int = 200
    seed: int = 0
    bounds: tuple[tuple[float, float], ...] | None = None
    restarts: int = 1

    def __post_init__(self):
        if self.population_size is not None and self.population_size < 4:
            raise ConfigError("population_size must be at least 4")
        if self.restarts < 1:
            raise ConfigError("restarts must be positive")
        if not 0.0 < self.weight_f <= 2.0:
            raise ConfigError("weight_f must lie in (0, 2]")
        if not 0.0 <= self.crossover_cr <= 1.0:
            raise ConfigError("crossover_cr must lie in [0, 1]")
        if self.max_generations < 1:
            raise ConfigError("max_generations must be positive")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be non-negative")
        if self.stall_generations < 1:
            raise ConfigError("stall_generations must be positive")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.bounds is not None:
            if len(self.bounds) == 0:
                raise ConfigError("bounds must be non-empty")
            for lo, hi in self.bounds:
                if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                    raise ConfigError(f"bad bound ({lo}, {hi}): need finite lo < hi")


@dataclass
class DEResult:
    """Argmin, objective value, and run diagnostics."""

    x: np.ndarray
    fun: float
    generations: int
    converged: bool
    trace: np.ndarray  # best-so-far objective per generation, monotone
    nfev: int
    seed: int


def default_bounds(model: Model, max_tenor_years: float = 5.0) -> tuple[tuple[float, float], ...]:
    """Calibration box for a grid reaching out to ``max_tenor_years``."""
    tau = (_TAU_FLOOR, max(1.0, _TAU_SPAN_FACTOR * max_tenor_years))
    if model is Model.NS:
        return (_BETA_LEVEL, _BETA_OTHER, _BETA_OTHER, tau)
    return (_BETA_LEVEL, _BETA_OTHER, _BETA_OTHER, _BETA_OTHER, tau, tau)


def objective_rmse(model: Model, params: CurveParams, curve: ZeroCurve) -> float:
    """Root-mean-square gap (percentage points) between model rates and the
    bootstrapped zero rates across the curve's grid."""
    taus = (params.tau,) if model is Model.NS else (params.tau1, params.tau2)
    if any(t <= 0 for t in taus):
        raise DomainError("decay parameters must be positive")
    resid = model_rates(model, params, curve.tenor_array()) - curve.rate_array()
    return float(np.sqrt(np.mean(resid * resid)))


def _distinct_partners(rng: np.random.Generator, npop: int) -> np.ndarray:
    """Three random indices per row, mutually distinct and distinct from the
    row index; vectorized rejection resampling."""
    own = np.arange(npop)
    r = rng.integers(0, npop, size=(3, npop))
    while True:
        bad = (
            (r[0] == own)
            | (r[1] == own)
            | (r[2] == own)
            | (r[0] == r[1])
            | (r[0] == r[2])
            | (r[1] == r[2])
        )
        if not bad.any():
            return r
        r[:, bad] = rng.integers(0, npop, size=(3, int(bad.sum())))


def _reflect_into_box(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # mutation can overshoot by at most F*(hi-lo) <= 2 box widths, so a few
    # reflections always land inside; clip guards float edge cases
    for _ in range(8):
        below = x < lo
        above = x > hi
        if not (below.any() or above.any()):
            return x
        x = np.where(below, 2.0 * lo - x, x)
        x = np.where(above, 2.0 * hi - x, x)
    return np.clip(x, lo, hi)


def de_minimize(
    f: Callable[[np.ndarray], float],
    cfg: DEConfig,
    batch: Callable[[np.ndarray], np.ndarray] | None = None,
) -> DEResult:
    """Minimize ``f`` over the bounds box with DE/rand/1/bin.

    ``batch``, when given, evaluates a whole (population x dim) array at once
    and must agree with ``f`` row by row; the random trajectory does not
    depend on which path evaluates. Stops when the best value has improved
    by less than ``tolerance`` for ``stall_generations`` consecutive
    generations, or at ``max_generations``.
    """
    if cfg.bounds is None:
        raise ConfigError("bounds are required")
    lo = np.array([b[0] for b in cfg.bounds], dtype=float)
    hi = np.array([b[1] for b in cfg.bounds], dtype=float)
    dim = lo.size
    npop = cfg.population_size if cfg.population_size is not None else 10 * dim
    if npop < 4:
        raise ConfigError("population_size must be at least 4")

    if batch is not None:
        evaluate = batch
    else:
        evaluate = lambda pop: np.array([float(f(x)) for x in pop])

    rng = np.random.default_rng(cfg.seed)
    pop = rng.uniform(lo, hi, size=(npop, dim))
    fitness = np.asarray(evaluate(pop), dtype=float)
    if not np.all(np.isfinite(fitness)):
        raise NonFinite("objective evaluated non-finite inside the bounds box")
    nfev = npop

    best = float(fitness.min())
    trace = [best]
    stall = 0
    converged = False
    generations = 0
    for gen in range(1, cfg.max_generations + 1):
        r1, r2, r3 = _distinct_partners(rng, npop)
        mutant = pop[r1] + cfg.weight_f * (pop[r2] - pop[r3])
        cross = rng.random((npop, dim)) < cfg.crossover_cr
        cross[np.arange(npop), rng.integers(0, dim, npop)] = True
        trial = _reflect_into_box(np.where(cross, mutant, pop), lo, hi)
        trial_fitness = np.asarray(evaluate(trial), dtype=float)
        if not np.all(np.isfinite(trial_fitness)):
            raise NonFinite("objective evaluated non-finite inside the bounds box")
        nfev += npop
        wins = trial_fitness <= fitness
        pop = np.where(wins[:, None], trial, pop)
        fitness = np.where(wins, trial_fitness, fitness)

        new_best = float(fitness.min())
        stall = stall + 1 if best - new_best < cfg.tolerance else 0
        best = new_best
        trace.append(best)
        generations = gen
        if stall >= cfg.stall_generations:
            converged = True
            break

    winner = int(np.argmin(fitness))
    return DEResult(
        x=pop[winner].copy(),
        fun=float(fitness[winner]),
        generations=generations,
        converged=converged,
        trace=np.array(trace),
        nfev=nfev,
        seed=cfg.seed,
    )


def _batch_objective(model: Model, tenors: np.ndarray, target: np.ndarray):
    """RMSE against the target rates plus the short-rate feasibility penalty,
    evaluated for a whole candidate population."""
    if model is Model.NS:
        def kernel(pop: np.ndarray) -> np.ndarray:
            pop = np.atleast_2d(pop)
            rates = ns_rates(pop[:, :1], pop[:, 1:2], pop[:, 2:3], pop[:, 3:4], tenors)
            rmse = np.sqrt(np.mean((rates - target) ** 2, axis=1))
            return rmse + np.where(pop[:, 0] + pop[:, 1] <= 0.0, FEASIBILITY_PENALTY, 0.0)
    else:
        def kernel(pop: np.ndarray) -> np.ndarray:
            pop = np.atleast_2d(pop)
            rates = sv_rates(
                pop[:, :1], pop[:, 1:2], pop[:, 2:3], pop[:, 3:4], pop[:, 4:5], pop[:, 5:6],
                tenors,
            )
            rmse = np.sqrt(np.mean((rates - target) ** 2, axis=1))
            return rmse + np.where(pop[:, 0] + pop[:, 1] <= 0.0, FEASIBILITY_PENALTY, 0.0)
    return kernel


@dataclass(frozen=True)
class FitResult:
    """Calibrated parameters and optimizer diagnostics for one date."""

    date: dt.date
    model: Model
    params: CurveParams
    rmse: float
    generations_used: int
    converged: bool
    seed: int


@dataclass
class BatchResult:
    fits: list[FitResult]
    failures: list[DateFailure] = field(default_factory=list)


def _restart_seed(master_seed: int, round_index: int) -> int:
    digest = hashlib.sha256(f"{master_seed}|restart|{round_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _restart_rounds(cfg: DEConfig, dim: int) -> list[DEConfig]:
    """Round schedule for multi-start calibration.

    The curve objectives have narrow curved valleys whose basin a single
    rand/1/bin run misses with truth-dependent probability, and different
    population regimes miss *different* basins; cycling population size and
    crossover across rounds (at roughly constant evaluation budget per
    round) covers each regime's blind spots. Round 0 is exactly ``cfg``.
    """
    base_pop = cfg.population_size if cfg.population_size is not None else 10 * dim
    schedule = (
        (1.0, cfg.crossover_cr, 1.0),
        (0.5, 1.0, 2.0),
        (2.0, cfg.crossover_cr, 0.5),
        (0.4, 1.0, 2.5),
    )
    rounds = []
    for k in range(cfg.restarts):
        pop_mult, cr, gen_mult = schedule[k % len(schedule)]
        rounds.append(
            replace(
                cfg,
                population_size=max(4, int(round(base_pop * pop_mult))),
                crossover_cr=cr if k > 0 else cfg.crossover_cr,
                max_generations=max(1, int(round(cfg.max_generations * gen_mult))),
                stall_generations=max(1, int(round(cfg.stall_generations * gen_mult))),
                seed=cfg.seed if k == 0 else _restart_seed(cfg.seed, k),
                restarts=1,
            )
        )
    return rounds


def calibrate(model: Model, curve: ZeroCurve, cfg: DEConfig = DEConfig()) -> FitResult:
    """Fit one model to one bootstrapped curve.

    Uses the model's default bounds box when the config carries none;
    beta0 > 0 is enforced by the box and beta0 + beta1 > 0 by the additive
    penalty, so the reported rmse is always penalty-free. With
    ``cfg.restarts > 1`` the optimizer runs that many independent seeded
    rounds (see _restart_rounds) and keeps the best, stopping early once a
    round reaches an objective at or below ``cfg.tolerance``.
    """
    tenors = curve.tenor_array()
    bounds = cfg.bounds if cfg.bounds is not None else default_bounds(model, float(tenors[-1]))
    kernel = _batch_objective(model, tenors, curve.rate_array())
    best: DEResult | None = None
    generations_total = 0
    for round_cfg in _restart_rounds(replace(cfg, bounds=bounds), len(bounds)):
        result = de_minimize(lambda x: float(kernel(x)[0]), round_cfg, batch=kernel)
        generations_total += result.generations
        if best is None or result.fun < best.fun:
            best = result
        if best.fun <= cfg.tolerance:
            break
    params = params_from_array(model, best.x)
    return FitResult(
        date=curve.date,
        model=model,
        params=params,
        rmse=objective_rmse(model, params, curve),
        generations_used=generations_total,
        converged=best.converged or best.fun <= cfg.tolerance,
        seed=cfg.seed,
    )


def derive_date_seed(master_seed: int, date: dt.date) -> int:
    """Stable per-date seed so batches are reproducible regardless of
    scheduling; sha256 keeps it platform-independent."""
    digest = hashlib.sha256(f"{master_seed}|{date.isoformat()}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def calibrate_curves(
    curves: Sequence[ZeroCurve],
    model: Model,
    cfg: DEConfig = DEConfig(),
    workers: int = 1,
) -> tuple[list[FitResult], list[DateFailure]]:
    """Calibrate each curve with its own derived seed; failures are isolated
    per date. Results come back in input order whatever the worker count."""

    def run(curve: ZeroCurve) -> FitResult:
        return calibrate(model, curve, replace(cfg, seed=derive_date_seed(cfg.seed, curve.date)))

    fits: list[FitResult] = []
    failures: list[DateFailure] = []
    if workers <= 1:
        outcomes = []
        for curve in curves:
            try:
                outcomes.append(run(curve))
            except TermfitError as exc:
                outcomes.append(DateFailure(curve.date, "calibrate", str(exc)))
    else:
        def safe(curve: ZeroCurve):
            try:
                return run(curve)
            except TermfitError as exc:
                return DateFailure(curve.date, "calibrate", str(exc))

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(safe, curves))
    for outcome in outcomes:
        (failures if isinstance(outcome, DateFailure) else fits).append(outcome)
    return fits, failures


def calibrate_all(
    ds: Dataset, model: Model, cfg: DEConfig = DEConfig(), workers: int = 1
) -> BatchResult:
    """Bootstrap and calibrate every date of a (completed) dataset.

    Per-date bootstrap or optimizer failures are collected, not fatal; the
    batch raises BatchError only when the dataset is empty or no date at all
    succeeds.
    """
    if not ds.observations:
        raise BatchError("dataset has no observations")
    curves, failures = bootstrap_dataset(ds)
    fits, calibration_failures = calibrate_curves(curves, model, cfg, workers)
    failures = failures + calibration_failures
    if not fits:
        raise BatchError("every auction date failed", failures)
    return BatchResult(fits, failures)


_CSV_COLUMNS = (
    "date",
    "model",
    "beta0",
    "beta1",
    "beta2",
    "beta3",
    "tau1",
    "tau2",
    "rmse",
    "converged",
)


def fits_to_csv(fits: Iterable[FitResult]) -> str:
    """Flat CSV with one row per (date, model); Nelson-Siegel rows leave
    beta3/tau2 empty and report tau in the tau1 column."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for fit in fits:
        p = fit.params
        if fit.model is Model.NS:
            beta3, tau1, tau2 = "", repr(p.tau), ""
        else:
            beta3, tau1, tau2 = repr(p.beta3), repr(p.tau1), repr(p.tau2)
        writer.writerow(
            [
                fit.date.isoformat(),
                fit.model.value,
                repr(p.beta0),
                repr(p.beta1),
                repr(p.beta2),
                beta3,
                tau1,
                tau2,
                repr(fit.rmse),
                "true" if fit.converged else "false",
            ]
        )
    return out.getvalue()


def fits_from_csv(text: str) -> list[FitResult]:
    """Read back the CSV form. Optimizer diagnostics that the flat format
    does not carry (generations, seed) come back as zeros."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != _CSV_COLUMNS:
        raise BatchError(f"unexpected fits header {header}")
    fits = []
    for row in reader:
        if not row:
            continue
        model = Model(row[1])
        if model is Model.NS:
            params: CurveParams = params_from_array(
                model, [float(row[2]), float(row[3]), float(row[4]), float(row[6])]
            )
        else:
            params = params_from_array(model, [float(c) for c in row[2:8]])
        fits.append(
            FitResult(
                date=dt.date.fromisoformat(row[0]),
                model=model,
                params=params,
                rmse=float(row[8]),
                generations_used=0,
                converged=row[9] == "true",
                seed=0,
            )
        )
    return fits


def fit_to_dict(fit: FitResult) -> dict:
    return {
        "date": fit.date.isoformat(),
        "model": fit.model.value,
        "params": params_to_dict(fit.params),
        "rmse": fit.rmse,
        "generations_used": fit.generations_used,
        "converged": fit.converged,
        "seed": fit.seed,
    }


def fit_from_dict(d: dict) -> FitResult:
    model = Model(d["model"])
    return FitResult(
        date=dt.date.fromisoformat(d["date"]),
        model=model,
        params=params_from_dict(model, d["params"]),
        rmse=float(d["rmse"]),
        generations_used=int(d["generations_used"]),
        converged=bool(d["converged"]),
        seed=int(d["seed"]),
    )


def fits_to_jsonl(fits: Iterable[FitResult]) -> str:
    return "".join(json.dumps(fit_to_dict(f), sort_keys=True) + "\n" for f in fits)


def fits_from_jsonl(text: str) -> list[FitResult]:
    return [fit_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
