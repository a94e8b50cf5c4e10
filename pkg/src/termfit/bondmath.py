"""Coupon-bond pricing, yield-to-maturity solving, and sequential
bootstrapping of the zero-coupon spot curve.

Annual compounding throughout; bills with maturity below one year discount
with fractional exponents under the same convention, which keeps bootstrapped
and model rates directly comparable.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import brentq

from .errors import DateFailure, DomainError, TermfitError
from .marketdata import (
    Dataset,
    DateObservation,
    InvariantViolation,
    MaturityGrid,
    parse_tenor,
    tenor_str,
)

__all__ = [
    "NoBracket",
    "BootstrapFailure",
    "ZeroCurve",
    "discount_factor",
    "price_bond",
    "yield_to_maturity",
    "bootstrap_zero_curve",
    "bootstrap_dataset",
    "zero_curves_to_csv",
    "zero_curves_from_csv",
    "zero_curve_to_dict",
    "zero_curve_from_dict",
]

#: Absolute price tolerance every solved rate must reproduce.
PRICE_TOL = 1e-10

# Default rate bracket in percent; the upper end grows geometrically before
# the solver gives up.
_RATE_LO = -99.0 + 1e-9
_RATE_HI = 1000.0
_MAX_EXPANSIONS = 6


class NoBracket(TermfitError):
    """No sign change found for the root of the pricing equation."""


class BootstrapFailure(TermfitError):
    def __init__(self, tenor: Fraction, reason: str):
        super().__init__(f"tenor {tenor_str(tenor)}y: {reason}")
        self.tenor = tenor
        self.reason = reason


def discount_factor(rate_pct: float, t_years: float) -> float:
    """(1 + r)^(-T) with r = rate_pct/100."""
    if rate_pct <= -100.0:
        raise DomainError("rate must exceed -100%")
    if t_years < 0:
        raise DomainError("horizon must be non-negative")
    return float((1.0 + rate_pct / 100.0) ** (-t_years))


def price_bond(coupon: float, face: float, n: int, rate_pct: float) -> float:
    """Price of a bond paying ``coupon`` at years 1..n and ``face`` at n,
    all discounted at the single rate ``rate_pct``."""
    if n < 1 or int(n) != n:
        raise DomainError("n must be a positive integer number of years")
    if rate_pct <= -100.0:
        raise DomainError("rate must exceed -100%")
    periods = np.arange(1, int(n) + 1)
    disc = (1.0 + rate_pct / 100.0) ** (-periods.astype(float))
    return float(coupon * disc.sum() + face * disc[-1])


def _bracketed_root(price_gap, lo: float = _RATE_LO, hi: float = _RATE_HI) -> float:
    """Solve price_gap(rate) = 0 on a sign-changing bracket with Brent's
    method; the upper end doubles up to a few times when the initial bracket
    misses the root."""
    f_lo = price_gap(lo)
    f_hi = price_gap(hi)
    if f_lo == 0.0:
        return lo
    expansions = 0
    while f_lo * f_hi > 0 and expansions < _MAX_EXPANSIONS:
        hi *= 2.0
        f_hi = price_gap(hi)
        expansions += 1
    if f_lo * f_hi > 0:
        raise NoBracket(f"no root in ({lo:.4g}%, {hi:.4g}%)")
    return float(brentq(price_gap, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=256))


def yield_to_maturity(price: float, coupon: float, face: float, n: int) -> float:
    """The single discount rate (percent) that reprices the bond to
    ``price`` within PRICE_TOL."""
    if price <= 0:
        raise DomainError("price must be positive")
    return _bracketed_root(lambda r: price_bond(coupon, face, n, r) - price)


@dataclass(frozen=True)
class ZeroCurve:
    """Bootstrapped zero-coupon spot rates (percent, annually compounded) on
    the maturity grid for one auction date."""

    date: dt.date
    grid: MaturityGrid
    zero_rates_pct: Mapping[Fraction, float]

    def __post_init__(self):
        missing = [t for t in self.grid if t not in self.zero_rates_pct]
        if missing:
            raise InvariantViolation(
                "zero_rates_pct", f"missing rate for tenors {[tenor_str(t) for t in missing]}"
            )
        if any(r <= -100.0 for r in self.zero_rates_pct.values()):
            raise InvariantViolation("zero_rates_pct", "rates must exceed -100%")

    def tenor_array(self) -> np.ndarray:
        return np.array([float(t) for t in self.grid], dtype=float)

    def rate_array(self) -> np.ndarray:
        return np.array([self.zero_rates_pct[t] for t in self.grid], dtype=float)

    def rate(self, tenor: Fraction) -> float:
        return self.zero_rates_pct[tenor]


def bootstrap_zero_curve(obs: DateObservation, grid: MaturityGrid | None = None) -> ZeroCurve:
    """Solve the spot curve tenor by tenor so every instrument's price is
    reproduced exactly.

    Zero-coupon instruments give z(T) = (F/P)^(1/T) - 1 directly. A coupon
    bond maturing at integer year n is solved for z(n) with Brent's method;
    its earlier coupons discount at already-known rates, linearly
    interpolated in the zero rate when a coupon date falls between grid
    points (the segment up to the bond's own maturity uses the candidate
    rate, so sparse grids stay solvable).
    """
    if grid is not None:
        missing = [t for t in grid if t not in obs.records]
        if missing:
            raise BootstrapFailure(missing[0], "observation does not cover the grid")
        tenors = list(grid.tenors)
    else:
        tenors = sorted(obs.records)
        grid = MaturityGrid(tuple(tenors))
    known_t: list[float] = []
    known_z: list[float] = []
    rates: dict[Fraction, float] = {}
    for tenor in tenors:
        rec = obs.records[tenor]
        t_years = float(tenor)
        if rec.coupon_rate_pct == 0.0:
            z = ((rec.face_value / rec.clean_price) ** (1.0 / t_years) - 1.0) * 100.0
        else:
            n = round(t_years)
            if n < 1 or abs(t_years - n) > 1e-12:
                raise BootstrapFailure(
                    tenor, "coupon bonds must mature at a whole number of years"
                )
            coupon = rec.face_value * rec.coupon_rate_pct / 100.0
            times = np.arange(1.0, n + 1.0)
            xp = np.array(known_t + [t_years])
            fp_head = np.array(known_z)

            def price_gap(z_pct: float) -> float:
                zr = np.interp(times, xp, np.append(fp_head, z_pct))
                disc = (1.0 + zr / 100.0) ** (-times)
                return coupon * disc.sum() + rec.face_value * disc[-1] - rec.clean_price

            try:
                z = _bracketed_root(price_gap)
            except NoBracket as exc:
                raise BootstrapFailure(tenor, str(exc)) from None
        known_t.append(t_years)
        known_z.append(z)
        rates[tenor] = z
    return ZeroCurve(obs.date, grid, rates)


def bootstrap_dataset(ds: Dataset) -> tuple[list[ZeroCurve], list[DateFailure]]:
    """Bootstrap every observation, isolating per-date failures."""
    curves: list[ZeroCurve] = []
    failures: list[DateFailure] = []
    for obs in ds.observations:
        try:
            curves.append(bootstrap_zero_curve(obs, ds.grid))
        except TermfitError as exc:
            failures.append(DateFailure(obs.date, "bootstrap", str(exc)))
    return curves, failures


def zero_curves_to_csv(curves: Iterable[ZeroCurve]) -> str:
    """Long-form CSV ``date,tenor_years,zero_rate_pct``; round-trips."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["date", "tenor_years", "zero_rate_pct"])
    for curve in curves:
        for tenor in curve.grid:
            writer.writerow(
                [curve.date.isoformat(), tenor_str(tenor), repr(curve.zero_rates_pct[tenor])]
            )
    return out.getvalue()


def zero_curves_from_csv(text: str) -> list[ZeroCurve]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["date", "tenor_years", "zero_rate_pct"]:
        raise InvariantViolation("header", f"unexpected zero-curve header {header}")
    grouped: dict[dt.date, dict[Fraction, float]] = {}
    for row in reader:
        if not row:
            continue
        day = dt.date.fromisoformat(row[0])
        grouped.setdefault(day, {})[parse_tenor(row[1])] = float(row[2])
    return [
        ZeroCurve(day, MaturityGrid(tuple(sorted(rates))), rates)
        for day, rates in sorted(grouped.items())
    ]


def zero_curve_to_dict(curve: ZeroCurve) -> dict:
    return {
        "date": curve.date.isoformat(),
        "grid": [tenor_str(t) for t in curve.grid],
        "zero_rates_pct": {tenor_str(t): curve.zero_rates_pct[t] for t in curve.grid},
    }


def zero_curve_from_dict(d: dict) -> ZeroCurve:
    grid = MaturityGrid(tuple(parse_tenor(t) for t in d["grid"]))
    rates = {parse_tenor(t): float(r) for t, r in d["zero_rates_pct"].items()}
    return ZeroCurve(dt.date.fromisoformat(d["date"]), grid, rates)


def zero_curves_to_json(curves: Iterable[ZeroCurve]) -> str:
    return json.dumps([zero_curve_to_dict(c) for c in curves], indent=2) + "\n"


def zero_curves_from_json(text: str) -> list[ZeroCurve]:
    return [zero_curve_from_dict(d) for d in json.loads(text)]
