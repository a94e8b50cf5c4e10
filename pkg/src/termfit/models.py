"""Parametric spot-rate models: the four-factor Nelson-Siegel curve and the
six-factor Svensson extension.

Unit conventions, used everywhere in this package: beta parameters and
returned rates are percent per annum; maturities and decay constants are in
years.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError

__all__ = [
    "Model",
    "NelsonSiegelParams",
    "SvenssonParams",
    "ParamDescriptor",
    "slope_loading",
    "ns_rate",
    "sv_rate",
    "ns_rates",
    "sv_rates",
    "model_rates",
    "curve_samples",
    "describe_params",
    "params_to_dict",
    "params_from_dict",
]

# Below this the closed form (1-exp(-x))/x loses digits to cancellation and
# the Taylor expansion is already exact to ~1e-19.
_SERIES_CUTOFF = 1e-6


class Model(str, Enum):
    """Curve family selector."""

    NS = "ns"
    SVENSSON = "svensson"

    @property
    def display_name(self) -> str:
        return "Nelson-Siegel" if self is Model.NS else "Svensson"


def slope_loading(x):
    """Evaluate (1 - exp(-x)) / x for x > 0, scalar or array.

    Switches to the expansion 1 - x/2 + x^2/6 below 1e-6 so the x -> 0
    limit is smooth and free of catastrophic cancellation.
    """
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x / 2.0 + x * x / 6.0, -np.expm1(-safe) / safe)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NelsonSiegelParams:
    """Level (beta0), slope (beta1), curvature (beta2) and decay speed (tau).

    Construction is unrestricted so that optimizer candidates can be
    inspected; call :meth:`validate` to enforce the economic constraints.
    """

    beta0: float
    beta1: float
    beta2: float
    tau: float

    def validate(self) -> "NelsonSiegelParams":
        _require(self.tau > 0, "tau must be positive")
        _require(self.beta0 > 0, "beta0 (long-term rate) must be positive")
        _require(self.beta0 + self.beta1 > 0, "beta0 + beta1 (short rate) must be positive")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2, self.tau], dtype=float)

    @classmethod
    def from_array(cls, v) -> "NelsonSiegelParams":
        b0, b1, b2, tau = (float(u) for u in v)
        return cls(b0, b1, b2, tau)


@dataclass(frozen=True)
class SvenssonParams:
    """Nelson-Siegel factors plus a second curvature hump (beta3, tau2)."""

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    tau1: float
    tau2: float

    def validate(self) -> "SvenssonParams":
        _require(self.tau1 > 0, "tau1 must be positive")
        _require(self.tau2 > 0, "tau2 must be positive")
        _require(self.beta0 > 0, "beta0 (long-term rate) must be positive")
        _require(self.beta0 + self.beta1 > 0, "beta0 + beta1 (short rate) must be positive")
        return self

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.beta0, self.beta1, self.beta2, self.beta3, self.tau1, self.tau2],
            dtype=float,
        )

    @classmethod
    def from_array(cls, v) -> "SvenssonParams":
        b0, b1, b2, b3, t1, t2 = (float(u) for u in v)
        return cls(b0, b1, b2, b3, t1, t2)


CurveParams = NelsonSiegelParams | SvenssonParams


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise DomainError(message)


def ns_rates(beta0, beta1, beta2, tau, t):
    """Vectorized Nelson-Siegel spot rate; arguments broadcast."""
    x = np.asarray(t, dtype=float) / tau
    load = slope_loading(x)
    return beta0 + beta1 * load + beta2 * (load - np.exp(-x))


def sv_rates(beta0, beta1, beta2, beta3, tau1, tau2, t):
    """Vectorized Svensson spot rate: the Nelson-Siegel body evaluated with
    tau1 plus one extra curvature term driven by tau2."""
    x2 = np.asarray(t, dtype=float) / tau2
    load2 = slope_loading(x2)
    return ns_rates(beta0, beta1, beta2, tau1, t) + beta3 * (load2 - np.exp(-x2))


def ns_rate(p: NelsonSiegelParams, t_years: float) -> float:
    """Spot rate (percent) of the Nelson-Siegel curve at maturity t_years > 0."""
    _require(t_years > 0, "maturity must be positive")
    _require(p.tau > 0, "tau must be positive")
    return float(ns_rates(p.beta0, p.beta1, p.beta2, p.tau, t_years))


def sv_rate(p: SvenssonParams, t_years: float) -> float:
    """Spot rate (percent) of the Svensson curve at maturity t_years > 0."""
    _require(t_years > 0, "maturity must be positive")
    _require(p.tau1 > 0, "tau1 must be positive")
    _require(p.tau2 > 0, "tau2 must be positive")
    return float(sv_rates(p.beta0, p.beta1, p.beta2, p.beta3, p.tau1, p.tau2, t_years))


def model_rates(model: Model, params: CurveParams, t) -> np.ndarray:
    """Model spot rates on an array of maturities (all > 0)."""
    t = np.asarray(t, dtype=float)
    _require(bool(np.all(t > 0)), "maturities must be positive")
    if model is Model.NS:
        _require(params.tau > 0, "tau must be positive")
        return np.asarray(ns_rates(params.beta0, params.beta1, params.beta2, params.tau, t))
    _require(params.tau1 > 0 and params.tau2 > 0, "tau1 and tau2 must be positive")
    return np.asarray(
        sv_rates(params.beta0, params.beta1, params.beta2, params.beta3, params.tau1, params.tau2, t)
    )


def curve_samples(model: Model, params: CurveParams, tenors) -> list[tuple[float, float]]:
    """Evaluate the model on each tenor, preserving order."""
    tenors = [float(t) for t in tenors]
    if not tenors:
        return []
    rates = model_rates(model, params, np.array(tenors))
    return list(zip(tenors, (float(r) for r in rates)))


@dataclass(frozen=True)
class ParamDescriptor:
    """One row of the economic read-out of a parameter set."""

    symbol: str
    value: float
    meaning: str
    note: str = ""


def describe_params(params: CurveParams) -> list[ParamDescriptor]:
    """Economic interpretation of a fitted parameter set, one row per factor.

    The short rate beta0 + beta1 is annotated when it sits on or below the
    positivity boundary.
    """
    short = params.beta0 + params.beta1
    if short == 0:
        short_note = "boundary: short rate is exactly zero"
    elif short < 0:
        short_note = "violation: short rate is negative"
    else:
        short_note = ""
    rows = [
        ParamDescriptor("beta0", params.beta0, "long-term rate the curve levels off to"),
        ParamDescriptor("beta0+beta1", short, "instantaneous short-term rate", short_note),
        ParamDescriptor(
            "beta1", params.beta1, "slope: gap between short and long maturities"
        ),
        ParamDescriptor("beta2", params.beta2, "curvature: size and sign of the mid-curve hump"),
    ]
    if isinstance(params, SvenssonParams):
        rows.append(
            ParamDescriptor("beta3", params.beta3, "second curvature term for an extra hump")
        )
        rows.append(
            ParamDescriptor("tau1", params.tau1, "decay speed of the slope/first-hump terms")
        )
        rows.append(ParamDescriptor("tau2", params.tau2, "decay speed of the second hump"))
    else:
        rows.append(
            ParamDescriptor("tau", params.tau, "decay speed toward the long-term rate")
        )
    return rows


def params_to_dict(params: CurveParams) -> dict:
    """JSON form: Nelson-Siegel keys beta0..beta2 plus tau; Svensson keys
    beta0..beta3 plus tau1/tau2."""
    if isinstance(params, NelsonSiegelParams):
        return {
            "beta0": params.beta0,
            "beta1": params.beta1,
            "beta2": params.beta2,
            "tau": params.tau,
        }
    return {
        "beta0": params.beta0,
        "beta1": params.beta1,
        "beta2": params.beta2,
        "beta3": params.beta3,
        "tau1": params.tau1,
        "tau2": params.tau2,
    }


def params_from_dict(model: Model, d: dict) -> CurveParams:
    if model is Model.NS:
        return NelsonSiegelParams(
            float(d["beta0"]), float(d["beta1"]), float(d["beta2"]), float(d["tau"])
        )
    return SvenssonParams(
        float(d["beta0"]),
        float(d["beta1"]),
        float(d["beta2"]),
        float(d["beta3"]),
        float(d["tau1"]),
        float(d["tau2"]),
    )


def params_from_array(model: Model, v) -> CurveParams:
    return NelsonSiegelParams.from_array(v) if model is Model.NS else SvenssonParams.from_array(v)
