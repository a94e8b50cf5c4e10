"""Distribution summaries and the model-comparison test battery.

The normality check is the Royston AS R94 approximation of the Shapiro-Wilk
test; the paired comparison runs a t-test when both error series look normal
and the Wilcoxon signed-rank test otherwise. The signed-rank p-value is
exact (full sign-assignment distribution, average ranks for ties, zeros
dropped) up to 25 effective pairs, then a continuity- and tie-corrected
normal approximation.
"""
from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import ndtri, stdtr
from scipy.stats import rankdata

from .calibration import FitResult
from .errors import TermfitError
from .models import Model

__all__ = [
    "StatsError",
    "EmptyInput",
    "SampleSizeError",
    "DegenerateSample",
    "ZeroVariance",
    "LengthMismatch",
    "AllZeroDifferences",
    "DateMismatch",
    "TestMethod",
    "SummaryStats",
    "TestResult",
    "ComparisonReport",
    "summarize",
    "shapiro_wilk",
    "paired_t_test",
    "wilcoxon_signed_rank",
    "compare_models",
    "report_to_dict",
    "report_from_dict",
    "report_to_text",
    "report_to_csv",
    "paired_errors_from_csv",
]

EXACT_WILCOXON_LIMIT = 25


class StatsError(TermfitError):
    pass


class EmptyInput(StatsError):
    pass


class SampleSizeError(StatsError):
    pass


class DegenerateSample(StatsError):
    pass


class ZeroVariance(StatsError):
    pass


class LengthMismatch(StatsError):
    pass


class AllZeroDifferences(StatsError):
    pass


class DateMismatch(StatsError):
    pass


class TestMethod(str, Enum):
    SHAPIRO_WILK = "shapiro-wilk"
    PAIRED_T = "paired-t"
    WILCOXON_SIGNED_RANK = "wilcoxon-signed-rank"


@dataclass(frozen=True)
class SummaryStats:
    """Location and spread in the input's own units."""

    median: float
    mean: float
    q1: float
    q3: float
    variance: float
    n: int
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "median": self.median,
            "mean": self.mean,
            "q1": self.q1,
            "q3": self.q3,
            "variance": self.variance,
            "n": self.n,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: TestMethod
    n: int

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method.value,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestResult":
        return cls(float(d["statistic"]), float(d["p_value"]), TestMethod(d["method"]), int(d["n"]))


def summarize(xs: Sequence[float]) -> SummaryStats:
    """Mean, sample variance (n-1 denominator) and quartiles by linear
    interpolation of order statistics (quantile q at position 1 + (n-1)q).

    A singleton gets variance 0 by convention and is flagged degenerate, as
    is any constant sample.
    """
    x = np.asarray(list(xs), dtype=float)
    if x.size == 0:
        raise EmptyInput("cannot summarize an empty sample")
    q1, median, q3 = np.percentile(x, [25.0, 50.0, 75.0], method="linear")
    variance = float(x.var(ddof=1)) if x.size > 1 else 0.0
    return SummaryStats(
        median=float(median),
        mean=float(x.mean()),
        q1=float(q1),
        q3=float(q3),
        variance=variance,
        n=int(x.size),
        degenerate=bool(x.size == 1 or np.all(x == x[0])),
    )


# Royston (1995) AS R94 polynomial coefficients, highest degree first.
_SW_C1 = (-2.706056, 4.434685, -2.07119, -0.147981, 0.221157, 0.0)
_SW_C2 = (-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0)
_SW_C3 = (-0.0006714, 0.025054, -0.39978, 0.544)
_SW_C4 = (-0.0020322, 0.062767, -0.77857, 1.3822)
_SW_C5 = (0.0038915, -0.083751, -0.31082, -1.5861)
_SW_C6 = (0.0030302, -0.082676, -0.4803)
_SW_G = (0.459, -2.273)
_SW_PI6 = 1.909859
_SW_STQR = 1.047198


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def shapiro_wilk(xs: Sequence[float]) -> TestResult:
    """Shapiro-Wilk W and its p-value via the Royston AS R94 approximation,
    valid for 3 <= n <= 5000 samples with nonzero spread."""
    x = np.sort(np.asarray(list(xs), dtype=float))
    n = int(x.size)
    if n < 3 or n > 5000:
        raise SampleSizeError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if x[-1] == x[0]:
        raise DegenerateSample("all observations are identical")

    n2 = n // 2
    if n == 3:
        weights = np.array([math.sqrt(0.5)])
    else:
        m = ndtri((np.arange(1, n2 + 1) - 0.375) / (n + 0.25))
        summ2 = 2.0 * float(m @ m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = float(np.polyval(_SW_C1, rsn)) - m[0] / ssumm2
        if n > 5:
            a2 = float(np.polyval(_SW_C2, rsn)) - m[1] / ssumm2
            fac = math.sqrt(
                (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2)
            )
            weights = np.concatenate(([a1, a2], -m[2:] / fac))
        else:
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
            weights = np.concatenate(([a1], -m[1:] / fac))

    centered = x - x.mean()
    ssx = float(centered @ centered)
    numerator = float(weights @ (x[::-1][:n2] - x[:n2]))
    w = min(numerator * numerator / ssx, 1.0)

    if n == 3:
        p = _SW_PI6 * (math.asin(math.sqrt(w)) - _SW_STQR)
        p = min(max(p, 0.0), 1.0)
        return TestResult(w, p, TestMethod.SHAPIRO_WILK, n)

    w1 = 1.0 - w
    if w1 <= 0.0:
        return TestResult(w, 1.0, TestMethod.SHAPIRO_WILK, n)
    y = math.log(w1)
    if n <= 11:
        gamma = float(np.polyval(_SW_G, n))
        if y >= gamma:
            return TestResult(w, 1e-19, TestMethod.SHAPIRO_WILK, n)
        y = -math.log(gamma - y)
        mu = float(np.polyval(_SW_C3, n))
        sigma = math.exp(float(np.polyval(_SW_C4, n)))
    else:
        logn = math.log(n)
        mu = float(np.polyval(_SW_C5, logn))
        sigma = math.exp(float(np.polyval(_SW_C6, logn)))
    return TestResult(w, _norm_sf((y - mu) / sigma), TestMethod.SHAPIRO_WILK, n)


def _paired_diffs(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    if a.size != b.size:
        raise LengthMismatch(f"paired samples differ in length: {a.size} vs {b.size}")
    return a - b


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided paired t-test on d = a - b with n - 1 degrees of freedom."""
    d = _paired_diffs(a, b)
    n = int(d.size)
    if n < 2:
        raise SampleSizeError("paired t-test needs at least 2 pairs")
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ZeroVariance("all paired differences are identical")
    t = float(d.mean()) / (sd / math.sqrt(n))
    p = 2.0 * float(stdtr(n - 1, -abs(t)))
    return TestResult(t, p, TestMethod.PAIRED_T, n)


def _signed_rank_parts(d: np.ndarray) -> tuple[float, np.ndarray]:
    nz = d[d != 0.0]  # zero differences carry no sign information
    if nz.size == 0:
        raise AllZeroDifferences("every paired difference is zero")
    ranks = rankdata(np.abs(nz), method="average")
    w_plus = float(ranks[nz > 0].sum())
    return w_plus, ranks


def _exact_signed_rank_p(w_plus: float, ranks: np.ndarray) -> float:
    # doubling the (half-integer) average ranks makes the distribution of
    # 2*W+ an integer subset-sum; counts stay below 2^m so int64 is exact
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w2 = int(round(2.0 * w_plus))
    le = int(counts[: w2 + 1].sum())
    ge = int(counts[w2:].sum())
    return min(1.0, 2.0 * min(le, ge) / 2 ** len(ranks))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zeros are dropped, tied absolute differences get average ranks. With at
    most EXACT_WILCOXON_LIMIT effective pairs the p-value enumerates the full
    sign-assignment distribution exactly; above that a normal approximation
    with continuity correction and tie-adjusted variance takes over.
    """
    w_plus, ranks = _signed_rank_parts(_paired_diffs(a, b))
    m = int(ranks.size)
    if m <= EXACT_WILCOXON_LIMIT:
        p = _exact_signed_rank_p(w_plus, ranks)
    else:
        mean = m * (m + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(((tie_counts**3 - tie_counts)).sum()) / 48.0
        sd = math.sqrt(m * (m + 1) * (2 * m + 1) / 24.0 - tie_term)
        gap = w_plus - mean
        z = (gap - 0.5 * np.sign(gap)) / sd
        p = min(1.0, 2.0 * _norm_sf(abs(z)))
    return TestResult(w_plus, p, TestMethod.WILCOXON_SIGNED_RANK, m)


@dataclass(frozen=True)
class ComparisonReport:
    """Paired per-date errors for both models, their summaries, the test
    battery outcome, and the selected model (or a declared tie)."""

    dates: tuple[dt.date, ...]
    ns_rmse: tuple[float, ...]
    sv_rmse: tuple[float, ...]
    summaries: dict  # model value -> SummaryStats
    normality: dict  # model value -> TestResult | None (degenerate series)
    comparison: TestResult | None
    selected_model: str  # "ns" | "svensson" | "tie"
    rationale: str
    alpha: float


def _aligned_errors(
    ns_fits: Sequence[FitResult], sv_fits: Sequence[FitResult]
) -> tuple[tuple[dt.date, ...], list[float], list[float]]:
    ns_dates = [f.date for f in ns_fits]
    sv_dates = [f.date for f in sv_fits]
    if ns_dates != sv_dates:
        raise DateMismatch("fit batches cover different dates or orders")
    return tuple(ns_dates), [f.rmse for f in ns_fits], [f.rmse for f in sv_fits]


def compare_models(
    ns_fits: Sequence[FitResult],
    sv_fits: Sequence[FitResult],
    alpha: float = 0.05,
) -> ComparisonReport:
    """Decide which model fits better from paired per-date errors.

    Shapiro-Wilk screens both error series: only when both look normal
    (p >= alpha) does a paired t-test compare them, otherwise the Wilcoxon
    signed-rank test does. A significant difference selects the model with
    the smaller median rmse; anything else is a declared tie.
    """
    if not 0.0 < alpha < 1.0:
        raise StatsError("alpha must lie in (0, 1)")
    dates, ns_err, sv_err = _aligned_errors(ns_fits, sv_fits)
    summaries = {
        Model.NS.value: summarize(ns_err),
        Model.SVENSSON.value: summarize(sv_err),
    }
    normality: dict = {}
    for key, series in ((Model.NS.value, ns_err), (Model.SVENSSON.value, sv_err)):
        try:
            normality[key] = shapiro_wilk(series)
        except DegenerateSample:
            normality[key] = None

    both_normal = all(
        result is not None and result.p_value >= alpha for result in normality.values()
    )
    notes: list[str] = []
    if None in normality.values():
        notes.append("a degenerate error series forced the nonparametric branch")

    comparison: TestResult | None = None
    try:
        if both_normal:
            try:
                comparison = paired_t_test(ns_err, sv_err)
            except ZeroVariance:
                notes.append("constant differences made the t-test degenerate; used signed-rank")
                comparison = wilcoxon_signed_rank(ns_err, sv_err)
        else:
            comparison = wilcoxon_signed_rank(ns_err, sv_err)
    except AllZeroDifferences:
        selected = "tie"
        rationale = "both models produced identical errors on every date"
        return ComparisonReport(
            dates, tuple(ns_err), tuple(sv_err), summaries, normality, None, selected,
            rationale, alpha,
        )

    med_ns = summaries[Model.NS.value].median
    med_sv = summaries[Model.SVENSSON.value].median
    if comparison.p_value < alpha:
        if med_ns < med_sv:
            selected = Model.NS.value
            better, worse = Model.NS, Model.SVENSSON
        elif med_sv < med_ns:
            selected = Model.SVENSSON.value
            better, worse = Model.SVENSSON, Model.NS
        else:
            selected = "tie"
            better = worse = None
        if better is not None:
            rationale = (
                f"{comparison.method.value} rejects equal errors "
                f"(p = {comparison.p_value:.4g} < alpha = {alpha:g}) and {better.display_name} "
                f"has the smaller median rmse ({min(med_ns, med_sv):.6g} vs "
                f"{max(med_ns, med_sv):.6g} for {worse.display_name})"
            )
        else:
            rationale = (
                f"{comparison.method.value} is significant but the median errors are equal"
            )
    else:
        selected = "tie"
        rationale = (
            f"{comparison.method.value} finds no significant difference "
            f"(p = {comparison.p_value:.4g} >= alpha = {alpha:g})"
        )
    if notes:
        rationale += "; " + "; ".join(notes)
    return ComparisonReport(
        dates, tuple(ns_err), tuple(sv_err), summaries, normality, comparison, selected,
        rationale, alpha,
    )


def report_to_dict(report: ComparisonReport) -> dict:
    return {
        "alpha": report.alpha,
        "dates": [d.isoformat() for d in report.dates],
        "ns_rmse": list(report.ns_rmse),
        "sv_rmse": list(report.sv_rmse),
        "summaries": {k: v.as_dict() for k, v in report.summaries.items()},
        "normality": {
            k: (v.as_dict() if v is not None else None) for k, v in report.normality.items()
        },
        "comparison": report.comparison.as_dict() if report.comparison else None,
        "selected_model": report.selected_model,
        "rationale": report.rationale,
    }


def report_from_dict(d: dict) -> ComparisonReport:
    return ComparisonReport(
        dates=tuple(dt.date.fromisoformat(s) for s in d["dates"]),
        ns_rmse=tuple(float(x) for x in d["ns_rmse"]),
        sv_rmse=tuple(float(x) for x in d["sv_rmse"]),
        summaries={k: SummaryStats(**v) for k, v in d["summaries"].items()},
        normality={
            k: (TestResult.from_dict(v) if v is not None else None)
            for k, v in d["normality"].items()
        },
        comparison=TestResult.from_dict(d["comparison"]) if d["comparison"] else None,
        selected_model=d["selected_model"],
        rationale=d["rationale"],
        alpha=float(d["alpha"]),
    )


def report_to_json(report: ComparisonReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> ComparisonReport:
    return report_from_dict(json.loads(text))


_DISPLAY = {Model.NS.value: "Nelson-Siegel", Model.SVENSSON.value: "Svensson"}


def report_to_text(report: ComparisonReport) -> str:
    """Human-readable tables: error summaries per model, normality tests,
    and the paired comparison with the selection."""
    lines = [
        f"Model comparison over {len(report.dates)} auction dates (alpha = {report.alpha:g})",
        "",
        "RMSE summary statistics (percentage points)",
        f"{'Model':<15}{'Median':>12}{'Mean':>12}{'Q1':>12}{'Q3':>12}{'Variance':>12}",
    ]
    for key in (Model.NS.value, Model.SVENSSON.value):
        s = report.summaries[key]
        lines.append(
            f"{_DISPLAY[key]:<15}{s.median:>12.6f}{s.mean:>12.6f}"
            f"{s.q1:>12.6f}{s.q3:>12.6f}{s.variance:>12.6f}"
        )
    lines += ["", "Shapiro-Wilk normality of the error series",
              f"{'Model':<15}{'W':>12}{'p-value':>14}"]
    for key in (Model.NS.value, Model.SVENSSON.value):
        r = report.normality[key]
        if r is None:
            lines.append(f"{_DISPLAY[key]:<15}{'degenerate':>26}")
        else:
            lines.append(f"{_DISPLAY[key]:<15}{r.statistic:>12.6f}{r.p_value:>14.6g}")
    lines.append("")
    if report.comparison is not None:
        c = report.comparison
        lines.append(
            f"Paired comparison: {c.method.value}  statistic = {c.statistic:.6g}  "
            f"p-value = {c.p_value:.6g}  n = {c.n}"
        )
    else:
        lines.append("Paired comparison: not run (degenerate differences)")
    selected = _DISPLAY.get(report.selected_model, "tie")
    lines.append(f"Selected model: {selected}")
    lines.append(f"Rationale: {report.rationale}")
    return "\n".join(lines) + "\n"


def report_to_csv(report: ComparisonReport) -> str:
    """Machine-readable paired errors: date,ns_rmse,sv_rmse."""
    rows = ["date,ns_rmse,sv_rmse"]
    for day, e_ns, e_sv in zip(report.dates, report.ns_rmse, report.sv_rmse):
        rows.append(f"{day.isoformat()},{e_ns!r},{e_sv!r}")
    return "\n".join(rows) + "\n"


def paired_errors_from_csv(text: str) -> tuple[tuple[dt.date, ...], tuple[float, ...], tuple[float, ...]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "date,ns_rmse,sv_rmse":
        raise StatsError("unexpected paired-errors header")
    dates, ns, sv = [], [], []
    for ln in lines[1:]:
        day, e_ns, e_sv = ln.split(",")
        dates.append(dt.date.fromisoformat(day))
        ns.append(float(e_ns))
        sv.append(float(e_sv))
    return tuple(dates), tuple(ns), tuple(sv)
