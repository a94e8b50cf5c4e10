"""Auction-report ingestion: CSV parsing, per-date grouping on a maturity
grid, and forward-in-time imputation of missing tenors.

The CSV contract is a UTF-8 file with header
``auction_date,maturity_years,instrument,clean_price,face_value,coupon_rate_pct,reported_yield_pct``
(the ``face_value`` column may be omitted, in which case 100 is assumed).
Dates are ISO-8601, numbers use a decimal point and no thousands separators.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .errors import TermfitError

__all__ = [
    "Instrument",
    "Provenance",
    "AuctionRecord",
    "MaturityGrid",
    "DateObservation",
    "Dataset",
    "CsvSchema",
    "OffGridMaturity",
    "DroppedDate",
    "SchemaError",
    "MalformedRow",
    "InvariantViolation",
    "DuplicateTenor",
    "EmptyAfterImputation",
    "MarketDataError",
    "parse_auctions",
    "serialize_records",
    "group_by_date",
    "impute_forward",
    "parse_tenor",
    "tenor_str",
    "write_dataset",
    "read_dataset",
]

CSV_HEADER = (
    "auction_date",
    "maturity_years",
    "instrument",
    "clean_price",
    "face_value",
    "coupon_rate_pct",
    "reported_yield_pct",
)
_HEADER_NO_FACE = tuple(c for c in CSV_HEADER if c != "face_value")

DEFAULT_TENORS = (
    Fraction(1, 4),
    Fraction(1, 2),
    Fraction(1),
    Fraction(2),
    Fraction(3),
    Fraction(4),
    Fraction(5),
)


class MarketDataError(TermfitError):
    """Base class for ingestion and validation failures."""


class SchemaError(MarketDataError):
    """Header does not match the CSV contract."""


class MalformedRow(MarketDataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InvariantViolation(MarketDataError):
    def __init__(self, field: str, reason: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {reason}")
        self.line = line
        self.field = field
        self.reason = reason


class DuplicateTenor(MarketDataError):
    def __init__(self, date: dt.date, tenor: Fraction):
        super().__init__(f"two records for tenor {tenor_str(tenor)}y on {date.isoformat()}")
        self.date = date
        self.tenor = tenor


class EmptyAfterImputation(MarketDataError):
    """No auction date survived imputation."""


class Instrument(str, Enum):
    BILL = "Bill"
    BOND = "Bond"


class Provenance(str, Enum):
    ORIGINAL = "original"
    IMPUTED = "imputed"


def parse_tenor(text: str) -> Fraction:
    """Exact rational tenor from a decimal or ``p/q`` string."""
    return Fraction(text.strip())


def tenor_str(t: Fraction) -> str:
    """Canonical text form: exact decimal when the denominator allows one
    (e.g. ``0.25``), otherwise ``p/q``. Round-trips through parse_tenor."""
    den = t.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{t.numerator}/{t.denominator}"
    k = max(twos, fives)
    scaled = t.numerator * 10**k // t.denominator
    if k == 0:
        return str(scaled)
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(k + 1, "0")
    return f"{sign}{digits[:-k]}.{digits[-k:]}"


@dataclass(frozen=True)
class AuctionRecord:
    """One treasury security observed at auction. Prices are per 100 face
    unless the face_value column says otherwise."""

    auction_date: dt.date
    maturity_years: Fraction
    instrument: Instrument
    clean_price: float
    face_value: float = 100.0
    coupon_rate_pct: float = 0.0
    reported_yield_pct: float = 0.0

    def __post_init__(self):
        if self.maturity_years <= 0:
            raise InvariantViolation("maturity_years", "must be positive")
        if self.clean_price <= 0:
            raise InvariantViolation("clean_price", "must be positive")
        if self.face_value <= 0:
            raise InvariantViolation("face_value", "must be positive")
        if self.coupon_rate_pct < 0:
            raise InvariantViolation("coupon_rate_pct", "must be non-negative")
        is_bill_shaped = self.maturity_years <= 1 and self.coupon_rate_pct == 0
        if self.instrument is Instrument.BILL and not is_bill_shaped:
            raise InvariantViolation(
                "instrument", "a Bill must have maturity <= 1y and zero coupon"
            )
        if self.instrument is Instrument.BOND and is_bill_shaped:
            raise InvariantViolation(
                "instrument", "a zero-coupon security with maturity <= 1y must be a Bill"
            )


@dataclass(frozen=True)
class MaturityGrid:
    """Strictly increasing tenors (years) a complete date must cover."""

    tenors: tuple[Fraction, ...] = DEFAULT_TENORS

    def __post_init__(self):
        if not self.tenors:
            raise InvariantViolation("tenors", "grid must be non-empty")
        if any(t <= 0 for t in self.tenors):
            raise InvariantViolation("tenors", "grid tenors must be positive")
        if any(a >= b for a, b in zip(self.tenors, self.tenors[1:])):
            raise InvariantViolation("tenors", "grid tenors must be strictly increasing")

    def __iter__(self):
        return iter(self.tenors)

    def __len__(self):
        return len(self.tenors)

    def __contains__(self, t) -> bool:
        return t in self.tenors


@dataclass(frozen=True)
class DateObservation:
    """All records of one auction date keyed by grid tenor; tenors that were
    filled by imputation are flagged."""

    date: dt.date
    records: Mapping[Fraction, AuctionRecord]
    imputed_tenors: frozenset[Fraction] = frozenset()

    def covers(self, grid: MaturityGrid) -> bool:
        return all(t in self.records for t in grid)

    def missing(self, grid: MaturityGrid) -> tuple[Fraction, ...]:
        return tuple(t for t in grid if t not in self.records)


@dataclass(frozen=True)
class Dataset:
    grid: MaturityGrid
    observations: tuple[DateObservation, ...]
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self):
        dates = [o.date for o in self.observations]
        if any(a >= b for a, b in zip(dates, dates[1:])):
            raise InvariantViolation("observations", "dates must be strictly increasing")
        for obs in self.observations:
            if any(t not in self.grid for t in obs.records):
                raise InvariantViolation(
                    "records", f"{obs.date.isoformat()} holds a tenor outside the grid"
                )
            if self.provenance is Provenance.ORIGINAL and obs.imputed_tenors:
                raise InvariantViolation(
                    "provenance", "an original dataset cannot carry imputed tenors"
                )

    @property
    def complete(self) -> bool:
        return all(obs.covers(self.grid) for obs in self.observations)


@dataclass(frozen=True)
class CsvSchema:
    """Shape of the auction CSV; face_value may be absent (defaults to 100)."""

    delimiter: str = ","
    allow_missing_face: bool = True


@dataclass(frozen=True)
class OffGridMaturity:
    """A valid record whose maturity is not on the grid; reported, excluded."""

    date: dt.date
    maturity_years: Fraction

    def as_dict(self) -> dict:
        return {"date": self.date.isoformat(), "maturity_years": tenor_str(self.maturity_years)}


@dataclass(frozen=True)
class DroppedDate:
    """A date removed by imputation because some tenor had no earlier
    observation to carry forward."""

    date: dt.date
    missing_tenors: tuple[Fraction, ...]

    def as_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "missing_tenors": [tenor_str(t) for t in self.missing_tenors],
        }


def _parse_row(line: int, cells: list[str], has_face: bool) -> AuctionRecord:
    try:
        auction_date = dt.date.fromisoformat(cells[0].strip())
    except ValueError as exc:
        raise MalformedRow(line, f"bad auction_date: {exc}") from None
    try:
        maturity = parse_tenor(cells[1])
    except (ValueError, ZeroDivisionError):
        raise MalformedRow(line, f"bad maturity_years {cells[1]!r}") from None
    name = cells[2].strip().lower()
    if name == "bill":
        instrument = Instrument.BILL
    elif name == "bond":
        instrument = Instrument.BOND
    else:
        raise MalformedRow(line, f"instrument must be Bill or Bond, got {cells[2]!r}")
    numeric = cells[3:] if has_face else [cells[3], "100", *cells[4:]]
    try:
        price, face, coupon, reported = (float(c) for c in numeric)
    except ValueError:
        raise MalformedRow(line, "non-numeric price/face/coupon/yield field") from None
    try:
        return AuctionRecord(auction_date, maturity, instrument, price, face, coupon, reported)
    except InvariantViolation as exc:
        raise InvariantViolation(exc.field, exc.reason, line=line) from None


def parse_auctions(source, schema: CsvSchema = CsvSchema()) -> list[AuctionRecord]:
    """Parse the auction CSV into records, preserving file order.

    ``source`` may be text, UTF-8 bytes, or a readable file object. Raises
    SchemaError on a bad header, MalformedRow / InvariantViolation on bad
    rows (fail-fast with the 1-based line number).
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError(f"input is not valid UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(source), delimiter=schema.delimiter)
    try:
        header = tuple(c.strip() for c in next(reader))
    except StopIteration:
        raise SchemaError("empty input: missing header row") from None
    if header == CSV_HEADER:
        has_face = True
    elif schema.allow_missing_face and header == _HEADER_NO_FACE:
        has_face = False
    else:
        raise SchemaError(
            f"header mismatch: expected {','.join(CSV_HEADER)}, got {','.join(header)}"
        )
    expected_cells = len(CSV_HEADER) if has_face else len(_HEADER_NO_FACE)
    records = []
    for cells in reader:
        if not cells:
            continue
        line = reader.line_num
        if len(cells) != expected_cells:
            raise MalformedRow(line, f"expected {expected_cells} fields, got {len(cells)}")
        records.append(_parse_row(line, cells, has_face))
    return records


def _format_number(x: float) -> str:
    # repr is the shortest round-tripping decimal form, so parse(serialize(r))
    # reproduces the exact float
    return repr(float(x))


def serialize_records(records: Iterable[AuctionRecord]) -> str:
    """Inverse of parse_auctions: full-header CSV text."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(
            [
                r.auction_date.isoformat(),
                tenor_str(r.maturity_years),
                r.instrument.value,
                _format_number(r.clean_price),
                _format_number(r.face_value),
                _format_number(r.coupon_rate_pct),
                _format_number(r.reported_yield_pct),
            ]
        )
    return out.getvalue()


def group_by_date(
    records: Iterable[AuctionRecord], grid: MaturityGrid | None = None
) -> tuple[Dataset, list[OffGridMaturity]]:
    """Partition records into per-date observations on the grid.

    Records whose maturity is off-grid are excluded and returned as
    warnings, never silently dropped. Two records sharing a date and tenor
    raise DuplicateTenor.
    """
    grid = grid or MaturityGrid()
    by_date: dict[dt.date, dict[Fraction, AuctionRecord]] = {}
    warnings: list[OffGridMaturity] = []
    for rec in records:
        if rec.maturity_years not in grid:
            warnings.append(OffGridMaturity(rec.auction_date, rec.maturity_years))
            continue
        slot = by_date.setdefault(rec.auction_date, {})
        if rec.maturity_years in slot:
            raise DuplicateTenor(rec.auction_date, rec.maturity_years)
        slot[rec.maturity_years] = rec
    observations = tuple(
        DateObservation(d, by_date[d]) for d in sorted(by_date)
    )
    return Dataset(grid, observations, Provenance.ORIGINAL), warnings


def impute_forward(ds: Dataset) -> tuple[Dataset, list[DroppedDate]]:
    """Complete every date by carrying each tenor's most recent earlier
    observation forward (price, coupon and yield move as a unit).

    Dates with a tenor that has never been observed before are dropped and
    reported; the result always has Imputed provenance. Idempotent, and
    never alters a non-missing record.
    """
    last_seen: dict[Fraction, AuctionRecord] = {}
    kept: list[DateObservation] = []
    dropped: list[DroppedDate] = []
    for obs in ds.observations:
        records = dict(obs.records)
        flags = set(obs.imputed_tenors)
        unresolved = []
        for tenor in ds.grid:
            if tenor in records:
                continue
            source = last_seen.get(tenor)
            if source is None:
                unresolved.append(tenor)
            else:
                records[tenor] = replace(source, auction_date=obs.date)
                flags.add(tenor)
        for tenor, rec in obs.records.items():
            if tenor not in obs.imputed_tenors:
                last_seen[tenor] = rec
        if unresolved:
            dropped.append(DroppedDate(obs.date, tuple(unresolved)))
        else:
            kept.append(DateObservation(obs.date, records, frozenset(flags)))
    if not kept:
        raise EmptyAfterImputation("imputation left no usable auction dates")
    return Dataset(ds.grid, tuple(kept), Provenance.IMPUTED), dropped


def _dataset_records(ds: Dataset) -> list[AuctionRecord]:
    return [obs.records[t] for obs in ds.observations for t in ds.grid if t in obs.records]


def dataset_meta_dict(ds: Dataset) -> dict:
    return {
        "grid": [tenor_str(t) for t in ds.grid],
        "provenance": ds.provenance.value,
        "dates": len(ds.observations),
        "imputed_tenors": {
            obs.date.isoformat(): sorted(tenor_str(t) for t in obs.imputed_tenors)
            for obs in ds.observations
            if obs.imputed_tenors
        },
    }


def write_dataset(ds: Dataset, records_path, meta_path=None) -> None:
    """Write the records CSV and (optionally) a sidecar JSON with the grid,
    provenance and imputation flags."""
    Path(records_path).write_text(serialize_records(_dataset_records(ds)), encoding="utf-8")
    if meta_path is not None:
        Path(meta_path).write_text(
            json.dumps(dataset_meta_dict(ds), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def read_dataset(records_path, meta_path=None, grid: MaturityGrid | None = None) -> Dataset:
    """Rebuild a Dataset from write_dataset output. The sidecar restores the
    grid, provenance and imputation flags; without it the records are grouped
    on ``grid`` (default grid if omitted) with Original provenance."""
    text = Path(records_path).read_text(encoding="utf-8")
    records = parse_auctions(text)
    meta = None
    if meta_path is not None and Path(meta_path).exists():
        meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
        grid = MaturityGrid(tuple(parse_tenor(t) for t in meta["grid"]))
    ds, _ = group_by_date(records, grid)
    if meta is None:
        return ds
    flags = {
        dt.date.fromisoformat(day): frozenset(parse_tenor(t) for t in tenors)
        for day, tenors in meta.get("imputed_tenors", {}).items()
    }
    observations = tuple(
        DateObservation(o.date, o.records, flags.get(o.date, frozenset()))
        for o in ds.observations
    )
    return Dataset(ds.grid, observations, Provenance(meta["provenance"]))
