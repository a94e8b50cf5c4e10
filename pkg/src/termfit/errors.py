"""Shared exception types and diagnostic records."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass


class TermfitError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TermfitError):
    """An argument is outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class DateFailure:
    """One auction date that could not be processed; batches collect these
    instead of aborting."""

    date: dt.date
    stage: str
    message: str

    def as_dict(self) -> dict:
        return {"date": self.date.isoformat(), "stage": self.stage, "message": self.message}
