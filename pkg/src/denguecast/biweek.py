"""Biweek calendar: 26 fixed 14-day intervals per year.

Biweek k of a year covers days 14*(k-1)+1 .. 14*k of that year; biweek 26
absorbs the 15- or 16-day remainder through Dec 31. The absolute ordinal
counts biweeks from the 1968 epoch so lag arithmetic and spline time
indices work across year boundaries.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

EPOCH_YEAR = 1968
BIWEEKS_PER_YEAR = 26


@dataclass(frozen=True, order=True)
class Biweek:
    year: int
    index: int

    def __post_init__(self):
        if not 1 <= self.index <= BIWEEKS_PER_YEAR:
            raise ValueError(f"biweek index must be in 1..26, got {self.index}")

    @property
    def ordinal(self) -> int:
        """Count of biweeks since (1968, 1) = 0."""
        return BIWEEKS_PER_YEAR * (self.year - EPOCH_YEAR) + (self.index - 1)

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "Biweek":
        year, idx0 = divmod(ordinal, BIWEEKS_PER_YEAR)
        return cls(EPOCH_YEAR + year, idx0 + 1)


def date_to_biweek(d: dt.date) -> Biweek:
    """Map a date to its biweek; days 351..366 all fall in biweek 26."""
    doy = d.timetuple().tm_yday
    index = min((doy + 13) // 14, BIWEEKS_PER_YEAR)
    return Biweek(d.year, index)


def biweek_to_interval(b: Biweek) -> tuple[dt.date, dt.date]:
    """Inclusive (start, end) dates of a biweek; biweek 26 ends Dec 31."""
    start = dt.date(b.year, 1, 1) + dt.timedelta(days=14 * (b.index - 1))
    if b.index == BIWEEKS_PER_YEAR:
        end = dt.date(b.year, 12, 31)
    else:
        end = start + dt.timedelta(days=13)
    return start, end


def date_to_ordinal(d: dt.date) -> int:
    return date_to_biweek(d).ordinal


def ordinal_to_interval(ordinal: int) -> tuple[dt.date, dt.date]:
    return biweek_to_interval(Biweek.from_ordinal(ordinal))


def phase(ordinal: int) -> int:
    """Position within the 26-biweek seasonal cycle, in 0..25."""
    return ordinal % BIWEEKS_PER_YEAR


def analysis_dates(
    start_year: int,
    end_year: int,
    exclusions: list[tuple[int, int]] | None = None,
) -> list[dt.date]:
    """First day of each biweek in [start_year, end_year], in order.

    ``exclusions`` lists (year, biweek index) pairs to skip, mirroring the
    convention that an analysis only happens when data was delivered in
    the prior biweek.
    """
    excluded = {(y, k) for y, k in (exclusions or [])}
    dates = []
    for year in range(start_year, end_year + 1):
        for index in range(1, BIWEEKS_PER_YEAR + 1):
            if (year, index) in excluded:
                continue
            dates.append(biweek_to_interval(Biweek(year, index))[0])
    return dates


def parse_iso_date(s: str) -> dt.date:
    return dt.date.fromisoformat(s)
