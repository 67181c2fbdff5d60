"""Append-only bitemporal case store.

Every record carries both an onset date (event time) and an arrival date
(the day the record became available for analysis). Snapshots answer
"what did we know on date d" by filtering on arrival, which is what makes
honest retrospective real-time experiments possible.

On disk a store is a directory holding two plain-text files:

    cases.csv    append-only log, header
                 ``record_id,province,onset_date,diagnosis,arrival_ts``
    monthly.csv  optional historical monthly counts, header
                 ``province,year,month,count``

Lines are only ever appended to cases.csv; nothing is rewritten.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import math
import os
from dataclasses import dataclass

import numpy as np

DIAGNOSES = ("DF", "DHF", "DSS")

CASES_HEADER = ["record_id", "province", "onset_date", "diagnosis", "arrival_ts"]
MONTHLY_HEADER = ["province", "year", "month", "count"]


@dataclass(frozen=True)
class CaseRecord:
    record_id: str
    province: str
    onset_date: dt.date
    diagnosis: str
    arrival_ts: dt.date

    def validate(self) -> str | None:
        """Return a rejection reason, or None if the record is well-formed."""
        if not self.record_id:
            return "empty record_id"
        if self.diagnosis not in DIAGNOSES:
            return f"unknown diagnosis {self.diagnosis!r}"
        if self.arrival_ts < self.onset_date:
            return "arrival_ts before onset_date"
        return None


@dataclass(frozen=True)
class MonthlyCount:
    province: str
    year: int
    month: int
    count: int

    def validate(self) -> str | None:
        if not 1 <= self.month <= 12:
            return f"month {self.month} out of range"
        if self.count < 0:
            return f"negative count {self.count}"
        return None


@dataclass(frozen=True)
class Snapshot:
    """Immutable as-of view: every record arrived on or before ``as_of``."""

    as_of: dt.date
    records: tuple[CaseRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class IngestReport:
    ingested: int
    rejections: list[tuple[str, str]]  # (record_id, reason)


class CaseStore:
    """Append-only store over case records plus static monthly counts."""

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = os.fspath(directory) if directory is not None else None
        self._records: list[CaseRecord] = []
        self._ids: set[str] = set()
        self._monthly: list[MonthlyCount] = []
        if self.directory is not None:
            os.makedirs(self.directory, exist_ok=True)
            self._load()

    # -- persistence ----------------------------------------------------

    def _cases_path(self) -> str:
        return os.path.join(self.directory, "cases.csv")

    def _monthly_path(self) -> str:
        return os.path.join(self.directory, "monthly.csv")

    def _load(self):
        path = self._cases_path()
        if os.path.exists(path):
            with open(path, newline="") as fh:
                for rec in read_linelist(fh):
                    self._records.append(rec)
                    self._ids.add(rec.record_id)
        mpath = self._monthly_path()
        if os.path.exists(mpath):
            with open(mpath, newline="") as fh:
                self._monthly = read_monthly(fh)

    def _append_to_log(self, records: list[CaseRecord]):
        if self.directory is None:
            return
        path = self._cases_path()
        new_file = not os.path.exists(path)
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new_file:
                writer.writerow(CASES_HEADER)
            for r in records:
                writer.writerow(
                    [r.record_id, r.province, r.onset_date.isoformat(),
                     r.diagnosis, r.arrival_ts.isoformat()]
                )

    # -- ingest ---------------------------------------------------------

    def ingest(self, records: list[CaseRecord]) -> IngestReport:
        """Append well-formed records; duplicates and malformed ones are
        rejected individually while the rest proceed."""
        accepted: list[CaseRecord] = []
        rejections: list[tuple[str, str]] = []
        for rec in records:
            reason = rec.validate()
            if reason is None and rec.record_id in self._ids:
                reason = "duplicate record_id"
            if reason is None and any(a.record_id == rec.record_id for a in accepted):
                reason = "duplicate record_id"
            if reason is not None:
                rejections.append((rec.record_id, reason))
                continue
            accepted.append(rec)
        for rec in accepted:
            self._records.append(rec)
            self._ids.add(rec.record_id)
        self._append_to_log(accepted)
        return IngestReport(ingested=len(accepted), rejections=rejections)

    def set_monthly(self, counts: list[MonthlyCount]):
        for c in counts:
            reason = c.validate()
            if reason is not None:
                raise ValueError(f"invalid monthly count for {c.province}: {reason}")
        self._monthly = list(counts)
        if self.directory is not None:
            with open(self._monthly_path(), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(MONTHLY_HEADER)
                for c in self._monthly:
                    writer.writerow([c.province, c.year, c.month, c.count])

    @property
    def monthly(self) -> list[MonthlyCount]:
        return list(self._monthly)

    @property
    def n_records(self) -> int:
        return len(self._records)

    def provinces(self) -> list[str]:
        return sorted({r.province for r in self._records})

    def final_arrival(self) -> dt.date:
        if not self._records:
            raise ValueError("store is empty")
        return max(r.arrival_ts for r in self._records)

    # -- queries ----------------------------------------------------------

    def as_of(self, d: dt.date, diagnosis: str | None = None) -> Snapshot:
        """Snapshot of records with arrival_ts <= d, optionally filtered
        to one diagnosis. An empty snapshot is valid."""
        recs = tuple(
            r for r in self._records
            if r.arrival_ts <= d and (diagnosis is None or r.diagnosis == diagnosis)
        )
        return Snapshot(as_of=d, records=recs)


def delay_quantiles(snapshot: Snapshot, probs: list[float]) -> list[float]:
    """Empirical quantiles (type-7) of reporting delay, in weeks."""
    if len(snapshot) == 0:
        raise ValueError("cannot compute delay quantiles of an empty snapshot")
    delays = np.array(
        [(r.arrival_ts - r.onset_date).days / 7.0 for r in snapshot.records]
    )
    return [float(q) for q in np.quantile(delays, probs)]


@dataclass(frozen=True)
class DelayModel:
    """Reporting-delay distribution used to synthesize arrival dates.

    ``lognormal`` is parameterized by its median and 75th percentile in
    weeks (defaults match surveillance delays with median 6 and 75th
    percentile 10 weeks); ``constant`` always draws ``value_weeks``.
    Draws are clamped to [1, 50] weeks and rounded to whole days.
    """

    family: str = "lognormal"
    median_weeks: float = 6.0
    p75_weeks: float = 10.0
    value_weeks: float = 0.0
    min_weeks: float = 1.0
    max_weeks: float = 50.0

    def validate(self):
        if self.family not in ("lognormal", "constant"):
            raise ValueError(f"unknown delay family {self.family!r}")
        if self.family == "lognormal":
            if self.median_weeks <= 0:
                raise ValueError("median_weeks must be positive")
            if self.p75_weeks <= self.median_weeks:
                raise ValueError("p75_weeks must exceed median_weeks")
        if self.min_weeks < 0 or self.max_weeks < self.min_weeks:
            raise ValueError("invalid clamp range")

    def sample_weeks(self, n: int, rng: np.random.Generator) -> np.ndarray:
        self.validate()
        if self.family == "constant":
            weeks = np.full(n, float(self.value_weeks))
        else:
            z75 = 0.6744897501960817  # standard normal 75th percentile
            mu = math.log(self.median_weeks)
            sigma = math.log(self.p75_weeks / self.median_weeks) / z75
            weeks = rng.lognormal(mean=mu, sigma=sigma, size=n)
        return np.clip(weeks, self.min_weeks, self.max_weeks)


def inject_delays(
    records: list[CaseRecord], model: DelayModel, seed: int
) -> list[CaseRecord]:
    """Replace arrival dates with onset + a synthetic delay draw.

    Deterministic given the seed; records are processed in input order.
    """
    model.validate()
    rng = np.random.default_rng(seed)
    weeks = model.sample_weeks(len(records), rng)
    days = np.rint(weeks * 7.0).astype(int)
    return [
        dataclasses.replace(rec, arrival_ts=rec.onset_date + dt.timedelta(days=int(d)))
        for rec, d in zip(records, days)
    ]


# -- delimited text I/O ---------------------------------------------------


class LineFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def read_linelist(fh) -> list[CaseRecord]:
    """Parse a case line-list; raises LineFormatError citing the 1-based
    file line of the first malformed row."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise LineFormatError(1, "missing header")
    if [h.strip() for h in header] != CASES_HEADER:
        raise LineFormatError(1, f"expected header {','.join(CASES_HEADER)}")
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise LineFormatError(line_no, f"expected 5 fields, got {len(row)}")
        rid, province, onset_s, diagnosis, arrival_s = [f.strip() for f in row]
        try:
            onset = dt.date.fromisoformat(onset_s)
            arrival = dt.date.fromisoformat(arrival_s)
        except ValueError as exc:
            raise LineFormatError(line_no, str(exc)) from None
        rec = CaseRecord(rid, province, onset, diagnosis, arrival)
        reason = rec.validate()
        if reason is not None:
            raise LineFormatError(line_no, reason)
        records.append(rec)
    return records


def read_monthly(fh) -> list[MonthlyCount]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise LineFormatError(1, "missing header")
    if [h.strip() for h in header] != MONTHLY_HEADER:
        raise LineFormatError(1, f"expected header {','.join(MONTHLY_HEADER)}")
    counts = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise LineFormatError(line_no, f"expected 4 fields, got {len(row)}")
        province, year_s, month_s, count_s = [f.strip() for f in row]
        try:
            mc = MonthlyCount(province, int(year_s), int(month_s), int(count_s))
        except ValueError as exc:
            raise LineFormatError(line_no, str(exc)) from None
        reason = mc.validate()
        if reason is not None:
            raise LineFormatError(line_no, reason)
        counts.append(mc)
    return counts


def write_linelist(path: str | os.PathLike, records: list[CaseRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CASES_HEADER)
        for r in records:
            writer.writerow(
                [r.record_id, r.province, r.onset_date.isoformat(),
                 r.diagnosis, r.arrival_ts.isoformat()]
            )
