"""Per-province biweekly series construction.

Four transformations feed the model: aggregating line-list snapshots into
biweekly onset counts, disaggregating historical monthly totals through a
monotone cubic fit to the cumulative curve, dropping the under-reported
tail before an analysis date, and a light moving-average smooth.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .biweek import (
    Biweek,
    biweek_to_interval,
    date_to_biweek,
    date_to_ordinal,
    ordinal_to_interval,
)
from .store import MonthlyCount, Snapshot

OBSERVED = "observed"
INTERPOLATED = "interpolated"
SMOOTHED = "smoothed"


@dataclass
class BiweekSeries:
    """Contiguous biweekly values for one province.

    ``start`` is the absolute biweek ordinal of ``values[0]``; missing
    interior biweeks are explicit zeros, never holes.
    """

    province: str
    start: int
    values: np.ndarray
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.provenance:
            self.provenance = [OBSERVED] * len(self.values)
        if len(self.provenance) != len(self.values):
            raise ValueError("provenance length must match values")
        if np.any(self.values < 0):
            raise ValueError("series values must be non-negative")

    @property
    def end(self) -> int:
        """Ordinal of the last value (inclusive)."""
        return self.start + len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)

    def value_at(self, ordinal: int) -> float:
        if not self.start <= ordinal <= self.end:
            raise IndexError(f"ordinal {ordinal} outside [{self.start}, {self.end}]")
        return float(self.values[ordinal - self.start])

    def slice(self, start: int, end: int) -> "BiweekSeries":
        """Sub-series over [start, end] ordinals (inclusive)."""
        if start < self.start or end > self.end or end < start:
            raise IndexError("slice outside series range")
        i0, i1 = start - self.start, end - self.start + 1
        return BiweekSeries(self.province, start, self.values[i0:i1].copy(),
                            self.provenance[i0:i1])


def aggregate_linelist(
    snapshot: Snapshot,
    province: str,
    diagnosis: str | None = "DHF",
    start: int | None = None,
    end: int | None = None,
) -> BiweekSeries:
    """Count onsets per biweek for one province.

    Without explicit bounds the series runs from the province's first
    onset through the last biweek that had fully elapsed by the snapshot
    date, so a just-started biweek never contributes a partial count.
    """
    onsets = [
        r.onset_date
        for r in snapshot.records
        if r.province == province and (diagnosis is None or r.diagnosis == diagnosis)
    ]
    if start is None or end is None:
        known = {r.province for r in snapshot.records}
        if not onsets and province not in known:
            raise ValueError(f"unknown province {province!r} in snapshot")
    if end is None:
        end = last_complete_ordinal(snapshot.as_of)
    if start is None:
        start = min((date_to_ordinal(d) for d in onsets), default=end)
    if end < start:
        raise ValueError("series end precedes start")
    values = np.zeros(end - start + 1)
    for d in onsets:
        o = date_to_ordinal(d)
        if start <= o <= end:
            values[o - start] += 1
    return BiweekSeries(province, start, values, [OBSERVED] * len(values))


def last_complete_ordinal(as_of: dt.date) -> int:
    """Ordinal of the last biweek whose interval ends on or before as_of."""
    b = date_to_biweek(as_of)
    _, end = biweek_to_interval(b)
    return b.ordinal if end <= as_of else b.ordinal - 1


# -- monotone cubic interpolation -----------------------------------------


def monotone_cubic_interpolant(x: np.ndarray, y: np.ndarray):
    """Shape-preserving cubic Hermite interpolant through (x, y).

    Tangents start as secant averages and are then rescaled wherever the
    Fritsch-Carlson circle condition (alpha^2 + beta^2 <= 9) fails, which
    guarantees the interpolant is monotone on every interval where the
    data are. Evaluation beyond the knot range extends linearly with the
    boundary tangent. Returns a vectorized callable.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
        raise ValueError("need two or more paired knots")
    if np.any(np.diff(x) <= 0):
        raise ValueError("knot locations must be strictly increasing")

    h = np.diff(x)
    delta = np.diff(y) / h
    m = np.empty_like(x)
    m[0], m[-1] = delta[0], delta[-1]
    m[1:-1] = 0.5 * (delta[:-1] + delta[1:])

    for k in range(len(delta)):
        if delta[k] == 0.0:
            m[k] = 0.0
            m[k + 1] = 0.0
        else:
            a = m[k] / delta[k]
            b = m[k + 1] / delta[k]
            r2 = a * a + b * b
            if r2 > 9.0:
                tau = 3.0 / np.sqrt(r2)
                m[k] = tau * a * delta[k]
                m[k + 1] = tau * b * delta[k]

    def evaluate(q):
        q = np.asarray(q, dtype=float)
        scalar = q.ndim == 0
        q = np.atleast_1d(q)
        idx = np.clip(np.searchsorted(x, q, side="right") - 1, 0, len(x) - 2)
        t = (q - x[idx]) / h[idx]
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        out = (h00 * y[idx] + h10 * h[idx] * m[idx]
               + h01 * y[idx + 1] + h11 * h[idx] * m[idx + 1])
        below = q < x[0]
        above = q > x[-1]
        out[below] = y[0] + m[0] * (q[below] - x[0])
        out[above] = y[-1] + m[-1] * (q[above] - x[-1])
        return out[0] if scalar else out

    return evaluate


def cumulative_monthly_interpolant(monthly: list[MonthlyCount]):
    """Monotone interpolant of cumulative counts over one province's months.

    Knots sit at month-end dates (as proleptic day ordinals), anchored at
    zero on the day before the first month. Raises on negative counts or
    a gap in the month sequence.
    """
    if not monthly:
        raise ValueError("no monthly counts supplied")
    provinces = {m.province for m in monthly}
    if len(provinces) != 1:
        raise ValueError(f"expected a single province, got {sorted(provinces)}")
    ordered = sorted(monthly, key=lambda m: (m.year, m.month))
    for m in ordered:
        if m.count < 0:
            raise ValueError(f"negative monthly count in {m.year}-{m.month:02d}")
    for prev, cur in zip(ordered, ordered[1:]):
        if (cur.year, cur.month) != next_month(prev.year, prev.month):
            raise ValueError(
                f"months must be contiguous; gap after {prev.year}-{prev.month:02d}"
            )

    first_start = dt.date(ordered[0].year, ordered[0].month, 1)
    anchor = first_start - dt.timedelta(days=1)
    xs = [anchor.toordinal()]
    ys = [0.0]
    total = 0.0
    for m in ordered:
        total += m.count
        xs.append(month_end(m.year, m.month).toordinal())
        ys.append(total)
    interp = monotone_cubic_interpolant(np.array(xs), np.array(ys))
    last_end = dt.date.fromordinal(xs[-1])
    return interp, first_start, last_end


def interpolate_monthly(monthly: list[MonthlyCount]) -> BiweekSeries:
    """Disaggregate monthly totals into biweekly counts.

    The cumulative total is interpolated monotonically and differenced at
    biweek ends; only biweeks fully inside the covered date range appear,
    so no partial-month mass leaks into the edges.
    """
    interp, first_start, last_end = cumulative_monthly_interpolant(monthly)
    province = monthly[0].province

    start_b = date_to_biweek(first_start)
    if biweek_to_interval(start_b)[0] < first_start:
        start_b = Biweek.from_ordinal(start_b.ordinal + 1)
    end_b = date_to_biweek(last_end)
    if biweek_to_interval(end_b)[1] > last_end:
        end_b = Biweek.from_ordinal(end_b.ordinal - 1)
    if end_b.ordinal < start_b.ordinal:
        raise ValueError("monthly range too short to cover a full biweek")

    bounds = []
    for o in range(start_b.ordinal, end_b.ordinal + 1):
        _, end = ordinal_to_interval(o)
        bounds.append(end.toordinal())
    prev_end = (biweek_to_interval(Biweek.from_ordinal(start_b.ordinal))[0]
                - dt.timedelta(days=1)).toordinal()
    cum = interp(np.array([prev_end] + bounds, dtype=float))
    values = np.maximum(np.diff(cum), 0.0)
    return BiweekSeries(province, start_b.ordinal, values,
                        [INTERPOLATED] * len(values))


def month_end(year: int, month: int) -> dt.date:
    ny, nm = next_month(year, month)
    return dt.date(ny, nm, 1) - dt.timedelta(days=1)


def next_month(year: int, month: int) -> tuple[int, int]:
    return (year + 1, 1) if month == 12 else (year, month + 1)


# -- preparation for fitting ------------------------------------------------


def truncate_for_delay(
    series: BiweekSeries, analysis_date: dt.date, lag: int
) -> BiweekSeries:
    """Drop the under-reported tail: keep biweeks with ordinal <= T - lag,
    where T is the analysis date's biweek. With lag 0 this is the identity."""
    if lag < 0:
        raise ValueError("reporting lag must be >= 0")
    cutoff = date_to_ordinal(analysis_date) - lag
    if cutoff >= series.end:
        return series
    if cutoff < series.start:
        raise ValueError(
            f"series for {series.province} ends before the truncation point "
            f"(cutoff ordinal {cutoff}, series starts at {series.start})"
        )
    return series.slice(series.start, cutoff)


def smooth(series: BiweekSeries, window: int = 3) -> BiweekSeries:
    """Centered moving average with the window truncated at the edges.

    window must be odd; window 1 is the identity. Values are flagged
    ``smoothed``.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    if window == 1:
        return series
    out = smooth_values(series.values, window)
    return BiweekSeries(series.province, series.start, out,
                        [SMOOTHED] * len(out))


def smooth_values(values: np.ndarray, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    half = window // 2
    n = len(values)
    out = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


def floored_offset(value: float, floor: float = 0.5) -> float:
    """Multiplicative offsets must stay positive; zero counts otherwise
    absorb the process."""
    return max(float(value), floor)


def merge_sources(
    monthly_series: BiweekSeries | None,
    linelist_series: BiweekSeries | None,
    linelist_start: int | None = None,
) -> BiweekSeries:
    """Combine interpolated monthly history with line-list counts.

    Line-list values win from ``linelist_start`` (default: the line-list
    series start) onward; earlier biweeks come from the monthly series.
    """
    if linelist_series is None:
        if monthly_series is None:
            raise ValueError("no sources to merge")
        return monthly_series
    if monthly_series is None:
        return linelist_series
    if monthly_series.province != linelist_series.province:
        raise ValueError("cannot merge series from different provinces")
    cut = linelist_series.start if linelist_start is None else max(
        linelist_start, linelist_series.start)
    if cut > monthly_series.end + 1:
        raise ValueError("gap between monthly history and line-list coverage")
    if cut <= monthly_series.start:
        return linelist_series
    head = monthly_series.slice(monthly_series.start, cut - 1)
    tail = linelist_series.slice(cut, linelist_series.end)
    values = np.concatenate([head.values, tail.values])
    provenance = head.provenance + tail.provenance
    return BiweekSeries(linelist_series.province, head.start, values, provenance)


# -- delimited import/export -------------------------------------------------


def series_to_rows(series: BiweekSeries) -> list[list[str]]:
    rows = []
    for i, v in enumerate(series.values):
        b = Biweek.from_ordinal(series.start + i)
        rows.append([series.province, str(b.year), str(b.index), repr(float(v)),
                     series.provenance[i]])
    return rows


def series_from_rows(rows: list[list[str]]) -> BiweekSeries:
    if not rows:
        raise ValueError("no series rows")
    province = rows[0][0]
    parsed = []
    for province_, year, index, value, prov in rows:
        if province_ != province:
            raise ValueError("rows span multiple provinces")
        parsed.append((Biweek(int(year), int(index)).ordinal, float(value), prov))
    parsed.sort()
    ordinals = [p[0] for p in parsed]
    if ordinals != list(range(ordinals[0], ordinals[0] + len(ordinals))):
        raise ValueError("series rows are not contiguous")
    return BiweekSeries(province, ordinals[0],
                        np.array([p[1] for p in parsed]),
                        [p[2] for p in parsed])
