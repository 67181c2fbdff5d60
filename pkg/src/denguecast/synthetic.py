"""Synthetic multi-province surveillance data.

Generates biweekly counts from the same mechanism the model assumes — a
Poisson count whose mean is the floored previous count times
exp(seasonal effect + coupling to peers' recent growth) — then explodes
counts into dated case records so the full ingest/delay machinery can be
exercised end to end. The recursion here is written independently of the
forecasting simulator on purpose: tests use one to check the other.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .biweek import BIWEEKS_PER_YEAR, Biweek, ordinal_to_interval, phase
from .series import BiweekSeries
from .store import CaseRecord


@dataclass
class TruthParams:
    """One province's generating mechanism."""

    province: str
    seasonal_amplitude: float = 0.25
    seasonal_phase: float = 0.0            # radians
    level_drift: float = 0.0               # constant added to the log-rate
    coupling: dict[str, float] = field(default_factory=dict)  # peer -> alpha
    lags: tuple[int, ...] = (1,)
    start_level: float = 3000.0
    offset_floor: float = 0.5

    def seasonal(self, ph: float) -> float:
        return self.seasonal_amplitude * np.sin(
            2.0 * np.pi * ph / BIWEEKS_PER_YEAR + self.seasonal_phase
        )

    def centered_seasonal(self, phases) -> np.ndarray:
        vals = np.array([self.seasonal(p) for p in np.atleast_1d(phases)])
        grid = np.array([self.seasonal(p) for p in range(BIWEEKS_PER_YEAR)])
        return vals - grid.mean()


def generate_counts(
    params: list[TruthParams],
    start: int,
    n_biweeks: int,
    seed: int,
) -> dict[str, BiweekSeries]:
    """Jointly simulate biweekly counts for all provinces.

    The first max(lags)+1 biweeks hold the deterministic start level so
    every covariate is defined from the first stochastic step onward.
    """
    rng = np.random.default_rng(seed)
    provinces = [p.province for p in params]
    by_code = {p.province: p for p in params}
    for p in params:
        for peer in p.coupling:
            if peer not in by_code:
                raise ValueError(f"{p.province!r} couples to unknown {peer!r}")
    maxlag = max((max(p.lags) for p in params), default=1)
    warm = maxlag + 1

    counts = {code: np.zeros(n_biweeks) for code in provinces}
    for p in params:
        counts[p.province][:warm] = p.start_level

    for i in range(warm, n_biweeks):
        t = start + i
        ph = phase(t)
        new = {}
        for p in params:
            log_rate = p.centered_seasonal([ph])[0] + p.level_drift
            for peer, alpha in p.coupling.items():
                for k in p.lags:
                    y1 = counts[peer][i - k]
                    y2 = counts[peer][i - k - 1]
                    log_rate += alpha * np.log((y1 + 1.0) / (y2 + 1.0))
            offset = max(counts[p.province][i - 1], p.offset_floor)
            mu = offset * np.exp(log_rate)
            new[p.province] = rng.poisson(mu)
        for code, v in new.items():
            counts[code][i] = v
    return {
        code: BiweekSeries(code, start, counts[code]) for code in provinces
    }


def counts_to_records(
    series_by_province: dict[str, BiweekSeries],
    seed: int,
    diagnosis: str = "DHF",
) -> list[CaseRecord]:
    """Explode biweekly counts into per-case records with onset dates
    spread uniformly inside each biweek; arrival equals onset (a
    pristine, delay-free line list)."""
    rng = np.random.default_rng(seed)
    records = []
    for code in sorted(series_by_province):
        s = series_by_province[code]
        serial = 0
        for i, v in enumerate(s.values):
            n = int(round(float(v)))
            if n <= 0:
                continue
            start_d, end_d = ordinal_to_interval(s.start + i)
            span = (end_d - start_d).days + 1
            offsets = rng.integers(0, span, size=n)
            for off in sorted(offsets.tolist()):
                serial += 1
                onset = start_d + dt.timedelta(days=int(off))
                records.append(CaseRecord(
                    record_id=f"{code}-{serial:07d}",
                    province=code,
                    onset_date=onset,
                    diagnosis=diagnosis,
                    arrival_ts=onset,
                ))
    return records


def ring_system(
    n_provinces: int = 10,
    coupling: float = 0.2,
    seed: int = 7,
    start_level: float = 3000.0,
) -> list[TruthParams]:
    """Provinces on a ring, each driven by its two neighbours' growth,
    with staggered seasonal phases so correlations are informative."""
    rng = np.random.default_rng(seed)
    params = []
    codes = [f"P{i + 1:02d}" for i in range(n_provinces)]
    for i, code in enumerate(codes):
        left = codes[(i - 1) % n_provinces]
        right = codes[(i + 1) % n_provinces]
        params.append(TruthParams(
            province=code,
            seasonal_amplitude=float(rng.uniform(0.15, 0.3)),
            seasonal_phase=2.0 * np.pi * (i % 3) / 6.0,
            coupling={left: coupling, right: coupling / 2.0},
            start_level=start_level * float(rng.uniform(0.5, 1.5)),
        ))
    return params


def first_ordinal_of_year(year: int) -> int:
    return Biweek(year, 1).ordinal
