"""Forecast scoring: seasonal baseline, MAE family, coverage, correlation,
and the real-time vs full-data comparison designs.

Conventions fixed here: prediction intervals are closed (an observation
on the bound counts as covered); a zero baseline MAE makes relative MAE
undefined, which is reported as NaN and excluded from quantile summaries
with an explicit count; correlations are Spearman and labeled as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .biweek import BIWEEKS_PER_YEAR
from .model import spearman
from .series import BiweekSeries

SUMMARY_PROBS = (0.05, 0.25, 0.50, 0.75, 0.95)


@dataclass
class ScoreRow:
    province: str
    analysis_date: str          # ISO date
    analysis_ordinal: int       # biweek of the analysis date
    origin: int                 # forecast origin biweek
    step: int                   # horizon in biweeks from the origin
    target: int                 # origin + step
    predicted: float
    observed: float
    baseline_predicted: float | None = None
    lo: float | None = None
    hi: float | None = None

    @property
    def absolute_horizon(self) -> int:
        """Biweeks from the analysis date; equals step - lag when the
        origin sits lag biweeks before the analysis biweek."""
        return self.target - self.analysis_ordinal


@dataclass
class SummaryRow:
    comparison: str
    horizon: int
    n_pairs: int
    n_provinces: int
    n_excluded: int
    spearman_rho: float | None
    coverage: float | None
    quantiles: dict[float, float] = field(default_factory=dict)


@dataclass
class EvaluationTable:
    rows: list[SummaryRow]

    def row_for(self, horizon: int) -> SummaryRow:
        for r in self.rows:
            if r.horizon == horizon:
                return r
        raise KeyError(horizon)


def seasonal_baseline(
    history: BiweekSeries, target: int, window_years: int = 10
) -> float:
    """Median of the same-biweek counts in up to the previous
    ``window_years`` years; the window is a cap, not a requirement."""
    values = []
    for back in range(1, window_years + 1):
        o = target - back * BIWEEKS_PER_YEAR
        if history.start <= o <= history.end:
            values.append(history.value_at(o))
    if not values:
        raise ValueError(
            f"no prior observations of biweek {target % BIWEEKS_PER_YEAR + 1} "
            f"within {window_years} years"
        )
    return float(np.median(values))


def mae(rows: list[ScoreRow]) -> float:
    if not rows:
        raise ValueError("MAE of zero rows")
    return float(np.mean([abs(r.predicted - r.observed) for r in rows]))


def rel_mae(rows: list[ScoreRow], baseline_rows: list[ScoreRow]) -> float:
    """Model MAE over baseline MAE on aligned keys; > 1 means the model
    is worse. NaN when the baseline MAE is zero."""
    keys = {(r.province, r.analysis_date, r.step): r for r in rows}
    base = {(r.province, r.analysis_date, r.step): r for r in baseline_rows}
    shared = sorted(set(keys) & set(base))
    if not shared:
        raise ValueError("no aligned keys between model and baseline rows")
    m = mae([keys[k] for k in shared])
    b = mae([base[k] for k in shared])
    if b == 0.0:
        return math.nan
    return m / b


def coverage(rows: list[ScoreRow], level: float = 0.95) -> float:
    """Fraction of observations inside their closed prediction interval."""
    del level  # intervals are attached per-row; level is caller metadata
    scored = [r for r in rows if r.lo is not None and r.hi is not None]
    if not scored:
        raise ValueError("coverage of zero rows with intervals")
    hits = sum(1 for r in scored if r.lo <= r.observed <= r.hi)
    return hits / len(scored)


def rank_correlation(rows: list[ScoreRow]) -> float:
    if not rows:
        raise ValueError("correlation of zero rows")
    pred = np.array([r.predicted for r in rows])
    obs = np.array([r.observed for r in rows])
    return spearman(pred, obs)


def _quantile_block(values: list[float], probs=SUMMARY_PROBS) -> dict[float, float]:
    arr = np.array(values, dtype=float)
    return {p: float(q) for p, q in zip(probs, np.quantile(arr, probs))}


def horizon_summary(
    rows: list[ScoreRow],
    probs: tuple[float, ...] = SUMMARY_PROBS,
    comparison: str = "vs_seasonal_baseline",
) -> EvaluationTable:
    """One output row per horizon: pooled Spearman, pooled coverage, and
    quantiles across provinces of the per-province relative MAE."""
    horizons = sorted({r.step for r in rows})
    out = []
    for h in horizons:
        at_h = [r for r in rows if r.step == h]
        provinces = sorted({r.province for r in at_h})
        rels = []
        excluded = 0
        for p in provinces:
            prows = [r for r in at_h if r.province == p]
            if any(r.baseline_predicted is None for r in prows):
                raise ValueError(f"rows for {p!r} lack baseline predictions")
            m = mae(prows)
            b = float(np.mean([abs(r.baseline_predicted - r.observed)
                               for r in prows]))
            if b == 0.0:
                excluded += 1
                continue
            rels.append(m / b)
        has_intervals = any(r.lo is not None for r in at_h)
        out.append(SummaryRow(
            comparison=comparison,
            horizon=h,
            n_pairs=len(at_h),
            n_provinces=len(provinces),
            n_excluded=excluded,
            spearman_rho=rank_correlation(at_h),
            coverage=coverage(at_h) if has_intervals else None,
            quantiles=_quantile_block(rels, probs) if rels else {},
        ))
    return EvaluationTable(out)


def compare_realtime_fulldata(
    realtime_rows: list[ScoreRow],
    fulldata_rows: list[ScoreRow],
    mode: str = "same_origin",
    probs: tuple[float, ...] = SUMMARY_PROBS,
) -> tuple[EvaluationTable, list]:
    """Pair real-time and full-data forecasts and
    summarize per-horizon quantiles of province-level MAE ratios.

    ``same_origin`` pairs identical (origin, step); ``absolute_horizon``
    pairs identical target biweeks and groups by biweeks-from-analysis,
    so a real-time step h+l meets the full-data step h. Unpairable keys
    are returned, not silently dropped.
    """
    if mode not in ("same_origin", "absolute_horizon"):
        raise ValueError("mode must be 'same_origin' or 'absolute_horizon'")

    def key(r: ScoreRow):
        if mode == "same_origin":
            return (r.province, r.analysis_date, r.origin, r.step)
        return (r.province, r.analysis_date, r.target)

    rt = {key(r): r for r in realtime_rows}
    fd = {key(r): r for r in fulldata_rows}
    shared = sorted(set(rt) & set(fd))
    unpaired = sorted(set(rt) ^ set(fd))

    def horizon_of(k) -> int:
        if mode == "same_origin":
            return k[3]
        r = rt[k]
        return r.absolute_horizon

    grouped: dict[int, dict[str, list[tuple[ScoreRow, ScoreRow]]]] = {}
    for k in shared:
        h = horizon_of(k)
        grouped.setdefault(h, {}).setdefault(k[0], []).append((rt[k], fd[k]))

    label = ("rt_vs_fulldata_same_origin" if mode == "same_origin"
             else "rt_vs_fulldata_absolute_horizon")
    out = []
    for h in sorted(grouped):
        rels = []
        excluded = 0
        n_pairs = 0
        for province, pairs in sorted(grouped[h].items()):
            n_pairs += len(pairs)
            m_rt = float(np.mean([abs(a.predicted - a.observed) for a, _ in pairs]))
            m_fd = float(np.mean([abs(b.predicted - b.observed) for _, b in pairs]))
            if m_fd == 0.0:
                excluded += 1
                continue
            rels.append(m_rt / m_fd)
        out.append(SummaryRow(
            comparison=label,
            horizon=h,
            n_pairs=n_pairs,
            n_provinces=len(grouped[h]),
            n_excluded=excluded,
            spearman_rho=None,
            coverage=None,
            quantiles=_quantile_block(rels, probs) if rels else {},
        ))
    return EvaluationTable(out), unpaired
