"""Per-province model assembly and fitting.

At an analysis date each province gets its own regression: seasonal
cyclic spline + secular trend spline + growth-ratio covariates from its
most-correlated peer provinces, fit to the delay-truncated, smoothed
series with the (floored) smoothed lag-1 value as multiplicative offset.

Correlated peers are re-selected at every analysis date from truncated
data only, so no future information leaks into the choice.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats

from .biweek import BIWEEKS_PER_YEAR
from .pgam import (
    Block,
    FitProblem,
    FitResult,
    LambdaGrid,
    fit_pirls,
    select_lambda,
)
from .series import BiweekSeries, floored_offset, smooth, truncate_for_delay
from .splines import CyclicSplineBasis, NaturalSplineBasis, cyclic_knots, trend_knots


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_correlated: int = 3                # J, peer provinces per model
    lags: tuple[int, ...] = (1,)         # biweek lags for growth covariates
    reporting_lag: int = 6               # biweeks dropped as under-reported
    include_self: bool = False
    smooth_window: int = 3
    n_cyclic_knots: int = 8
    n_trend_knots: int = 5
    offset_floor: float = 0.5
    min_history_biweeks: int = 5 * BIWEEKS_PER_YEAR
    min_overlap_biweeks: int = 3 * BIWEEKS_PER_YEAR
    covariates_smoothed: bool = True
    lambda_grid: tuple[float, float, int] = (-4.0, 6.0, 21)
    lambda_sweeps: int = 3
    lambda_mode: str = "per_date"        # or "frozen"

    def __post_init__(self):
        if self.n_correlated < 0:
            raise ValueError("n_correlated must be >= 0")
        if any(k < 1 for k in self.lags):
            raise ValueError("all lags must be >= 1")
        if self.reporting_lag < 0:
            raise ValueError("reporting lag must be >= 0")
        if self.lambda_mode not in ("per_date", "frozen"):
            raise ValueError("lambda_mode must be 'per_date' or 'frozen'")

    def grid(self) -> LambdaGrid:
        lo, hi, count = self.lambda_grid
        return LambdaGrid(lo, hi, int(count))


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    rho = stats.spearmanr(a, b).statistic
    return float(rho) if np.isfinite(rho) else float("nan")


def select_correlated(
    series_by_province: dict[str, BiweekSeries],
    province: str,
    n_correlated: int,
    include_self: bool = False,
    min_overlap: int = 3 * BIWEEKS_PER_YEAR,
) -> list[str]:
    """Rank peers by Spearman correlation of biweekly counts over the
    common window; ties break toward the lexically smaller code."""
    if province not in series_by_province:
        raise ValueError(f"unknown province {province!r}")
    own = series_by_province[province]
    scored: list[tuple[float, str]] = []
    usable: list[str] = []
    for code in sorted(series_by_province):
        if code == province and not include_self:
            continue
        other = series_by_province[code]
        lo = max(own.start, other.start)
        hi = min(own.end, other.end)
        overlap = hi - lo + 1
        if overlap < min_overlap:
            continue
        usable.append(code)
        rho = spearman(own.slice(lo, hi).values, other.slice(lo, hi).values)
        if np.isnan(rho):
            rho = -np.inf  # constant series carry no ranking information
        scored.append((rho, code))
    if len(usable) < n_correlated:
        raise InsufficientHistoryError(
            f"province {province!r} has {len(usable)} peers with >= "
            f"{min_overlap} overlapping biweeks (need {n_correlated}); "
            f"usable: {usable}"
        )
    scored.sort(key=lambda rc: (-rc[0], rc[1]))
    return [code for _, code in scored[:n_correlated]]


def growth_covariate(y_lag: np.ndarray, y_lag_next: np.ndarray) -> np.ndarray:
    """log((y_{t-k}+1)/(y_{t-k-1}+1)); the +1 keeps zero counts finite."""
    return np.log((np.asarray(y_lag, dtype=float) + 1.0)
                  / (np.asarray(y_lag_next, dtype=float) + 1.0))


def build_covariates(
    series_by_province: dict[str, BiweekSeries],
    correlated: list[str],
    lags: tuple[int, ...],
    t: int,
) -> np.ndarray:
    """Single covariate row for target biweek t, ordered by (peer, lag)."""
    row = []
    for code in correlated:
        s = series_by_province[code]
        for k in sorted(lags):
            if t - k - 1 < s.start or t - k > s.end:
                raise ValueError(
                    f"series for {code!r} lacks history at lag {k} for biweek {t}"
                )
            row.append(float(growth_covariate(s.value_at(t - k),
                                              s.value_at(t - k - 1))))
    return np.array(row)


@dataclass
class ProvinceFit:
    """Everything needed to reproduce and re-run one province's fit."""

    province: str
    analysis_date: dt.date
    origin: int                       # last training biweek ordinal
    training_start: int
    correlated: list[str]
    lags: tuple[int, ...]
    cyclic_knots_: tuple[float, ...]
    cyclic_period: float
    cyclic_means: np.ndarray
    trend_knots_: tuple[float, ...]
    trend_means: np.ndarray
    offset_floor: float
    smooth_window: int
    fit: FitResult
    config: ModelConfig
    _cyclic: CyclicSplineBasis = field(init=False, repr=False, default=None)
    _trend: NaturalSplineBasis = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self._cyclic = CyclicSplineBasis(self.cyclic_knots_, self.cyclic_period)
        self._trend = NaturalSplineBasis(self.trend_knots_)

    # column layout: intercept | seasonal (kc-1) | trend (kt-1) | growth
    @property
    def n_seasonal(self) -> int:
        return self._cyclic.dim - 1

    @property
    def n_trend(self) -> int:
        return self._trend.dim - 1

    def design_fixed(self, ts) -> np.ndarray:
        """Intercept + centered spline columns for target biweeks ts."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        seas = self._cyclic.design(np.mod(ts, self.cyclic_period))[:, :-1] - self.cyclic_means
        trend = self._trend.design(ts)[:, :-1] - self.trend_means
        return np.hstack([np.ones((len(ts), 1)), seas, trend])

    def design_rows(self, ts, covariates: np.ndarray) -> np.ndarray:
        fixed = self.design_fixed(ts)
        covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
        if covariates.shape[1] != len(self.correlated) * len(self.lags):
            raise ValueError("covariate width mismatch")
        return np.hstack([fixed, covariates])

    def log_rate_fixed(self, ts) -> np.ndarray:
        """Linear predictor excluding growth covariates."""
        p_fixed = 1 + self.n_seasonal + self.n_trend
        return self.design_fixed(ts) @ self.fit.beta[:p_fixed]

    @property
    def growth_coefficients(self) -> np.ndarray:
        p_fixed = 1 + self.n_seasonal + self.n_trend
        return self.fit.beta[p_fixed:]

    def seasonal_curve(self, phases) -> np.ndarray:
        """Centered seasonal effect on the log-rate scale."""
        phases = np.atleast_1d(np.asarray(phases, dtype=float))
        seas = self._cyclic.design(phases)[:, :-1] - self.cyclic_means
        return seas @ self.fit.beta[1:1 + self.n_seasonal]

    def growth_coefficient(self, province: str, lag: int) -> float:
        lags = sorted(self.lags)
        idx = self.correlated.index(province) * len(lags) + lags.index(lag)
        return float(self.growth_coefficients[idx])

    def to_json(self) -> str:
        payload = {
            "province": self.province,
            "analysis_date": self.analysis_date.isoformat(),
            "origin": self.origin,
            "training_start": self.training_start,
            "correlated": list(self.correlated),
            "lags": list(self.lags),
            "cyclic_knots": list(self.cyclic_knots_),
            "cyclic_period": self.cyclic_period,
            "cyclic_means": [float(v) for v in self.cyclic_means],
            "trend_knots": list(self.trend_knots_),
            "trend_means": [float(v) for v in self.trend_means],
            "offset_floor": self.offset_floor,
            "smooth_window": self.smooth_window,
            "beta": [float(v) for v in self.fit.beta],
            "lambdas": self.fit.lambdas,
            "edf": self.fit.edf,
            "deviance": self.fit.deviance,
            "penalized_deviance": self.fit.penalized_deviance,
            "converged": self.fit.converged,
            "iterations": self.fit.iterations,
            "config": asdict(self.config),
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ProvinceFit":
        d = json.loads(text)
        cfg = d["config"]
        cfg["lags"] = tuple(cfg["lags"])
        cfg["lambda_grid"] = tuple(cfg["lambda_grid"])
        config = ModelConfig(**cfg)
        fit = FitResult(
            beta=np.array(d["beta"]),
            deviance=d["deviance"],
            edf=d["edf"],
            converged=d["converged"],
            iterations=d["iterations"],
            lambdas=d["lambdas"],
            penalized_deviance=d["penalized_deviance"],
        )
        return cls(
            province=d["province"],
            analysis_date=dt.date.fromisoformat(d["analysis_date"]),
            origin=d["origin"],
            training_start=d["training_start"],
            correlated=list(d["correlated"]),
            lags=tuple(d["lags"]),
            cyclic_knots_=tuple(d["cyclic_knots"]),
            cyclic_period=d["cyclic_period"],
            cyclic_means=np.array(d["cyclic_means"]),
            trend_knots_=tuple(d["trend_knots"]),
            trend_means=np.array(d["trend_means"]),
            offset_floor=d["offset_floor"],
            smooth_window=d["smooth_window"],
            fit=fit,
            config=config,
        )


def fit_province(
    province: str,
    series_by_province: dict[str, BiweekSeries],
    analysis_date: dt.date,
    config: ModelConfig = ModelConfig(),
    frozen_lambdas: dict[str, float] | None = None,
) -> ProvinceFit:
    """Truncate, smooth, assemble blocks, select smoothing, fit.

    ``series_by_province`` holds raw (un-truncated, un-smoothed) series;
    everything date-dependent is derived here so the fit only ever sees
    data available ``reporting_lag`` biweeks before the analysis date.
    """
    lag = config.reporting_lag
    truncated: dict[str, BiweekSeries] = {}
    for code, s in series_by_province.items():
        try:
            truncated[code] = truncate_for_delay(s, analysis_date, lag)
        except ValueError:
            continue  # peers with no data this early simply drop out
    if province not in truncated:
        raise InsufficientHistoryError(
            f"province {province!r} has no data before the truncation point"
        )
    own = truncated[province]
    if len(own) < config.min_history_biweeks:
        raise InsufficientHistoryError(
            f"province {province!r} has {len(own)} biweeks post-truncation, "
            f"needs {config.min_history_biweeks}"
        )

    # peers must reach far enough to supply lagged covariates at the end
    min_lag = min(config.lags) if config.lags else 1
    candidates = {
        code: s for code, s in truncated.items()
        if code == province or s.end >= own.end - min_lag
    }
    correlated = select_correlated(
        candidates, province, config.n_correlated,
        include_self=config.include_self,
        min_overlap=config.min_overlap_biweeks,
    )

    smoothed = {code: smooth(truncated[code], config.smooth_window)
                for code in set(correlated) | {province}}
    cov_source = smoothed if config.covariates_smoothed else truncated

    maxlag = max(config.lags) if correlated else 0
    t_end = own.end
    t0 = own.start + 1
    for code in correlated:
        t0 = max(t0, cov_source[code].start + maxlag + 1)
    if t_end - t0 + 1 < config.min_history_biweeks:
        raise InsufficientHistoryError(
            f"province {province!r} has only {t_end - t0 + 1} usable training "
            f"rows after aligning covariate history"
        )
    ts = np.arange(t0, t_end + 1)

    y = np.array([smoothed[province].value_at(t) for t in ts])
    offsets = np.array([
        floored_offset(smoothed[province].value_at(t - 1), config.offset_floor)
        for t in ts
    ])

    cyclic = CyclicSplineBasis(cyclic_knots(config.n_cyclic_knots), float(BIWEEKS_PER_YEAR))
    seas_raw = cyclic.design(np.mod(ts.astype(float), cyclic.period))[:, :-1]
    seas_means = seas_raw.mean(axis=0)
    seas = seas_raw - seas_means
    seas_pen = cyclic.penalty[:-1, :-1]

    tknots = trend_knots(ts.astype(float), config.n_trend_knots)
    trend = NaturalSplineBasis(tknots)
    trend_raw = trend.design(ts.astype(float))[:, :-1]
    trend_means = trend_raw.mean(axis=0)
    trend_X = trend_raw - trend_means
    trend_pen = trend.penalty[:-1, :-1]

    blocks = [
        Block("intercept", np.ones((len(ts), 1))),
        Block("seasonal", seas, seas_pen),
        Block("trend", trend_X, trend_pen),
    ]
    if correlated:
        cov = np.vstack([
            build_covariates(cov_source, correlated, config.lags, int(t))
            for t in ts
        ])
        blocks.append(Block("growth", cov))

    problem = FitProblem(y=y, offset=offsets, blocks=blocks)
    if frozen_lambdas is not None:
        result = fit_pirls(problem, dict(frozen_lambdas))
    else:
        _, result = select_lambda(problem, config.grid(),
                                  max_sweeps=config.lambda_sweeps)

    return ProvinceFit(
        province=province,
        analysis_date=analysis_date,
        origin=int(t_end),
        training_start=int(t0),
        correlated=correlated,
        lags=tuple(sorted(config.lags)),
        cyclic_knots_=tuple(float(k) for k in cyclic.knots),
        cyclic_period=cyclic.period,
        cyclic_means=seas_means,
        trend_knots_=tknots,
        trend_means=trend_means,
        offset_floor=config.offset_floor,
        smooth_window=config.smooth_window,
        fit=result,
        config=config,
    )
