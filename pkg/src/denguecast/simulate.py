"""Joint multi-step stochastic forecasting.

All provinces advance together: at each step the rate for every province
is computed from the same simulation's lagged values (its own recent
counts feed the offset, peers' recent counts feed the growth covariates),
then every province draws its next count before any province moves on.
Each simulation runs on its own RNG substream, keyed by position in the
input list, so results are reproducible and relabeling provinces just
relabels the output.

Within a simulation the offset ahead of step t mirrors the training-time
smoother evaluated at the end of the available series: the mean of the
trailing ceil(window/2) values, floored. Trajectories whose expected
count exceeds the cap are flagged explosive but keep running and stay in
the output; beyond 1e15 the Poisson draw switches to its normal
approximation to stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ProvinceFit, growth_covariate
from .series import BiweekSeries

NORMAL_APPROX_ABOVE = 1e15


@dataclass
class TrajectorySet:
    origin: int
    horizon: int
    n_sims: int
    seed: int
    provinces: list[str]
    counts: np.ndarray       # (n_sims, n_provinces, horizon)
    explosive: np.ndarray    # (n_sims, n_provinces) bool

    def explosive_fraction(self) -> np.ndarray:
        return self.explosive.mean(axis=0)


@dataclass
class ForecastCell:
    province: str
    step: int
    target: int
    point: float
    intervals: dict[float, tuple[float, float]]
    explosive_fraction: float


@dataclass
class ForecastSet:
    origin: int
    horizon: int
    n_sims: int
    seed: int
    provinces: list[str]
    cells: list[ForecastCell]

    def cell(self, province: str, step: int) -> ForecastCell:
        for c in self.cells:
            if c.province == province and c.step == step:
                return c
        raise KeyError((province, step))


def _offset_tail(window: int) -> int:
    """Trailing values entering the edge-truncated centered mean."""
    return window // 2 + 1


def simulate_paths(
    fits: list[ProvinceFit],
    histories: dict[str, BiweekSeries],
    origin: int,
    horizon: int,
    n_sims: int,
    seed: int,
    explosive_cap: float = 1e7,
) -> TrajectorySet:
    """Sequential joint simulation of all provinces for `horizon` steps.

    ``histories`` are the series the fits were trained on (smoothed); they
    must all end exactly at ``origin``. Every province referenced by any
    fit's correlated set must itself be present.
    """
    if not fits:
        raise ValueError("no fits to simulate")
    provinces = [f.province for f in fits]
    if len(set(provinces)) != len(provinces):
        raise ValueError("duplicate provinces in fits")
    index = {p: i for i, p in enumerate(provinces)}
    for f in fits:
        missing = [c for c in f.correlated if c not in index]
        if missing:
            raise ValueError(
                f"fit for {f.province!r} references provinces outside the "
                f"simulated system: {missing}"
            )
        if f.origin != origin:
            raise ValueError(
                f"fit for {f.province!r} has origin {f.origin}, expected {origin}"
            )
    for p in provinces:
        if p not in histories:
            raise ValueError(f"missing history for {p!r}")
        if histories[p].end != origin:
            raise ValueError(
                f"history for {p!r} ends at {histories[p].end}, expected {origin}"
            )

    maxlag = max((max(f.lags) for f in fits if f.lags), default=1)
    tail = max(maxlag + 1, max(_offset_tail(f.smooth_window) for f in fits))
    P = len(provinces)

    state = np.zeros((n_sims, P, tail + horizon))
    for i, p in enumerate(provinces):
        h = histories[p]
        if len(h) < tail:
            raise ValueError(f"history for {p!r} shorter than {tail} biweeks")
        state[:, i, :tail] = h.values[-tail:]

    # fixed (spline + intercept) part of the linear predictor per step
    fixed = np.zeros((P, horizon))
    targets = np.arange(origin + 1, origin + horizon + 1)
    for i, f in enumerate(fits):
        fixed[i] = f.log_rate_fixed(targets.astype(float))

    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence(seed).spawn(n_sims)]
    explosive = np.zeros((n_sims, P), dtype=bool)

    for h in range(1, horizon + 1):
        col = tail + h - 1  # column holding time origin + h
        mu = np.empty((n_sims, P))
        for i, f in enumerate(fits):
            eta = np.full(n_sims, fixed[i, h - 1])
            alpha = f.growth_coefficients
            if len(alpha):
                a = 0
                for code in f.correlated:
                    j = index[code]
                    for k in sorted(f.lags):
                        y_lag = state[:, j, col - k]
                        y_prev = state[:, j, col - k - 1]
                        eta = eta + alpha[a] * growth_covariate(y_lag, y_prev)
                        a += 1
            rate = np.exp(np.clip(eta, -700.0, 700.0))
            nt = _offset_tail(f.smooth_window)
            offset = np.maximum(state[:, i, col - nt:col].mean(axis=1),
                                f.offset_floor)
            mu[:, i] = rate * offset
        explosive |= mu > explosive_cap
        for s in range(n_sims):
            row = mu[s]
            if np.all(row <= NORMAL_APPROX_ABOVE):
                draws = streams[s].poisson(row).astype(float)
            else:
                safe = np.minimum(row, NORMAL_APPROX_ABOVE)
                draws = streams[s].poisson(safe).astype(float)
                big = row > NORMAL_APPROX_ABOVE
                z = streams[s].standard_normal(int(big.sum()))
                draws[big] = np.rint(row[big] + z * np.sqrt(row[big]))
            state[s, :, col] = draws

    return TrajectorySet(
        origin=origin,
        horizon=horizon,
        n_sims=n_sims,
        seed=seed,
        provinces=provinces,
        counts=state[:, :, tail:].copy(),
        explosive=explosive,
    )


def reduce_to_forecast(
    traj: TrajectorySet,
    levels: tuple[float, ...] = (0.95,),
    point: str = "median",
) -> ForecastSet:
    """Collapse trajectories to point forecasts and empirical intervals.

    Point forecast is the across-simulation median (mean by flag);
    intervals are type-7 quantiles, so degenerate trajectories give valid
    zero-width intervals. Explosive simulations are included — the upper
    quantile is meant to reflect them.
    """
    if traj.n_sims < 100:
        raise ValueError("need at least 100 simulations for stable quantiles")
    if point not in ("median", "mean"):
        raise ValueError("point must be 'median' or 'mean'")
    frac = traj.explosive_fraction()
    cells = []
    for i, province in enumerate(traj.provinces):
        for h in range(1, traj.horizon + 1):
            sims = traj.counts[:, i, h - 1]
            pt = float(np.median(sims)) if point == "median" else float(sims.mean())
            intervals = {}
            for level in levels:
                lo_p = (1.0 - level) / 2.0
                lo, hi = np.quantile(sims, [lo_p, 1.0 - lo_p])
                intervals[level] = (float(lo), float(hi))
            cells.append(ForecastCell(
                province=province,
                step=h,
                target=traj.origin + h,
                point=pt,
                intervals=intervals,
                explosive_fraction=float(frac[i]),
            ))
    return ForecastSet(
        origin=traj.origin,
        horizon=traj.horizon,
        n_sims=traj.n_sims,
        seed=traj.seed,
        provinces=list(traj.provinces),
        cells=cells,
    )
