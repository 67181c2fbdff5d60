"""Cubic regression spline bases with curvature penalties.

Both bases parameterize the spline by its values at the knots, following
the classic Green & Silverman construction: second derivatives at the
knots are the linear map ``gamma = F beta`` obtained from the C2
continuity conditions ``B gamma = D beta``, and because f'' is piecewise
linear the exact roughness penalty integral(f''^2) is the quadratic form
``beta' D' B^{-1} D beta``.

The seasonal basis is periodic (value, slope and curvature match across
the wrap point); the trend basis is a natural spline (zero curvature at
the boundary knots) and extrapolates linearly beyond them, so forecast
horizons past the training range stay well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    kind: str  # "cyclic_cubic" or "cubic_regression"
    knots: tuple[float, ...]
    period: float | None = None

    def validate(self):
        knots = np.asarray(self.knots, dtype=float)
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.kind == "cyclic_cubic":
            if self.period is None or self.period <= 0:
                raise ValueError("cyclic basis requires a positive period")
            if len(knots) < 4:
                raise ValueError("cyclic basis requires at least 4 knots")
            if knots[0] < 0 or knots[-1] >= knots[0] + self.period:
                raise ValueError("cyclic knots must lie within one period")
        elif self.kind == "cubic_regression":
            if len(knots) < 3:
                raise ValueError("trend basis requires at least 3 knots")
        else:
            raise ValueError(f"unknown basis kind {self.kind!r}")


@dataclass
class BasisMatrices:
    design: np.ndarray
    penalty: np.ndarray
    spec: BasisSpec
    basis: "CyclicSplineBasis | NaturalSplineBasis" = field(repr=False, default=None)


def _hermite_weights(u, v, h):
    """Coefficients of (y_j, y_{j+1}, g_j, g_{j+1}) for a cubic segment
    written in terms of endpoint values y and curvatures g."""
    a_lo = u / h
    a_hi = v / h
    c_lo = (u**3 / h - h * u) / 6.0
    c_hi = (v**3 / h - h * v) / 6.0
    return a_lo, a_hi, c_lo, c_hi


class CyclicSplineBasis:
    """Periodic cubic spline on [first knot, first knot + period)."""

    def __init__(self, knots, period: float):
        spec = BasisSpec("cyclic_cubic", tuple(float(k) for k in knots), float(period))
        spec.validate()
        self.spec = spec
        self.period = float(period)
        k = np.asarray(spec.knots, dtype=float)
        self.knots = k
        self.k = len(k)
        # interval widths, the last one wrapping back to the first knot
        ext = np.append(k, k[0] + self.period)
        h = np.diff(ext)
        self._ext = ext
        self._h = h

        n = self.k
        B = np.zeros((n, n))
        D = np.zeros((n, n))
        for j in range(n):
            hm = h[(j - 1) % n]
            hp = h[j]
            B[j, j] = (hm + hp) / 3.0
            B[j, (j - 1) % n] += hm / 6.0
            B[j, (j + 1) % n] += hp / 6.0
            D[j, j] = -1.0 / hm - 1.0 / hp
            D[j, (j - 1) % n] += 1.0 / hm
            D[j, (j + 1) % n] += 1.0 / hp
        self._F = np.linalg.solve(B, D)  # values -> knot curvatures
        S = D.T @ self._F
        self.penalty = (S + S.T) / 2.0

    @property
    def dim(self) -> int:
        return self.k

    def design(self, points) -> np.ndarray:
        """Evaluation rows; points are wrapped into the base period."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        x0 = self.knots[0]
        wrapped = np.mod(pts - x0, self.period) + x0
        rows = np.zeros((len(pts), self.k))
        seg = np.clip(np.searchsorted(self._ext, wrapped, side="right") - 1,
                      0, self.k - 1)
        for i, (x, j) in enumerate(zip(wrapped, seg)):
            h = self._h[j]
            u = self._ext[j + 1] - x
            v = x - self._ext[j]
            a_lo, a_hi, c_lo, c_hi = _hermite_weights(u, v, h)
            jn = (j + 1) % self.k
            rows[i, j] += a_lo
            rows[i, jn] += a_hi
            rows[i] += c_lo * self._F[j] + c_hi * self._F[jn]
        return rows


class NaturalSplineBasis:
    """Natural cubic regression spline with linear extrapolation."""

    def __init__(self, knots):
        spec = BasisSpec("cubic_regression", tuple(float(k) for k in knots))
        spec.validate()
        self.spec = spec
        k = np.asarray(spec.knots, dtype=float)
        self.knots = k
        self.k = len(k)
        h = np.diff(k)
        self._h = h

        n = self.k
        ni = n - 2  # interior knots carry the free curvatures
        B = np.zeros((ni, ni))
        D = np.zeros((ni, n))
        for i in range(ni):
            B[i, i] = (h[i] + h[i + 1]) / 3.0
            if i + 1 < ni:
                B[i, i + 1] = h[i + 1] / 6.0
                B[i + 1, i] = h[i + 1] / 6.0
            D[i, i] = 1.0 / h[i]
            D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
            D[i, i + 2] = 1.0 / h[i + 1]
        Fi = np.linalg.solve(B, D)
        # full curvature map with natural (zero) boundary rows
        self._F = np.zeros((n, n))
        self._F[1:-1] = Fi
        S = D.T @ Fi
        self.penalty = (S + S.T) / 2.0

        # boundary value/derivative rows used for linear extrapolation
        e = np.eye(n)
        self._left_val = e[0]
        self._left_slope = (e[1] - e[0]) / h[0] - h[0] * (2 * self._F[0] + self._F[1]) / 6.0
        self._right_val = e[-1]
        self._right_slope = (e[-1] - e[-2]) / h[-1] + h[-1] * (self._F[-2] + 2 * self._F[-1]) / 6.0

    @property
    def dim(self) -> int:
        return self.k

    def design(self, points) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        rows = np.zeros((len(pts), self.k))
        seg = np.clip(np.searchsorted(self.knots, pts, side="right") - 1,
                      0, self.k - 2)
        for i, (x, j) in enumerate(zip(pts, seg)):
            if x < self.knots[0]:
                rows[i] = self._left_val + (x - self.knots[0]) * self._left_slope
                continue
            if x > self.knots[-1]:
                rows[i] = self._right_val + (x - self.knots[-1]) * self._right_slope
                continue
            h = self._h[j]
            u = self.knots[j + 1] - x
            v = x - self.knots[j]
            a_lo, a_hi, c_lo, c_hi = _hermite_weights(u, v, h)
            rows[i, j] += a_lo
            rows[i, j + 1] += a_hi
            rows[i] += c_lo * self._F[j] + c_hi * self._F[j + 1]
        return rows


def cyclic_knots(n_knots: int = 8, period: float = 26.0) -> tuple[float, ...]:
    """n knots equally spaced on [0, period)."""
    if n_knots < 4:
        raise ValueError("need at least 4 cyclic knots")
    return tuple(period * i / n_knots for i in range(n_knots))


def trend_knots(points, n_knots: int = 5) -> tuple[float, ...]:
    """n knots equally spaced over the observed range of points."""
    pts = np.asarray(points, dtype=float)
    lo, hi = float(pts.min()), float(pts.max())
    if lo == hi:
        raise ValueError("cannot place trend knots: all points identical")
    return tuple(np.linspace(lo, hi, n_knots))


def build_cyclic_basis(points, spec: BasisSpec) -> BasisMatrices:
    if spec.kind != "cyclic_cubic":
        raise ValueError("spec.kind must be 'cyclic_cubic'")
    basis = CyclicSplineBasis(spec.knots, spec.period)
    return BasisMatrices(basis.design(points), basis.penalty, spec, basis)


def build_trend_basis(points, n_knots: int = 5) -> BasisMatrices:
    knots = trend_knots(points, n_knots)
    basis = NaturalSplineBasis(knots)
    spec = basis.spec
    return BasisMatrices(basis.design(points), basis.penalty, spec, basis)


def drop_last_column(design: np.ndarray, penalty: np.ndarray):
    """Identifiability reduction: pin the last knot's coefficient to zero
    so the block no longer spans constants (those live in the intercept)."""
    return design[:, :-1], penalty[:-1, :-1]
