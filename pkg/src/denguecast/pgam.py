"""Penalized Poisson regression with a multiplicative offset.

Maximizes  sum_i [y_i log mu_i - mu_i] - 1/2 sum_b lambda_b beta_b' S_b beta_b
with mu_i = offset_i * exp(x_i' beta), by penalized iteratively reweighted
least squares. Responses may be non-integer (smoothed counts); the Poisson
deviance uses the continuous extension with y*log(y) -> 0 at y = 0.

Smoothing weights are chosen by minimizing GCV = n*deviance/(n - edf)^2
over a log-spaced grid, one penalized block at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCORE_TOL = 1e-8
DEVIANCE_RTOL = 1e-10
MAX_ITER = 100
ETA_CLIP = 300.0  # keeps exp() finite while step-halving recovers


@dataclass
class Block:
    """One column group of the design: a name, its columns, and (for
    penalized smooths) a conformable curvature penalty."""

    name: str
    design: np.ndarray
    penalty: np.ndarray | None = None

    def __post_init__(self):
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        if self.penalty is not None:
            self.penalty = np.asarray(self.penalty, dtype=float)
            if self.penalty.shape != (self.design.shape[1], self.design.shape[1]):
                raise ValueError(
                    f"block {self.name!r}: penalty shape {self.penalty.shape} "
                    f"does not match {self.design.shape[1]} columns"
                )

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    @property
    def penalized(self) -> bool:
        return self.penalty is not None


@dataclass
class FitProblem:
    y: np.ndarray
    offset: np.ndarray
    blocks: list[Block]
    lambdas: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        n = len(self.y)
        if len(self.offset) != n:
            raise ValueError("offset length must match y")
        if np.any(self.offset <= 0):
            raise ValueError("all offsets must be positive")
        if np.any(self.y < 0):
            raise ValueError("responses must be non-negative")
        for b in self.blocks:
            if b.design.shape[0] != n:
                raise ValueError(f"block {b.name!r} has {b.design.shape[0]} rows, expected {n}")
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError("block names must be unique")
        for b in self.blocks:
            if b.penalized and b.name not in self.lambdas:
                self.lambdas[b.name] = 1.0

    @property
    def design(self) -> np.ndarray:
        return np.hstack([b.design for b in self.blocks])

    def column_slices(self) -> dict[str, slice]:
        out, at = {}, 0
        for b in self.blocks:
            out[b.name] = slice(at, at + b.dim)
            at += b.dim
        return out

    def penalty_matrix(self, lambdas: dict[str, float] | None = None) -> np.ndarray:
        lambdas = self.lambdas if lambdas is None else lambdas
        p = sum(b.dim for b in self.blocks)
        full = np.zeros((p, p))
        sl = self.column_slices()
        for b in self.blocks:
            if b.penalized:
                full[sl[b.name], sl[b.name]] = lambdas[b.name] * b.penalty
        return full

    def check_rank(self):
        """Raise naming the first block whose columns add rank deficiency."""
        X = self.design
        if np.linalg.matrix_rank(X) == X.shape[1]:
            return
        cols = np.empty((X.shape[0], 0))
        rank = 0
        for b in self.blocks:
            cols = np.hstack([cols, b.design])
            new_rank = np.linalg.matrix_rank(cols)
            if new_rank < rank + b.dim:
                raise np.linalg.LinAlgError(
                    f"design is rank deficient at block {b.name!r}"
                )
            rank = new_rank


@dataclass
class FitResult:
    beta: np.ndarray
    deviance: float
    edf: dict[str, float]
    converged: bool
    iterations: int
    lambdas: dict[str, float]
    penalized_deviance: float

    @property
    def edf_total(self) -> float:
        return float(sum(self.edf.values()))


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    """2*sum[y log(y/mu) - (y - mu)], continuous in y, 0*log(0) = 0."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    term = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def penalized_score(problem: FitProblem, beta: np.ndarray,
                    lambdas: dict[str, float] | None = None) -> np.ndarray:
    """Gradient of the penalized log-likelihood: X'(y - mu) - Lambda beta."""
    X = problem.design
    eta = X @ beta + np.log(problem.offset)
    mu = np.exp(np.clip(eta, -ETA_CLIP, ETA_CLIP))
    return X.T @ (problem.y - mu) - problem.penalty_matrix(lambdas) @ beta


def _initial_beta(problem: FitProblem) -> np.ndarray:
    p = sum(b.dim for b in problem.blocks)
    beta = np.zeros(p)
    sl = problem.column_slices()
    for b in problem.blocks:
        if b.dim == 1 and np.allclose(b.design, 1.0):
            beta[sl[b.name]] = np.log(
                (problem.y.sum() + 0.1) / problem.offset.sum())
            break
    return beta


def fit_pirls(
    problem: FitProblem,
    lambdas: dict[str, float] | None = None,
    max_iter: int = MAX_ITER,
    start: np.ndarray | None = None,
    check_rank: bool = True,
) -> FitResult:
    """Penalized IRLS with step-halving; deterministic in its inputs.

    Convergence requires both a small penalized score (max-norm below
    1e-8) and a tiny relative change in penalized deviance. A fit that
    exhausts max_iter is returned with converged=False, never silently.
    """
    if check_rank:
        problem.check_rank()
    lambdas = dict(problem.lambdas if lambdas is None else lambdas)
    X = problem.design
    y = problem.y
    log_off = np.log(problem.offset)
    P = problem.penalty_matrix(lambdas)

    beta = _initial_beta(problem) if start is None else np.asarray(start, dtype=float).copy()

    def pendev(b):
        eta = np.clip(X @ b + log_off, -ETA_CLIP, ETA_CLIP)
        return poisson_deviance(y, np.exp(eta)) + float(b @ P @ b)

    current = pendev(beta)
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        eta = np.clip(X @ beta + log_off, -ETA_CLIP, ETA_CLIP)
        mu = np.exp(eta)
        w = mu
        z = (eta - log_off) + (y - mu) / mu
        XtW = X.T * w
        A = XtW @ X + P
        try:
            proposal = np.linalg.solve(A, XtW @ z)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "singular penalized system; check block penalties and design rank"
            )
        # step-halving keeps the penalized deviance non-increasing
        step = proposal - beta
        alpha = 1.0
        accepted = current
        for _ in range(30):
            cand = beta + alpha * step
            cand_dev = pendev(cand)
            if cand_dev <= current + 1e-12 * (1.0 + abs(current)):
                beta = cand
                accepted = cand_dev
                break
            alpha *= 0.5
        else:
            break  # no acceptable step; convergence decided by the score test

        rel_change = abs(current - accepted) / (abs(accepted) + 0.1)
        current = accepted
        score = X.T @ (y - np.exp(np.clip(X @ beta + log_off, -ETA_CLIP, ETA_CLIP))) - P @ beta
        if np.max(np.abs(score)) < SCORE_TOL and rel_change < DEVIANCE_RTOL:
            converged = True
            break

    eta = np.clip(X @ beta + log_off, -ETA_CLIP, ETA_CLIP)
    mu = np.exp(eta)
    deviance = poisson_deviance(y, mu)
    edf = _edf_by_block(problem, mu, lambdas)
    return FitResult(
        beta=beta,
        deviance=deviance,
        edf=edf,
        converged=converged,
        iterations=iterations,
        lambdas=lambdas,
        penalized_deviance=current,
    )


def _edf_by_block(problem: FitProblem, mu: np.ndarray,
                  lambdas: dict[str, float]) -> dict[str, float]:
    """Per-block effective degrees of freedom tr[(X'WX + P)^-1 X'WX]."""
    X = problem.design
    XtWX = X.T * mu @ X
    A = XtWX + problem.penalty_matrix(lambdas)
    H = np.linalg.solve(A, XtWX)
    diag = np.diag(H)
    sl = problem.column_slices()
    return {b.name: float(diag[sl[b.name]].sum()) for b in problem.blocks}


@dataclass(frozen=True)
class LambdaGrid:
    log10_min: float = -4.0
    log10_max: float = 6.0
    count: int = 21

    def values(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("grid must have at least one point")
        if self.count == 1:
            return np.array([10.0 ** self.log10_min])
        return np.logspace(self.log10_min, self.log10_max, self.count)


def gcv_score(n: int, result: FitResult) -> float:
    denom = n - result.edf_total
    if denom <= 0:
        return np.inf
    return n * result.deviance / denom**2


def select_lambda(
    problem: FitProblem,
    grid: LambdaGrid = LambdaGrid(),
    max_sweeps: int = 3,
    max_iter: int = MAX_ITER,
) -> tuple[dict[str, float], FitResult]:
    """Coordinate-wise GCV grid search over the penalized blocks.

    Each sweep scans the grid for one block with the others held fixed;
    sweeps repeat until the choice is stable. Non-converged candidate
    fits are excluded; if every candidate for a block fails, raises with
    the failure list.
    """
    problem.check_rank()
    names = [b.name for b in problem.blocks if b.penalized]
    n = len(problem.y)
    lambdas = {name: 1.0 for name in names}
    if not names:
        result = fit_pirls(problem, lambdas, max_iter=max_iter, check_rank=False)
        return lambdas, result

    values = grid.values()
    warm = None
    for _ in range(max_sweeps):
        changed = False
        for name in names:
            candidates: list[tuple[float, float, FitResult]] = []
            failures: list[str] = []
            for lam in values:
                trial = dict(lambdas)
                trial[name] = float(lam)
                result = fit_pirls(problem, trial, max_iter=max_iter,
                                   start=warm, check_rank=False)
                if not result.converged:
                    failures.append(f"{name}={lam:g}: not converged")
                    continue
                candidates.append((gcv_score(n, result), float(lam), result))
            if not candidates:
                raise RuntimeError(
                    "lambda selection failed for block "
                    f"{name!r}: " + "; ".join(failures)
                )
            score, lam, result = min(candidates, key=lambda c: (c[0], c[1]))
            if lambdas[name] != lam:
                changed = True
            lambdas[name] = lam
            warm = result.beta
        if not changed:
            break
    refit = fit_pirls(problem, lambdas, max_iter=max_iter, check_rank=False)
    return lambdas, refit


def predict_rate(
    fit: "FitResult | np.ndarray", design: np.ndarray, offset: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Return (rate, mu): rate = exp(x'beta) is the per-offset reproduction
    factor, mu = offset * rate the expected count."""
    beta = fit.beta if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    design = np.atleast_2d(np.asarray(design, dtype=float))
    offset = np.asarray(offset, dtype=float)
    if design.shape[1] != len(beta):
        raise ValueError(
            f"design has {design.shape[1]} columns, coefficients expect {len(beta)}"
        )
    rate = np.exp(design @ beta)
    return rate, offset * rate
