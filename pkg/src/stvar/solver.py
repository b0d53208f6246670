"""Weighted l1-regularised least squares for the stacked VAR regression.

Each response column ``i`` is an independent problem

    (1/N) ||Y_i - X B_i||^2 + lam * sum_j w_ij |B_ij|

which becomes a plain lasso after dividing design column ``j`` by ``w_ij``.
The lasso is solved by covariance-update cyclic coordinate descent
(:mod:`stvar._kernels`); coefficients with infinite weight are dropped
before solving and returned as exact zeros.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import CoefficientStack, LaggedRegression

TOL_CD = 1e-7
TOL_KKT = 1e-6
MAX_ITER = 100_000


@dataclass(frozen=True)
class FitResult:
    coeffs: CoefficientStack
    lam: float
    objective: float
    iterations: np.ndarray
    converged: np.ndarray
    kkt: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return self.coeffs.support()

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.coeffs.b))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1 or np.any(v <= 0) or np.any(np.diff(v) >= 0):
            raise ValueError("lambda grid must be a strictly decreasing sequence of positive values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)


def _column_weights(weights: np.ndarray, i: int) -> np.ndarray:
    # design column (l-1)*m + s2 carries lag l of site s2
    return weights[:, i, :].reshape(-1)


def _check_weights(weights, p: int, m: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (p, m, m):
        raise ValueError(f"weights must have shape {(p, m, m)}, got {w.shape}")
    if np.any(np.isnan(w)) or np.any(w <= 0):
        raise ValueError("penalty weights must be strictly positive")
    return w


def rescale_column_design(reg: LaggedRegression, weights, i: int):
    """Design for response ``i`` with column ``j`` divided by its weight.

    Returns ``(design, keep, scale)``: ``design`` holds only finite-weight
    columns ``keep`` and ``scale = 1 / w`` maps rescaled coefficients back by
    ``B[keep, i] = scale * B_tilde``.
    """
    w = _column_weights(_check_weights(weights, reg.p, reg.m), i)
    keep = np.flatnonzero(np.isfinite(w))
    scale = 1.0 / w[keep]
    return reg.design[:, keep] * scale, keep, scale


class _Column:
    """Rescaled Gram problem of one response column."""

    __slots__ = ("keep", "scale", "gram", "xty")

    def __init__(self, gram0: np.ndarray, xty0: np.ndarray, w: np.ndarray):
        keep = np.flatnonzero(np.isfinite(w))
        scale = 1.0 / w[keep]
        self.keep = keep
        self.scale = scale
        self.gram = np.ascontiguousarray(gram0[np.ix_(keep, keep)] * scale[:, None] * scale[None, :])
        self.xty = np.ascontiguousarray(xty0[keep] * scale)

    def kkt(self, beta: np.ndarray, lam: float) -> float:
        g = 2.0 * (self.xty - self.gram @ beta)
        nz = beta != 0.0
        res = np.where(nz, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
        return float(res.max(initial=0.0))

    def solve(self, lam: float, beta: np.ndarray, tol: float, max_iter: int, tol_kkt: float):
        """Run coordinate descent from ``beta`` (modified in place)."""
        used = 0
        converged = False
        kkt = np.inf
        if beta.size == 0:
            return 0, True, 0.0
        while used < max_iter:
            sweeps, ok = _kernels.cd_gram(self.gram, self.xty, lam, beta, tol, max_iter - used)
            used += sweeps
            kkt = self.kkt(beta, lam)
            if ok and kkt <= tol_kkt:
                converged = True
                break
            if not ok or tol < 1e-15:
                break
            tol *= 1e-2
        return used, converged, kkt


class WeightedLassoProblem:
    """Precomputed cross-products for repeated fits of one regression and weight tensor."""

    def __init__(self, reg: LaggedRegression, weights):
        if not (np.all(np.isfinite(reg.design)) and np.all(np.isfinite(reg.response))):
            raise ValueError("regression data contain non-finite values")
        self.reg = reg
        self.weights = _check_weights(weights, reg.p, reg.m)
        n = reg.n_obs
        self.gram0 = reg.design.T @ reg.design / n
        self.xty0 = reg.design.T @ reg.response / n

    def column(self, i: int) -> _Column:
        return _Column(self.gram0, self.xty0[:, i], _column_weights(self.weights, i))

    def lambda_max(self) -> float:
        best = 0.0
        for i in range(self.reg.m):
            w = _column_weights(self.weights, i)
            fin = np.isfinite(w)
            if np.any(fin):
                best = max(best, float(np.max(2.0 * np.abs(self.xty0[fin, i]) / w[fin])))
        return best

    def objective(self, b: np.ndarray, lam: float) -> float:
        resid = self.reg.response - self.reg.design @ b
        w = np.concatenate([self.weights[l].T for l in range(self.reg.p)], axis=0)
        nz = b != 0.0
        pen = np.sum(w[nz] * np.abs(b[nz]))
        return float(np.sum(resid * resid) / self.reg.n_obs + lam * pen)

    def _path_column(self, i, lams, init, tol, max_iter, tol_kkt):
        col = self.column(i)
        beta = np.zeros(col.keep.size)
        if init is not None:
            beta = init[col.keep, i] / col.scale
        out = []
        for lam in lams:
            sweeps, ok, kkt = col.solve(float(lam), beta, tol, max_iter, tol_kkt)
            full = np.zeros(self.reg.design.shape[1])
            full[col.keep] = beta * col.scale
            out.append((full, sweeps, ok, kkt))
        return out

    def path(self, lams, init: CoefficientStack | None = None, *, tol: float = TOL_CD,
             max_iter: int = MAX_ITER, tol_kkt: float = TOL_KKT, threads: int = 1) -> list[FitResult]:
        """Warm-started fits at each ``lam`` in order, columns solved independently."""
        lams = [float(v) for v in lams]
        if any(l < 0 for l in lams):
            raise ValueError("lambda must be nonnegative")
        p, m = self.reg.p, self.reg.m
        b0 = None if init is None else init.b
        run = lambda i: self._path_column(i, lams, b0, tol, max_iter, tol_kkt)  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                cols = list(pool.map(run, range(m)))
        else:
            cols = [run(i) for i in range(m)]
        results = []
        for k, lam in enumerate(lams):
            b = np.column_stack([cols[i][k][0] for i in range(m)])
            results.append(FitResult(
                coeffs=CoefficientStack(b, p),
                lam=lam,
                objective=self.objective(b, lam),
                iterations=np.array([cols[i][k][1] for i in range(m)]),
                converged=np.array([cols[i][k][2] for i in range(m)]),
                kkt=np.array([cols[i][k][3] for i in range(m)]),
            ))
        return results


def lambda_max(reg: LaggedRegression, weights) -> float:
    """Smallest penalty at which the all-zero stack is optimal."""
    if not np.any(reg.design):
        raise ValueError("design matrix is identically zero")
    return WeightedLassoProblem(reg, weights).lambda_max()


def lambda_grid(lmax: float, count: int = 30, ratio: float = 1000.0) -> LambdaGrid:
    if lmax <= 0:
        raise ValueError("lambda_max must be positive")
    if count < 2 or ratio <= 1:
        raise ValueError("need count >= 2 and ratio > 1")
    k = np.arange(count)
    return LambdaGrid(lmax * ratio ** (-k / (count - 1)))


def fit(reg: LaggedRegression, weights, lam: float, init: CoefficientStack | None = None, **kw) -> FitResult:
    return WeightedLassoProblem(reg, weights).path([lam], init, **kw)[0]


def fit_path(reg: LaggedRegression, weights, grid, **kw) -> list[FitResult]:
    values = grid.values if isinstance(grid, LambdaGrid) else LambdaGrid(grid).values
    return WeightedLassoProblem(reg, weights).path(values, **kw)


def threshold(coeffs: CoefficientStack, level: float) -> CoefficientStack:
    if level < 0:
        raise ValueError("threshold level must be nonnegative")
    b = coeffs.b
    return CoefficientStack(np.where(np.abs(b) > level, b, 0.0), coeffs.p)
