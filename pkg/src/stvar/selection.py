"""Forward cross-validation over (p, c, lambda) and RMSFE."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import CoefficientStack, build_design, one_step_forecasts
from .solver import FitResult, WeightedLassoProblem, lambda_grid
from .spatial import SiteGeometry, uniform_weights, weight_tensor

log = logging.getLogger(__name__)

LASSO = "lasso"


def rmsfe(forecasts, actuals) -> float:
    f = np.atleast_2d(np.asarray(forecasts, dtype=float))
    a = np.atleast_2d(np.asarray(actuals, dtype=float))
    if f.shape != a.shape or f.shape[0] < 1:
        raise ValueError(f"forecasts {f.shape} and actuals {a.shape} must match")
    err = f - a
    return float(np.sqrt(np.mean(np.mean(err * err, axis=1))))


def make_weights(kind: str, c: float, geometry: SiteGeometry | None, p: int, m: int) -> np.ndarray:
    """Weight tensor for ``kind``; ``"lasso"`` gives uniform weights and ignores ``c``."""
    if kind == LASSO:
        return uniform_weights(p, m)
    if geometry is None:
        raise ValueError(f"weight kind {kind!r} needs site geometry")
    if geometry.m != m:
        raise ValueError(f"geometry has {geometry.m} sites but the panel has {m}")
    return weight_tensor(kind, c, geometry, p)


@dataclass(frozen=True)
class CvPlan:
    weight_kind: str = "exp-lag-dist"
    p_candidates: tuple = (1, 2, 3, 4)
    c_candidates: tuple = (0.5, 5, 10, 15, 20, 25, 30)
    lambda_count: int = 30
    lambda_ratio: float = 1000.0
    train_end: int | None = None

    def __post_init__(self):
        if not self.p_candidates or not self.c_candidates:
            raise ValueError("candidate sets must be nonempty")
        if self.lambda_count < 2:
            raise ValueError("lambda_count must be >= 2")
        object.__setattr__(self, "p_candidates", tuple(int(p) for p in self.p_candidates))
        cands = (0.0,) if self.weight_kind == LASSO else tuple(float(c) for c in self.c_candidates)
        object.__setattr__(self, "c_candidates", cands)

    def resolve_train_end(self, t_len: int) -> int:
        return self.train_end if self.train_end is not None else math.floor(0.6 * t_len)


@dataclass(frozen=True)
class CvResult:
    table: list = field(repr=False)
    p: int
    c: float
    lam: float
    rmsfe: float
    fit: FitResult = field(repr=False)
    degenerate: bool = False


def _sort_key(row):
    p, c, lam, err = row
    # ties: larger lambda, then smaller p, then smaller c
    return (err, -lam, p, c)


def forward_cv(panel, geometry: SiteGeometry | None, plan: CvPlan = CvPlan(), *, threads: int = 1) -> CvResult:
    x = np.asarray(panel, dtype=float)
    if x.ndim != 2:
        raise ValueError("panel must be a (T, m) array")
    t_len, m = x.shape
    t0 = plan.resolve_train_end(t_len)
    p_max = max(plan.p_candidates)
    if t0 < p_max + 1:
        raise ValueError(f"training window of {t0} rows too short for p={p_max}")
    if t_len < t0 + 1:
        raise ValueError("no validation data after the training window")

    table = []
    for p in plan.p_candidates:
        reg = build_design(x[:t0], p)
        for c in plan.c_candidates:
            weights = make_weights(plan.weight_kind, c, geometry, p, m)
            problem = WeightedLassoProblem(reg, weights)
            lmax = problem.lambda_max()
            if lmax <= 0:
                continue
            grid = lambda_grid(lmax, plan.lambda_count, plan.lambda_ratio)
            for res in problem.path(grid.values, threads=threads):
                pred = one_step_forecasts(res.coeffs, x, t0, t_len)
                table.append((p, c, res.lam, rmsfe(pred, x[t0:])))

    if not table:
        log.warning("lambda_max is zero for every candidate; returning the all-zero fit")
        p, c = min(plan.p_candidates), min(plan.c_candidates)
        reg = build_design(x, p)
        zero = FitResult(CoefficientStack.zeros(p, m), 0.0, float(np.sum(reg.response ** 2) / reg.n_obs),
                         np.zeros(m, dtype=int), np.ones(m, dtype=bool), np.zeros(m))
        err = rmsfe(np.zeros_like(x[t0:]), x[t0:])
        return CvResult([], p, c, 0.0, err, zero, degenerate=True)

    p, c, lam, err = min(table, key=_sort_key)
    reg = build_design(x, p)
    refit = WeightedLassoProblem(reg, make_weights(plan.weight_kind, c, geometry, p, m)).path([lam], threads=threads)[0]
    return CvResult(table, p, c, lam, err, refit)
