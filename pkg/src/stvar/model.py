"""VAR(p) representation, stationarity, simulation, design matrices and forecasts.

Conventions used throughout the package:

* a panel is a ``(T, m)`` array, row ``t`` holding the observation of every
  site at time ``t`` (0-based);
* ``phis`` is a ``(p, m, m)`` array with ``phis[l, s, s2]`` the lag ``l + 1``
  influence of site ``s2`` on site ``s``;
* the coefficient stack ``b`` is the ``(p*m, m)`` matrix with block rows
  ``phis[0].T, ..., phis[p-1].T`` so that ``Y = X @ b`` for the lagged design.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STABILITY_EPS = 1e-8


def _as_phis(phis) -> np.ndarray:
    a = np.asarray(phis, dtype=float)
    if a.ndim == 2:
        a = a[None, :, :]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("phis must have shape (p, m, m)")
    if a.shape[0] < 1:
        raise ValueError("VAR order must be >= 1")
    return a


@dataclass(frozen=True)
class VarModel:
    """Zero-mean Gaussian VAR(p) process."""

    phis: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        phis = _as_phis(self.phis)
        sigma = np.asarray(self.sigma, dtype=float)
        m = phis.shape[1]
        if sigma.shape != (m, m):
            raise ValueError(f"sigma must be {m}x{m}, got {sigma.shape}")
        if not (np.all(np.isfinite(phis)) and np.all(np.isfinite(sigma))):
            raise ValueError("model matrices must be finite")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-12:
            raise ValueError("sigma must be symmetric")
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.phis.shape[0]

    @property
    def m(self) -> int:
        return self.phis.shape[1]

    def coefficient_stack(self) -> "CoefficientStack":
        return CoefficientStack.from_phis(self.phis)


@dataclass(frozen=True)
class CoefficientStack:
    """The ``(p*m, m)`` coefficient matrix of the lagged regression."""

    b: np.ndarray
    p: int

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 2 or self.p < 1 or b.shape[0] != self.p * b.shape[1]:
            raise ValueError(f"coefficient stack of shape {b.shape} inconsistent with p={self.p}")
        object.__setattr__(self, "b", b)

    @classmethod
    def from_phis(cls, phis) -> "CoefficientStack":
        phis = _as_phis(phis)
        return cls(np.concatenate([phi.T for phi in phis], axis=0), phis.shape[0])

    @classmethod
    def zeros(cls, p: int, m: int) -> "CoefficientStack":
        return cls(np.zeros((p * m, m)), p)

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def q(self) -> int:
        return self.b.size

    @property
    def phis(self) -> np.ndarray:
        m = self.m
        return np.stack([self.b[l * m:(l + 1) * m].T for l in range(self.p)])

    def phi(self, lag: int, s: int, s2: int) -> float:
        """Coefficient of site ``s2`` at lag ``lag`` (1-based) in the equation of site ``s``."""
        return float(self.b[(lag - 1) * self.m + s2, s])

    def support(self) -> np.ndarray:
        """Boolean ``(p, m, m)`` mask of exactly nonzero transition entries."""
        return self.phis != 0.0


@dataclass(frozen=True)
class LaggedRegression:
    """Stacked least-squares problem ``Y = X B + E`` built from a panel.

    Rows run backwards in time: row ``r`` of ``response`` is the observation at
    time ``T-1-r`` and row ``r`` of ``design`` holds lags 1..p of it, most
    recent first.
    """

    response: np.ndarray
    design: np.ndarray
    p: int

    @property
    def n_obs(self) -> int:
        return self.response.shape[0]

    @property
    def m(self) -> int:
        return self.response.shape[1]


def companion_matrix(phis) -> np.ndarray:
    if isinstance(phis, VarModel):
        phis = phis.phis
    phis = _as_phis(phis)
    p, m, _ = phis.shape
    comp = np.zeros((p * m, p * m))
    comp[:m, :] = np.concatenate(list(phis), axis=1)
    if p > 1:
        comp[m:, :-m] = np.eye((p - 1) * m)
    return comp


def spectral_radius(a) -> float:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("spectral radius needs a square matrix")
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix must be finite")
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def is_stationary(model, eps: float = STABILITY_EPS) -> bool:
    phis = model.phis if isinstance(model, VarModel) else model
    return spectral_radius(companion_matrix(phis)) < 1.0 - eps


def simulate(model: VarModel, t_len: int, burn_in: int = 500, seed=None) -> np.ndarray:
    """Draw a ``(t_len, m)`` sample path started from zero after ``burn_in`` steps."""
    if t_len < 1 or burn_in < 0:
        raise ValueError("t_len must be >= 1 and burn_in >= 0")
    if not is_stationary(model):
        raise ValueError("cannot simulate a non-stationary VAR model")
    try:
        chol = np.linalg.cholesky(model.sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is not positive definite") from exc
    p, m = model.p, model.m
    rng = np.random.default_rng(seed)
    total = burn_in + t_len
    eps = rng.standard_normal((total, m)) @ chol.T
    x = np.zeros((total + p, m))
    for t in range(p, total + p):
        acc = eps[t - p].copy()
        for l in range(p):
            acc += model.phis[l] @ x[t - 1 - l]
        x[t] = acc
    return x[p + burn_in:]


def build_design(panel, p: int) -> LaggedRegression:
    x = np.asarray(panel, dtype=float)
    if x.ndim != 2:
        raise ValueError("panel must be a 2D (T, m) array")
    t_len = x.shape[0]
    if p < 1:
        raise ValueError("p must be >= 1")
    if t_len <= p:
        raise ValueError(f"need more than p={p} observations, got T={t_len}")
    rev = x[::-1]
    n = t_len - p
    response = rev[:n].copy()
    design = np.concatenate([rev[l:l + n] for l in range(1, p + 1)], axis=1)
    return LaggedRegression(response, design, p)


def _predict_row(lagged: np.ndarray, b: np.ndarray) -> np.ndarray:
    # the single arithmetic path for every plug-in prediction
    return lagged @ b


def forecast(coeffs: CoefficientStack, history, h: int = 1) -> np.ndarray:
    """Recursive plug-in forecasts for the next ``h`` steps, shape ``(h, m)``."""
    hist = np.asarray(history, dtype=float)
    p, m = coeffs.p, coeffs.m
    if h < 1:
        raise ValueError("h must be >= 1")
    if hist.ndim != 2 or hist.shape[1] != m or hist.shape[0] < p:
        raise ValueError(f"history needs at least p={p} rows of width {m}")
    # most recent first, matching the design-row layout
    state = list(hist[-p:][::-1])
    out = np.empty((h, m))
    for k in range(h):
        lagged = np.concatenate(state[:p])
        nxt = _predict_row(lagged, coeffs.b)
        out[k] = nxt
        state.insert(0, nxt)
    return out


def one_step_forecasts(coeffs: CoefficientStack, panel, start: int, stop: int | None = None) -> np.ndarray:
    """One-step forecasts of rows ``start..stop-1`` each conditioned on the realised past.

    Uses the same lagged-row arithmetic as :func:`forecast` with ``h=1``.
    """
    x = np.asarray(panel, dtype=float)
    stop = x.shape[0] if stop is None else stop
    p = coeffs.p
    if start < p:
        raise ValueError(f"first forecast target must be at index >= p={p}")
    lagged = np.concatenate([x[start - l:stop - l] for l in range(1, p + 1)], axis=1)
    out = np.empty((lagged.shape[0], coeffs.m))
    for k, row in enumerate(lagged):
        out[k] = _predict_row(row, coeffs.b)
    return out
