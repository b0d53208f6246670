"""Periodic detrending and variance standardisation of sensor series.

Each series is modelled as ``z_t = mu(d) + sigma(d) x_t`` where ``d`` is the
position of ``t`` within the period and ``log sigma(d) = a + b log mu(d)``.
Time is 1-based: ``series[0]`` is observed at ``t = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_FLOOR_REL = 1e-6


def slot_index(t, period: int = 168):
    """1-based slot of time ``t``; multiples of ``period`` map to ``period``."""
    d = np.mod(t, period)
    if np.ndim(d) == 0:
        return int(d) if d != 0 else period
    return np.where(d == 0, period, d)


def _slots(n: int, period: int, start: int = 1) -> np.ndarray:
    return slot_index(np.arange(start, start + n), period)


def outlier_screen(series, period: int = 168, *, median_threshold: float = 30.0, fence: float = 1.5,
                   start: int = 1) -> np.ndarray:
    """Boolean mask of outliers, judged slot by slot.

    A zero is an outlier when its slot median exceeds ``median_threshold``;
    any value outside the ``fence * IQR`` boxplot fences of its slot is one too.
    Missing values are always masked.
    """
    z = np.asarray(series, dtype=float)
    if z.ndim != 1 or z.size < period:
        raise ValueError("series must be 1D and cover at least one period")
    slots = _slots(z.size, period, start)
    mask = ~np.isfinite(z)
    for d in range(1, period + 1):
        idx = np.flatnonzero((slots == d) & ~mask)
        if idx.size == 0:
            continue
        v = z[idx]
        if np.median(v) > median_threshold:
            mask[idx[v == 0]] = True
        q1, q3 = np.percentile(v, [25, 75])
        spread = fence * (q3 - q1)
        mask[idx[(v < q1 - spread) | (v > q3 + spread)]] = True
    return mask


def silverman_bandwidth(n: int, period: int) -> float:
    """Normal-reference bandwidth for slots spread uniformly over one period."""
    sd = np.sqrt((period ** 2 - 1) / 12.0)
    return float(1.06 * sd * n ** (-0.2))


def _slot_sums(z, keep, period, start):
    slots = _slots(z.size, period, start)
    counts = np.bincount(slots[keep], minlength=period + 1)[1:].astype(float)
    sums = np.bincount(slots[keep], weights=z[keep], minlength=period + 1)[1:]
    return slots, counts, sums


def _local_linear(counts, sums, period, bandwidth):
    """Smoothed slot values and the weight each one puts on a single observation at its own slot."""
    grid = np.arange(1, period + 1)
    # signed circular offset of each data slot (columns) from each target slot (rows)
    u = (grid[None, :] - grid[:, None] + period / 2.0) % period - period / 2.0
    k = np.exp(-0.5 * (u / bandwidth) ** 2)
    s0 = k @ counts
    s1 = (k * u) @ counts
    s2 = (k * u * u) @ counts
    t0 = k @ sums
    t1 = (k * u) @ sums
    if np.any(s0 <= 0) or np.any((k > 1e-12) @ (counts > 0) < 1):
        raise ValueError("empty kernel neighbourhood; increase the bandwidth")
    denom = s0 * s2 - s1 * s1
    local_const = denom <= 1e-12 * s0 * np.maximum(s2, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(local_const, t0 / s0, (s2 * t0 - s1 * t1) / denom)
        own = np.where(local_const, 1.0 / s0, s2 / denom)
    return mu, own


def _keep_mask(z, mask):
    return np.isfinite(z) if mask is None else (~np.asarray(mask, dtype=bool) & np.isfinite(z))


def cv_bandwidth(series, period: int = 168, mask=None, start: int = 1, grid=None) -> float:
    """Bandwidth minimising the leave-one-out squared error of the trend fit.

    The smoother is linear, so each held-out residual is the full-fit
    residual divided by one minus the observation's own weight.
    """
    z = np.asarray(series, dtype=float)
    keep = _keep_mask(z, mask)
    slots, counts, sums = _slot_sums(z, keep, period, start)
    if grid is None:
        grid = np.geomspace(0.5, period / 4.0, 40)
    best, best_h = np.inf, None
    for h in grid:
        try:
            mu, own = _local_linear(counts, sums, period, float(h))
        except ValueError:
            continue
        idx = slots[keep] - 1
        lev = own[idx]
        if np.any(lev >= 1.0):
            continue
        score = float(np.mean(((z[keep] - mu[idx]) / (1.0 - lev)) ** 2))
        if score < best:
            best, best_h = score, float(h)
    if best_h is None:
        raise ValueError("no bandwidth in the grid gives a usable fit")
    return best_h


def fit_trend(series, period: int = 168, bandwidth=None, mask=None, start: int = 1) -> np.ndarray:
    """Local linear estimate of the periodic trend at slots ``1..period``.

    Gaussian kernel on the circular slot distance; masked points are ignored.
    ``bandwidth`` is in slots, or ``"cv"`` (the default, :func:`cv_bandwidth`)
    or ``"silverman"`` (:func:`silverman_bandwidth`). The normal-reference
    rule ignores the curvature of the trend and oversmooths long records.
    """
    z = np.asarray(series, dtype=float)
    keep = _keep_mask(z, mask)
    if bandwidth is None or bandwidth == "cv":
        bandwidth = cv_bandwidth(z, period, mask, start)
    elif bandwidth == "silverman":
        bandwidth = silverman_bandwidth(int(keep.sum()), period)
    elif isinstance(bandwidth, str):
        raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    _, counts, sums = _slot_sums(z, keep, period, start)
    if np.count_nonzero(counts) < 2:
        raise ValueError("need observations in at least two slots")
    return _local_linear(counts, sums, period, bandwidth)[0]


def slot_sd(residuals, period: int = 168, mask=None, start: int = 1) -> np.ndarray:
    """Sample standard deviation of residuals within each slot (NaN if fewer than 2)."""
    y = np.asarray(residuals, dtype=float)
    keep = _keep_mask(y, mask)
    slots = _slots(y.size, period, start)
    out = np.full(period, np.nan)
    for d in range(1, period + 1):
        v = y[(slots == d) & keep]
        if v.size >= 2:
            out[d - 1] = v.std(ddof=1)
    return out


def fit_variance_link(mu_hat, residuals, period: int = 168, mask=None, start: int = 1,
                      sigma_floor: float | None = None):
    """OLS of ``log sd`` on ``log mu`` across slots; returns ``(a, b, slot_sd)``."""
    mu = np.asarray(mu_hat, dtype=float)
    sd = slot_sd(residuals, period, mask, start)
    if sigma_floor is None:
        sigma_floor = SIGMA_FLOOR_REL * np.nanmax(sd)
    use = np.isfinite(sd) & (sd >= sigma_floor) & (sd > 0) & (mu > 0)
    if use.sum() < 1:
        raise ValueError("no slots with positive trend and spread")
    lx, ly = np.log(mu[use]), np.log(sd[use])
    if use.sum() < 2 or np.ptp(lx) == 0:
        return float(np.log(sd[use].mean())), 0.0, sd
    b, a = np.polyfit(lx, ly, 1)
    return float(a), float(b), sd


@dataclass(frozen=True)
class TrendModel:
    period: int
    mu: np.ndarray
    a: float
    b: float
    sigma_floor: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.period,) or not np.all(np.isfinite(mu)):
            raise ValueError("trend must hold one finite value per slot")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        object.__setattr__(self, "mu", mu)

    def raw_sigma(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.exp(self.a + self.b * np.log(self.mu))
        return np.where(self.mu > 0, s, 0.0)

    def sigma(self) -> np.ndarray:
        return np.maximum(self.raw_sigma(), self.sigma_floor)

    def to_dict(self) -> dict:
        return {"period": self.period, "mu": self.mu.tolist(), "a": self.a, "b": self.b,
                "sigma_floor": self.sigma_floor}

    @classmethod
    def from_dict(cls, d: dict) -> "TrendModel":
        return cls(int(d["period"]), np.asarray(d["mu"], dtype=float), float(d["a"]), float(d["b"]),
                   float(d["sigma_floor"]))


def fit_site(series, period: int = 168, bandwidth=None, start: int = 1):
    """Outlier screen, trend, and variance link for one series; returns ``(TrendModel, mask)``."""
    z = np.asarray(series, dtype=float)
    mask = outlier_screen(z, period, start=start)
    mu = fit_trend(z, period, bandwidth, mask, start)
    resid = z - mu[_slots(z.size, period, start) - 1]
    sd = slot_sd(resid, period, mask, start)
    floor = SIGMA_FLOOR_REL * np.nanmax(sd)
    a, b, _ = fit_variance_link(mu, resid, period, mask, start, sigma_floor=floor)
    return TrendModel(period, mu, a, b, floor), mask


def standardize(series, trend: TrendModel, start: int = 1):
    """Residual series ``(z - mu(d)) / sigma(d)`` and a flag for floored sigma."""
    z = np.asarray(series, dtype=float)
    idx = _slots(z.size, trend.period, start) - 1
    raw = trend.raw_sigma()[idx]
    sig = trend.sigma()[idx]
    return (z - trend.mu[idx]) / sig, raw < trend.sigma_floor


def reconstruct(x, trend: TrendModel, slots) -> np.ndarray:
    """Map standardized values back to the data scale at the given 1-based slots."""
    xv = np.asarray(x, dtype=float)
    idx = np.asarray(slots, dtype=int)
    if idx.shape != xv.shape:
        raise ValueError("slots must align with the values")
    if np.any(idx < 1) or np.any(idx > trend.period):
        raise ValueError("slot out of range")
    return trend.mu[idx - 1] + trend.sigma()[idx - 1] * xv


def detrend_panel(panel, period: int = 168, bandwidth=None, start: int = 1):
    """Apply :func:`fit_site` and :func:`standardize` to each column of a ``(T, m)`` panel."""
    z = np.asarray(panel, dtype=float)
    trends, masks, cols = [], [], []
    for s in range(z.shape[1]):
        trend, mask = fit_site(z[:, s], period, bandwidth, start)
        x, _ = standardize(z[:, s], trend, start)
        trends.append(trend)
        masks.append(mask)
        cols.append(x)
    return np.column_stack(cols), trends, np.column_stack(masks)


def filter_slots(panel, allowed_slots, period: int = 168, start: int = 1):
    """Rows whose slot is in ``allowed_slots``, concatenated in time order, and their times.

    Concatenation joins non-adjacent times; lagged regressions built on the
    result treat those joins as consecutive.
    """
    z = np.asarray(panel, dtype=float)
    times = np.arange(start, start + z.shape[0])
    keep = np.isin(slot_index(times, period), np.asarray(list(allowed_slots)))
    return z[keep], times[keep]
