"""Site geometry and distance/lag driven penalty weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WEIGHT_KINDS = (
    "exp-lag-dist",
    "power-lag-dist",
    "power-of-lag-times-expdist",
    "exp-dist-only",
)

_ALIASES = {
    "wlasso1": "exp-lag-dist",
    "wlasso2": "power-lag-dist",
    "wlasso3": "power-of-lag-times-expdist",
    "wlasso4": "exp-dist-only",
}


def pairwise_distances(coords) -> np.ndarray:
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("coords must be an (m, dim) array with m >= 1")
    if not np.all(np.isfinite(pts)):
        raise ValueError("coordinates must be finite")
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class SiteGeometry:
    """Pairwise site distances, optionally backed by planar coordinates.

    ``distances[s, s2]`` may be asymmetric (directed road distances) and may
    hold ``inf`` for unreachable pairs. ``d_max`` is the largest finite
    off-diagonal distance.
    """

    distances: np.ndarray
    coords: np.ndarray | None = None
    site_ids: tuple | None = None

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if np.any(np.isnan(d)) or np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        object.__setattr__(self, "distances", d)
        if self.site_ids is not None:
            ids = tuple(self.site_ids)
            if len(ids) != d.shape[0]:
                raise ValueError("site_ids length does not match the distance matrix")
            if len(set(ids)) != len(ids):
                raise ValueError("duplicate site ids")
            object.__setattr__(self, "site_ids", ids)

    @classmethod
    def from_coords(cls, coords, site_ids=None) -> "SiteGeometry":
        pts = np.asarray(coords, dtype=float)
        return cls(pairwise_distances(pts), coords=pts, site_ids=site_ids)

    @classmethod
    def from_distance_matrix(cls, distances, unreachable: str = "dmax", site_ids=None) -> "SiteGeometry":
        """Build from a (possibly directed) distance matrix with ``inf`` marking unreachable pairs.

        ``unreachable="dmax"`` replaces ``inf`` by the largest reachable
        distance; ``"inf"`` keeps it, which later pins those coefficients to zero.
        """
        d = np.array(distances, dtype=float)
        if unreachable not in ("dmax", "inf"):
            raise ValueError("unreachable must be 'dmax' or 'inf'")
        if unreachable == "dmax":
            finite = d[np.isfinite(d)]
            d[~np.isfinite(d)] = finite.max() if finite.size else 0.0
        return cls(d, site_ids=site_ids)

    @property
    def m(self) -> int:
        return self.distances.shape[0]

    @property
    def d_max(self) -> float:
        d = self.distances
        finite = d[np.isfinite(d)]
        return float(finite.max()) if finite.size else 0.0

    def subset(self, idx) -> "SiteGeometry":
        idx = np.asarray(idx)
        coords = None if self.coords is None else self.coords[idx]
        ids = None if self.site_ids is None else tuple(self.site_ids[i] for i in idx)
        return SiteGeometry(self.distances[np.ix_(idx, idx)], coords=coords, site_ids=ids)


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind.lower(), kind.lower())
    if k not in WEIGHT_KINDS:
        raise ValueError(f"unknown weight kind {kind!r}; expected one of {WEIGHT_KINDS}")
    return k


def weight_tensor(kind: str, c: float, geometry: SiteGeometry, p: int) -> np.ndarray:
    """Penalty weights ``w[l-1, s, s2]`` for lags ``l = 1..p``.

    Infinite distances always give infinite weight (coefficient forced to zero).
    """
    kind = canonical_kind(kind)
    if c < 0:
        raise ValueError("weight constant c must be nonnegative")
    if p < 1:
        raise ValueError("p must be >= 1")
    d = geometry.distances
    d_max = geometry.d_max
    if geometry.m > 1 and d_max <= 0:
        raise ValueError("d_max must be positive")
    if d_max <= 0:
        d_max = 1.0
    unreachable = ~np.isfinite(d)
    rel = np.where(unreachable, 0.0, d) / d_max
    lags = np.arange(1, p + 1, dtype=float)[:, None, None] / p
    if kind == "exp-lag-dist":
        w = np.exp(c * lags * rel)
    elif kind == "power-lag-dist":
        w = (1.0 + lags * rel) ** c
    elif kind == "power-of-lag-times-expdist":
        w = (lags * np.exp(rel)) ** c
    else:
        w = np.broadcast_to(np.exp(c * rel), (p,) + d.shape)
    w = np.array(w, dtype=float)
    w[:, unreachable] = np.inf
    return w


def uniform_weights(p: int, m: int) -> np.ndarray:
    return np.ones((p, m, m))


def weight_ratio(weights, support) -> float:
    """Largest weight on the support over the smallest weight off it."""
    w = np.asarray(weights, dtype=float)
    mask = np.asarray(support, dtype=bool)
    if mask.shape != w.shape:
        raise ValueError("support mask must match the weight tensor shape")
    off = w[~mask]
    if off.size == 0:
        raise ValueError("support complement is empty")
    on = w[mask]
    if on.size == 0:
        return 0.0
    return float(on.max() / off.min())
