"""Estimation and forecast metrics, network classification, Diebold-Mariano test,
and evaluators for the dependence constants and estimation error bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .model import CoefficientStack, companion_matrix, spectral_radius


def _pair(est, truth):
    a = est.phis if isinstance(est, CoefficientStack) else np.asarray(est, dtype=float)
    b = truth.phis if isinstance(truth, CoefficientStack) else np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def estimation_errors(est, truth) -> dict:
    a, b = _pair(est, truth)
    diff = a - b
    return {"l1": float(np.sum(np.abs(diff))), "l2": float(np.sqrt(np.sum(diff * diff)))}


def support_metrics(est, truth) -> dict:
    """Fractions of false zeros and false nonzeros over all ``m*m*p`` entries."""
    a, b = _pair(est, truth)
    total = a.size
    return {
        "pfz": np.count_nonzero((a == 0) & (b != 0)) / total,
        "pfnz": np.count_nonzero((a != 0) & (b == 0)) / total,
    }


EDGE_CLASSES = ("true-negative", "true-positive", "false-negative", "false-positive")
EDGE_COLORS = {"true-positive": "black", "false-negative": "red", "false-positive": "blue", "true-negative": None}


@dataclass(frozen=True)
class EdgeClassification:
    """Edge codes indexing :data:`EDGE_CLASSES`, shape ``(p, m, m)``.

    Entry ``[l, s, s2]`` describes the directed edge from site ``s2`` to site
    ``s`` at lag ``l + 1``.
    """

    codes: np.ndarray

    def counts(self) -> dict:
        return {name: int(np.count_nonzero(self.codes == k)) for k, name in enumerate(EDGE_CLASSES)}

    def collapsed(self) -> np.ndarray:
        """``(m, m)`` codes where an edge exists if it is present at any lag."""
        est = np.any((self.codes == 1) | (self.codes == 3), axis=0)
        tru = np.any((self.codes == 1) | (self.codes == 2), axis=0)
        return _codes(est, tru)

    def rows(self, site_ids=None, include_negatives: bool = False):
        """Yield ``(from_site, to_site, lag, class)`` tuples."""
        p, m, _ = self.codes.shape
        ids = list(range(m)) if site_ids is None else list(site_ids)
        for l in range(p):
            for s in range(m):
                for s2 in range(m):
                    code = int(self.codes[l, s, s2])
                    if code or include_negatives:
                        yield ids[s2], ids[s], l + 1, EDGE_CLASSES[code]


def _codes(est_present, true_present):
    codes = np.zeros(est_present.shape, dtype=np.int8)
    codes[est_present & true_present] = 1
    codes[~est_present & true_present] = 2
    codes[est_present & ~true_present] = 3
    return codes


def classify_network(est, truth) -> EdgeClassification:
    a, b = _pair(est, truth)
    return EdgeClassification(_codes(a != 0, b != 0))


class DMResult(NamedTuple):
    statistic: float
    p_value: float
    degenerate: bool


def dm_test(err_a, err_b, h: int = 1) -> DMResult:
    """Two-sided Diebold-Mariano test of equal squared-error loss.

    The long-run variance sums sample autocovariances of the loss
    differential up to lag ``h - 1`` with rectangular weights. A
    nonpositive variance is reported as degenerate with p-value 1.
    """
    a = np.asarray(err_a, dtype=float).ravel()
    b = np.asarray(err_b, dtype=float).ravel()
    if a.shape != b.shape or a.size < 2:
        raise ValueError("error series must have equal length >= 2")
    if h < 1:
        raise ValueError("h must be >= 1")
    d = a * a - b * b
    n = d.size
    dbar = d.mean()
    dc = d - dbar
    lrv = float(dc @ dc) / n
    for k in range(1, min(h, n)):
        lrv += 2.0 * float(dc[k:] @ dc[:-k]) / n
    if not lrv > 0.0:
        return DMResult(0.0, 1.0, True)
    stat = dbar / math.sqrt(lrv / n)
    return DMResult(float(stat), float(2.0 * stats.norm.sf(abs(stat))), False)


@dataclass(frozen=True)
class TheoryQuantities:
    """Dependence constants of a stationary VAR; ``a1 = a2 = 1`` unless configured.

    ``omega`` and ``q_const`` are only defined up to those universal constants.
    ``tau`` needs the sample size and is ``None`` without it.
    """

    rho: float
    mu_min: float
    mu_max: float
    mu_min_tilde: float
    alpha: float
    omega: float
    q_const: float
    tau: float | None = None


def mu_extrema_numeric(phis, grid_points: int = 720) -> dict:
    """Extreme eigenvalues of ``A(z)^H A(z)``, ``A(z) = I - sum_l phis[l] z^l``, on ``|z| = 1``."""
    if grid_points < 8:
        raise ValueError("grid_points must be >= 8")
    ph = np.asarray(phis, dtype=float)
    if ph.ndim == 2:
        ph = ph[None]
    p, m, _ = ph.shape
    theta = 2.0 * np.pi * np.arange(grid_points) / grid_points
    zpow = np.exp(1j * np.outer(theta, np.arange(1, p + 1)))
    a = np.eye(m)[None] - np.einsum("kl,lij->kij", zpow, ph)
    herm = np.conj(np.swapaxes(a, 1, 2)) @ a
    ev = np.linalg.eigvalsh(herm)
    return {"mu_min": float(ev[:, 0].min()), "mu_max": float(ev[:, -1].max())}


def _constants(rho, mu_min, mu_max, mu_min_tilde, sigma, p, m, n, a1, a2):
    ev = np.linalg.eigvalsh(np.asarray(sigma, dtype=float))
    lmin, lmax = float(ev[0]), float(ev[-1])
    if lmin <= 0:
        raise ValueError("sigma must be positive definite")
    alpha = lmin / (2.0 * mu_max)
    omega = a1 * (lmax / mu_min_tilde) / (lmin / mu_max)
    q_const = a2 * (lmax + lmax / mu_min + lmax * mu_max / mu_min)
    tau = None if n is None else alpha * max(omega ** 2, 1.0) * (math.log(p) + math.log(m)) / n
    return TheoryQuantities(rho, mu_min, mu_max, mu_min_tilde, alpha, omega, q_const, tau)


def theory_symmetric_var1(phi, sigma, n: int | None = None, a1: float = 1.0, a2: float = 1.0) -> TheoryQuantities:
    """Closed-form constants for a VAR(1) with symmetric transition matrix."""
    phi = np.asarray(phi, dtype=float)
    if np.max(np.abs(phi - phi.T), initial=0.0) > 1e-10:
        raise ValueError("transition matrix must be symmetric")
    rho = float(np.max(np.abs(np.linalg.eigvalsh(phi))))
    if rho >= 1.0:
        raise ValueError("transition matrix is not stationary")
    mu_max = (1.0 + rho) ** 2
    mu_min = (1.0 - rho) ** 2
    return _constants(rho, mu_min, mu_max, mu_min, sigma, 1, phi.shape[0], n, a1, a2)


def theory_quantities(phis, sigma, n: int | None = None, a1: float = 1.0, a2: float = 1.0,
                      grid_points: int = 720) -> TheoryQuantities:
    """Constants for a general VAR(p), extrema evaluated on a unit-circle grid."""
    ph = np.asarray(phis, dtype=float)
    if ph.ndim == 2:
        ph = ph[None]
    comp = companion_matrix(ph)
    rho = spectral_radius(comp)
    if rho >= 1.0:
        raise ValueError("model is not stationary")
    ext = mu_extrema_numeric(ph, grid_points)
    tilde = mu_extrema_numeric(comp, grid_points)["mu_min"]
    p, m = ph.shape[0], ph.shape[1]
    return _constants(rho, ext["mu_min"], ext["mu_max"], tilde, sigma, p, m, n, a1, a2)


def theoretical_lambda(q_const: float, p: int, m: int, n: int, w1: float = 1.0) -> float:
    """Smallest penalty level covered by the error bounds, ``4 Q sqrt((log p + 2 log m)/N) / w1``."""
    return 4.0 * q_const * math.sqrt((math.log(p) + 2.0 * math.log(m)) / n) / w1


@dataclass(frozen=True)
class ErrorBounds:
    l2: float
    l1: float
    pred: float
    false_zeros: float | None = None
    false_nonzeros: float | None = None


def _core_bounds(j, lam, alpha, r_w, tail, omega, q_const):
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    root = math.sqrt(j)
    l2 = (1.0 + 2.0 * r_w) * root * lam / alpha
    l1 = (2.0 + 2.0 * r_w) * root * l2
    pred = (1.0 + 2.0 * r_w) / 2.0 * root * lam * l2
    if tail > 0:
        if q_const <= 0:
            raise ValueError("q_const must be positive")
        l2 += 2.0 * math.sqrt(r_w * lam * tail / alpha) + 4.0 * r_w * max(omega, 1.0) / q_const * lam * tail
        l1 = (2.0 + 2.0 * r_w) * root * l2 + 4.0 * r_w * tail
        pred = (1.0 + 2.0 * r_w) / 2.0 * root * lam * l2 + 2.0 * r_w * lam * tail
    return l2, l1, pred


def exact_sparsity_bounds(k: int, lambda_n: float, alpha: float, r_w: float, s0: float | None = None) -> ErrorBounds:
    """Error bounds under exact sparsity with ``k`` nonzeros.

    ``l1`` equals ``(2 + 6 r_w + 4 r_w^2) k lambda / alpha`` and ``pred``
    equals ``(1 + 2 r_w)^2 k lambda^2 / (2 alpha)``; they are evaluated in the
    factored form shared with :func:`weak_sparsity_bounds`.
    """
    l2, l1, pred = _core_bounds(k, lambda_n, alpha, r_w, 0.0, 1.0, 1.0)
    fz = None if s0 is None else l1 / s0
    fnz = (1.0 + 2.0 * r_w) ** 2 * k / alpha
    return ErrorBounds(l2, l1, pred, fz, fnz)


def weak_sparsity_bounds(j_eta: int, tail_l1: float, lambda_tilde: float, alpha: float, r_w_eta: float,
                    omega: float, q_const: float) -> ErrorBounds:
    """Error bounds under weak sparsity for the hard-threshold approximation at some ``eta``."""
    if tail_l1 < 0:
        raise ValueError("tail l1 norm must be nonnegative")
    return ErrorBounds(*_core_bounds(j_eta, lambda_tilde, alpha, r_w_eta, tail_l1, omega, q_const))


def lr_radius(truth, r: float) -> float:
    """``sum |beta|^r`` with the ``r = 0`` convention of counting nonzeros."""
    b = np.abs(truth.b if isinstance(truth, CoefficientStack) else np.asarray(truth, dtype=float)).ravel()
    if r == 0:
        return float(np.count_nonzero(b))
    return float(np.sum(b ** r))


def weak_sparsity_profile(truth, eta_grid) -> list[dict]:
    """Hard-threshold support size and discarded l1 mass for each threshold."""
    b = np.abs(truth.b if isinstance(truth, CoefficientStack) else np.asarray(truth, dtype=float)).ravel()
    out = []
    for eta in eta_grid:
        if eta < 0:
            raise ValueError("thresholds must be nonnegative")
        keep = b > eta
        out.append({"eta": float(eta), "j_eta": int(np.count_nonzero(keep)), "tail_l1": float(b[~keep].sum())})
    return out


def weak_sparsity_ratios(j_eta, tail_l1, alpha, q_const, omega, n, p, m) -> dict:
    """Both weak-sparsity quantities divided by their admissible growth rates.

    Consistency needs both ratios to vanish as the sample grows.
    """
    scale = n / (math.log(p) + 2.0 * math.log(m))
    return {
        "support": j_eta / ((alpha / q_const) ** 2 * scale),
        "tail": tail_l1 / (min(alpha / q_const, 1.0, 1.0 / omega) * math.sqrt(scale)),
    }


def lr_ball_ratios(radius, r, alpha, q_const, omega, n, p, m) -> dict:
    """The two l_r-ball quantities that must vanish for consistency."""
    rate = ((math.log(p) + 2.0 * math.log(m)) / n) ** ((2.0 - r) / 2.0)
    return {
        "first": alpha ** (r - 2.0) * q_const ** (2.0 - r) * radius * rate,
        "second": max(omega, 1.0) * alpha ** (r - 1.0) * q_const ** (1.0 - r) * radius * rate,
    }


def lr_ball_bound(w1, w2, alpha, lambda_n, radius, r, omega, q_const) -> dict:
    """l2 error bound when the truth lies in an l_r ball of the given radius."""
    if alpha <= 0 or q_const <= 0:
        raise ValueError("alpha and q_const must be positive")
    first = (w1 + 2.0 * w2 + 2.0 * math.sqrt(w2)) / alpha ** ((2.0 - r) / 2.0) \
        * math.sqrt(radius) * lambda_n ** ((2.0 - r) / 2.0)
    second = 4.0 * w2 * max(omega, 1.0) / (q_const * alpha ** (1.0 - r)) * radius * lambda_n ** (2.0 - r)
    return {"first": first, "second": second, "total": first + second}
