"""Pure-Python coordinate-descent kernel (fallback for ``stvar._cd``)."""
from __future__ import annotations

import numpy as np


def _update(G, grad, beta, j, half, idx):
    bj = beta[j]
    gjj = G[j, j]
    if gjj <= 0.0:
        new = 0.0
    else:
        x = grad[j] + gjj * bj
        if x > half:
            new = (x - half) / gjj
        elif x < -half:
            new = (x + half) / gjj
        else:
            new = 0.0
    delta = new - bj
    if delta != 0.0:
        if idx is None:
            grad -= G[j] * delta
        else:
            grad[idx] -= G[j, idx] * delta
        beta[j] = new
    return abs(delta), abs(new)


def cd_gram(G: np.ndarray, c: np.ndarray, lam: float, beta: np.ndarray, tol: float, max_iter: int):
    """Minimise ``b'Gb - 2c'b + lam*|b|_1`` in place from the current ``beta``.

    Alternates full cyclic sweeps with sweeps restricted to the nonzero
    coordinates. Returns ``(sweeps, converged)``.
    """
    n = beta.shape[0]
    half = 0.5 * lam
    sweeps = 0
    while sweeps < max_iter:
        nz = np.flatnonzero(beta)
        grad = c - G[:, nz] @ beta[nz] if nz.size else c.copy()
        maxdelta = big = 0.0
        for j in range(n):
            delta, size = _update(G, grad, beta, j, half, None)
            maxdelta = max(maxdelta, delta)
            big = max(big, size)
        sweeps += 1
        if maxdelta <= tol * (1.0 + big):
            return sweeps, True
        act = np.flatnonzero(beta)
        while sweeps < max_iter:
            maxdelta = big = 0.0
            for j in act:
                delta, size = _update(G, grad, beta, j, half, act)
                maxdelta = max(maxdelta, delta)
                big = max(big, size)
            sweeps += 1
            if maxdelta <= tol * (1.0 + big):
                break
    return sweeps, False
