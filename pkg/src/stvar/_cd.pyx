# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coordinate-descent kernel; mirrors ``stvar._cd_py`` step for step."""
import numpy as np

from libc.math cimport fabs


cdef inline double _soft(double x, double t) nogil:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


cdef void _refresh(double[:, ::1] G, double[::1] c, double[::1] beta, double[::1] grad) nogil:
    cdef Py_ssize_t n = beta.shape[0]
    cdef Py_ssize_t j, k
    cdef double bj
    for k in range(n):
        grad[k] = c[k]
    for j in range(n):
        bj = beta[j]
        if bj != 0.0:
            for k in range(n):
                grad[k] -= G[j, k] * bj


cdef double _update(double[:, ::1] G, double[::1] grad, double[::1] beta, Py_ssize_t j,
                    double half, Py_ssize_t[::1] idx, Py_ssize_t n_idx, double* big) nogil:
    # one exact coordinate minimisation; grad is refreshed on idx[:n_idx] only
    cdef Py_ssize_t k
    cdef double bj = beta[j]
    cdef double gjj = G[j, j]
    cdef double new, delta
    if gjj <= 0.0:
        new = 0.0
    else:
        new = _soft(grad[j] + gjj * bj, half) / gjj
    delta = new - bj
    if delta != 0.0:
        for k in range(n_idx):
            grad[idx[k]] -= G[j, idx[k]] * delta
        beta[j] = new
    if fabs(new) > big[0]:
        big[0] = fabs(new)
    return fabs(delta)


def cd_gram(double[:, ::1] G, double[::1] c, double lam, double[::1] beta,
            double tol, long max_iter):
    """Minimise ``b'Gb - 2c'b + lam*|b|_1`` in place from the current ``beta``.

    Alternates full cyclic sweeps with sweeps restricted to the nonzero
    coordinates. Returns ``(sweeps, converged)``.
    """
    cdef Py_ssize_t n = beta.shape[0]
    cdef double half = 0.5 * lam
    cdef long sweeps = 0
    cdef double maxdelta, delta, big
    cdef bint converged = False
    cdef Py_ssize_t j, n_act
    cdef double[::1] grad = np.empty(n)
    cdef Py_ssize_t[::1] every = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] act = np.empty(n, dtype=np.intp)
    with nogil:
        while sweeps < max_iter:
            _refresh(G, c, beta, grad)
            maxdelta = 0.0
            big = 0.0
            for j in range(n):
                delta = _update(G, grad, beta, j, half, every, n, &big)
                if delta > maxdelta:
                    maxdelta = delta
            sweeps += 1
            if maxdelta <= tol * (1.0 + big):
                converged = True
                break
            n_act = 0
            for j in range(n):
                if beta[j] != 0.0:
                    act[n_act] = j
                    n_act += 1
            while sweeps < max_iter:
                maxdelta = 0.0
                big = 0.0
                for j in range(n_act):
                    delta = _update(G, grad, beta, act[j], half, act, n_act, &big)
                    if delta > maxdelta:
                        maxdelta = delta
                sweeps += 1
                if maxdelta <= tol * (1.0 + big):
                    break
    return sweeps, converged
