from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stvar import _cd_py, _kernels

try:
    from stvar import _cd
except ImportError:  # extension not built
    _cd = None

needs_ext = pytest.mark.skipif(_cd is None, reason="compiled kernel not built")


def gram_problem(seed, n, q):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, q))
    y = x[:, : max(1, q // 5)].sum(axis=1) + rng.standard_normal(n)
    gram = np.ascontiguousarray(x.T @ x / n)
    xty = np.ascontiguousarray(x.T @ y / n)
    return gram, xty, 2 * np.abs(xty).max()


@needs_ext
@given(st.integers(0, 2**31), st.integers(5, 60), st.integers(2, 80), st.floats(0.001, 0.9))
def test_backends_agree(seed, n, q, frac):
    gram, xty, lmax = gram_problem(seed, n, q)
    b1, b2 = np.zeros(q), np.zeros(q)
    r1 = _cd.cd_gram(gram, xty, frac * lmax, b1, 1e-9, 5000)
    r2 = _cd_py.cd_gram(gram, xty, frac * lmax, b2, 1e-9, 5000)
    assert r1 == r2
    np.testing.assert_allclose(b1, b2, rtol=0, atol=1e-12)


def test_zero_diagonal_coordinate_stays_zero():
    gram = np.diag([1.0, 0.0])
    xty = np.array([0.5, 0.3])
    for kernel in filter(None, (_cd_py.cd_gram, getattr(_cd, "cd_gram", None))):
        beta = np.zeros(2)
        kernel(np.ascontiguousarray(gram), xty, 0.1, beta, 1e-10, 100)
        assert beta[1] == 0.0 and beta[0] == pytest.approx(0.45)


def test_backend_selection():
    expect = "python" if _cd is None else "cython"
    assert _kernels.BACKEND == expect
    env = {**os.environ, "STVAR_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "import stvar; print(stvar.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
