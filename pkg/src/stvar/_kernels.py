"""Select the coordinate-descent backend at import time.

The compiled extension is used when it was built; setting
``STVAR_PURE_PYTHON=1`` forces the pure-Python kernel.
"""
from __future__ import annotations

import os

from . import _cd_py

if os.environ.get("STVAR_PURE_PYTHON", "") == "1":
    cd_gram = _cd_py.cd_gram
    BACKEND = "python"
else:
    try:
        from ._cd import cd_gram
        BACKEND = "cython"
    except ImportError:  # extension not built
        cd_gram = _cd_py.cd_gram
        BACKEND = "python"

__all__ = ["cd_gram", "BACKEND"]
