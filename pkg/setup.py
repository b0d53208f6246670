"""Build the optional Cython coordinate-descent kernel.

The extension is optional: if Cython or a C compiler is missing the package
installs without it and ``stvar._kernels`` falls back to the pure-Python
implementation.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("STVAR_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "stvar._cd",
                    ["src/stvar/_cd.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
