"""Build the optional Cython kernels; the package falls back to NumPy if they are absent."""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("AUTOCORRNET_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - build without Cython
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "autocorrnet._kernels",
            ["src/autocorrnet/_kernels.pyx"],
            include_dirs=[np.get_include()],
            # keep a*b+c unfused so both backends round identically
            extra_compile_args=["-O2", "-ffp-contract=off"],
        )
        ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
