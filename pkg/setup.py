"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so any failure here degrades to a source-only install
instead of breaking it.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "bohmlab._kernels._core",
        sources=["src/bohmlab/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off: no fused multiply-adds, so results stay
        # bit-identical to the numpy fallback kernels.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext_modules = cythonize([ext], language_level=3)
except Exception as exc:  # pragma: no cover - depends on toolchain
    sys.stderr.write(f"bohmlab: skipping compiled kernels ({exc!r}); "
                     "pure-numpy fallback will be used\n")

setup(ext_modules=ext_modules)
