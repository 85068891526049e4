"""Build script: compiles the LSTM hot-loop extension when a toolchain is
available, otherwise installs pure-Python only (the package falls back to
NumPy kernels at import time)."""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "scourwatch.neural._core",
                ["src/scourwatch/neural/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # finite-math flags let gcc vectorize exp/tanh via libmvec;
                # cross-backend agreement is asserted by the test suite
                extra_compile_args=[
                    "-O3",
                    "-fno-math-errno",
                    "-funsafe-math-optimizations",
                    "-ffinite-math-only",
                ],
                libraries=["mvec", "m"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"scourwatch: skipping compiled kernels ({exc})\n")

setup(ext_modules=ext_modules)
