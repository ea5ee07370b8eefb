"""Build script: compiles the optional fast kernel lane.

The package works without the extension (a pure-Python lane with identical
semantics is selected at import time), so any failure here downgrades the
build instead of breaking it.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "essplit._kernels",
                ["src/essplit/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # identical float results to the pure lane: no FMA contraction
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    import sys

    print(f"essplit: skipping compiled kernels ({exc!r}); "
          "the pure-Python lane will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
