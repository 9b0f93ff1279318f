"""Build script: compiles the optional Cython speed kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs performance.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/subvalue/_kernels/speed.pyx",
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"subvalue: skipping Cython extension build ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
