"""Build script for the optional compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes the conv hot path faster:

    python setup.py build_ext --inplace
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

HERE = os.path.dirname(os.path.abspath(__file__))
PYX = os.path.join("src", "forgegate", "_kernels", "_conv_cy.pyx")
C = os.path.join("src", "forgegate", "_kernels", "_conv_cy.c")


def _kernel_sources():
    """Prefer cythonizing the .pyx; fall back to the checked-in C file."""
    pyx = os.path.join(HERE, PYX)
    c = os.path.join(HERE, C)
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None and os.path.exists(pyx):
        if not os.path.exists(c) or os.path.getmtime(pyx) > os.path.getmtime(c):
            cythonize(
                [PYX],
                compiler_directives={
                    "boundscheck": False,
                    "wraparound": False,
                    "cdivision": True,
                    "language_level": "3",
                },
            )
    if os.path.exists(c):
        return [C]
    return None


class OptionalBuildExt(build_ext):
    """Never fail the install over the extension; the fallback still works."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: skipping compiled kernels ({exc}); "
                  "forgegate will use the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: could not build {ext.name} ({exc}); "
                  "forgegate will use the numpy fallback")


def _extensions():
    import numpy as np

    sources = _kernel_sources()
    if sources is None:
        return []
    return [
        Extension(
            "forgegate._kernels._conv_cy",
            sources=sources,
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
    ]


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
