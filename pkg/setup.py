"""Build script: compiles the optional Cython fast path.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compilation only costs speed.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext as _build_ext

ext_modules = []
cmdclass = {}

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "hsncp._ckernels",
                sources=["src/hsncp/_ckernels.pyx"],
            )
        ],
        language_level="3",
    )

    class OptionalBuildExt(_build_ext):
        def run(self):
            try:
                super().run()
            except Exception as exc:  # compiler missing, etc.
                warnings.warn(f"C extension build failed ({exc}); "
                              "falling back to the pure-Python kernels")

        def build_extension(self, ext):
            try:
                super().build_extension(ext)
            except Exception as exc:
                warnings.warn(f"building {ext.name} failed ({exc}); "
                              "falling back to the pure-Python kernels")

    cmdclass["build_ext"] = OptionalBuildExt
except ImportError:
    warnings.warn("Cython not available; installing pure-Python kernels only")

setup(ext_modules=ext_modules, cmdclass=cmdclass)
