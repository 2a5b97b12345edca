"""Build script: compiles the geometry hot-kernel extension when Cython and a
C compiler are available.  The package falls back to the pure-Python kernels
at import time if the extension is missing, so a failed build is not fatal."""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [Extension("fairgen._fastkernels", ["src/fairgen/_fastkernels.pyx"])],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
