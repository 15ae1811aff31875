"""Builds the optional compiled kernel extension.

If Cython (or a working C toolchain) is unavailable the package still
installs; scoutlab.kernels falls back to the pure-Python implementation
at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "scoutlab._kernels",
                ["src/scoutlab/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
