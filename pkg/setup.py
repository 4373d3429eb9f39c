"""Build script for the optional compiled kernels.

The package works without the extension: ltasim.kernels falls back to the
NumPy implementations in ltasim._kernels_py when the compiled module is
missing (or when LTASIM_PURE=1 is set). Set LTASIM_NO_EXT=1 to skip the
extension build entirely.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("LTASIM_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "ltasim._kernels",
                    ["src/ltasim/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
