"""Builds the optional compiled kernel core.

The package works without it (a NumPy fallback is selected at import time),
so a failed compile only costs speed, not functionality.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "adcsd._kernels._core",
                ["src/adcsd/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"compiled kernels skipped ({exc}); pure NumPy backend will be used")
    ext_modules = []

setup(ext_modules=ext_modules)
