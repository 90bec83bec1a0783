"""Build script for the optional compiled kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the per-pixel descriptor path faster.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "mvedge._kernels",
        ["src/mvedge/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off keeps results bit-equal to the NumPy fallback
        # (no FMA fusion of the color-matrix arithmetic).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
