"""Build script for the optional compiled Schatten kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the Cython kernel just makes the per-pixel hot
loop faster.  Build in place with:

    python setup.py build_ext --inplace
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sqnreg.kernels._schatten_cy",
                sources=["src/sqnreg/kernels/_schatten_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
