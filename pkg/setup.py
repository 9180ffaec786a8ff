import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# MCLOC_NO_EXT=1 installs the pure-Python package only.
ext_modules = []
if cythonize is not None and not os.environ.get("MCLOC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "mcloc._kernels",
                ["src/mcloc/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: cell tests must round exactly like numpy
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
