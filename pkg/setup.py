import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


def extensions():
    if cythonize is None or os.getenv("SAMPDESIGN_NO_EXT"):
        return []
    ext = Extension(
        "sampdesign._ckernels",
        ["src/sampdesign/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no FMA contraction: keeps results bit-identical to the Python kernels
        extra_compile_args=["-O2", "-ffp-contract=off"],
        optional=True,
    )
    return cythonize(
        [ext],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )


setup(ext_modules=extensions())
