"""Build the optional compiled extension for the hot phase-evaluation kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the synthesis optimizer faster.
"""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("IONGATE_SKIP_EXTENSION"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "iongate._phase_eval_cy",
        sources=["src/iongate/_phase_eval_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )


setup(ext_modules=extensions())
