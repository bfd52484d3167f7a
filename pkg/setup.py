"""Builds the optional compiled kernels.

The package works without them (a pure-Python mirror is selected at import
time); compilation failure therefore downgrades the install instead of
breaking it.
"""

import sys

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "polyq._kernels",
                ["src/polyq/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off keeps the compiled arithmetic bit-identical
                # to the pure-Python mirror (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:
    print(f"polyq: building without compiled kernels ({exc})", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
