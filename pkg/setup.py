"""Build hook for the compiled kernel lane.

The package works without the extension (pure-Python kernels are selected at
import time), so a missing Cython toolchain degrades the install instead of
breaking it.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "sddlab._kernels._ckernels",
                ["src/sddlab/_kernels/_ckernels.pyx"],
                # -ffp-contract=off: no FMA contraction, so the compiled lane
                # is bit-identical to the pure lane (same IEEE op sequence).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
