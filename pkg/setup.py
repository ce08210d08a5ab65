"""Builds the compiled convolution kernels.

The package works without the extension (a NumPy fallback is selected at
import time), but the compiled kernels are the default backend when present.
"""

from setuptools import Extension, setup
from Cython.Build import cythonize

# -march=native plus reassociation is what lets the width loops vectorize;
# NaN/Inf semantics are kept (no -ffinite-math-only) so divergence detection
# upstream still sees non-finite values.
extensions = [
    Extension(
        "gnplab._convext",
        ["src/gnplab/_convext.pyx"],
        extra_compile_args=[
            "-O3",
            "-march=native",
            "-fassociative-math",
            "-fno-signed-zeros",
            "-fno-trapping-math",
        ],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
