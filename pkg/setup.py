"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected at
import time), so the extension is marked ``optional``: a missing compiler or a
failed build produces a warning, not a broken install.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build-time only
    cythonize = None

extensions = [
    Extension(
        "outliernets.nn._kernels_cy",
        ["src/outliernets/nn/_kernels_cy.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize is not None
    else [],
)
