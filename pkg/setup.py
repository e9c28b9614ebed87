"""Build script: compiles the optional gradient-descent kernel extension.

The package works without the extension (a pure-NumPy kernel is selected at
import time), so the extension is marked optional and any build failure
degrades to the fallback instead of failing the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "convdyn._gd_cython",
                ["src/convdyn/_gd_cython.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
